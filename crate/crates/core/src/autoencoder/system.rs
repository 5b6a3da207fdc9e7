use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::decode_hard;
use super::nets::{DecoderNet, EncoderNet};
use crate::channel::{ChannelKind, PowerConstraint};
use crate::diffcore::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::rng_from_seed;

const MAGIC: &str = "dime-link-system 1";

/// Trained (or hand-set) encoder/decoder pair for an `(M, n)` code.
#[derive(Clone, Debug)]
pub struct LinkSystem {
    pub m: usize,
    pub n: usize,
    pub channel: ChannelKind,
    pub encoder: EncoderNet,
    pub decoder: DecoderNet,
    pub store: ParamStore,
}

impl LinkSystem {
    pub fn new(
        m: usize,
        n: usize,
        channel: ChannelKind,
        power: PowerConstraint,
        rng: &mut impl Rng,
    ) -> Self {
        let mut store = ParamStore::new();
        let encoder = EncoderNet::new(&mut store, m, n, power, rng);
        let decoder = DecoderNet::new(&mut store, m, n, rng);
        Self {
            m,
            n,
            channel,
            encoder,
            decoder,
            store,
        }
    }

    /// M = 2, n = 1 antipodal code: message 0 → +1, message 1 → −1 on the
    /// real axis, decided by the sign of the received real part.
    pub fn antipodal_reference() -> Self {
        let mut sys = Self::new(
            2,
            1,
            ChannelKind::Awgn,
            PowerConstraint::BatchAverage,
            &mut rng_from_seed(0),
        );
        let set = |sys: &mut Self, name: &str, values: &[f64]| {
            let id = sys
                .store
                .ids()
                .find(|&id| sys.store.get(id).name == name)
                .expect("reference layout");
            sys.store.set_values(id, values).expect("reference shapes");
        };
        set(&mut sys, "encoder.0.weight", &[1.0, 0.0, 0.0, 1.0]);
        set(&mut sys, "encoder.1.weight", &[1.0, 0.0, -1.0, 0.0]);
        set(&mut sys, "decoder.0.weight", &[1.0, 0.0, 0.0, 1.0]);
        set(&mut sys, "decoder.1.weight", &[1.0, -1.0, 0.0, 0.0]);
        for name in [
            "encoder.0.bias",
            "encoder.1.bias",
            "decoder.0.bias",
            "decoder.1.bias",
        ] {
            set(&mut sys, name, &[0.0, 0.0]);
        }
        sys
    }

    pub fn rate_bits(&self) -> f64 {
        (self.m as f64).log2() / self.n as f64
    }

    pub fn power(&self) -> PowerConstraint {
        self.encoder.power
    }

    /// `[M, 2n]` transmitted symbols, one row per message.
    pub fn codebook(&self) -> Result<Tensor> {
        self.encoder.codebook(&self.store)
    }

    pub fn posteriors(&self, y: &Tensor) -> Result<Tensor> {
        if y.cols() != 2 * self.n {
            return Err(Error::Shape(format!(
                "decoder expects {} reals per block, got {}",
                2 * self.n,
                y.cols()
            )));
        }
        self.decoder.posteriors(&self.store, y)
    }

    pub fn decode(&self, y: &Tensor) -> Result<Vec<usize>> {
        let p = self.posteriors(y)?;
        Ok(p.data().chunks(self.m).map(decode_hard).collect())
    }

    /// Text header (`m`, `n`, channel, power, one line per parameter with
    /// its shape) followed by the values; floats use shortest round-trip
    /// formatting so a reload is exact.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "m {}", self.m);
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "channel {}", self.channel.name());
        let _ = writeln!(s, "power {}", self.power().name());
        let _ = writeln!(s, "params {}", self.store.len());
        for id in self.store.ids() {
            let p = self.store.get(id);
            let v = p.value();
            let _ = write!(s, "{} {} {}", p.name, v.rows(), v.cols());
            for x in v.data() {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::ModelFormat(msg);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad(format!("missing `{MAGIC}` header")));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing `{key}` line")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(bad(format!("expected `{key}`, found `{line}`"))),
            }
        };
        let m: usize = field("m")?.parse().map_err(|_| bad("bad `m`".into()))?;
        let n: usize = field("n")?.parse().map_err(|_| bad("bad `n`".into()))?;
        let channel_s = field("channel")?;
        let channel = ChannelKind::parse(&channel_s)
            .ok_or_else(|| bad(format!("unknown channel `{channel_s}`")))?;
        let power_s = field("power")?;
        let power = PowerConstraint::parse(&power_s)
            .ok_or_else(|| bad(format!("unknown power `{power_s}`")))?;
        let count: usize = field("params")?
            .parse()
            .map_err(|_| bad("bad `params`".into()))?;
        if m < 2 || n == 0 {
            return Err(bad(format!("invalid code size M = {m}, n = {n}")));
        }
        let mut sys = Self::new(m, n, channel, power, &mut rng_from_seed(0));
        if count != sys.store.len() {
            return Err(bad(format!(
                "expected {} parameters, file has {count}",
                sys.store.len()
            )));
        }
        let ids: Vec<_> = sys.store.ids().collect();
        for id in ids {
            let line = lines
                .next()
                .ok_or_else(|| bad("truncated parameter list".into()))?;
            let mut it = line.split_ascii_whitespace();
            let name = it.next().unwrap_or_default();
            let expected = sys.store.get(id).value();
            let shape_ok = it.next().and_then(|r| r.parse::<usize>().ok()) == Some(expected.rows())
                && it.next().and_then(|c| c.parse::<usize>().ok()) == Some(expected.cols());
            if name != sys.store.get(id).name || !shape_ok {
                return Err(bad(format!(
                    "parameter `{name}` does not match `{}` [{}, {}]",
                    sys.store.get(id).name,
                    expected.rows(),
                    expected.cols()
                )));
            }
            let values = it
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| bad(format!("parameter `{name}`: {e}")))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("parameter `{name}` has non-finite values")));
            }
            sys.store
                .set_values(id, &values)
                .map_err(|_| bad(format!("parameter `{name}` has the wrong number of values")))?;
        }
        Ok(sys)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_antipodal_and_sign_decoded() {
        let sys = LinkSystem::antipodal_reference();
        assert_eq!(sys.codebook().unwrap().data(), &[1.0, 0.0, -1.0, 0.0]);
        let y = Tensor::matrix(3, 2, vec![0.3, 5.0, -0.01, -2.0, 2.0, 0.0]).unwrap();
        assert_eq!(sys.decode(&y).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let sys = LinkSystem::new(
            8,
            3,
            ChannelKind::Rayleigh,
            PowerConstraint::PerCodeword,
            &mut rng_from_seed(4),
        );
        let text = sys.to_text();
        let back = LinkSystem::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.codebook().unwrap(), sys.codebook().unwrap());
        assert_eq!(back.channel, ChannelKind::Rayleigh);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let text = LinkSystem::new(
            4,
            2,
            ChannelKind::Awgn,
            PowerConstraint::BatchAverage,
            &mut rng_from_seed(1),
        )
        .to_text();
        assert!(LinkSystem::from_text("garbage").is_err());
        assert!(LinkSystem::from_text(&text.replace("m 4", "m 8")).is_err());
        let truncated: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(LinkSystem::from_text(&truncated).is_err());
    }
}
