use rand::Rng;

use crate::autoencoder::LinkSystem;
use crate::channel::{awgn_capacity_bits, ChannelKind, ChannelModel};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::estimators::{gather_rows, train_estimator, EstimatorSpec, JointSampler, SampleBatch};
use crate::exec::{map_indexed, Execution};
use crate::rng_from_seed;

/// `(x, y)` pairs from a frozen codebook through a channel, messages
/// uniform.
#[derive(Clone, Debug)]
pub struct LinkSampler {
    codebook: Tensor,
    channel: ChannelModel,
}

impl LinkSampler {
    pub fn new(codebook: Tensor, channel: ChannelModel) -> Self {
        Self { codebook, channel }
    }
}

impl JointSampler for LinkSampler {
    fn x_dim(&self) -> usize {
        self.codebook.cols()
    }

    fn y_dim(&self) -> usize {
        self.codebook.cols()
    }

    fn sample<R: Rng>(&mut self, batch: usize, rng: &mut R) -> Result<SampleBatch> {
        let m = self.codebook.rows();
        let messages: Vec<usize> = (0..batch).map(|_| rng.random_range(0..m)).collect();
        let xs = gather_rows(&self.codebook, &messages);
        let ys = self.channel.realize(batch, xs.cols(), rng)?.apply(&xs)?;
        SampleBatch::new(xs, ys, rng)
    }
}

/// One estimator at one Eb/N0. MI figures are per complex channel use.
#[derive(Clone, Debug, PartialEq)]
pub struct MiSweepPoint {
    pub estimator: String,
    pub ebn0_db: f64,
    pub mi_nats: f64,
    pub mi_bits: f64,
    pub capacity_bits: f64,
    pub rate_bits: f64,
    pub seed: u64,
    /// Set when the critic diverged; the MI columns are then NaN.
    pub failure: Option<String>,
}

/// Capacity reference per complex use at per-use SNR `snr`: `log2(1 + snr)`
/// for AWGN, the ergodic `E log2(1 + |h|² snr)` for Rayleigh.
pub fn capacity_reference_bits(kind: ChannelKind, snr: f64) -> f64 {
    match kind {
        ChannelKind::Awgn => awgn_capacity_bits(snr),
        ChannelKind::Rayleigh => rayleigh_ergodic_capacity_bits(snr),
    }
}

/// `log2(e) · e^{1/snr} · E1(1/snr)`.
pub fn rayleigh_ergodic_capacity_bits(snr: f64) -> f64 {
    let x = 1.0 / snr;
    let nats = if x > 50.0 {
        // e^x E1(x) ~ (1/x)(1 − 1/x + 2/x² − 6/x³)
        (1.0 - 1.0 / x + 2.0 / (x * x) - 6.0 / (x * x * x)) / x
    } else {
        x.exp() * statrs::function::exponential::integral(x, 1).unwrap_or(f64::NAN)
    };
    nats / std::f64::consts::LN_2
}

/// For every estimator and grid point, trains a fresh critic on the frozen
/// link at that Eb/N0 and reports its final estimate. Unit `u` (estimator
/// major, grid minor) draws from `seed + u`. Divergence is recorded on the
/// point instead of aborting the sweep.
pub fn sweep_mi(
    sys: &LinkSystem,
    specs: &[EstimatorSpec],
    ebn0_grid: &[f64],
    seed: u64,
    exec: Execution,
) -> Result<Vec<MiSweepPoint>> {
    if ebn0_grid.is_empty() {
        return Err(Error::invalid("ebn0_db", "grid is empty"));
    }
    if specs.is_empty() {
        return Err(Error::invalid("estimators", "no estimators given"));
    }
    for s in specs {
        s.validate()?;
    }
    let codebook = sys.codebook()?;
    let rate = sys.rate_bits();
    let units: Vec<(usize, f64)> = (0..specs.len())
        .flat_map(|e| ebn0_grid.iter().map(move |&db| (e, db)))
        .collect();
    map_indexed(&units, exec, |u, &(e, ebn0_db)| {
        let spec = &specs[e];
        let unit_seed = seed.wrapping_add(u as u64);
        let channel = ChannelModel::from_ebn0(sys.channel, ebn0_db, rate)?;
        let mut sampler = LinkSampler::new(codebook.clone(), channel);
        let mut rng = rng_from_seed(unit_seed);
        let (mi_nats, failure) = match train_estimator(spec, &mut sampler, &mut rng) {
            Ok(t) => (t.trace.final_mi_nats / sys.n as f64, None),
            Err(err) if err.is_numerical() => (f64::NAN, Some(err.to_string())),
            Err(err) => return Err(err),
        };
        Ok(MiSweepPoint {
            estimator: spec.kind.name(),
            ebn0_db,
            mi_nats,
            mi_bits: mi_nats / std::f64::consts::LN_2,
            capacity_bits: capacity_reference_bits(sys.channel, channel.snr()),
            rate_bits: rate,
            seed: unit_seed,
            failure,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;

    #[test]
    fn rayleigh_capacity_sits_below_awgn() {
        for snr in [0.01, 1.0, 10.0, 1000.0] {
            let r = rayleigh_ergodic_capacity_bits(snr);
            assert!(r > 0.0 && r < awgn_capacity_bits(snr), "{snr}: {r}");
        }
        // low SNR: both ≈ snr · log2 e
        let tiny = 1e-4;
        assert!(
            (rayleigh_ergodic_capacity_bits(tiny) / (tiny / std::f64::consts::LN_2) - 1.0).abs()
                < 1e-3
        );
        // series and asymptotic branches agree at the switchover
        let below = rayleigh_ergodic_capacity_bits(1.0 / (50.0 - 1e-9));
        let above = rayleigh_ergodic_capacity_bits(1.0 / (50.0 + 1e-9));
        assert!((below / above - 1.0).abs() < 1e-5, "{below} vs {above}");
    }

    #[test]
    fn sweep_layout_and_seeds() {
        let sys = LinkSystem::antipodal_reference();
        let specs: Vec<EstimatorSpec> = [EstimatorKind::gamma(1.0), EstimatorKind::Nwj]
            .into_iter()
            .map(|k| EstimatorSpec {
                smoothing_window: 5,
                ..EstimatorSpec::new(k)
                    .with_iterations(10)
                    .with_batch_size(16)
            })
            .collect();
        let pts = sweep_mi(&sys, &specs, &[0.0, 10.0, 20.0], 100, Execution::Sequential).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[4].estimator, "nwj");
        assert_eq!(pts[4].ebn0_db, 10.0);
        assert_eq!(pts[4].seed, 104);
        assert!(pts
            .iter()
            .all(|p| p.rate_bits == 1.0 && p.failure.is_none()));
        assert!((pts[0].capacity_bits - 1.0).abs() < 1e-12);
    }
}
