use std::fmt;
use std::path::Path;

use serde::Deserialize;

use dime_core::autoencoder::AeConfig;
use dime_core::channel::{ChannelKind, PowerConstraint};
use dime_core::diffcore::OptimizerConfig;
use dime_core::estimators::{
    EstimatorKind, EstimatorSpec, FGenerator, DEFAULT_EMA_RATE, DEFAULT_SMILE_TAU,
};
use dime_core::evalharness::{default_ebn0_grid, default_gaussian_cases, BlerConfig, GaussianCase};

pub const DEFAULT_SEED: u64 = 1;

/// A config value that failed validation, named by its full key.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid `{}`: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        reason: reason.into(),
    }
}

/// Maps a core validation error onto the config key it came from.
fn qualify(err: dime_core::Error, section: &str) -> anyhow::Error {
    match err {
        dime_core::Error::InvalidArgument { name, reason } => {
            let key = match name {
                "m" | "n" => format!("system.{name}"),
                "beta" | "epsilon" => format!("loss.{name}"),
                "train_ebn0_db" => "channel.train_ebn0_db".into(),
                "iterations" | "batch" | "critic_steps" | "learning_rate" | "log_every" => {
                    format!("{section}.{name}")
                }
                "gamma" | "alpha" | "tau" | "ema_rate" => format!("estimator.{name}"),
                "estimator" => "estimator.kind".into(),
                other => format!("{section}.{other}"),
            };
            config_err(key, reason).into()
        }
        other => other.into(),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "M", alias = "m")]
    pub m: Option<usize>,
    pub n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub kind: Option<String>,
    pub train_ebn0_db: Option<f64>,
    pub power: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub kind: Option<String>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub ema_rate: Option<f64>,
    pub generator: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub iterations: Option<usize>,
    pub batch: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<String>,
    pub critic_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub ebn0_db: Option<Vec<f64>>,
    pub ebn0_start: Option<f64>,
    pub ebn0_stop: Option<f64>,
    pub ebn0_step: Option<f64>,
    pub min_errors: Option<u64>,
    pub max_blocks: Option<u64>,
    pub mi_estimators: Option<Vec<String>>,
    pub mi_iterations: Option<usize>,
    pub mi_batch: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub dims: Option<Vec<usize>>,
    pub rhos: Option<Vec<f64>>,
    pub estimators: Option<Vec<String>>,
    pub iterations: Option<usize>,
    pub batch: Option<usize>,
}

impl RunConfig {
    /// Parses `text`, then applies `key=value` overrides (value in TOML
    /// syntax, bare words taken as strings).
    pub fn parse(text: &str, overrides: &[String]) -> anyhow::Result<Self> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_err("config", e.to_string()))?;
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| {
                config_err(o.clone(), "override must look like `section.key=value`")
            })?;
            let value = parse_override_value(raw.trim());
            let parts: Vec<&str> = key.trim().split('.').collect();
            let (last, sections) = parts.split_last().expect("split yields one part");
            let mut table = &mut doc;
            for s in sections {
                table = table
                    .entry(s.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| config_err(key, format!("`{s}` is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        let cfg: RunConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| config_err("config", e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| config_err("config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn estimator_kind(&self) -> anyhow::Result<EstimatorKind> {
        let e = &self.estimator;
        let kind = e.kind.as_deref().unwrap_or("gamma-dime");
        let parsed = match kind.to_ascii_lowercase().replace('_', "-").as_str() {
            "mine" => EstimatorKind::Mine {
                ema_rate: e.ema_rate.unwrap_or(DEFAULT_EMA_RATE),
            },
            "nwj" => EstimatorKind::Nwj,
            "smile" => EstimatorKind::Smile {
                tau: e.tau.unwrap_or(DEFAULT_SMILE_TAU),
            },
            "d-dime" | "ddime" => EstimatorKind::DDime {
                alpha: e.alpha.unwrap_or(1.0),
            },
            "f-dime" | "fdime" => {
                let g = e.generator.as_deref().unwrap_or("kl");
                let generator = match g {
                    "scaled-kl" => FGenerator::ScaledKl {
                        gamma: e.gamma.unwrap_or(1.0),
                    },
                    other => FGenerator::parse(other).ok_or_else(|| {
                        config_err(
                            "estimator.generator",
                            format!("unknown generator `{other}`"),
                        )
                    })?,
                };
                EstimatorKind::FDime { generator }
            }
            "gamma-dime" | "gammadime" | "γ-dime" | "γdime" => EstimatorKind::GammaDime {
                gamma: e.gamma.unwrap_or(1.0),
            },
            other => {
                return Err(
                    config_err("estimator.kind", format!("unknown estimator `{other}`")).into(),
                )
            }
        };
        parsed.validate().map_err(|err| qualify(err, "estimator"))?;
        Ok(parsed)
    }

    pub fn optimizer(&self) -> anyhow::Result<OptimizerConfig> {
        let t = &self.training;
        let lr = t.learning_rate.unwrap_or(0.01);
        let opt = match t.optimizer.as_deref().unwrap_or("adam") {
            "adam" => OptimizerConfig::adam(lr),
            "sgd" => OptimizerConfig::sgd(lr),
            other => {
                return Err(config_err(
                    "training.optimizer",
                    format!("unknown optimizer `{other}`"),
                )
                .into())
            }
        };
        opt.validate().map_err(|err| qualify(err, "training"))?;
        Ok(opt)
    }

    pub fn system(&self) -> anyhow::Result<(usize, usize)> {
        let m = self
            .system
            .m
            .ok_or_else(|| config_err("system.M", "missing"))?;
        let n = self
            .system
            .n
            .ok_or_else(|| config_err("system.n", "missing"))?;
        Ok((m, n))
    }

    pub fn channel_kind(&self) -> anyhow::Result<ChannelKind> {
        let s = self.channel.kind.as_deref().unwrap_or("awgn");
        Ok(ChannelKind::parse(s)
            .ok_or_else(|| config_err("channel.kind", format!("unknown channel `{s}`")))?)
    }

    pub fn ae_config(&self) -> anyhow::Result<AeConfig> {
        let (m, n) = self.system()?;
        let mut cfg = AeConfig::new(m, n);
        cfg.channel = self.channel_kind()?;
        if let Some(p) = &self.channel.power {
            cfg.power = PowerConstraint::parse(p).ok_or_else(|| {
                config_err(
                    "channel.power",
                    format!("expected `batch` or `codeword`, got `{p}`"),
                )
            })?;
        }
        if let Some(db) = self.channel.train_ebn0_db {
            cfg.train_ebn0_db = db;
        }
        if let Some(b) = self.loss.beta {
            cfg.beta = b;
        }
        if let Some(e) = self.loss.epsilon {
            cfg.epsilon = e;
        }
        let t = &self.training;
        if let Some(i) = t.iterations {
            cfg.iterations = i;
        }
        if let Some(b) = t.batch {
            cfg.batch_size = b;
        }
        if let Some(k) = t.critic_steps {
            cfg.critic_steps = k;
        }
        cfg.optimizer = self.optimizer()?;
        cfg.critic_optimizer = cfg.optimizer;
        cfg.estimator = Some(self.estimator_kind()?);
        cfg.smoothing_window = cfg.smoothing_window.min(cfg.iterations);
        cfg.validate().map_err(|err| qualify(err, "training"))?;
        Ok(cfg)
    }

    pub fn ebn0_grid(&self) -> anyhow::Result<Vec<f64>> {
        let e = &self.eval;
        let range = (e.ebn0_start, e.ebn0_stop, e.ebn0_step);
        let grid = match (&e.ebn0_db, range) {
            (Some(_), (Some(_), _, _) | (_, Some(_), _) | (_, _, Some(_))) => {
                return Err(config_err(
                    "eval.ebn0_db",
                    "give either a list or start/stop/step, not both",
                )
                .into())
            }
            (Some(list), _) => list.clone(),
            (None, (None, None, None)) => default_ebn0_grid(),
            (None, (Some(start), Some(stop), Some(step))) => {
                if !(step > 0.0) || stop < start {
                    return Err(
                        config_err("eval.ebn0_step", "need step > 0 and stop >= start").into(),
                    );
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=count).map(|k| start + step * k as f64).collect()
            }
            _ => {
                return Err(
                    config_err("eval.ebn0_start", "start, stop and step go together").into(),
                )
            }
        };
        if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
            return Err(config_err("eval.ebn0_db", "grid must be nonempty and finite").into());
        }
        Ok(grid)
    }

    pub fn bler_config(&self) -> anyhow::Result<BlerConfig> {
        let mut c = BlerConfig::default();
        if let Some(v) = self.eval.min_errors {
            c.min_errors = v;
        }
        if let Some(v) = self.eval.max_blocks {
            c.max_blocks = v;
        }
        c.validate().map_err(|err| qualify(err, "eval"))?;
        Ok(c)
    }

    fn spec_list(
        &self,
        names: Option<&Vec<String>>,
        iterations: Option<usize>,
        batch: Option<usize>,
        section: &str,
    ) -> anyhow::Result<Vec<EstimatorSpec>> {
        let kinds = match names {
            Some(list) => list
                .iter()
                .map(|s| {
                    EstimatorKind::parse(s).map_err(|e| {
                        anyhow::Error::from(config_err(
                            format!("{section}.estimators"),
                            e.to_string(),
                        ))
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?,
            None => vec![self.estimator_kind()?],
        };
        if kinds.is_empty() {
            return Err(config_err(format!("{section}.estimators"), "list is empty").into());
        }
        let optimizer = self.optimizer()?;
        kinds
            .into_iter()
            .map(|k| {
                let mut spec = EstimatorSpec::new(k);
                spec.optimizer = optimizer;
                if let Some(i) = iterations {
                    spec.iterations = i;
                    spec.smoothing_window = spec.smoothing_window.min(i);
                }
                if let Some(b) = batch {
                    spec.batch_size = b;
                }
                spec.validate().map_err(|err| qualify(err, section))?;
                Ok(spec)
            })
            .collect()
    }

    /// Estimators for `eval --mode mi`; defaults to the `[estimator]` section.
    pub fn mi_specs(&self) -> anyhow::Result<Vec<EstimatorSpec>> {
        let e = &self.eval;
        self.spec_list(
            e.mi_estimators.as_ref(),
            e.mi_iterations,
            e.mi_batch,
            "eval",
        )
    }

    pub fn bench_specs(&self) -> anyhow::Result<Vec<EstimatorSpec>> {
        let b = &self.bench;
        self.spec_list(b.estimators.as_ref(), b.iterations, b.batch, "bench")
    }

    pub fn bench_cases(&self) -> anyhow::Result<Vec<GaussianCase>> {
        let b = &self.bench;
        if b.dims.is_none() && b.rhos.is_none() {
            return Ok(default_gaussian_cases());
        }
        let dims = b.dims.clone().unwrap_or_else(|| vec![1, 5, 10]);
        let rhos = b.rhos.clone().unwrap_or_else(|| vec![0.0, 0.2, 0.5, 0.8]);
        if dims.is_empty() || dims.contains(&0) {
            return Err(config_err("bench.dims", "need positive dimensions").into());
        }
        if rhos.is_empty() || rhos.iter().any(|r| !(r.abs() < 1.0)) {
            return Err(config_err("bench.rhos", "need |rho| < 1").into());
        }
        Ok(dims
            .iter()
            .flat_map(|&dim| rhos.iter().map(move |&rho| GaussianCase { dim, rho }))
            .collect())
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_gamma_names_the_key() {
        let cfg =
            RunConfig::parse("[estimator]\nkind = \"gamma-dime\"\ngamma = -1.0\n", &[]).unwrap();
        let err = cfg.estimator_kind().unwrap_err().to_string();
        assert!(err.contains("estimator.gamma"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse("[loss]\nbeta = 0.2\ngama = 1\n", &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("gama"), "{err}");
        assert!(RunConfig::parse("[nonsense]\n", &[]).is_err());
    }

    #[test]
    fn overrides_win() {
        let cfg = RunConfig::parse(
            "seed = 3\n[estimator]\ngamma = 1.0\n",
            &[
                "estimator.gamma=2.5".into(),
                "seed=9".into(),
                "channel.kind=rayleigh".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.estimator.gamma, Some(2.5));
        assert_eq!(cfg.seed(None), 9);
        assert_eq!(cfg.seed(Some(4)), 4);
        assert_eq!(cfg.channel_kind().unwrap(), ChannelKind::Rayleigh);
    }

    #[test]
    fn grids() {
        let cfg = RunConfig::parse(
            "[eval]\nebn0_start = 0.0\nebn0_stop = 10.0\nebn0_step = 2.5\n",
            &[],
        )
        .unwrap();
        assert_eq!(cfg.ebn0_grid().unwrap(), vec![0.0, 2.5, 5.0, 7.5, 10.0]);
        let both = RunConfig::parse("[eval]\nebn0_db = [1.0]\nebn0_step = 1.0\n", &[]).unwrap();
        assert!(both.ebn0_grid().is_err());
        assert_eq!(RunConfig::default().ebn0_grid().unwrap().len(), 13);
    }

    #[test]
    fn ae_config_from_sections() {
        let text = "[system]\nM = 64\nn = 3\n[loss]\nbeta = 0.2\nepsilon = 0.2\n[channel]\ntrain_ebn0_db = 7.0\n";
        let cfg = RunConfig::parse(text, &[]).unwrap().ae_config().unwrap();
        assert_eq!(cfg.rate_bits(), 2.0);
        let bad = RunConfig::parse(text, &["loss.epsilon=1.5".into()]).unwrap();
        assert!(bad
            .ae_config()
            .unwrap_err()
            .to_string()
            .contains("loss.epsilon"));
    }
}
