//! Discriminative mutual-information estimators.
//!
//! Every estimator trains a critic network on paired draws from `p(x, y)`
//! and unpaired draws from `p(x) p(y)`, ascending a variational value
//! function:
//!
//! | kind | critic output | value function | MI read-out |
//! |------|---------------|----------------|-------------|
//! | MINE | `T ∈ ℝ` | `mean T_p − ln mean e^{T_q}` | value |
//! | NWJ | `T ∈ ℝ` | `mean T_p − mean e^{T_q − 1}` | value |
//! | SMILE | `T ∈ ℝ` | MINE with `e^{T_q}` clipped to `[e^{−τ}, e^{τ}]` | value |
//! | d-DIME | `D > 0` | `α mean ln D_p − mean D_q` | `J/α + 1 − ln α` |
//! | f-DIME | `T` in dom f* | `mean T_p − mean f*(T_q)` | `mean ln (f′)⁻¹(T_p)` |
//! | γ-DIME | `D > 0` | `γ mean ln D_p − mean D_q^γ` | `J + 1` |

mod discriminator;
mod fgen;
mod objective;
mod sampling;
pub(crate) mod train;
mod value;

pub use discriminator::{CriticOutputs, DiscriminatorNet, DISCRIMINATOR_HIDDEN, LEAKY_SLOPE};
pub use fgen::FGenerator;
pub use objective::{build_objective, mi_readout, MiReadout, MineEma, ObjectiveNodes};
pub(crate) use sampling::gather_rows;
pub use sampling::{
    derangement, gaussian_mi_nats, make_unpaired, CorrelatedGaussian, JointSampler, SampleBatch,
};
pub use train::{
    train_estimator, EstimatorState, StepOutcome, TraceRow, TrainedEstimator, TrainingTrace,
};
pub use value::{
    estimate_ddime, estimate_fdime, estimate_gamma, estimate_gamma_direct, log_mean_exp,
    value_ddime, value_fdime, value_gamma, value_mine, value_nwj, value_smile,
};

use crate::diffcore::{Activation, OptimizerConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EstimatorKind {
    Mine { ema_rate: f64 },
    Nwj,
    Smile { tau: f64 },
    DDime { alpha: f64 },
    FDime { generator: FGenerator },
    GammaDime { gamma: f64 },
}

pub const DEFAULT_EMA_RATE: f64 = 0.99;
pub const DEFAULT_SMILE_TAU: f64 = 5.0;

impl EstimatorKind {
    pub fn mine() -> Self {
        EstimatorKind::Mine {
            ema_rate: DEFAULT_EMA_RATE,
        }
    }

    pub fn gamma(gamma: f64) -> Self {
        EstimatorKind::GammaDime { gamma }
    }

    /// Canonical label, e.g. `gamma-dime:0.5`. Round-trips through
    /// [`EstimatorKind::parse`].
    pub fn name(&self) -> String {
        match self {
            EstimatorKind::Mine { ema_rate } if *ema_rate == DEFAULT_EMA_RATE => "mine".into(),
            EstimatorKind::Mine { ema_rate } => format!("mine:{ema_rate}"),
            EstimatorKind::Nwj => "nwj".into(),
            EstimatorKind::Smile { tau } => format!("smile:{tau}"),
            EstimatorKind::DDime { alpha } => format!("d-dime:{alpha}"),
            EstimatorKind::FDime { generator } => format!("f-dime:{}", generator.name()),
            EstimatorKind::GammaDime { gamma } => format!("gamma-dime:{gamma}"),
        }
    }

    /// Parses `mine[:ema]`, `nwj`, `smile[:tau]`, `d-dime[:alpha]`,
    /// `f-dime:<kl|gan|scaled-kl:γ>`, `gamma-dime[:gamma]`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        let (head, arg) = match lower.split_once(':') {
            Some((h, a)) => (h.to_string(), Some(a.to_string())),
            None => (lower.clone(), None),
        };
        let num = |default: f64| -> Result<f64> {
            match &arg {
                None => Ok(default),
                Some(a) => a
                    .parse::<f64>()
                    .map_err(|_| Error::invalid("estimator", format!("bad parameter in `{s}`"))),
            }
        };
        let kind = match head.replace(['_', ' '], "-").as_str() {
            "mine" => EstimatorKind::Mine {
                ema_rate: num(DEFAULT_EMA_RATE)?,
            },
            "nwj" => EstimatorKind::Nwj,
            "smile" => EstimatorKind::Smile {
                tau: num(DEFAULT_SMILE_TAU)?,
            },
            "d-dime" | "ddime" => EstimatorKind::DDime { alpha: num(1.0)? },
            "f-dime" | "fdime" => {
                let g = arg.as_deref().unwrap_or("kl");
                EstimatorKind::FDime {
                    generator: FGenerator::parse(g).ok_or_else(|| {
                        Error::invalid("estimator", format!("unknown generator `{g}`"))
                    })?,
                }
            }
            "gamma-dime" | "gammadime" | "γ-dime" | "γdime" => {
                EstimatorKind::GammaDime { gamma: num(1.0)? }
            }
            _ => {
                return Err(Error::invalid(
                    "estimator",
                    format!("unknown estimator `{s}`"),
                ))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be positive, got {v}")))
            }
        };
        match *self {
            EstimatorKind::Mine { ema_rate } => {
                if ema_rate > 0.0 && ema_rate < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "ema_rate",
                        format!("must lie in (0, 1), got {ema_rate}"),
                    ))
                }
            }
            EstimatorKind::Nwj => Ok(()),
            EstimatorKind::Smile { tau } => {
                if tau >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "tau",
                        format!("must be non-negative, got {tau}"),
                    ))
                }
            }
            EstimatorKind::DDime { alpha } => positive("alpha", alpha),
            EstimatorKind::FDime { generator } => generator.validate(),
            EstimatorKind::GammaDime { gamma } => positive("gamma", gamma),
        }
    }

    pub fn is_dime_family(&self) -> bool {
        matches!(
            self,
            EstimatorKind::DDime { .. }
                | EstimatorKind::FDime { .. }
                | EstimatorKind::GammaDime { .. }
        )
    }

    /// Output layer of the critic: linear for T-critics, softplus for
    /// positive D-critics.
    pub fn head(&self) -> Activation {
        match self {
            EstimatorKind::Mine { .. } | EstimatorKind::Nwj | EstimatorKind::Smile { .. } => {
                Activation::Linear
            }
            EstimatorKind::DDime { .. } | EstimatorKind::GammaDime { .. } => Activation::Softplus,
            EstimatorKind::FDime { generator } => generator.head(),
        }
    }
}

/// Estimator plus the training schedule that fits its critic.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Trace rows are written every `log_every` iterations.
    pub log_every: usize,
    /// Final estimate is the mean of the last `smoothing_window` per-iteration
    /// estimates.
    pub smoothing_window: usize,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            iterations: 10_000,
            batch_size: 512,
            optimizer: OptimizerConfig::adam(0.01),
            log_every: 10,
            smoothing_window: 500,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.optimizer.validate()?;
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch", "must be at least 2"));
        }
        if self.log_every == 0 || self.smoothing_window == 0 {
            return Err(Error::invalid(
                "log_every",
                "logging cadence and window must be positive",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let kinds = [
            EstimatorKind::mine(),
            EstimatorKind::Mine { ema_rate: 0.9 },
            EstimatorKind::Nwj,
            EstimatorKind::Smile { tau: 1.0 },
            EstimatorKind::DDime { alpha: 0.5 },
            EstimatorKind::FDime {
                generator: FGenerator::Gan,
            },
            EstimatorKind::FDime {
                generator: FGenerator::ScaledKl { gamma: 2.0 },
            },
            EstimatorKind::gamma(0.5),
        ];
        for k in kinds {
            assert_eq!(EstimatorKind::parse(&k.name()).unwrap(), k);
        }
        assert_eq!(
            EstimatorKind::parse("γDIME:2").unwrap(),
            EstimatorKind::gamma(2.0)
        );
        assert_eq!(EstimatorKind::parse("MINE").unwrap(), EstimatorKind::mine());
    }

    #[test]
    fn invalid_hyperparameters() {
        assert!(EstimatorKind::parse("gamma-dime:-1").is_err());
        assert!(EstimatorKind::parse("d-dime:0").is_err());
        assert!(EstimatorKind::parse("mine:1.5").is_err());
        assert!(EstimatorKind::parse("smile:-2").is_err());
        assert!(EstimatorKind::parse("infonce").is_err());
    }

    #[test]
    fn heads() {
        assert_eq!(EstimatorKind::mine().head(), Activation::Linear);
        assert_eq!(EstimatorKind::gamma(1.0).head(), Activation::Softplus);
        assert!(EstimatorKind::DDime { alpha: 1.0 }.is_dime_family());
        assert!(!EstimatorKind::Nwj.is_dime_family());
    }
}
