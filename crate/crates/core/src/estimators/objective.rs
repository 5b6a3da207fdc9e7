//! Value functions as graph nodes, and the training surrogates whose
//! gradients drive each critic.

use super::discriminator::CriticOutputs;
use super::value;
use super::EstimatorKind;
use crate::diffcore::{Graph, NodeId};
use crate::error::Result;

/// Bias-corrected exponential moving average of `mean(exp(T_q))`, used in
/// place of the batch value in the gradient of MINE's log term.
#[derive(Clone, Debug, PartialEq)]
pub struct MineEma {
    rate: f64,
    average: f64,
    steps: i32,
}

impl MineEma {
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            average: 0.0,
            steps: 0,
        }
    }

    pub fn update(&mut self, batch_mean: f64) -> f64 {
        self.steps = self.steps.saturating_add(1);
        self.average = self.rate * self.average + (1.0 - self.rate) * batch_mean;
        self.corrected()
    }

    pub fn corrected(&self) -> f64 {
        if self.steps == 0 {
            return self.average;
        }
        self.average / (1.0 - self.rate.powi(self.steps))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ObjectiveNodes {
    /// The estimator's value function on this batch.
    pub value: NodeId,
    /// Scalar whose gradient the critic ascends. Equals `value` except for
    /// MINE (EMA-corrected denominator) and SMILE (Jensen–Shannon critic
    /// objective; the clipped bound is only read out).
    pub surrogate: NodeId,
}

fn mean_log(g: &mut Graph, d: NodeId) -> Result<NodeId> {
    let l = g.log(d)?;
    g.mean(l)
}

/// Builds the value function (and training surrogate) on critic outputs.
/// `ema` is advanced with this batch when the kind is MINE.
pub fn build_objective(
    kind: &EstimatorKind,
    g: &mut Graph,
    out: CriticOutputs,
    ema: Option<&mut MineEma>,
) -> Result<ObjectiveNodes> {
    let CriticOutputs { paired, unpaired } = out;
    match *kind {
        EstimatorKind::Mine { .. } => {
            let first = g.mean(paired)?;
            let e = g.guarded_exp(unpaired)?;
            let mean_e = g.mean(e)?;
            let log_mean = g.log(mean_e)?;
            let value = g.sub(first, log_mean)?;
            let surrogate = match ema {
                Some(ema) => {
                    let denom = ema.update(g.scalar(mean_e));
                    let scaled = g.scale(mean_e, 1.0 / denom)?;
                    g.sub(first, scaled)?
                }
                None => value,
            };
            Ok(ObjectiveNodes { value, surrogate })
        }
        EstimatorKind::Nwj => {
            let first = g.mean(paired)?;
            let shifted = g.add_scalar(unpaired, -1.0)?;
            let e = g.guarded_exp(shifted)?;
            let second = g.mean(e)?;
            let value = g.sub(first, second)?;
            Ok(ObjectiveNodes {
                value,
                surrogate: value,
            })
        }
        EstimatorKind::Smile { tau } => {
            let first = g.mean(paired)?;
            let clipped = g.clip(unpaired, -tau, tau)?;
            let e = g.exp(clipped)?;
            let mean_e = g.mean(e)?;
            let log_mean = g.log(mean_e)?;
            let value = g.sub(first, log_mean)?;
            // -mean softplus(-T_p) - mean softplus(T_q): optimum T = log ratio
            let neg_p = g.scale(paired, -1.0)?;
            let sp_p = g.softplus(neg_p)?;
            let a = g.mean(sp_p)?;
            let sp_q = g.softplus(unpaired)?;
            let b = g.mean(sp_q)?;
            let sum = g.add(a, b)?;
            let surrogate = g.scale(sum, -1.0)?;
            Ok(ObjectiveNodes { value, surrogate })
        }
        EstimatorKind::DDime { alpha } => {
            let first = mean_log(g, paired)?;
            let first = g.scale(first, alpha)?;
            let second = g.mean(unpaired)?;
            let value = g.sub(first, second)?;
            Ok(ObjectiveNodes {
                value,
                surrogate: value,
            })
        }
        EstimatorKind::FDime { generator } => {
            let first = g.mean(paired)?;
            let conj = generator.conjugate_node(g, unpaired)?;
            let second = g.mean(conj)?;
            let value = g.sub(first, second)?;
            Ok(ObjectiveNodes {
                value,
                surrogate: value,
            })
        }
        EstimatorKind::GammaDime { gamma } => {
            let first = mean_log(g, paired)?;
            let first = g.scale(first, gamma)?;
            let powered = g.pow(unpaired, gamma)?;
            let second = g.mean(powered)?;
            let value = g.sub(first, second)?;
            Ok(ObjectiveNodes {
                value,
                surrogate: value,
            })
        }
    }
}

/// MI estimate in nats from a batch's value and paired critic outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiReadout {
    pub nats: f64,
    /// Alternative direct read-out where one exists (γ-DIME: `mean γ ln D_p`).
    pub direct_nats: Option<f64>,
}

pub fn mi_readout(kind: &EstimatorKind, value: f64, paired: &[f64]) -> Result<MiReadout> {
    Ok(match *kind {
        EstimatorKind::Mine { .. } | EstimatorKind::Nwj | EstimatorKind::Smile { .. } => {
            MiReadout {
                nats: value,
                direct_nats: None,
            }
        }
        EstimatorKind::DDime { alpha } => MiReadout {
            nats: value::estimate_ddime(value, alpha)?,
            direct_nats: None,
        },
        EstimatorKind::FDime { generator } => MiReadout {
            nats: value::estimate_fdime(paired, generator)?,
            direct_nats: None,
        },
        EstimatorKind::GammaDime { gamma } => MiReadout {
            nats: value::estimate_gamma(value),
            direct_nats: Some(value::estimate_gamma_direct(paired, gamma)?),
        },
    })
}
