//! Capacity-driven autoencoder: an encoder/decoder pair over a noisy
//! channel, trained on label-smoothed cross-entropy minus a weighted MI
//! lower bound supplied by a jointly trained critic.

mod nets;
mod system;
mod train;

pub use nets::{DecoderNet, EncoderNet};
pub use system::LinkSystem;
pub use train::{train_autoencoder, AeTraceRow, AeTrainingReport};

use crate::channel::{ChannelKind, PowerConstraint};
use crate::diffcore::{Graph, NodeId, OptimizerConfig, Tensor};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;

/// `(1 − ε) δ_s + ε / M`.
pub fn smoothed_targets(s: usize, epsilon: f64, m: usize) -> Result<Vec<f64>> {
    if s >= m {
        return Err(Error::invalid(
            "message",
            format!("index {s} out of range for M = {m}"),
        ));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(
            "epsilon",
            format!("must lie in [0, 1], got {epsilon}"),
        ));
    }
    let floor = epsilon / m as f64;
    let mut t = vec![floor; m];
    t[s] = 1.0 - epsilon + floor;
    Ok(t)
}

/// `[B, M]` matrix of smoothed target rows.
pub fn smoothed_target_matrix(messages: &[usize], epsilon: f64, m: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(messages.len() * m);
    for &s in messages {
        data.extend(smoothed_targets(s, epsilon, m)?);
    }
    Tensor::matrix(messages.len(), m, data)
}

pub fn one_hot(messages: &[usize], m: usize) -> Result<Tensor> {
    let mut data = vec![0.0; messages.len() * m];
    for (i, &s) in messages.iter().enumerate() {
        if s >= m {
            return Err(Error::invalid(
                "message",
                format!("index {s} out of range for M = {m}"),
            ));
        }
        data[i * m + s] = 1.0;
    }
    Tensor::matrix(messages.len(), m, data)
}

/// Argmax, ties to the lowest index.
pub fn decode_hard(posterior: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in posterior.iter().enumerate() {
        if p > posterior[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of `posteriors` against `targets`, minus `beta` times
/// `mi_term` when given. With `beta == 0` this is the cross-entropy node
/// itself.
pub fn ae_loss(
    g: &mut Graph,
    posteriors: NodeId,
    targets: Tensor,
    mi_term: Option<NodeId>,
    beta: f64,
) -> Result<NodeId> {
    let ce = g.cross_entropy(posteriors, targets)?;
    match mi_term {
        Some(mi) if beta != 0.0 => {
            let weighted = g.scale(mi, beta)?;
            g.sub(ce, weighted)
        }
        _ => Ok(ce),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AeConfig {
    pub m: usize,
    pub n: usize,
    /// Weight on the MI value function, in nats.
    pub beta: f64,
    pub epsilon: f64,
    pub channel: ChannelKind,
    pub power: PowerConstraint,
    pub train_ebn0_db: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Critic trained alongside; required when `beta > 0`.
    pub estimator: Option<EstimatorKind>,
    pub optimizer: OptimizerConfig,
    pub critic_optimizer: OptimizerConfig,
    /// Critic updates per autoencoder update.
    pub critic_steps: usize,
    pub log_every: usize,
    pub smoothing_window: usize,
}

impl AeConfig {
    /// `β = ε = 0.2`, 7 dB AWGN, γ-DIME (γ = 1), 10k iterations at lr 0.01.
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            beta: 0.2,
            epsilon: 0.2,
            channel: ChannelKind::Awgn,
            power: PowerConstraint::BatchAverage,
            train_ebn0_db: 7.0,
            iterations: 10_000,
            batch_size: 512,
            estimator: Some(EstimatorKind::gamma(1.0)),
            optimizer: OptimizerConfig::adam(0.01),
            critic_optimizer: OptimizerConfig::adam(0.01),
            critic_steps: 1,
            log_every: 10,
            smoothing_window: 500,
        }
    }

    /// Bits per channel use, `log2(M) / n`.
    pub fn rate_bits(&self) -> f64 {
        (self.m as f64).log2() / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid(
                "m",
                format!("alphabet needs at least 2 messages, got {}", self.m),
            ));
        }
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1 channel use"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(
                "beta",
                format!("must be non-negative, got {}", self.beta),
            ));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::invalid(
                "epsilon",
                format!("must lie in [0, 1), got {}", self.epsilon),
            ));
        }
        if !self.train_ebn0_db.is_finite() {
            return Err(Error::invalid("train_ebn0_db", "must be finite"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch", "must be at least 2"));
        }
        if self.critic_steps == 0 {
            return Err(Error::invalid("critic_steps", "must be at least 1"));
        }
        if self.log_every == 0 || self.smoothing_window == 0 {
            return Err(Error::invalid(
                "log_every",
                "logging cadence and window must be positive",
            ));
        }
        match self.estimator {
            Some(kind) => kind.validate()?,
            None if self.beta > 0.0 => {
                return Err(Error::invalid("estimator", "beta > 0 needs an estimator"));
            }
            None => {}
        }
        self.optimizer.validate()?;
        self.critic_optimizer.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_examples() {
        assert_eq!(
            smoothed_targets(2, 0.0, 4).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0]
        );
        let t = smoothed_targets(1, 0.2, 4).unwrap();
        let want = [0.05, 0.85, 0.05, 0.05];
        for (a, b) in t.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(smoothed_targets(3, 1.0, 4).unwrap(), vec![0.25; 4]);
        assert!(smoothed_targets(4, 0.1, 4).is_err());
    }

    #[test]
    fn hard_decisions() {
        assert_eq!(decode_hard(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(decode_hard(&[0.5, 0.5]), 0);
        assert_eq!(decode_hard(&[0.25; 4]), 0);
    }

    fn loss_of(post: Vec<f64>, m: usize, targets: Tensor, mi: Option<f64>, beta: f64) -> f64 {
        let mut g = Graph::new();
        let rows = post.len() / m;
        let p = g.constant(Tensor::matrix(rows, m, post).unwrap()).unwrap();
        let mi = mi.map(|v| g.constant(Tensor::scalar(v)).unwrap());
        let l = ae_loss(&mut g, p, targets, mi, beta).unwrap();
        g.scalar(l)
    }

    #[test]
    fn loss_closed_forms() {
        let t = smoothed_target_matrix(&[1], 0.0, 3).unwrap();
        assert_eq!(loss_of(vec![0.0, 1.0, 0.0], 3, t.clone(), None, 0.0), 0.0);
        let uniform = loss_of(
            vec![0.25; 4],
            4,
            smoothed_target_matrix(&[3], 0.0, 4).unwrap(),
            None,
            0.0,
        );
        assert!((uniform - 4f64.ln()).abs() < 1e-15);
        let post = vec![0.2, 0.5, 0.3];
        let a = loss_of(post.clone(), 3, t.clone(), Some(1.0), 0.2);
        let b = loss_of(post, 3, t, Some(1.5), 0.2);
        assert!(((a - b) - 0.2 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_is_plain_cross_entropy() {
        let post = vec![0.2, 0.5, 0.3, 0.6, 0.1, 0.3];
        let mut g = Graph::new();
        let p = g
            .constant(Tensor::matrix(2, 3, post.clone()).unwrap())
            .unwrap();
        let nll = g.nll_gather(p, &[1, 0]).unwrap();
        let mi = g.constant(Tensor::scalar(0.7)).unwrap();
        let l = ae_loss(&mut g, p, one_hot(&[1, 0], 3).unwrap(), Some(mi), 0.0).unwrap();
        assert_eq!(g.scalar(l).to_bits(), g.scalar(nll).to_bits());
    }

    #[test]
    fn config_validation() {
        let c = AeConfig::new(64, 3);
        c.validate().unwrap();
        assert_eq!(c.rate_bits(), 2.0);
        assert!((AeConfig::new(8, 9).rate_bits() - 1.0 / 3.0).abs() < 1e-15);
        let mut bad = c.clone();
        bad.estimator = None;
        assert!(bad.validate().is_err());
        bad.beta = 0.0;
        bad.validate().unwrap();
        let mut bad = c;
        bad.epsilon = 1.0;
        assert!(bad.validate().is_err());
    }
}
