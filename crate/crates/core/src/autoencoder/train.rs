use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::system::LinkSystem;
use super::{ae_loss, decode_hard, one_hot, smoothed_target_matrix, AeConfig};
use crate::channel::{ChannelModel, ChannelRealization};
use crate::diffcore::{optimizer_step, Binding, Graph, ParamId, Tensor};
use crate::error::{Error, Result};
use crate::estimators::train::{diverged, TraceRecorder};
use crate::estimators::{build_objective, derangement, EstimatorState, TrainingTrace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AeTraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub cross_entropy: f64,
    /// Critic value function on the autoencoder batch (0 without a critic).
    pub value: f64,
    /// Estimated MI per codeword.
    pub mi_nats: f64,
    pub mi_bits_per_use: f64,
    /// Fraction of the batch decoded wrongly.
    pub bler: f64,
}

#[derive(Clone, Debug)]
pub struct AeTrainingReport {
    pub rows: Vec<AeTraceRow>,
    /// Critic trace; empty without a critic.
    pub estimator_trace: TrainingTrace,
    pub rate_bits: f64,
    /// Trailing means over the smoothing window.
    pub final_loss: f64,
    pub final_bler: f64,
    pub final_mi_bits_per_use: Option<f64>,
}

impl AeTrainingReport {
    /// CSV with header `iter,loss,cross_entropy,value,mi_nats,mi_bits_per_use,bler`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = crate::evalharness::csv_writer(out);
        w.write_record([
            "iter",
            "loss",
            "cross_entropy",
            "value",
            "mi_nats",
            "mi_bits_per_use",
            "bler",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.loss.to_string(),
                r.cross_entropy.to_string(),
                r.value.to_string(),
                r.mi_nats.to_string(),
                r.mi_bits_per_use.to_string(),
                r.bler.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

struct Window {
    len: usize,
    values: VecDeque<f64>,
}

impl Window {
    fn new(len: usize) -> Self {
        Self {
            len,
            values: VecDeque::with_capacity(len),
        }
    }

    fn push(&mut self, v: f64) {
        if self.values.len() == self.len {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// Draws messages and channel randomness for one batch.
struct Batch {
    messages: Vec<usize>,
    realization: ChannelRealization,
    unpaired: Vec<usize>,
}

fn draw_batch(cfg: &AeConfig, channel: &ChannelModel, rng: &mut impl Rng) -> Result<Batch> {
    let messages: Vec<usize> = (0..cfg.batch_size)
        .map(|_| rng.random_range(0..cfg.m))
        .collect();
    let realization = channel.realize(cfg.batch_size, 2 * cfg.n, rng)?;
    let unpaired = derangement(cfg.batch_size, rng)?;
    Ok(Batch {
        messages,
        realization,
        unpaired,
    })
}

/// Transmitted and received symbols for a batch under the current encoder.
fn channel_pairs(sys: &LinkSystem, batch: &Batch) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let oh = g.constant(one_hot(&batch.messages, sys.m)?)?;
    let x = sys
        .encoder
        .forward(&mut g, &sys.store, oh, Binding::Frozen)?;
    let xv = g.value(x).clone();
    let yv = batch.realization.apply(&xv)?;
    Ok((xv, yv))
}

/// Alternates critic ascent on its value function with encoder/decoder
/// descent on smoothed cross-entropy minus `β` times that value function
/// (critic frozen, gradient flowing through the transmitted symbols).
pub fn train_autoencoder(
    cfg: &AeConfig,
    rng: &mut impl Rng,
) -> Result<(LinkSystem, AeTrainingReport)> {
    cfg.validate()?;
    let channel = ChannelModel::from_ebn0(cfg.channel, cfg.train_ebn0_db, cfg.rate_bits())?;
    let mut sys = LinkSystem::new(cfg.m, cfg.n, cfg.channel, cfg.power, rng);
    let ae_ids: Vec<ParamId> = sys.store.ids().collect();
    let mut critic = cfg
        .estimator
        .map(|kind| EstimatorState::new(kind, 2 * cfg.n, 2 * cfg.n, cfg.critic_optimizer, rng));

    let mut recorder = TraceRecorder::new(cfg.log_every, cfg.smoothing_window);
    let mut rows = Vec::new();
    let (mut loss_w, mut bler_w, mut mi_w) = (
        Window::new(cfg.smoothing_window),
        Window::new(cfg.smoothing_window),
        Window::new(cfg.smoothing_window),
    );

    for it in 0..cfg.iterations {
        let batch = draw_batch(cfg, &channel, rng)?;
        let mut mi_nats = 0.0;
        if let Some(state) = critic.as_mut() {
            for k in 0..cfg.critic_steps {
                let fresh;
                let b = if k == 0 {
                    &batch
                } else {
                    fresh = draw_batch(cfg, &channel, rng)?;
                    &fresh
                };
                let (xv, yv) = channel_pairs(&sys, b)?;
                let outcome = state
                    .step(&xv, &yv, &b.unpaired)
                    .map_err(|e| diverged(it, e))?;
                if k == 0 {
                    recorder.record(it, &outcome);
                    mi_nats = outcome.mi.nats;
                }
            }
        }

        let mut g = Graph::new();
        let oh = g.constant(one_hot(&batch.messages, cfg.m)?)?;
        let x = sys
            .encoder
            .forward(&mut g, &sys.store, oh, Binding::Trainable)?;
        let y = batch.realization.apply_node(&mut g, x)?;
        let post = sys
            .decoder
            .forward(&mut g, &sys.store, y, Binding::Trainable)?;
        let value = match critic.as_ref() {
            Some(state) if cfg.beta > 0.0 => {
                let out = state.net.critic(
                    &mut g,
                    &state.store,
                    x,
                    y,
                    &batch.unpaired,
                    Binding::Frozen,
                )?;
                Some(build_objective(&state.kind, &mut g, out, None)?.value)
            }
            _ => None,
        };
        let targets = smoothed_target_matrix(&batch.messages, cfg.epsilon, cfg.m)?;
        let loss = ae_loss(&mut g, post, targets, value, cfg.beta).map_err(|e| diverged(it, e))?;
        sys.store.zero_grads(&ae_ids);
        g.backward(loss, &mut sys.store)
            .map_err(|e| diverged(it, e))?;
        optimizer_step(&mut sys.store, &ae_ids, &cfg.optimizer)?;

        let loss_v = g.scalar(loss);
        let value_v = value.map_or(0.0, |v| g.scalar(v));
        let ce = loss_v + cfg.beta * value_v;
        let errors = g
            .value(post)
            .data()
            .chunks(cfg.m)
            .zip(&batch.messages)
            .filter(|(p, &s)| decode_hard(p) != s)
            .count();
        let bler = errors as f64 / cfg.batch_size as f64;
        let mi_bits_per_use = mi_nats / std::f64::consts::LN_2 / cfg.n as f64;
        loss_w.push(loss_v);
        bler_w.push(bler);
        mi_w.push(mi_bits_per_use);
        if !loss_v.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                detail: "non-finite autoencoder loss".into(),
            });
        }
        if it % cfg.log_every == 0 {
            rows.push(AeTraceRow {
                iteration: it,
                loss: loss_v,
                cross_entropy: ce,
                value: value_v,
                mi_nats,
                mi_bits_per_use,
                bler,
            });
        }
    }

    let report = AeTrainingReport {
        rows,
        estimator_trace: recorder.finish(),
        rate_bits: cfg.rate_bits(),
        final_loss: loss_w.mean(),
        final_bler: bler_w.mean(),
        final_mi_bits_per_use: critic.is_some().then(|| mi_w.mean()),
    };
    Ok((sys, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn quick(m: usize, n: usize) -> AeConfig {
        let mut c = AeConfig::new(m, n);
        c.iterations = 60;
        c.batch_size = 64;
        c.log_every = 10;
        c.smoothing_window = 20;
        c
    }

    #[test]
    fn short_run_is_finite_and_logged() {
        let cfg = quick(4, 2);
        let (sys, report) = train_autoencoder(&cfg, &mut rng_from_seed(3)).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert!(report.final_loss.is_finite());
        assert_eq!(report.estimator_trace.rows.len(), 6);
        let cb = sys.codebook().unwrap();
        let power = 2.0 * cb.data().iter().map(|v| v * v).sum::<f64>() / cb.len() as f64;
        assert!((power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut cfg = quick(4, 2);
        cfg.iterations = 20;
        let (a, ra) = train_autoencoder(&cfg, &mut rng_from_seed(5)).unwrap();
        let (b, rb) = train_autoencoder(&cfg, &mut rng_from_seed(5)).unwrap();
        assert_eq!(ra.rows, rb.rows);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn without_critic_beta_must_be_zero() {
        let mut cfg = quick(4, 1);
        cfg.estimator = None;
        assert!(train_autoencoder(&cfg, &mut rng_from_seed(0)).is_err());
        cfg.beta = 0.0;
        let (_, report) = train_autoencoder(&cfg, &mut rng_from_seed(0)).unwrap();
        assert!(report.final_mi_bits_per_use.is_none());
        assert!(report.estimator_trace.rows.is_empty());
    }
}
