use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::discriminator::DiscriminatorNet;
use super::objective::{build_objective, mi_readout, MiReadout, MineEma};
use super::sampling::JointSampler;
use super::{EstimatorKind, EstimatorSpec};
use crate::diffcore::{
    optimizer_step, Binding, Graph, OptimizerConfig, ParamId, ParamStore, Tensor,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub value: f64,
    pub mi_nats: f64,
    pub mi_bits: f64,
    pub clip_events: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    /// Trailing mean of per-iteration estimates over the smoothing window.
    pub final_mi_nats: f64,
    /// Trailing mean of the direct read-out, when the estimator has one.
    pub final_direct_nats: Option<f64>,
    pub clip_events: usize,
}

impl TrainingTrace {
    pub fn final_mi_bits(&self) -> f64 {
        self.final_mi_nats / std::f64::consts::LN_2
    }

    /// CSV with header `iter,value,mi_nats,mi_bits,clip_events`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = crate::evalharness::csv_writer(out);
        w.write_record(["iter", "value", "mi_nats", "mi_bits", "clip_events"])?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.value.to_string(),
                r.mi_nats.to_string(),
                r.mi_bits.to_string(),
                r.clip_events.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Logs every `log_every`-th step and keeps a trailing window for the
/// final estimate.
#[derive(Debug)]
pub(crate) struct TraceRecorder {
    log_every: usize,
    window: usize,
    recent: VecDeque<(f64, Option<f64>)>,
    trace: TrainingTrace,
}

impl TraceRecorder {
    pub(crate) fn new(log_every: usize, window: usize) -> Self {
        Self {
            log_every,
            window,
            recent: VecDeque::with_capacity(window),
            trace: TrainingTrace::default(),
        }
    }

    pub(crate) fn record(&mut self, iteration: usize, step: &StepOutcome) {
        self.trace.clip_events += step.clip_events;
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back((step.mi.nats, step.mi.direct_nats));
        if iteration % self.log_every == 0 {
            self.trace.rows.push(TraceRow {
                iteration,
                value: step.value,
                mi_nats: step.mi.nats,
                mi_bits: step.mi.nats / std::f64::consts::LN_2,
                clip_events: step.clip_events,
            });
        }
    }

    pub(crate) fn finish(mut self) -> TrainingTrace {
        let n = self.recent.len().max(1) as f64;
        self.trace.final_mi_nats = self.recent.iter().map(|r| r.0).sum::<f64>() / n;
        self.trace.final_direct_nats =
            if self.recent.iter().all(|r| r.1.is_some()) && !self.recent.is_empty() {
                Some(self.recent.iter().filter_map(|r| r.1).sum::<f64>() / n)
            } else {
                None
            };
        self.trace
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub value: f64,
    pub mi: MiReadout,
    pub clip_events: usize,
}

/// A critic, its parameters and optimizer state. Owns its own
/// [`ParamStore`] so nothing else can update it.
#[derive(Clone, Debug)]
pub struct EstimatorState {
    pub kind: EstimatorKind,
    pub net: DiscriminatorNet,
    pub store: ParamStore,
    pub optimizer: OptimizerConfig,
    ema: Option<MineEma>,
    param_ids: Vec<ParamId>,
}

impl EstimatorState {
    pub fn new(
        kind: EstimatorKind,
        x_dim: usize,
        y_dim: usize,
        optimizer: OptimizerConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let mut store = ParamStore::new();
        let net = DiscriminatorNet::for_estimator(&mut store, &kind, x_dim, y_dim, rng);
        Self::from_parts(kind, net, store, optimizer)
    }

    pub fn from_parts(
        kind: EstimatorKind,
        net: DiscriminatorNet,
        store: ParamStore,
        optimizer: OptimizerConfig,
    ) -> Self {
        let ema = match kind {
            EstimatorKind::Mine { ema_rate } => Some(MineEma::new(ema_rate)),
            _ => None,
        };
        let param_ids = net.mlp.param_ids();
        Self {
            kind,
            net,
            store,
            optimizer,
            ema,
            param_ids,
        }
    }

    /// One gradient-ascent step on the critic.
    pub fn step(
        &mut self,
        xs: &Tensor,
        ys: &Tensor,
        unpaired_index: &[usize],
    ) -> Result<StepOutcome> {
        let mut g = Graph::new();
        let x = g.constant(xs.clone())?;
        let y = g.constant(ys.clone())?;
        let out = self.net.critic(
            &mut g,
            &self.store,
            x,
            y,
            unpaired_index,
            Binding::Trainable,
        )?;
        let nodes = build_objective(&self.kind, &mut g, out, self.ema.as_mut())?;
        let loss = g.scale(nodes.surrogate, -1.0)?;
        self.store.zero_grads(&self.param_ids);
        g.backward(loss, &mut self.store)?;
        optimizer_step(&mut self.store, &self.param_ids, &self.optimizer)?;
        let value = g.scalar(nodes.value);
        let mi = mi_readout(&self.kind, value, g.value(out.paired).data())?;
        Ok(StepOutcome {
            value,
            mi,
            clip_events: g.clip_events(),
        })
    }

    /// Value and MI read-out on a batch without updating the critic.
    pub fn evaluate(
        &self,
        xs: &Tensor,
        ys: &Tensor,
        unpaired_index: &[usize],
    ) -> Result<StepOutcome> {
        let mut g = Graph::new();
        let x = g.constant(xs.clone())?;
        let y = g.constant(ys.clone())?;
        let out = self
            .net
            .critic(&mut g, &self.store, x, y, unpaired_index, Binding::Frozen)?;
        let nodes = build_objective(&self.kind, &mut g, out, None)?;
        let value = g.scalar(nodes.value);
        let mi = mi_readout(&self.kind, value, g.value(out.paired).data())?;
        Ok(StepOutcome {
            value,
            mi,
            clip_events: g.clip_events(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainedEstimator {
    pub state: EstimatorState,
    pub trace: TrainingTrace,
}

pub(crate) fn diverged(iteration: usize, err: Error) -> Error {
    match err {
        Error::NonFinite { op } => Error::Diverged {
            iteration,
            detail: format!("non-finite value in `{op}`"),
        },
        other => other,
    }
}

/// Fits a fresh critic by gradient ascent on the spec's value function.
pub fn train_estimator<S: JointSampler, R: Rng>(
    spec: &EstimatorSpec,
    sampler: &mut S,
    rng: &mut R,
) -> Result<TrainedEstimator> {
    spec.validate()?;
    let mut state = EstimatorState::new(
        spec.kind,
        sampler.x_dim(),
        sampler.y_dim(),
        spec.optimizer,
        rng,
    );
    let mut recorder = TraceRecorder::new(spec.log_every, spec.smoothing_window);
    for it in 0..spec.iterations {
        let batch = sampler.sample(spec.batch_size, rng)?;
        let outcome = state
            .step(&batch.xs, &batch.ys, &batch.unpaired_index)
            .map_err(|e| diverged(it, e))?;
        if !outcome.mi.nats.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                detail: "non-finite MI estimate".into(),
            });
        }
        recorder.record(it, &outcome);
    }
    Ok(TrainedEstimator {
        state,
        trace: recorder.finish(),
    })
}
