use rand_distr::{Distribution, Uniform};

use crate::autoencoder::{one_hot, smoothed_target_matrix};
use crate::channel::{normalize_power_node, ChannelKind, ChannelModel, PowerConstraint};
use crate::diffcore::{
    gradient_check_with, Activation, Binding, GradCheckReport, Graph, Mlp, NodeId, OpKind, ParamId,
    ParamStore, Tensor,
};
use crate::error::Result;
use crate::estimators::{
    build_objective, derangement, DiscriminatorNet, EstimatorKind, FGenerator,
};
use crate::rng_from_seed;

pub const SUITE_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1.0 / 65536.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.report.passed())
    }

    pub fn max_relative_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.report.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&SuiteEntry> {
        self.entries.iter().filter(|e| !e.report.passed()).collect()
    }
}

/// Every estimator configuration whose value function is checked.
pub fn suite_estimators() -> Vec<EstimatorKind> {
    let mut kinds = vec![
        EstimatorKind::mine(),
        EstimatorKind::Nwj,
        EstimatorKind::Smile { tau: 1.0 },
        EstimatorKind::Smile { tau: 5.0 },
    ];
    kinds.extend([0.5, 1.0, 2.0].map(|alpha| EstimatorKind::DDime { alpha }));
    kinds.extend(
        [
            FGenerator::Kl,
            FGenerator::Gan,
            FGenerator::ScaledKl { gamma: 2.0 },
        ]
        .map(|generator| EstimatorKind::FDime { generator }),
    );
    kinds.extend([0.5, 1.0, 2.0].map(EstimatorKind::gamma));
    kinds
}

struct Ctx {
    rng: crate::SimRng,
    fault: Option<OpKind>,
    entries: Vec<SuiteEntry>,
}

impl Ctx {
    fn tensor(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
        let u = Uniform::new(lo, hi).expect("valid range");
        let data = (0..rows * cols).map(|_| u.sample(&mut self.rng)).collect();
        Tensor::matrix(rows, cols, data).expect("sized")
    }

    fn check<F>(
        &mut self,
        name: &str,
        store: &mut ParamStore,
        ids: &[ParamId],
        build: F,
    ) -> Result<()>
    where
        F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
    {
        let fault = self.fault;
        let report = gradient_check_with(
            store,
            ids,
            build,
            |g| {
                if let Some(k) = fault {
                    g.inject_fault(k);
                }
            },
            STEP,
            SUITE_TOLERANCE,
        )?;
        self.entries.push(SuiteEntry {
            name: name.to_string(),
            report,
        });
        Ok(())
    }

    /// Checks `op(P)` reduced to a scalar by a fixed random weighting, for a
    /// single parameter `P` with entries in `[lo, hi)`.
    fn unary<F>(&mut self, name: &str, shape: (usize, usize), lo: f64, hi: f64, op: F) -> Result<()>
    where
        F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
    {
        let mut store = ParamStore::new();
        let p = store.add("p", self.tensor(shape.0, shape.1, lo, hi));
        let probe = {
            let mut g = Graph::new();
            let x = g.constant(store.value(p).clone())?;
            let out = op(&mut g, x)?;
            g.value(out).shape().to_vec()
        };
        let weights = self.tensor(probe[0], probe[1], 0.5, 1.5);
        self.check(name, &mut store, &[p], |g, s| {
            let x = g.param(s, p)?;
            let out = op(g, x)?;
            weighted_mean(g, out, &weights)
        })
    }

    fn binary<F>(&mut self, name: &str, a: (usize, usize), b: (usize, usize), op: F) -> Result<()>
    where
        F: Fn(&mut Graph, NodeId, NodeId) -> Result<NodeId>,
    {
        let mut store = ParamStore::new();
        let pa = store.add("a", self.tensor(a.0, a.1, -1.0, 1.0));
        let pb = store.add("b", self.tensor(b.0, b.1, -1.0, 1.0));
        let probe = {
            let mut g = Graph::new();
            let x = g.constant(store.value(pa).clone())?;
            let y = g.constant(store.value(pb).clone())?;
            let out = op(&mut g, x, y)?;
            g.value(out).shape().to_vec()
        };
        let weights = self.tensor(probe[0], probe[1], 0.5, 1.5);
        self.check(name, &mut store, &[pa, pb], |g, s| {
            let x = g.param(s, pa)?;
            let y = g.param(s, pb)?;
            let out = op(g, x, y)?;
            weighted_mean(g, out, &weights)
        })
    }
}

fn weighted_mean(g: &mut Graph, x: NodeId, weights: &Tensor) -> Result<NodeId> {
    if g.value(x).is_scalar() {
        return Ok(x);
    }
    let w = g.constant(weights.clone())?;
    let prod = g.mul(x, w)?;
    g.mean(prod)
}

/// Central-difference check of every differentiable op, the network and
/// channel compositions built from them, and every estimator's value
/// function. With `fault`, that op's backward pass is deliberately wrong.
pub fn gradcheck_suite(seed: u64, fault: Option<OpKind>) -> Result<SuiteReport> {
    let mut cx = Ctx {
        rng: rng_from_seed(seed),
        fault,
        entries: Vec::new(),
    };
    op_cases(&mut cx)?;
    composite_cases(&mut cx)?;
    for kind in suite_estimators() {
        value_case(&mut cx, kind)?;
    }
    surrogate_cases(&mut cx)?;
    Ok(SuiteReport {
        entries: cx.entries,
        tolerance: SUITE_TOLERANCE,
    })
}

fn op_cases(cx: &mut Ctx) -> Result<()> {
    cx.binary("op:matmul", (3, 4), (4, 2), |g, a, b| g.matmul(a, b))?;
    cx.binary("op:add_bias", (3, 4), (1, 4), |g, a, b| g.add_bias(a, b))?;
    cx.binary("op:add", (3, 4), (3, 4), |g, a, b| g.add(a, b))?;
    cx.binary("op:sub", (3, 4), (3, 4), |g, a, b| g.sub(a, b))?;
    cx.binary("op:mul", (3, 4), (3, 4), |g, a, b| g.mul(a, b))?;
    cx.binary("op:mul_broadcast", (3, 4), (1, 1), |g, a, b| g.mul(a, b))?;
    cx.binary("op:sub_broadcast", (3, 4), (1, 1), |g, a, b| g.sub(a, b))?;
    cx.binary("op:concat_cols", (3, 2), (3, 3), |g, a, b| {
        g.concat_cols(a, b)
    })?;
    cx.binary("op:concat_rows", (2, 3), (4, 3), |g, a, b| {
        g.concat_rows(a, b)
    })?;
    cx.unary("op:scale", (3, 4), -1.0, 1.0, |g, x| g.scale(x, 2.5))?;
    cx.unary("op:add_scalar", (3, 4), -1.0, 1.0, |g, x| {
        g.add_scalar(x, 0.3)
    })?;
    cx.unary("op:leaky_relu", (3, 4), -1.0, 1.0, |g, x| {
        g.leaky_relu(x, 0.2)
    })?;
    cx.unary("op:softplus", (3, 4), -3.0, 3.0, |g, x| g.softplus(x))?;
    cx.unary("op:log", (3, 4), 0.2, 2.0, |g, x| g.log(x))?;
    cx.unary("op:exp", (3, 4), -2.0, 2.0, |g, x| g.exp(x))?;
    cx.unary("op:guarded_exp", (3, 4), -2.0, 2.0, |g, x| g.guarded_exp(x))?;
    cx.unary("op:pow", (3, 4), 0.3, 2.0, |g, x| g.pow(x, 1.7))?;
    cx.unary("op:pow_negative", (3, 4), 0.3, 2.0, |g, x| g.pow(x, -0.5))?;
    cx.unary("op:clip", (3, 4), -1.0, 1.0, |g, x| g.clip(x, -0.3, 0.3))?;
    cx.unary("op:log1mexp", (3, 4), -3.0, -0.1, |g, x| g.log1mexp(x))?;
    cx.unary("op:mean", (3, 4), -1.0, 1.0, |g, x| g.mean(x))?;
    cx.unary("op:softmax", (3, 4), -2.0, 2.0, |g, x| g.softmax(x))?;
    cx.unary("op:slice_rows", (5, 3), -1.0, 1.0, |g, x| {
        g.slice_rows(x, 1, 4)
    })?;
    cx.unary("op:gather_rows", (4, 3), -1.0, 1.0, |g, x| {
        g.gather_rows(x, &[2, 0, 2, 1, 3])
    })?;
    cx.unary("op:nll_gather", (4, 3), -2.0, 2.0, |g, x| {
        let p = g.softmax(x)?;
        g.nll_gather(p, &[0, 2, 1, 2])
    })?;
    let targets = smoothed_target_matrix(&[0, 2, 1, 2], 0.2, 3)?;
    cx.unary("op:cross_entropy", (4, 3), -2.0, 2.0, move |g, x| {
        let p = g.softmax(x)?;
        g.cross_entropy(p, targets.clone())
    })?;
    Ok(())
}

fn composite_cases(cx: &mut Ctx) -> Result<()> {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(
        &mut store,
        "mlp",
        &[4, 6, 6, 3],
        Activation::LeakyRelu(0.2),
        Activation::Softmax,
        &mut cx.rng,
    );
    let input = cx.tensor(5, 4, -1.0, 1.0);
    let ids = mlp.param_ids();
    let labels = one_hot(&[0, 1, 2, 1, 0], 3)?;
    cx.check("net:mlp_cross_entropy", &mut store, &ids, |g, s| {
        let x = g.constant(input.clone())?;
        let p = mlp.forward(g, s, x, Binding::Trainable)?;
        g.cross_entropy(p, labels.clone())
    })?;

    for power in [PowerConstraint::BatchAverage, PowerConstraint::PerCodeword] {
        let w = cx.tensor(4, 6, 0.5, 1.5);
        cx.unary(
            &format!("net:normalize_{}", power.name()),
            (4, 6),
            -1.0,
            1.0,
            move |g, x| {
                let shifted = g.add_scalar(x, 0.1)?;
                let n = normalize_power_node(g, shifted, power)?;
                let c = g.constant(w.clone())?;
                g.mul(n, c)
            },
        )?;
    }

    let channel = ChannelModel::new(ChannelKind::Rayleigh, 0.3)?;
    let realization = channel.realize(4, 6, &mut cx.rng)?;
    cx.unary("net:rayleigh_channel", (4, 6), -1.0, 1.0, move |g, x| {
        realization.apply_node(g, x)
    })?;
    Ok(())
}

fn critic_inputs(cx: &mut Ctx) -> Result<(Tensor, Tensor, Vec<usize>)> {
    let xs = cx.tensor(8, 2, -1.0, 1.0);
    let mut ys = cx.tensor(8, 2, -0.5, 0.5);
    for (y, x) in ys.data_mut().iter_mut().zip(xs.data()) {
        *y += 0.8 * x;
    }
    let perm = derangement(8, &mut cx.rng)?;
    Ok((xs, ys, perm))
}

fn value_case(cx: &mut Ctx, kind: EstimatorKind) -> Result<()> {
    let mut store = ParamStore::new();
    let net = DiscriminatorNet::new(&mut store, 2, 2, &[16, 16], kind.head(), &mut cx.rng);
    let (xs, ys, perm) = critic_inputs(cx)?;
    let ids = net.mlp.param_ids();
    cx.check(
        &format!("value:{}", kind.name()),
        &mut store,
        &ids,
        |g, s| {
            let x = g.constant(xs.clone())?;
            let y = g.constant(ys.clone())?;
            let out = net.critic(g, s, x, y, &perm, Binding::Trainable)?;
            Ok(build_objective(&kind, g, out, None)?.value)
        },
    )
}

/// SMILE trains on a Jensen-Shannon objective rather than its value.
fn surrogate_cases(cx: &mut Ctx) -> Result<()> {
    let kind = EstimatorKind::Smile { tau: 1.0 };
    let mut store = ParamStore::new();
    let net = DiscriminatorNet::new(&mut store, 2, 2, &[16, 16], kind.head(), &mut cx.rng);
    let (xs, ys, perm) = critic_inputs(cx)?;
    let ids = net.mlp.param_ids();
    cx.check(
        &format!("surrogate:{}", kind.name()),
        &mut store,
        &ids,
        |g, s| {
            let x = g.constant(xs.clone())?;
            let y = g.constant(ys.clone())?;
            let out = net.critic(g, s, x, y, &perm, Binding::Trainable)?;
            Ok(build_objective(&kind, g, out, None)?.surrogate)
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let report = gradcheck_suite(0, None).unwrap();
        for e in &report.entries {
            assert!(e.report.passed(), "{}: {:?}", e.name, e.report);
        }
        assert!(report.entries.iter().all(|e| e.report.entries_checked > 0));
        assert_eq!(
            report
                .entries
                .iter()
                .filter(|e| e.name.starts_with("value:"))
                .count(),
            13
        );
    }

    #[test]
    fn injected_fault_is_named() {
        let report = gradcheck_suite(0, Some(OpKind::Softplus)).unwrap();
        let names: Vec<&str> = report.failures().iter().map(|e| e.name.as_str()).collect();
        assert!(names.contains(&"op:softplus"), "{names:?}");
        assert!(!names.contains(&"op:matmul"));
    }

    #[test]
    fn repeatable() {
        assert_eq!(
            gradcheck_suite(3, None).unwrap(),
            gradcheck_suite(3, None).unwrap()
        );
    }
}
