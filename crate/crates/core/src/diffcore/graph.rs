//! Define-by-run tape: every builder call evaluates its op immediately and
//! records enough to replay the chain rule in reverse.

use super::param::{ParamId, ParamStore};
use super::tensor::{gemm, MatRef, Tensor};
use crate::error::{Error, Result};

/// Lower bound applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-38;
/// Upper bound applied to exponent arguments by [`Graph::guarded_exp`].
pub const EXP_CLIP: f64 = 80.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Constant,
    Param,
    MatMul,
    AddBias,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    LeakyRelu,
    Softplus,
    Log,
    Exp,
    Pow,
    Clip,
    Log1mExp,
    MeanAll,
    Softmax,
    NllGather,
    CrossEntropy,
    ConcatCols,
    ConcatRows,
    SliceRows,
    GatherRows,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Constant => "constant",
            OpKind::Param => "param",
            OpKind::MatMul => "matmul",
            OpKind::AddBias => "add_bias",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddScalar => "add_scalar",
            OpKind::LeakyRelu => "leaky_relu",
            OpKind::Softplus => "softplus",
            OpKind::Log => "log",
            OpKind::Exp => "exp",
            OpKind::Pow => "pow",
            OpKind::Clip => "clip",
            OpKind::Log1mExp => "log1mexp",
            OpKind::MeanAll => "mean",
            OpKind::Softmax => "softmax",
            OpKind::NllGather => "nll_gather",
            OpKind::CrossEntropy => "cross_entropy",
            OpKind::ConcatCols => "concat_cols",
            OpKind::ConcatRows => "concat_rows",
            OpKind::SliceRows => "slice_rows",
            OpKind::GatherRows => "gather_rows",
        }
    }

    pub const ALL: [OpKind; 24] = [
        OpKind::Constant,
        OpKind::Param,
        OpKind::MatMul,
        OpKind::AddBias,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::AddScalar,
        OpKind::LeakyRelu,
        OpKind::Softplus,
        OpKind::Log,
        OpKind::Exp,
        OpKind::Pow,
        OpKind::Clip,
        OpKind::Log1mExp,
        OpKind::MeanAll,
        OpKind::Softmax,
        OpKind::NllGather,
        OpKind::CrossEntropy,
        OpKind::ConcatCols,
        OpKind::ConcatRows,
        OpKind::SliceRows,
        OpKind::GatherRows,
    ];

    /// Inverse of [`OpKind::name`].
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    LeakyRelu(NodeId, f64),
    Softplus(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Pow(NodeId, f64),
    Clip(NodeId, f64, f64),
    Log1mExp(NodeId),
    MeanAll(NodeId),
    Softmax(NodeId),
    NllGather(NodeId, Vec<usize>),
    CrossEntropy(NodeId, Tensor),
    ConcatCols(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    SliceRows(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Constant => OpKind::Constant,
            Op::Param(_) => OpKind::Param,
            Op::MatMul(..) => OpKind::MatMul,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::LeakyRelu(..) => OpKind::LeakyRelu,
            Op::Softplus(..) => OpKind::Softplus,
            Op::Log(..) => OpKind::Log,
            Op::Exp(..) => OpKind::Exp,
            Op::Pow(..) => OpKind::Pow,
            Op::Clip(..) => OpKind::Clip,
            Op::Log1mExp(..) => OpKind::Log1mExp,
            Op::MeanAll(..) => OpKind::MeanAll,
            Op::Softmax(..) => OpKind::Softmax,
            Op::NllGather(..) => OpKind::NllGather,
            Op::CrossEntropy(..) => OpKind::CrossEntropy,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::ConcatRows(..) => OpKind::ConcatRows,
            Op::SliceRows(..) => OpKind::SliceRows,
            Op::GatherRows(..) => OpKind::GatherRows,
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// A single computation graph. Not shared across threads; build one per
/// training step.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    clip_events: usize,
    track_kinks: bool,
    kink_signature: u64,
    fault: Option<OpKind>,
}

fn softplus(x: f64) -> f64 {
    let v = x.max(0.0) + (-x.abs()).exp().ln_1p();
    v.max(f64::MIN_POSITIVE)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log1mexp(x: f64) -> f64 {
    // ln(1 - e^x) for x < 0
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

fn floored_ln(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph that fingerprints the branch taken at every piecewise op
    /// (`leaky_relu`, `clip`), so finite differences can skip kinks.
    pub fn with_kink_tracking() -> Self {
        Self {
            track_kinks: true,
            ..Self::default()
        }
    }

    /// Corrupts the backward rule of one op kind. Test fixture for the
    /// gradient checker.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.item()
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    /// Entries pushed past [`EXP_CLIP`] by [`Graph::guarded_exp`] so far.
    pub fn clip_events(&self) -> usize {
        self.clip_events
    }

    pub fn kink_signature(&self) -> u64 {
        self.kink_signature
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<NodeId> {
        let kind = op.kind();
        if !value.is_finite() {
            return Err(Error::NonFinite { op: kind.name() });
        }
        let requires_grad = match &op {
            Op::Constant => false,
            Op::Param(_) => true,
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ConcatCols(a, b)
            | Op::ConcatRows(a, b) => self.rg(*a) || self.rg(*b),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::LeakyRelu(a, _)
            | Op::Softplus(a)
            | Op::Log(a)
            | Op::Exp(a)
            | Op::Pow(a, _)
            | Op::Clip(a, _, _)
            | Op::Log1mExp(a)
            | Op::MeanAll(a)
            | Op::Softmax(a)
            | Op::NllGather(a, _)
            | Op::CrossEntropy(a, _)
            | Op::SliceRows(a, _)
            | Op::GatherRows(a, _) => self.rg(*a),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn v(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn mix_kink(&mut self, bit: u64) {
        self.kink_signature = self
            .kink_signature
            .rotate_left(5)
            .wrapping_mul(0x100_0000_01b3)
            ^ bit;
    }

    pub fn constant(&mut self, t: Tensor) -> Result<NodeId> {
        self.push(Op::Constant, t)
    }

    /// Trainable leaf: gradients reaching it flow into `store` on backward.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<NodeId> {
        self.push(Op::Param(id), store.value(id).clone())
    }

    /// Leaf holding a parameter's current value without gradient tracking.
    pub fn frozen(&mut self, store: &ParamStore, id: ParamId) -> Result<NodeId> {
        self.push(Op::Constant, store.value(id).clone())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.v(a).matmul(self.v(b))?;
        self.push(Op::MatMul(a, b), out)
    }

    /// `x[B, C] + bias[1, C]` broadcast over rows.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.v(x), self.v(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::Shape(format!(
                "bias {:?} for input {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let c = xv.cols();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push(Op::AddBias(x, bias), out)
    }

    fn binary(
        &self,
        a: NodeId,
        b: NodeId,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (av, bv) = (self.v(a), self.v(b));
        if av.same_shape(bv) {
            let data = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(av.shape().to_vec(), data)
        } else if bv.is_scalar() {
            let s = bv.item();
            Ok(av.map(|x| f(x, s)))
        } else {
            Err(Error::Shape(format!(
                "{name} {:?} with {:?}",
                av.shape(),
                bv.shape()
            )))
        }
    }

    /// Elementwise sum; `b` may also be a `[1, 1]` scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), out)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let out = self.v(x).map(|v| v * c);
        self.push(Op::Scale(x, c), out)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let out = self.v(x).map(|v| v + c);
        self.push(Op::AddScalar(x), out)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        let out = self.v(x).map(|v| if v > 0.0 { v } else { slope * v });
        if self.track_kinks {
            let bits: Vec<u64> = self
                .v(x)
                .data()
                .iter()
                .map(|&v| u64::from(v > 0.0))
                .collect();
            bits.into_iter().for_each(|b| self.mix_kink(b));
        }
        self.push(Op::LeakyRelu(x, slope), out)
    }

    /// `ln(1 + e^x)`, floored at the smallest normal `f64` so the output
    /// stays strictly positive.
    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.v(x).map(softplus);
        self.push(Op::Softplus(x), out)
    }

    /// `ln(max(x, LOG_FLOOR))`.
    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.v(x).map(floored_ln);
        self.push(Op::Log(x), out)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.v(x).map(f64::exp);
        self.push(Op::Exp(x), out)
    }

    /// `exp(min(x, EXP_CLIP))`, counting clipped entries in
    /// [`Graph::clip_events`].
    pub fn guarded_exp(&mut self, x: NodeId) -> Result<NodeId> {
        let events = self.v(x).data().iter().filter(|&&v| v > EXP_CLIP).count();
        let node = if events > 0 {
            self.clip_events += events;
            self.clip(x, f64::NEG_INFINITY, EXP_CLIP)?
        } else {
            x
        };
        self.exp(node)
    }

    /// `x^p`; `x` must be positive unless `p` is an integer.
    pub fn pow(&mut self, x: NodeId, p: f64) -> Result<NodeId> {
        let out = self.v(x).map(|v| v.powf(p));
        self.push(Op::Pow(x, p), out)
    }

    pub fn clip(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if lo > hi {
            return Err(Error::invalid("clip", format!("lo {lo} > hi {hi}")));
        }
        let out = self.v(x).map(|v| v.clamp(lo, hi));
        if self.track_kinks {
            let bits: Vec<u64> = self
                .v(x)
                .data()
                .iter()
                .map(|&v| u64::from(v < lo) | (u64::from(v > hi) << 1))
                .collect();
            bits.into_iter().for_each(|b| self.mix_kink(b));
        }
        self.push(Op::Clip(x, lo, hi), out)
    }

    /// `ln(1 - e^x)` for `x < 0`.
    pub fn log1mexp(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.v(x).map(log1mexp);
        self.push(Op::Log1mExp(x), out)
    }

    /// Mean of all entries, as a `[1, 1]` scalar.
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.v(x);
        if xv.is_empty() {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let out = Tensor::scalar(xv.mean());
        self.push(Op::MeanAll(x), out)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.v(x);
        let c = xv.cols();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(Op::Softmax(x), out)
    }

    /// `mean_i -ln p[i, targets[i]]` over probability rows.
    pub fn nll_gather(&mut self, probs: NodeId, targets: &[usize]) -> Result<NodeId> {
        let pv = self.v(probs);
        if targets.len() != pv.rows() {
            return Err(Error::Shape(format!(
                "{} targets for {} rows",
                targets.len(),
                pv.rows()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= pv.cols()) {
            return Err(Error::invalid(
                "targets",
                format!("class {bad} out of range"),
            ));
        }
        let mut acc = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            acc += -floored_ln(pv.get(i, t));
        }
        let out = Tensor::scalar(acc / targets.len() as f64);
        self.push(Op::NllGather(probs, targets.to_vec()), out)
    }

    /// `mean_i -Σ_j t[i, j] ln p[i, j]` against a target distribution.
    pub fn cross_entropy(&mut self, probs: NodeId, targets: Tensor) -> Result<NodeId> {
        let pv = self.v(probs);
        if !pv.same_shape(&targets) {
            return Err(Error::Shape(format!(
                "cross entropy {:?} vs targets {:?}",
                pv.shape(),
                targets.shape()
            )));
        }
        let c = pv.cols();
        let mut acc = 0.0;
        for (prow, trow) in pv.data().chunks(c).zip(targets.data().chunks(c)) {
            let mut s = 0.0;
            for (&p, &t) in prow.iter().zip(trow) {
                s += t * floored_ln(p);
            }
            acc += -s;
        }
        let out = Tensor::scalar(acc / pv.rows() as f64);
        self.push(Op::CrossEntropy(probs, targets), out)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.v(a), self.v(b));
        if av.rows() != bv.rows() {
            return Err(Error::Shape(format!(
                "concat_cols {:?} with {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for (ra, rb) in av.data().chunks(ca).zip(bv.data().chunks(cb)) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        let out = Tensor::matrix(av.rows(), ca + cb, data)?;
        self.push(Op::ConcatCols(a, b), out)
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.v(a), self.v(b));
        if av.cols() != bv.cols() {
            return Err(Error::Shape(format!(
                "concat_rows {:?} with {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let out = Tensor::matrix(av.rows() + bv.rows(), av.cols(), data)?;
        self.push(Op::ConcatRows(a, b), out)
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let xv = self.v(x);
        if start >= end || end > xv.rows() {
            return Err(Error::Shape(format!(
                "slice {start}..{end} of {} rows",
                xv.rows()
            )));
        }
        let c = xv.cols();
        let out = Tensor::matrix(end - start, c, xv.data()[start * c..end * c].to_vec())?;
        self.push(Op::SliceRows(x, start), out)
    }

    /// `out[i] = x[index[i]]`.
    pub fn gather_rows(&mut self, x: NodeId, index: &[usize]) -> Result<NodeId> {
        let xv = self.v(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= xv.rows()) {
            return Err(Error::Shape(format!("row {bad} of {}", xv.rows())));
        }
        let c = xv.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            data.extend_from_slice(xv.row(i));
        }
        let out = Tensor::matrix(index.len(), c, data)?;
        self.push(Op::GatherRows(x, index.to_vec()), out)
    }

    /// Reverse pass from a scalar `output`, accumulating into the
    /// gradients of every parameter leaf in `store`.
    pub fn backward(&self, output: NodeId, store: &mut ParamStore) -> Result<()> {
        let out_node = self
            .nodes
            .get(output.0)
            .ok_or(Error::UnknownNode(output.0))?;
        if !out_node.value.is_scalar() {
            return Err(Error::NonScalarOutput(out_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let faulty = self.fault == Some(node.op.kind());
            let mut sink = GradSink {
                graph: self,
                grads: &mut grads,
                factor: if faulty { 1.5 } else { 1.0 },
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    store.accumulate_grad(*pid, &g)?;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.v(*a), self.v(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if self.rg(*a) {
                        sink.with(*a, |buf, acc| {
                            gemm(
                                m,
                                n,
                                k,
                                MatRef::raw(&g, n as isize, 1),
                                MatRef::transposed(bv),
                                buf,
                                acc,
                            )
                        });
                    }
                    if self.rg(*b) {
                        sink.with(*b, |buf, acc| {
                            gemm(
                                k,
                                m,
                                n,
                                MatRef::transposed(av),
                                MatRef::raw(&g, n as isize, 1),
                                buf,
                                acc,
                            )
                        });
                    }
                }
                Op::AddBias(x, b) => {
                    sink.add(*x, |_| g.clone());
                    let c = self.v(*b).cols();
                    sink.add(*b, |_| {
                        let mut col = vec![0.0; c];
                        for row in g.chunks(c) {
                            for (s, v) in col.iter_mut().zip(row) {
                                *s += v;
                            }
                        }
                        col
                    });
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) {
                        -1.0
                    } else {
                        1.0
                    };
                    sink.add(*a, |_| g.clone());
                    let broadcast = self.v(*b).is_scalar() && !self.v(*a).is_scalar();
                    sink.add(*b, |_| {
                        if broadcast {
                            vec![sign * g.iter().sum::<f64>()]
                        } else {
                            g.iter().map(|v| sign * v).collect()
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.v(*a), self.v(*b));
                    let broadcast = bv.is_scalar() && !av.is_scalar();
                    if broadcast {
                        let s = bv.item();
                        sink.add(*a, |_| g.iter().map(|v| v * s).collect());
                        sink.add(*b, |_| {
                            vec![g.iter().zip(av.data()).map(|(x, y)| x * y).sum()]
                        });
                    } else {
                        sink.add(*a, |_| {
                            g.iter().zip(bv.data()).map(|(x, y)| x * y).collect()
                        });
                        sink.add(*b, |_| {
                            g.iter().zip(av.data()).map(|(x, y)| x * y).collect()
                        });
                    }
                }
                Op::Scale(x, c) => sink.add(*x, |_| g.iter().map(|v| v * c).collect()),
                Op::AddScalar(x) => sink.add(*x, |_| g.clone()),
                Op::LeakyRelu(x, slope) => sink.add(*x, |gr| {
                    zip_map(
                        &g,
                        gr.v(*x).data(),
                        |g, v| if v > 0.0 { g } else { g * slope },
                    )
                }),
                Op::Softplus(x) => {
                    sink.add(*x, |gr| zip_map(&g, gr.v(*x).data(), |g, v| g * sigmoid(v)))
                }
                Op::Log(x) => sink.add(*x, |gr| {
                    zip_map(
                        &g,
                        gr.v(*x).data(),
                        |g, v| if v > LOG_FLOOR { g / v } else { 0.0 },
                    )
                }),
                Op::Exp(x) => sink.add(*x, |_| zip_map(&g, node.value.data(), |g, y| g * y)),
                Op::Pow(x, p) => sink.add(*x, |gr| {
                    zip_map(&g, gr.v(*x).data(), |g, v| g * p * v.powf(p - 1.0))
                }),
                Op::Clip(x, lo, hi) => sink.add(*x, |gr| {
                    zip_map(&g, gr.v(*x).data(), |g, v| {
                        if v < *lo || v > *hi {
                            0.0
                        } else {
                            g
                        }
                    })
                }),
                Op::Log1mExp(x) => sink.add(*x, |gr| {
                    // d/dx ln(1 - e^x) = -1 / (e^{-x} - 1)
                    zip_map(&g, gr.v(*x).data(), |g, v| -g / (-v).exp_m1())
                }),
                Op::MeanAll(x) => {
                    let n = self.v(*x).len();
                    sink.add(*x, |_| vec![g[0] / n as f64; n]);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let c = y.cols();
                    sink.add(*x, |_| {
                        let mut out = Vec::with_capacity(y.len());
                        for (yr, gr) in y.data().chunks(c).zip(g.chunks(c)) {
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            out.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
                        }
                        out
                    });
                }
                Op::NllGather(p, targets) => {
                    let pv = self.v(*p);
                    let (b, c) = (pv.rows(), pv.cols());
                    sink.add(*p, |_| {
                        let mut out = vec![0.0; b * c];
                        for (i, &t) in targets.iter().enumerate() {
                            let pr = pv.get(i, t);
                            if pr > LOG_FLOOR {
                                out[i * c + t] = -g[0] / (b as f64 * pr);
                            }
                        }
                        out
                    });
                }
                Op::CrossEntropy(p, targets) => {
                    let pv = self.v(*p);
                    let b = pv.rows() as f64;
                    sink.add(*p, |_| {
                        zip_map(pv.data(), targets.data(), |pr, t| {
                            if pr > LOG_FLOOR {
                                -g[0] * t / (b * pr)
                            } else {
                                0.0
                            }
                        })
                    });
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.v(*a).cols(), self.v(*b).cols());
                    let c = ca + cb;
                    sink.add(*a, |_| {
                        g.chunks(c).flat_map(|r| r[..ca].iter().copied()).collect()
                    });
                    sink.add(*b, |_| {
                        g.chunks(c).flat_map(|r| r[ca..].iter().copied()).collect()
                    });
                }
                Op::ConcatRows(a, b) => {
                    let na = self.v(*a).len();
                    sink.add(*a, |_| g[..na].to_vec());
                    sink.add(*b, |_| g[na..].to_vec());
                }
                Op::SliceRows(x, start) => {
                    let xv = self.v(*x);
                    let c = xv.cols();
                    let offset = start * c;
                    sink.add(*x, |_| {
                        let mut out = vec![0.0; xv.len()];
                        out[offset..offset + g.len()].copy_from_slice(&g);
                        out
                    });
                }
                Op::GatherRows(x, index) => {
                    let xv = self.v(*x);
                    let c = xv.cols();
                    sink.add(*x, |_| {
                        let mut out = vec![0.0; xv.len()];
                        for (row, &src) in g.chunks(c).zip(index) {
                            for (o, v) in out[src * c..(src + 1) * c].iter_mut().zip(row) {
                                *o += v;
                            }
                        }
                        out
                    });
                }
            }
        }
        Ok(())
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Accumulates gradient contributions into input nodes.
struct GradSink<'a> {
    graph: &'a Graph,
    grads: &'a mut Vec<Option<Vec<f64>>>,
    factor: f64,
}

impl GradSink<'_> {
    fn add(&mut self, target: NodeId, f: impl FnOnce(&Graph) -> Vec<f64>) {
        if !self.graph.rg(target) {
            return;
        }
        let mut contrib = f(self.graph);
        if self.factor != 1.0 {
            contrib.iter_mut().for_each(|v| *v *= self.factor);
        }
        match &mut self.grads[target.0] {
            Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
            slot @ None => *slot = Some(contrib),
        }
    }

    /// Like `add`, but lets `f` write into (or accumulate onto) the buffer
    /// directly. `f(buf, accumulate)`.
    fn with(&mut self, target: NodeId, f: impl FnOnce(&mut [f64], bool)) {
        let len = self.graph.v(target).len();
        let factor = self.factor;
        match &mut self.grads[target.0] {
            Some(existing) if factor == 1.0 => f(existing, true),
            Some(existing) => {
                let mut tmp = vec![0.0; len];
                f(&mut tmp, false);
                existing
                    .iter_mut()
                    .zip(&tmp)
                    .for_each(|(e, t)| *e += factor * t);
            }
            slot @ None => {
                let mut buf = vec![0.0; len];
                f(&mut buf, false);
                if factor != 1.0 {
                    buf.iter_mut().for_each(|v| *v *= factor);
                }
                *slot = Some(buf);
            }
        }
    }
}
