use rand::Rng;

use super::EstimatorKind;
use crate::diffcore::{Activation, Binding, Graph, Mlp, NodeId, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const DISCRIMINATOR_HIDDEN: [usize; 2] = [200, 200];
pub const LEAKY_SLOPE: f64 = 0.2;

/// Critic over the raw concatenation `[x, y]`.
#[derive(Clone, Debug)]
pub struct DiscriminatorNet {
    pub mlp: Mlp,
    pub x_dim: usize,
    pub y_dim: usize,
}

/// Critic outputs on the paired rows and on the unpaired rows.
#[derive(Clone, Copy, Debug)]
pub struct CriticOutputs {
    pub paired: NodeId,
    pub unpaired: NodeId,
}

impl DiscriminatorNet {
    pub fn new(
        store: &mut ParamStore,
        x_dim: usize,
        y_dim: usize,
        hidden: &[usize],
        head: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut widths = vec![x_dim + y_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mlp = Mlp::new(
            store,
            "critic",
            &widths,
            Activation::LeakyRelu(LEAKY_SLOPE),
            head,
            rng,
        );
        Self { mlp, x_dim, y_dim }
    }

    /// Two hidden layers of 200 leaky-ReLU units and the estimator's head.
    pub fn for_estimator(
        store: &mut ParamStore,
        kind: &EstimatorKind,
        x_dim: usize,
        y_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self::new(store, x_dim, y_dim, &DISCRIMINATOR_HIDDEN, kind.head(), rng)
    }

    /// Runs paired `[x_i, y_i]` and unpaired `[x_i, y_{π(i)}]` rows through
    /// one stacked forward pass.
    pub fn critic(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        y: NodeId,
        unpaired_index: &[usize],
        binding: Binding,
    ) -> Result<CriticOutputs> {
        let (xv, yv) = (g.value(x), g.value(y));
        if xv.cols() != self.x_dim || yv.cols() != self.y_dim || xv.rows() != yv.rows() {
            return Err(Error::Shape(format!(
                "critic expects [B,{}] and [B,{}], got {:?} and {:?}",
                self.x_dim,
                self.y_dim,
                xv.shape(),
                yv.shape()
            )));
        }
        if unpaired_index.len() != xv.rows() {
            return Err(Error::Shape(
                "unpaired index length differs from batch".into(),
            ));
        }
        let b = xv.rows();
        let y_shuffled = g.gather_rows(y, unpaired_index)?;
        let joint = g.concat_cols(x, y)?;
        let marginal = g.concat_cols(x, y_shuffled)?;
        let stacked = g.concat_rows(joint, marginal)?;
        let out = self.mlp.forward(g, store, stacked, binding)?;
        Ok(CriticOutputs {
            paired: g.slice_rows(out, 0, b)?,
            unpaired: g.slice_rows(out, b, 2 * b)?,
        })
    }

    /// Critic values on explicit `(x_i, y_i)` rows.
    pub fn evaluate(&self, store: &ParamStore, xs: &Tensor, ys: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let x = g.constant(xs.clone())?;
        let y = g.constant(ys.clone())?;
        let joint = g.concat_cols(x, y)?;
        let out = self.mlp.forward(&mut g, store, joint, Binding::Frozen)?;
        Ok(g.value(out).data().to_vec())
    }
}
