use rand::Rng;

use crate::channel::{normalize_power_node, PowerConstraint};
use crate::diffcore::{Activation, Binding, Graph, Mlp, NodeId, ParamStore, Tensor};
use crate::error::Result;

const LEAKY: Activation = Activation::LeakyRelu(0.2);

/// One-hot message → `M` leaky units → `2n` reals → power normalization.
#[derive(Clone, Debug)]
pub struct EncoderNet {
    pub mlp: Mlp,
    pub power: PowerConstraint,
}

impl EncoderNet {
    pub fn new(
        store: &mut ParamStore,
        m: usize,
        n: usize,
        power: PowerConstraint,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            mlp: Mlp::new(
                store,
                "encoder",
                &[m, m, 2 * n],
                LEAKY,
                Activation::Linear,
                rng,
            ),
            power,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        one_hot: NodeId,
        binding: Binding,
    ) -> Result<NodeId> {
        let raw = self.mlp.forward(g, store, one_hot, binding)?;
        normalize_power_node(g, raw, self.power)
    }

    /// Symbols for every message, normalized over the whole alphabet (the
    /// average under uniform messages).
    pub fn codebook(&self, store: &ParamStore) -> Result<Tensor> {
        let m = self.mlp.input_dim();
        let mut g = Graph::new();
        let eye = g.constant(identity(m))?;
        let x = self.forward(&mut g, store, eye, Binding::Frozen)?;
        Ok(g.value(x).clone())
    }
}

/// `2n` received reals → `M` leaky units → softmax over `M`.
#[derive(Clone, Debug)]
pub struct DecoderNet {
    pub mlp: Mlp,
}

impl DecoderNet {
    pub fn new(store: &mut ParamStore, m: usize, n: usize, rng: &mut impl Rng) -> Self {
        Self {
            mlp: Mlp::new(
                store,
                "decoder",
                &[2 * n, m, m],
                LEAKY,
                Activation::Softmax,
                rng,
            ),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        y: NodeId,
        binding: Binding,
    ) -> Result<NodeId> {
        self.mlp.forward(g, store, y, binding)
    }

    pub fn posteriors(&self, store: &ParamStore, y: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let yn = g.constant(y.clone())?;
        let p = self.forward(&mut g, store, yn, Binding::Frozen)?;
        Ok(g.value(p).clone())
    }
}

pub(crate) fn identity(m: usize) -> Tensor {
    let mut t = Tensor::zeros(m, m);
    for i in 0..m {
        t.data_mut()[i * m + i] = 1.0;
    }
    t
}
