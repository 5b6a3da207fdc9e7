use rand::Rng;

use super::graph::{Graph, NodeId};
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;

/// Whether a network's parameters receive gradients in a given graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    Trainable,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Linear,
    LeakyRelu(f64),
    Softplus,
    /// `ln σ(x) = -softplus(-x)`, mapping onto `(-∞, 0)`.
    LogSigmoid,
    Softmax,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Linear => Ok(x),
            Activation::LeakyRelu(slope) => g.leaky_relu(x, slope),
            Activation::Softplus => g.softplus(x),
            Activation::LogSigmoid => {
                let neg = g.scale(x, -1.0)?;
                let sp = g.softplus(neg)?;
                g.scale(sp, -1.0)
            }
            Activation::Softmax => g.softmax(x),
        }
    }
}

/// Fully connected layer `x · W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), fan_in, fan_out, rng);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, fan_out));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        binding: Binding,
    ) -> Result<NodeId> {
        let (w, b) = match binding {
            Binding::Trainable => (g.param(store, self.weight)?, g.param(store, self.bias)?),
            Binding::Frozen => (g.frozen(store, self.weight)?, g.frozen(store, self.bias)?),
        };
        let h = g.matmul(x, w)?;
        g.add_bias(h, b)
    }
}

/// Stack of dense layers with one hidden activation and an output head.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
    pub head: Activation,
}

impl Mlp {
    /// `widths = [input, hidden.., output]`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        hidden: Activation,
        head: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            hidden,
            head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.fan_in)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        binding: Binding,
    ) -> Result<NodeId> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h, binding)?;
            h = if i == last {
                self.head.apply(g, h)?
            } else {
                self.hidden.apply(g, h)?
            };
        }
        Ok(h)
    }
}
