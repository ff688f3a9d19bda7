//! Parameterized building blocks registered in a [`ParamStore`].

use crate::graph::{Graph, NodeId};
use crate::tensor::{ParamId, ParamStore, Tensor};
use crate::{Result, Scalar};
use rand::Rng;

/// Affine map `x W + b` with `W` of shape `[input, output]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Weight drawn from `normal(0, std)`, bias zero.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        output: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Linear {
            weight: store.add(format!("{name}.weight"), Tensor::normal(&[input, output], std, rng))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[output]))?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, width: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[width], T::one()))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[width]))?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Multi-head attention: query, key and value projections, the fused
/// attention core, and an output projection over the concatenated heads.
#[derive(Debug, Clone, Copy)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        heads: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), width, width, std, rng)?,
            key: Linear::new(store, &format!("{name}.key"), width, width, std, rng)?,
            value: Linear::new(store, &format!("{name}.value"), width, width, std, rng)?,
            output: Linear::new(store, &format!("{name}.output"), width, width, std, rng)?,
            heads,
        })
    }

    /// `queries` holds `batch` stacked sequences attending to the matching
    /// sequences stacked in `context`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        queries: NodeId,
        context: NodeId,
        batch: usize,
        mask: Option<&Tensor<T>>,
    ) -> NodeId {
        self.forward_traced(g, queries, context, batch, mask).0
    }

    /// Like [`MultiHeadAttention::forward`], also returning the attention
    /// core node so that its probabilities can be inspected.
    pub fn forward_traced<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        queries: NodeId,
        context: NodeId,
        batch: usize,
        mask: Option<&Tensor<T>>,
    ) -> (NodeId, NodeId) {
        let q = self.query.forward(g, queries);
        let k = self.key.forward(g, context);
        let v = self.value.forward(g, context);
        let core = g.attention(q, k, v, self.heads, batch, mask);
        (self.output.forward(g, core), core)
    }
}

/// Two affine maps around a GELU, with dropout on the hidden layer.
#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub expand: Linear,
    pub contract: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(FeedForward {
            expand: Linear::new(store, &format!("{name}.expand"), width, hidden, std, rng)?,
            contract: Linear::new(store, &format!("{name}.contract"), hidden, width, std, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let h = self.expand.forward(g, x);
        let h = g.gelu(h);
        let h = g.dropout(h);
        self.contract.forward(g, h)
    }
}
