//! Label predictors C (linear and cosine) and the domain classifier D.
//!
//! All heads take a `[B×e]` feature matrix and return `[B×classes]` logits.

use rand::Rng;

use super::params::{Binding, ParamGroup, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};

/// Uniform ±1/√fan_in.
pub(crate) fn uniform_init(rng: &mut impl Rng, fan_in: usize, shape: &[usize]) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("init shape")
}

#[derive(Clone, Copy, Debug)]
pub struct DenseIndex {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl DenseIndex {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        group: ParamGroup,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(
            format!("{prefix}.weight"),
            group,
            uniform_init(rng, fan_in, &[fan_in, fan_out]),
        );
        let bias = store.add(format!("{prefix}.bias"), group, Tensor::zeros(&[fan_out]));
        DenseIndex { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, b: &Binding, x: Var) -> Result<Var> {
        let h = g.matmul(x, b.var(self.weight))?;
        g.add_row(h, b.var(self.bias))
    }
}

/// C(f) = f·W + b.
pub fn linear_head(g: &mut Graph, features: Var, weight: Var, bias: Var) -> Result<Var> {
    let h = g.matmul(features, weight)?;
    g.add_row(h, bias)
}

/// logit_j = cos(f, w_j) / T. Both the features and every row of `weights`
/// (`[n_c×e]`) are normalized inside the op.
pub fn cosine_head(g: &mut Graph, features: Var, weights: Var, temperature: f64) -> Result<Var> {
    let f = g.l2_normalize(features)?;
    let w = g.l2_normalize(weights)?;
    let cos = g.matmul_nt(f, w)?;
    Ok(g.scale(cos, 1.0 / temperature))
}

/// Three-layer GELU MLP producing two domain logits.
#[derive(Clone, Copy, Debug)]
pub struct DomainHeadIndex {
    pub fc1: DenseIndex,
    pub fc2: DenseIndex,
    pub fc3: DenseIndex,
}

impl DomainHeadIndex {
    pub fn register(
        store: &mut ParamStore,
        in_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let g = ParamGroup::Domain;
        DomainHeadIndex {
            fc1: DenseIndex::register(store, "domain.fc1", g, in_dim, hidden, rng),
            fc2: DenseIndex::register(store, "domain.fc2", g, hidden, hidden, rng),
            fc3: DenseIndex::register(store, "domain.fc3", g, hidden, 2, rng),
        }
    }
}

pub fn domain_head(
    g: &mut Graph,
    b: &Binding,
    idx: &DomainHeadIndex,
    features: Var,
) -> Result<Var> {
    let h = idx.fc1.forward(g, b, features)?;
    let h = g.gelu(h);
    let h = idx.fc2.forward(g, b, h)?;
    let h = g.gelu(h);
    idx.fc3.forward(g, b, h)
}
