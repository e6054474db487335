//! Cross-entropy and entropy built from tape primitives.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Floor applied inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Distribution(Vec<f64>),
}

impl Target {
    fn dense(&self, k: usize) -> Result<Vec<f64>> {
        match self {
            Target::Class(c) if *c < k => {
                let mut v = vec![0.0; k];
                v[*c] = 1.0;
                Ok(v)
            }
            Target::Class(c) => Err(Error::contract(format!(
                "class {c} out of range for {k} classes"
            ))),
            Target::Distribution(d) if d.len() == k => Ok(d.clone()),
            Target::Distribution(d) => Err(Error::Dimension {
                op: "cross_entropy",
                lhs: vec![k],
                rhs: vec![d.len()],
            }),
        }
    }
}

/// H(target, p) = −Σ target_j ln p_j for a single probability vector.
pub fn cross_entropy(g: &mut Graph, p: Var, target: &Target) -> Result<Var> {
    let k = g.value(p).len();
    let t = g.constant(Tensor::new(g.shape(p), target.dense(k)?)?);
    let lp = g.ln_clamped(p, LOG_EPS);
    let prod = g.mul(t, lp)?;
    let s = g.sum(prod);
    Ok(g.neg(s))
}

/// Mean over rows of the per-row cross-entropy; `probs` is `[B×k]`.
pub fn mean_cross_entropy(g: &mut Graph, probs: Var, targets: &[Target]) -> Result<Var> {
    let shape = g.shape(probs).to_vec();
    if shape.len() != 2 || shape[0] != targets.len() {
        return Err(Error::Dimension {
            op: "mean_cross_entropy",
            lhs: shape,
            rhs: vec![targets.len()],
        });
    }
    if targets.is_empty() {
        return Err(Error::contract("cross-entropy over an empty batch"));
    }
    let k = shape[1];
    let mut dense = Vec::with_capacity(targets.len() * k);
    for t in targets {
        dense.extend(t.dense(k)?);
    }
    let t = g.constant(Tensor::new(&shape, dense)?);
    let lp = g.ln_clamped(probs, LOG_EPS);
    let prod = g.mul(t, lp)?;
    let s = g.sum(prod);
    Ok(g.scale(s, -1.0 / targets.len() as f64))
}

/// H(p) = −Σ p_j ln p_j, with 0·ln 0 = 0.
pub fn entropy(g: &mut Graph, p: Var) -> Var {
    let lp = g.ln_clamped(p, LOG_EPS);
    let prod = g.mul(p, lp).expect("same shape");
    let s = g.sum(prod);
    g.neg(s)
}

/// Mean over rows of the per-row entropy; `probs` is `[B×k]`.
pub fn mean_entropy(g: &mut Graph, probs: Var) -> Result<Var> {
    let shape = g.shape(probs).to_vec();
    if shape.len() != 2 {
        return Err(Error::Dimension {
            op: "mean_entropy",
            lhs: shape,
            rhs: vec![],
        });
    }
    let lp = g.ln_clamped(probs, LOG_EPS);
    let prod = g.mul(probs, lp)?;
    let s = g.sum(prod);
    Ok(g.scale(s, -1.0 / shape[0] as f64))
}
