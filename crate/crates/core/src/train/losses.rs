//! Training objectives on the tape. Every loss is a batch mean.

use crate::error::{Error, Result};
use crate::tensor::{entropy, mean_cross_entropy, mean_entropy, Graph, Target, Tensor, Var};

fn class_targets(labels: &[usize]) -> Vec<Target> {
    labels.iter().map(|&c| Target::Class(c)).collect()
}

/// Mean cross-entropy of softmax(logits) against class labels.
pub fn loss_cls(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let p = g.softmax(logits, 1)?;
    mean_cross_entropy(g, p, &class_targets(labels))
}

/// Mean binary cross-entropy of two-way domain logits; 0 = source, 1 = target.
pub fn loss_adv(g: &mut Graph, domain_logits: Var, domains: &[usize]) -> Result<Var> {
    if g.shape(domain_logits).get(1) != Some(&2) {
        return Err(Error::Dimension {
            op: "loss_adv",
            lhs: g.shape(domain_logits).to_vec(),
            rhs: vec![domains.len(), 2],
        });
    }
    if domains.iter().any(|&d| d > 1) {
        return Err(Error::contract("domain labels must be 0 or 1"));
    }
    loss_cls(g, domain_logits, domains)
}

/// Mean prediction entropy over a target batch.
pub fn loss_entropy_target(g: &mut Graph, logits: Var) -> Result<Var> {
    if g.shape(logits).first() == Some(&0) {
        return Err(Error::contract("entropy over an empty target batch"));
    }
    let p = g.softmax(logits, 1)?;
    mean_entropy(g, p)
}

/// E[H(p)] − H(E[p]) over the rows of a probability matrix.
pub fn loss_mim(g: &mut Graph, probs: Var) -> Result<Var> {
    let cond = mean_entropy(g, probs)?;
    let marginal = g.mean_rows(probs)?;
    let h = entropy(g, marginal);
    g.sub(cond, h)
}

/// P_j = exp(μ_j·f/φ) / Σ_r exp(μ_r·f/φ) for one unit feature `f` and
/// prototypes `[k×e]`.
pub fn proto_distribution(f: &[f64], prototypes: &Tensor, phi: f64) -> Result<Vec<f64>> {
    if !(phi > 0.0) {
        return Err(Error::contract("phi must be positive"));
    }
    let e = prototypes.last_dim();
    if f.len() != e {
        return Err(Error::Dimension {
            op: "proto_distribution",
            lhs: prototypes.shape().to_vec(),
            rhs: vec![f.len()],
        });
    }
    let sims: Vec<f64> = (0..prototypes.outer_len())
        .map(|j| {
            let mut s = 0.0;
            for (a, b) in prototypes.row(j).iter().zip(f) {
                s += a * b;
            }
            s / phi
        })
        .collect();
    let mx = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = sims.iter().map(|s| (s - mx).exp()).collect();
    let total: f64 = ex.iter().sum();
    Ok(ex.into_iter().map(|v| v / total).collect())
}

/// Prototype distributions `[B×k]` of a feature batch, normalizing the
/// features on the tape. The prototypes are constants.
pub fn proto_probs(g: &mut Graph, features: Var, prototypes: &Tensor, phi: f64) -> Result<Var> {
    let f = g.l2_normalize(features)?;
    let mu = g.constant(prototypes.clone());
    let sims = g.matmul_nt(f, mu)?;
    let z = g.scale(sims, 1.0 / phi);
    g.softmax(z, 1)
}

/// One domain's share of the in-domain prototype loss.
pub fn proto_nce(
    g: &mut Graph,
    features: Var,
    prototypes: &Tensor,
    assigned: &[usize],
    phi: f64,
) -> Result<Var> {
    let k = prototypes.outer_len();
    if let Some(&bad) = assigned.iter().find(|&&c| c >= k) {
        return Err(Error::contract(format!(
            "cluster index {bad} out of range for k = {k}"
        )));
    }
    let p = proto_probs(g, features, prototypes, phi)?;
    mean_cross_entropy(g, p, &class_targets(assigned))
}

/// In-domain prototypical self-supervision: source and target batch means
/// of the prototype cross-entropy, summed.
#[allow(clippy::too_many_arguments)]
pub fn loss_is(
    g: &mut Graph,
    source: Var,
    target: Var,
    protos_s: &Tensor,
    protos_t: &Tensor,
    assigned_s: &[usize],
    assigned_t: &[usize],
    phi: f64,
) -> Result<Var> {
    let ls = proto_nce(g, source, protos_s, assigned_s, phi)?;
    let lt = proto_nce(g, target, protos_t, assigned_t, phi)?;
    g.add(ls, lt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(f: impl FnOnce(&mut Graph) -> Result<Var>) -> f64 {
        let mut g = Graph::new();
        let v = f(&mut g).unwrap();
        g.scalar(v)
    }

    #[test]
    fn cls_fixtures() {
        let l = value(|g| {
            let z = g.constant(Tensor::zeros(&[3, 9]));
            loss_cls(g, z, &[0, 4, 8])
        });
        assert!((l - 9f64.ln()).abs() < 1e-12);
        let l = value(|g| {
            let z = g.constant(Tensor::matrix(&[
                vec![0.7f64.ln(), 0.3f64.ln()],
                vec![0.0, 0.0],
            ]));
            loss_cls(g, z, &[0, 1])
        });
        let expect = (-(0.7f64.ln()) - 0.5f64.ln()) / 2.0;
        assert!((l - expect).abs() < 1e-12);
        assert!((expect - 0.524911).abs() < 1e-6);
        let l = value(|g| {
            let z = g.constant(Tensor::matrix(&[vec![60.0, 0.0]]));
            loss_cls(g, z, &[0])
        });
        assert!(l < 1e-12);
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(&[2, 9]));
        assert!(loss_cls(&mut g, z, &[1]).is_err());
        assert!(loss_cls(&mut g, z, &[1, 9]).is_err());
    }

    #[test]
    fn adv_fixtures() {
        let l = value(|g| {
            let z = g.constant(Tensor::zeros(&[4, 2]));
            loss_adv(g, z, &[0, 0, 1, 1])
        });
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let l = value(|g| {
            let z = g.constant(Tensor::matrix(&[vec![50.0, 0.0], vec![0.0, 50.0]]));
            loss_adv(g, z, &[0, 1])
        });
        assert!(l < 1e-12);
        let l = value(|g| {
            let z = g.constant(Tensor::zeros(&[3, 2]));
            loss_adv(g, z, &[1, 1, 1])
        });
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_fixtures() {
        let l = value(|g| {
            let z = g.constant(Tensor::zeros(&[5, 9]));
            loss_entropy_target(g, z)
        });
        assert!((l - 9f64.ln()).abs() < 1e-12);
        let l = value(|g| {
            let mut rows = vec![vec![-1e3; 9]; 2];
            rows[0][2] = 0.0;
            rows[1][7] = 0.0;
            let z = g.constant(Tensor::matrix(&rows));
            loss_entropy_target(g, z)
        });
        assert!(l.abs() < 1e-9);
    }

    #[test]
    fn mim_fixtures() {
        let n = 9;
        let one_hot = |c: usize| {
            (0..n)
                .map(|j| if j == c { 1.0 } else { 0.0 })
                .collect::<Vec<_>>()
        };
        let same = value(|g| {
            let p = g.constant(Tensor::matrix(&vec![one_hot(3); 6]));
            loss_mim(g, p)
        });
        assert!(same.abs() < 1e-9);
        let spread = value(|g| {
            let rows: Vec<Vec<f64>> = (0..2 * n).map(|i| one_hot(i % n)).collect();
            let p = g.constant(Tensor::matrix(&rows));
            loss_mim(g, p)
        });
        assert!((spread + (n as f64).ln()).abs() < 1e-9);
        let uniform = value(|g| {
            let p = g.constant(Tensor::filled(&[4, n], 1.0 / n as f64));
            loss_mim(g, p)
        });
        assert!(uniform.abs() < 1e-9);
    }

    #[test]
    fn proto_fixtures() {
        let mu = Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let f = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let p = proto_distribution(&f, &mu, 0.1).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let p = proto_distribution(&[1.0, 0.0], &mu, 0.1).unwrap();
        let expect = 10f64.exp() / (10f64.exp() + 1.0);
        assert!((p[0] - expect).abs() < 1e-12);
        assert!((p[0] - 0.9999546).abs() < 1e-7);
        assert!(((p[0] + p[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn is_fixtures() {
        let mu = Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let l = value(|g| {
            let fs = g.constant(Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
            let ft = g.constant(Tensor::matrix(&[vec![0.0, 1.0]]));
            proto_nce(g, fs, &mu, &[0, 1], 0.1).and_then(|a| {
                let b = proto_nce(g, ft, &mu, &[1], 0.1)?;
                g.add(a, b)
            })
        });
        let per = -(10f64.exp() / (10f64.exp() + 1.0)).ln();
        assert!((l - 2.0 * per).abs() < 1e-12);
        assert!((per - 4.54e-5).abs() < 1e-7);

        let single = Tensor::matrix(&[vec![0.6, 0.8]]);
        let l = value(|g| {
            let fs = g.constant(Tensor::matrix(&[vec![1.0, 0.0], vec![-0.3, 0.2]]));
            let ft = g.constant(Tensor::matrix(&[vec![0.0, 1.0]]));
            loss_is(g, fs, ft, &single, &single, &[0, 0], &[0], 0.1)
        });
        assert_eq!(l, 0.0);

        let mut g = Graph::new();
        let fs = g.constant(Tensor::matrix(&[vec![1.0, 0.0]]));
        assert!(proto_nce(&mut g, fs, &mu, &[2], 0.1).is_err());
    }

    #[test]
    fn is_is_permutation_invariant() {
        let mu = Tensor::matrix(&[vec![0.6, 0.8], vec![-0.8, 0.6], vec![0.0, -1.0]]);
        let swapped = Tensor::matrix(&[vec![0.0, -1.0], vec![0.6, 0.8], vec![-0.8, 0.6]]);
        let feats = Tensor::matrix(&[vec![0.3, 0.1], vec![-0.5, 0.9], vec![0.2, -0.7]]);
        let a = value(|g| {
            let f = g.constant(feats.clone());
            proto_nce(g, f, &mu, &[0, 1, 2], 0.1)
        });
        let b = value(|g| {
            let f = g.constant(feats.clone());
            proto_nce(g, f, &swapped, &[1, 2, 0], 0.1)
        });
        assert!((a - b).abs() < 1e-12);
    }
}
