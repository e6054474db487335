use super::{Graph, Tensor, Var};
use crate::error::Result;

/// |a − n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from reporting roundoff as a large relative error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-6;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Central-difference gradient of a scalar function of a tensor.
pub fn finite_diff_grad(
    mut f: impl FnMut(&Tensor) -> Result<f64>,
    theta: &Tensor,
    h: f64,
) -> Result<Vec<f64>> {
    let mut probe = theta.clone();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Builds `f` on a fresh tape with `theta` as its only parameter, compares
/// the reverse-mode gradient with central differences, and returns the
/// largest relative error over all coordinates.
pub fn finite_diff_check(
    f: impl Fn(&mut Graph, Var) -> Result<Var>,
    theta: &Tensor,
    h: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.param(theta.clone());
    let loss = f(&mut g, x)?;
    g.backward(loss)?;
    let analytic = g.grad_tensor(x);

    let numeric = finite_diff_grad(
        |t| {
            let mut g = Graph::new();
            let x = g.param(t.clone());
            let l = f(&mut g, x)?;
            Ok(g.scalar(l))
        },
        theta,
        h,
    )?;
    Ok(analytic
        .data()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max))
}
