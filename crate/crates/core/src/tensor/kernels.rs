//! Raw row-major kernels. All reductions run left to right.

/// c[m×n] = a[m×k] · b[k×n]
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        axpy_rows(crow, arow, b, n);
    }
    c
}

/// crow += Σ_p coef[p]·rows[p], accumulated in ascending p per entry.
#[inline]
fn axpy_rows(crow: &mut [f64], coef: &[f64], rows: &[f64], n: usize) {
    let k = coef.len();
    let mut p = 0;
    while p + 4 <= k {
        let (a0, a1, a2, a3) = (coef[p], coef[p + 1], coef[p + 2], coef[p + 3]);
        let r = &rows[p * n..(p + 4) * n];
        let (b0, rest) = r.split_at(n);
        let (b1, rest) = rest.split_at(n);
        let (b2, b3) = rest.split_at(n);
        for j in 0..n {
            let mut v = crow[j];
            v += a0 * b0[j];
            v += a1 * b1[j];
            v += a2 * b2[j];
            v += a3 * b3[j];
            crow[j] = v;
        }
        p += 4;
    }
    for q in p..k {
        let av = coef[q];
        for (cv, &bv) in crow.iter_mut().zip(&rows[q * n..(q + 1) * n]) {
            *cv += av * bv;
        }
    }
}

/// c[m×n] = a[m×k] · b[n×k]ᵀ, summed in the same order as [`dot`].
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    if m == 1 {
        return (0..n).map(|j| dot(a, &b[j * k..(j + 1) * k])).collect();
    }
    matmul(a, &transpose(b, n, k), m, k, n)
}

/// c[k×n] = a[m×k]ᵀ · b[m×n]
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let at = transpose(a, m, k);
    matmul(&at, b, k, m, n)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub(crate) fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = a[i * n + j];
        }
    }
    t
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
