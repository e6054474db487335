//! Momentum feature banks and spherical k-means prototypes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn normalize(v: &mut [f64]) -> Result<()> {
    let mut s = 0.0;
    for x in v.iter() {
        s += x * x;
    }
    let n = s.sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize a vector of norm {n}"
        )));
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// One unit-norm row per example of a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    rows: Tensor,
    pub momentum: f64,
}

impl MemoryBank {
    /// Builds a bank from raw features `[n×e]`, normalizing every row.
    pub fn new(mut rows: Tensor, momentum: f64) -> Result<Self> {
        if rows.rank() != 2 {
            return Err(Error::contract("memory bank needs a matrix of rows"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::contract(format!(
                "bank momentum {momentum} outside [0, 1)"
            )));
        }
        let e = rows.last_dim();
        for r in rows.data_mut().chunks_mut(e) {
            normalize(r)?;
        }
        Ok(MemoryBank { rows, momentum })
    }

    pub fn len(&self) -> usize {
        self.rows.outer_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    /// row_i ← normalize(m·row_i + (1−m)·f).
    pub fn update(&mut self, i: usize, f: &[f64]) -> Result<()> {
        let e = self.rows.last_dim();
        if i >= self.len() {
            return Err(Error::contract(format!(
                "bank index {i} out of range for {} rows",
                self.len()
            )));
        }
        if f.len() != e {
            return Err(Error::Dimension {
                op: "bank_update",
                lhs: vec![e],
                rhs: vec![f.len()],
            });
        }
        let m = self.momentum;
        let row = &mut self.rows.data_mut()[i * e..(i + 1) * e];
        for (r, v) in row.iter_mut().zip(f) {
            *r = m * *r + (1.0 - m) * v;
        }
        normalize(row)
    }
}

/// Unit-norm centroids `[k×e]` and the cluster of every bank row.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    pub centroids: Tensor,
    pub assignments: Vec<usize>,
    /// Σ (1 − cos(x, μ_c(x))) after each assignment pass.
    pub objective: Vec<f64>,
}

fn assign(data: &Tensor, centroids: &Tensor, out: &mut [usize]) -> f64 {
    let mut obj = 0.0;
    for (i, slot) in out.iter_mut().enumerate() {
        let x = data.row(i);
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..centroids.outer_len() {
            let c = dot(x, centroids.row(j));
            if c > best.0 {
                best = (c, j);
            }
        }
        *slot = best.1;
        obj += 1.0 - best.0;
    }
    obj
}

/// Spherical k-means on unit rows `[n×e]`: cosine assignment, then
/// mean-and-normalize updates. Initial centroids are `k` distinct rows
/// drawn with `seed`; a cluster left empty is moved onto the row farthest
/// from its own centroid.
pub fn kmeans(data: &Tensor, k: usize, seed: u64, iters: usize) -> Result<Prototypes> {
    let n = data.outer_len();
    let e = data.last_dim();
    if k == 0 || k > n {
        return Err(Error::contract(format!("k = {k} clusters for {n} vectors")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    let mut cent = Vec::with_capacity(k * e);
    for &p in &picks {
        cent.extend_from_slice(data.row(p));
    }
    let mut centroids = Tensor::new(&[k, e], cent)?;
    let mut assignments = vec![0; n];
    let mut objective = vec![assign(data, &centroids, &mut assignments)];
    for _ in 0..iters {
        let mut sums = vec![0.0; k * e];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * e..(c + 1) * e].iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            let slot = &mut sums[j * e..(j + 1) * e];
            let ok = counts[j] > 0 && normalize(slot).is_ok();
            if !ok {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .map(|i| (1.0 - dot(data.row(i), centroids.row(assignments[i])), i))
                    .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
                    .1;
                taken[far] = true;
                slot.copy_from_slice(data.row(far));
            }
        }
        centroids = Tensor::new(&[k, e], sums)?;
        objective.push(assign(data, &centroids, &mut assignments));
    }
    Ok(Prototypes {
        centroids,
        assignments,
        objective,
    })
}
