//! Dense linear algebra with cubic-operation accounting.
//!
//! Every whole factorization of an `n x n` data-sized matrix is charged to an
//! [`OpCounter`]. Triangular solves, log-determinants and Gaussian densities
//! work from a supplied factor and are free.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Random generator used by every stochastic operation.
///
/// ChaCha supports independent streams under one 64-bit seed, which is how
/// replicates get their own generator.
pub type SimRng = ChaCha8Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Builds the generator for replicate `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Monotone tally of cubic-cost operations, shared by cloning.
#[derive(Clone, Debug, Default)]
pub struct OpCounter(Arc<AtomicU64>);

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(ops: u64) -> Self {
        OpCounter(Arc::new(AtomicU64::new(ops)))
    }

    pub fn charge(&self, ops: u64) {
        self.0.fetch_add(ops, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    l: Matrix,
}

const SYMMETRY_TOL: f64 = 1e-10;

impl CholeskyFactor {
    /// Factorizes without charging a counter. Meant for parameter-space
    /// matrices whose size does not scale with the data.
    pub fn factor(m: &Matrix) -> Result<Self> {
        let sym = symmetrized(m)?;
        let l = factor_lower(&sym)?;
        Ok(CholeskyFactor { l })
    }

    /// Wraps an existing lower-triangular matrix. Entries above the diagonal
    /// are ignored.
    pub fn from_lower(l: Matrix) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::DimensionMismatch {
                expected: l.nrows(),
                found: l.ncols(),
            });
        }
        for i in 0..l.nrows() {
            if !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite() {
                return Err(Error::NotPositiveDefinite { minor: i + 1 });
            }
        }
        Ok(CholeskyFactor { l: l.lower_triangle() })
    }

    pub fn identity(n: usize) -> Self {
        CholeskyFactor {
            l: Matrix::identity(n, n),
        }
    }

    /// Factor of a diagonal matrix with the given (positive) diagonal.
    pub fn from_diagonal(diag: &Vector) -> Result<Self> {
        Self::from_lower(Matrix::from_diagonal(&diag.map(f64::sqrt)))
    }

    pub fn order(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        &self.l * self.l.transpose()
    }

    /// Scales the factored matrix by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        CholeskyFactor {
            l: &self.l * s.sqrt(),
        }
    }

    /// Solves `L x = b`, or `Lᵀ x = b` when `transposed`.
    pub fn solve_triangular(&self, b: &Vector, transposed: bool) -> Result<Vector> {
        tri_solve(self, b, transposed)
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        let z = tri_solve(self, b, false)?;
        tri_solve(self, &z, true)
    }

    pub fn log_det(&self) -> f64 {
        log_det_from_chol(self)
    }

    /// Explicit inverse `(L Lᵀ)⁻¹`; charged as two cubic operations (the
    /// triangular inverse and the product).
    pub fn inverse(&self, counter: &OpCounter) -> Matrix {
        counter.charge(2);
        self.inverse_uncounted()
    }

    pub(crate) fn inverse_uncounted(&self) -> Matrix {
        let n = self.order();
        let l_inv = self
            .l
            .solve_lower_triangular(&Matrix::identity(n, n))
            .expect("factor has a positive diagonal");
        l_inv.transpose() * l_inv
    }
}

fn symmetrized(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    let rel = if scale > 0.0 { asym / scale } else { asym };
    if rel > SYMMETRY_TOL || rel.is_nan() {
        return Err(Error::NotSymmetric(rel));
    }
    if asym == 0.0 {
        Ok(m.clone())
    } else {
        Ok((m + m.transpose()) * 0.5)
    }
}

// Left-looking column Cholesky over the column-major buffer.
fn factor_lower(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    let src = a.as_slice();
    let buf = l.as_mut_slice();
    for j in 0..n {
        let (done, rest) = buf.split_at_mut(j * n);
        let col = &mut rest[..n];
        col[j..].copy_from_slice(&src[j * n + j..(j + 1) * n]);
        for k in 0..j {
            let prev = &done[k * n..(k + 1) * n];
            let ljk = prev[j];
            if ljk != 0.0 {
                for i in j..n {
                    col[i] -= prev[i] * ljk;
                }
            }
        }
        let d = col[j];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { minor: j + 1 });
        }
        let djj = d.sqrt();
        col[j] = djj;
        let inv = 1.0 / djj;
        for v in &mut col[j + 1..] {
            *v *= inv;
        }
    }
    Ok(l)
}

/// Cholesky factorization charged as one cubic operation.
pub fn cholesky(m: &Matrix, counter: &OpCounter) -> Result<CholeskyFactor> {
    counter.charge(1);
    CholeskyFactor::factor(m)
}

/// Cholesky with escalating diagonal jitter: starting from
/// `1e-10 * mean(diag)` and growing tenfold up to `1e-4 * mean(diag)`.
/// Every attempt is charged. Returns the factor and the jitter used.
pub fn cholesky_with_jitter(m: &Matrix, counter: &OpCounter) -> Result<(CholeskyFactor, f64)> {
    match cholesky(m, counter) {
        Ok(f) => return Ok((f, 0.0)),
        Err(Error::NotPositiveDefinite { .. }) => {}
        Err(e) => return Err(e),
    }
    let n = m.nrows();
    let mean_diag = m.diagonal().sum() / n as f64;
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut last = Error::NotPositiveDefinite { minor: 1 };
    for exponent in -10..=-4 {
        let jitter = base * 10f64.powi(exponent);
        let mut jittered = m.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        match cholesky(&jittered, counter) {
            Ok(f) => return Ok((f, jitter)),
            Err(e @ Error::NotPositiveDefinite { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Solves `L x = b` (or `Lᵀ x = b`) by substitution.
pub fn tri_solve(l: &CholeskyFactor, b: &Vector, transposed: bool) -> Result<Vector> {
    let n = l.order();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let m = &l.l;
    let mut x = b.clone();
    if !transposed {
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= m[(i, k)] * x[k];
            }
            x[i] = s / m[(i, i)];
        }
    } else {
        // column i of L is row i of Lᵀ
        for i in (0..n).rev() {
            let col = m.column(i);
            let mut s = x[i];
            for k in i + 1..n {
                s -= col[k] * x[k];
            }
            x[i] = s / col[i];
        }
    }
    Ok(x)
}

pub fn log_det_from_chol(l: &CholeskyFactor) -> f64 {
    2.0 * l.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Log density of `N(mean, L Lᵀ)` at `x`.
pub fn mvn_log_density(x: &Vector, mean: &Vector, l: &CholeskyFactor) -> Result<f64> {
    let d = l.order();
    if x.len() != d || mean.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if x.len() != d { x.len() } else { mean.len() },
        });
    }
    let z = tri_solve(l, &(x - mean), false)?;
    Ok(-0.5 * d as f64 * LN_2PI - 0.5 * log_det_from_chol(l) - 0.5 * z.norm_squared())
}

/// Draws `mean + L z` with `z` standard normal.
pub fn mvn_sample(mean: &Vector, l: &CholeskyFactor, rng: &mut SimRng) -> Vector {
    let z = Vector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    mean + &l.l * z
}

/// `ln Σ exp(vᵢ)`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
