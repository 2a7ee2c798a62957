//! Unnormalized log densities over the log-space parameter vector.

use crate::error::{Error, Result};
use crate::linalg::{mvn_log_density, CholeskyFactor, Matrix, OpCounter, SimRng, Vector};

/// `ln f(θ)` up to a constant, or the log of an unbiased estimate of it when
/// [`is_noisy`](LogDensity::is_noisy) is true.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &Vector, rng: &mut SimRng, counter: &OpCounter) -> Result<f64>;

    fn is_noisy(&self) -> bool {
        false
    }
}

/// Exact target with an analytic gradient.
pub trait GradLogDensity: LogDensity {
    fn log_density_and_grad(&self, theta: &Vector, counter: &OpCounter) -> Result<(f64, Vector)>;
}

/// Multivariate Gaussian target. Charges `cost_per_eval` cubic operations per
/// density call and three times that per gradient call, mimicking the GP
/// accounting.
#[derive(Clone, Debug)]
pub struct GaussianTarget {
    pub mean: Vector,
    chol: CholeskyFactor,
    precision: Matrix,
    pub cost_per_eval: u64,
}

impl GaussianTarget {
    pub fn new(mean: Vector, cov: &Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        let chol = CholeskyFactor::factor(cov)?;
        let precision = chol.inverse_uncounted();
        Ok(GaussianTarget {
            mean,
            chol,
            precision,
            cost_per_eval: 0,
        })
    }

    pub fn with_cost(mut self, cost_per_eval: u64) -> Self {
        self.cost_per_eval = cost_per_eval;
        self
    }

    pub fn cov(&self) -> Matrix {
        self.chol.reconstruct()
    }

    pub fn log_density_exact(&self, theta: &Vector) -> Result<f64> {
        mvn_log_density(theta, &self.mean, &self.chol)
    }
}

impl LogDensity for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, theta: &Vector, _rng: &mut SimRng, counter: &OpCounter) -> Result<f64> {
        counter.charge(self.cost_per_eval);
        self.log_density_exact(theta)
    }
}

impl GradLogDensity for GaussianTarget {
    fn log_density_and_grad(&self, theta: &Vector, counter: &OpCounter) -> Result<(f64, Vector)> {
        counter.charge(3 * self.cost_per_eval);
        let value = self.log_density_exact(theta)?;
        Ok((value, -(&self.precision * (theta - &self.mean))))
    }
}

/// Wraps a closure as an exact, uncharged target.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Vector) -> f64 + Sync> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnTarget { dim, f }
    }
}

impl<F: Fn(&Vector) -> f64 + Sync> LogDensity for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, theta: &Vector, _rng: &mut SimRng, _counter: &OpCounter) -> Result<f64> {
        Ok((self.f)(theta))
    }
}

/// Errors that mean "this θ has no usable density" rather than a bug in the
/// caller: they become `-inf` (zero weight, certain rejection). Overflowing
/// kernel entries surface as a NaN asymmetry check.
pub(crate) fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::NotPositiveDefinite { .. }
            | Error::AllWeightsDegenerate
            | Error::NonFiniteObjective
            | Error::OscillationDetected { .. }
            | Error::NotSymmetric(_)
    )
}

pub(crate) fn degenerate_as_neg_inf(result: Result<f64>) -> Result<f64> {
    match result {
        Err(e) if is_degenerate(&e) => Ok(f64::NEG_INFINITY),
        Ok(v) if v.is_nan() => Ok(f64::NEG_INFINITY),
        other => other,
    }
}
