use crate::error::{Error, Result};
use crate::linalg::{mvn_log_density, mvn_sample, CholeskyFactor, Matrix, SimRng, Vector};

/// Gaussian importance density `N(mean, L Lᵀ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalParams {
    pub mean: Vector,
    pub chol_cov: CholeskyFactor,
}

impl ProposalParams {
    pub fn new(mean: Vector, cov: &Matrix) -> Result<Self> {
        let chol_cov = CholeskyFactor::factor(cov)?;
        Self::from_chol(mean, chol_cov)
    }

    pub fn from_chol(mean: Vector, chol_cov: CholeskyFactor) -> Result<Self> {
        if chol_cov.order() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: chol_cov.order(),
            });
        }
        Ok(ProposalParams { mean, chol_cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self) -> Matrix {
        self.chol_cov.reconstruct()
    }

    pub fn log_density(&self, theta: &Vector) -> f64 {
        mvn_log_density(theta, &self.mean, &self.chol_cov).expect("dimensions checked at construction")
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vector {
        mvn_sample(&self.mean, &self.chol_cov, rng)
    }
}

/// Iteration count and per-iteration sample sizes `N_t = base + slope·t`
/// for `t = 1..=iterations`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub iterations: usize,
    pub base: usize,
    pub slope: usize,
}

impl Schedule {
    pub fn constant(iterations: usize, n: usize) -> Result<Self> {
        Self::affine(iterations, n, 0)
    }

    pub fn affine(iterations: usize, base: usize, slope: usize) -> Result<Self> {
        let s = Schedule {
            iterations,
            base,
            slope,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one iteration".into()));
        }
        if self.base + self.slope == 0 {
            return Err(Error::InvalidArgument("schedule sample sizes must be at least 1".into()));
        }
        Ok(())
    }

    /// Sample size of the zero-based iteration `t`.
    pub fn size(&self, t: usize) -> usize {
        self.base + self.slope * (t + 1)
    }

    pub fn total(&self) -> usize {
        (0..self.iterations).map(|t| self.size(t)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growing_schedule_starts_at_one_step() {
        let s = Schedule::affine(3, 0, 26).unwrap();
        assert_eq!((s.size(0), s.size(1), s.size(2)), (26, 52, 78));
        assert_eq!(s.total(), 156);
        let ard = Schedule::affine(2, 3000, 1000).unwrap();
        assert_eq!(ard.size(0), 4000);
    }

    #[test]
    fn rejects_empty_schedules() {
        assert!(Schedule::constant(0, 5).is_err());
        assert!(Schedule::constant(3, 0).is_err());
    }

    #[test]
    fn density_matches_scalar_formula() {
        let q = ProposalParams::new(Vector::from_element(1, 1.0), &Matrix::from_element(1, 1, 4.0))
            .unwrap();
        let x = Vector::from_element(1, 2.0);
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 4.0).ln() - 0.125;
        assert!((q.log_density(&x) - expected).abs() < 1e-14);
    }
}
