//! Mode finding, Hessian extraction and the Gaussian proposals built from
//! them.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::gp::{ApproxSettings, ClassificationPosterior, RegressionPosterior};
use crate::is::ProposalParams;
use crate::linalg::{Matrix, OpCounter, Vector};
use crate::target::{GaussianTarget, GradLogDensity};

/// Deterministic objective maximized by [`find_mode`].
pub trait ModeObjective {
    fn dim(&self) -> usize;

    fn value(&self, theta: &Vector, counter: &OpCounter) -> Result<f64>;

    /// Defaults to central differences of [`value`](ModeObjective::value).
    fn value_and_grad(&self, theta: &Vector, counter: &OpCounter) -> Result<(f64, Vector)> {
        let v = self.value(theta, counter)?;
        Ok((v, central_gradient(self, theta, FD_STEP, counter)?))
    }
}

/// Finite-difference step in log space.
pub const FD_STEP: f64 = 1e-4;

fn central_gradient<O: ModeObjective + ?Sized>(
    obj: &O,
    theta: &Vector,
    h: f64,
    counter: &OpCounter,
) -> Result<Vector> {
    let mut g = Vector::zeros(theta.len());
    for j in 0..theta.len() {
        let mut up = theta.clone();
        up[j] += h;
        let mut dn = theta.clone();
        dn[j] -= h;
        g[j] = (obj.value(&up, counter)? - obj.value(&dn, counter)?) / (2.0 * h);
    }
    Ok(g)
}

fn finite_or(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteObjective)
    }
}

impl ModeObjective for RegressionPosterior {
    fn dim(&self) -> usize {
        self.spec.n_kernel_params() + 1
    }

    fn value(&self, theta: &Vector, counter: &OpCounter) -> Result<f64> {
        let lik = crate::gp::log_marginal_regression(&self.spec, theta, &self.data, counter)?;
        finite_or(lik + self.prior.log_density(theta))
    }

    fn value_and_grad(&self, theta: &Vector, counter: &OpCounter) -> Result<(f64, Vector)> {
        let (v, g) = self.log_density_and_grad(theta, counter)?;
        Ok((finite_or(v)?, g))
    }
}

/// Approximate log evidence plus log prior of a classification posterior,
/// with gradients by central differences.
pub struct ApproxEvidenceObjective<'a> {
    pub posterior: &'a ClassificationPosterior,
    pub settings: ApproxSettings,
}

impl<'a> ApproxEvidenceObjective<'a> {
    /// Tighter latent-approximation tolerance than sampling uses, so that
    /// differences at `FD_STEP` are not swamped by convergence error.
    pub fn new(posterior: &'a ClassificationPosterior) -> Self {
        let mut settings = posterior.settings;
        settings.tol = settings.tol.min(1e-10);
        settings.max_iter = settings.max_iter.max(200);
        ApproxEvidenceObjective {
            posterior,
            settings,
        }
    }
}

impl ModeObjective for ApproxEvidenceObjective<'_> {
    fn dim(&self) -> usize {
        self.posterior.spec.n_kernel_params()
    }

    fn value(&self, theta: &Vector, counter: &OpCounter) -> Result<f64> {
        finite_or(self.posterior.approx_log_posterior(theta, self.settings, counter)?)
    }
}

impl ModeObjective for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn value(&self, theta: &Vector, counter: &OpCounter) -> Result<f64> {
        counter.charge(self.cost_per_eval);
        self.log_density_exact(theta)
    }

    fn value_and_grad(&self, theta: &Vector, counter: &OpCounter) -> Result<(f64, Vector)> {
        self.log_density_and_grad(theta, counter)
    }
}

/// Closure objective with finite-difference gradients.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Vector) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnObjective { dim, f }
    }
}

impl<F: Fn(&Vector) -> f64> ModeObjective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &Vector, _counter: &OpCounter) -> Result<f64> {
        finite_or((self.f)(theta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ModeSettings {
    fn default() -> Self {
        ModeSettings {
            tol: 1e-5,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeResult {
    pub mode: Vector,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub op_cost: u64,
}

// Once a backtracking search cannot improve from a freshly reset inverse
// Hessian, a gradient below this is taken as the noise floor of the
// objective rather than a failure.
const STALL_GRAD: f64 = 1e-3;

/// Quasi-Newton (BFGS) ascent with backtracking, stopping when the
/// gradient's largest component is at most `settings.tol`.
pub fn find_mode<O: ModeObjective + ?Sized>(
    obj: &O,
    theta0: &Vector,
    settings: ModeSettings,
    counter: &OpCounter,
) -> Result<ModeResult> {
    if theta0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            found: theta0.len(),
        });
    }
    let start = counter.get();
    let d = theta0.len();
    let mut x = theta0.clone();
    let (mut f, mut g) = obj.value_and_grad(&x, counter)?;
    let mut h_inv = Matrix::identity(d, d);
    let mut fresh = true;
    let mut iterations = 0;
    loop {
        let grad_norm = g.amax();
        if grad_norm <= settings.tol {
            return Ok(ModeResult {
                mode: x,
                value: f,
                grad_norm,
                iterations,
                op_cost: counter.get() - start,
            });
        }
        if iterations == settings.max_iter {
            return Err(Error::NoConvergence {
                what: "mode search",
                iterations,
            });
        }
        iterations += 1;

        let mut p = &h_inv * &g;
        if p.dot(&g) <= 0.0 {
            h_inv = Matrix::identity(d, d);
            fresh = true;
            p = g.clone();
        }
        let slope = p.dot(&g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &p * t;
            match obj.value(&trial, counter) {
                Ok(v) if v >= f + 1e-4 * t * slope => {
                    accepted = Some(trial);
                    break;
                }
                Ok(_) | Err(Error::NonFiniteObjective) | Err(Error::NotPositiveDefinite { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        let Some(x_new) = accepted else {
            if !fresh {
                h_inv = Matrix::identity(d, d);
                fresh = true;
                continue;
            }
            if grad_norm <= STALL_GRAD {
                log::warn!("mode search stalled at gradient {grad_norm:.2e}; accepting");
                return Ok(ModeResult {
                    mode: x,
                    value: f,
                    grad_norm,
                    iterations,
                    op_cost: counter.get() - start,
                });
            }
            return Err(Error::NoConvergence {
                what: "mode search line search",
                iterations,
            });
        };
        let (f_new, g_new) = obj.value_and_grad(&x_new, counter)?;
        // minimization convention on -f
        let s = &x_new - &x;
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h_inv = Matrix::identity(d, d) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let i = Matrix::identity(d, d);
            let left = &i - &s * y.transpose() * rho;
            let right = &i - &y * s.transpose() * rho;
            h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
            fresh = false;
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
}

/// Central-difference Hessian of `obj` at `m` with step `h`, symmetrized,
/// then repaired so that its negation is positive definite: eigenvalues of
/// `-H` below `1e-6` times the largest are raised to that floor.
pub fn hessian_at_mode<O: ModeObjective + ?Sized>(
    obj: &O,
    m: &Vector,
    h: f64,
    counter: &OpCounter,
) -> Result<Matrix> {
    let d = m.len();
    let f0 = obj.value(m, counter)?;
    let at = |di: &[(usize, f64)]| -> Result<f64> {
        let mut x = m.clone();
        for &(i, s) in di {
            x[i] += s;
        }
        obj.value(&x, counter)
    };
    let mut hess = Matrix::zeros(d, d);
    for i in 0..d {
        hess[(i, i)] = (at(&[(i, h)])? - 2.0 * f0 + at(&[(i, -h)])?) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)])? - at(&[(i, h), (j, -h)])? - at(&[(i, -h), (j, h)])?
                + at(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    repair_negative_definite(&hess)
}

/// Floors the eigenvalues of `-H` at `1e-6·λ_max`.
pub fn repair_negative_definite(hess: &Matrix) -> Result<Matrix> {
    if hess.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotNegativeDefinite);
    }
    let neg = -hess;
    let neg = (&neg + neg.transpose()) * 0.5;
    let eig = SymmetricEigen::new(neg);
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return Err(Error::NotNegativeDefinite);
    }
    let floor = 1e-6 * max;
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return Ok(hess.clone());
    }
    let lambda = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors;
    let repaired = q * Matrix::from_diagonal(&lambda) * q.transpose();
    let repaired = -(&repaired + repaired.transpose()) * 0.5;
    Ok(repaired)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProposalVariant {
    /// `N(m, αI)`.
    Identity,
    /// `N(m, α(-H)⁻¹)`.
    Full,
    /// `N(m, α·diag((-H)⁻¹))`.
    Diag,
}

impl ProposalVariant {
    pub fn name(self) -> &'static str {
        match self {
            ProposalVariant::Identity => "identity",
            ProposalVariant::Full => "full",
            ProposalVariant::Diag => "diag",
        }
    }
}

impl std::str::FromStr for ProposalVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "i" => Ok(ProposalVariant::Identity),
            "full" | "h" => Ok(ProposalVariant::Full),
            "diag" | "diagonal" => Ok(ProposalVariant::Diag),
            other => Err(format!("unknown proposal variant `{other}` (expected identity, full or diag)")),
        }
    }
}

/// `(-H)⁻¹`, the Laplace covariance at the mode.
pub fn approx_covariance(hess: &Matrix) -> Result<Matrix> {
    let neg = -hess;
    let chol = crate::linalg::CholeskyFactor::factor(&neg)?;
    Ok(chol.inverse_uncounted())
}

pub fn build_proposal(
    variant: ProposalVariant,
    m: &Vector,
    hess: &Matrix,
    alpha: f64,
) -> Result<ProposalParams> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("proposal scale must be positive".into()));
    }
    let d = m.len();
    let cov = match variant {
        ProposalVariant::Identity => Matrix::identity(d, d) * alpha,
        ProposalVariant::Full => approx_covariance(hess)? * alpha,
        ProposalVariant::Diag => Matrix::from_diagonal(&approx_covariance(hess)?.diagonal()) * alpha,
    };
    ProposalParams::new(m.clone(), &cov)
}

/// Mode, repaired Hessian and the total cost of computing them.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub mode: ModeResult,
    pub hessian: Matrix,
    pub op_cost: u64,
}

impl Initialization {
    pub fn approx_cov(&self) -> Result<Matrix> {
        approx_covariance(&self.hessian)
    }

    pub fn proposal(&self, variant: ProposalVariant, alpha: f64) -> Result<ProposalParams> {
        build_proposal(variant, &self.mode.mode, &self.hessian, alpha)
    }
}

pub fn initialize<O: ModeObjective + ?Sized>(
    obj: &O,
    theta0: &Vector,
    settings: ModeSettings,
    counter: &OpCounter,
) -> Result<Initialization> {
    let start = counter.get();
    let mode = find_mode(obj, theta0, settings, counter)?;
    let hessian = hessian_at_mode(obj, &mode.mode, FD_STEP, counter)?;
    Ok(Initialization {
        mode,
        hessian,
        op_cost: counter.get() - start,
    })
}
