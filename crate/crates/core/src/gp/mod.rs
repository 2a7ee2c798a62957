//! Gaussian-process models: covariance functions, the exact regression
//! marginal likelihood, probit classification with Laplace and EP
//! approximations, and the importance-sampling estimator of the
//! classification marginal likelihood.

mod ep;
mod kernel;
mod laplace;
mod posterior;
mod probit;
mod pseudo_marginal;
mod regression;

pub use ep::{ep_approx, ep_approx_unchecked};
pub use kernel::{covariance_matrix, KernelFamily, KernelSpec};
pub use laplace::{laplace_approx, laplace_approx_unchecked};
pub use posterior::{ClassificationPosterior, LogSpacePrior, RegressionPosterior};
pub use probit::{inverse_mills_ratio, log_normal_cdf, normal_cdf, probit_log_likelihood};
pub use pseudo_marginal::{importance_log_marginal, pseudo_marginal_estimate};
pub use regression::{log_marginal_regression, log_marginal_regression_with_grad};

use crate::error::{Error, Result};
use crate::linalg::{CholeskyFactor, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(format!(
                "unknown task `{other}` (expected regression or classification)"
            )),
        }
    }
}

/// Inputs `x` (one row per point) and targets `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vector,
    pub task: Task,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vector, task: Task) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if task == Task::Classification && y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidArgument(
                "classification labels must be -1 or +1".into(),
            ));
        }
        Ok(Dataset { x, y, task })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    /// Length of the log-space parameter vector for `spec` on this task.
    pub fn n_params(&self, spec: &KernelSpec) -> usize {
        spec.n_kernel_params() + usize::from(self.task == Task::Regression)
    }
}

/// Gaussian fit `N(mean, L Lᵀ)` to the latent posterior `p(f | y, θ)`.
#[derive(Clone, Debug)]
pub struct GaussianApprox {
    pub mean: Vector,
    pub chol_cov: CholeskyFactor,
    /// Approximate `ln p(y | θ)`.
    pub log_evidence: f64,
    /// Factor of the prior covariance `K`, kept for the latent prior density.
    pub prior_chol: CholeskyFactor,
    /// Newton factorizations (Laplace) or sweeps (EP) performed.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApproxKind {
    Laplace,
    Ep,
}

impl ApproxKind {
    pub fn name(self) -> &'static str {
        match self {
            ApproxKind::Laplace => "la",
            ApproxKind::Ep => "ep",
        }
    }
}

impl std::str::FromStr for ApproxKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "la" | "laplace" => Ok(ApproxKind::Laplace),
            "ep" => Ok(ApproxKind::Ep),
            other => Err(format!("unknown approximation `{other}` (expected la or ep)")),
        }
    }
}

/// Stopping rule for the latent approximations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl ApproxSettings {
    pub fn laplace_default() -> Self {
        ApproxSettings {
            tol: 1e-8,
            max_iter: 50,
        }
    }

    pub fn ep_default() -> Self {
        ApproxSettings {
            tol: 1e-6,
            max_iter: 50,
        }
    }

    pub fn default_for(kind: ApproxKind) -> Self {
        match kind {
            ApproxKind::Laplace => Self::laplace_default(),
            ApproxKind::Ep => Self::ep_default(),
        }
    }
}

/// Runs the requested approximation, returning the fit even when it stopped
/// at the iteration cap.
pub fn latent_approx(
    kind: ApproxKind,
    spec: &KernelSpec,
    theta: &Vector,
    data: &Dataset,
    counter: &crate::linalg::OpCounter,
    settings: ApproxSettings,
) -> Result<GaussianApprox> {
    match kind {
        ApproxKind::Laplace => laplace_approx_unchecked(spec, theta, data, counter, settings),
        ApproxKind::Ep => ep_approx_unchecked(spec, theta, data, counter, settings),
    }
}
