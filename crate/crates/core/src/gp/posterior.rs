use super::{
    latent_approx, log_marginal_regression, log_marginal_regression_with_grad,
    pseudo_marginal_estimate, ApproxKind, ApproxSettings, Dataset, KernelSpec,
};
use crate::error::{Error, Result};
use crate::linalg::{OpCounter, SimRng, Vector};
use crate::target::{degenerate_as_neg_inf, GradLogDensity, LogDensity};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Independent zero-mean Gaussian prior on every log-parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogSpacePrior {
    pub sd: f64,
}

impl Default for LogSpacePrior {
    fn default() -> Self {
        LogSpacePrior { sd: 3.0 }
    }
}

impl LogSpacePrior {
    pub fn log_density(&self, theta: &Vector) -> f64 {
        let var = self.sd * self.sd;
        theta
            .iter()
            .map(|t| -0.5 * t * t / var - self.sd.ln() - HALF_LN_2PI)
            .sum()
    }

    pub fn grad(&self, theta: &Vector) -> Vector {
        -theta / (self.sd * self.sd)
    }
}

/// `ln p(y | θ) + ln p(θ)` for GP regression.
#[derive(Clone, Debug)]
pub struct RegressionPosterior {
    pub spec: KernelSpec,
    pub data: Dataset,
    pub prior: LogSpacePrior,
}

impl RegressionPosterior {
    pub fn new(spec: KernelSpec, data: Dataset, prior: LogSpacePrior) -> Result<Self> {
        if data.task != super::Task::Regression {
            return Err(Error::InvalidArgument("regression posterior needs regression data".into()));
        }
        if data.input_dim() != spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: spec.input_dim,
                found: data.input_dim(),
            });
        }
        Ok(RegressionPosterior { spec, data, prior })
    }
}

impl LogDensity for RegressionPosterior {
    fn dim(&self) -> usize {
        self.spec.n_kernel_params() + 1
    }

    fn log_density(&self, theta: &Vector, _rng: &mut SimRng, counter: &OpCounter) -> Result<f64> {
        let lik = degenerate_as_neg_inf(log_marginal_regression(
            &self.spec, theta, &self.data, counter,
        ))?;
        Ok(lik + self.prior.log_density(theta))
    }
}

impl GradLogDensity for RegressionPosterior {
    fn log_density_and_grad(&self, theta: &Vector, counter: &OpCounter) -> Result<(f64, Vector)> {
        match log_marginal_regression_with_grad(&self.spec, theta, &self.data, counter) {
            Ok((v, g)) => Ok((
                v + self.prior.log_density(theta),
                g + self.prior.grad(theta),
            )),
            Err(e) if crate::target::is_degenerate(&e) => {
                Ok((f64::NEG_INFINITY, Vector::zeros(theta.len())))
            }
            Err(e) => Err(e),
        }
    }
}

/// Probit-classification posterior whose likelihood is estimated by
/// importance sampling over the latent function values.
#[derive(Clone, Debug)]
pub struct ClassificationPosterior {
    pub spec: KernelSpec,
    pub data: Dataset,
    pub prior: LogSpacePrior,
    pub approx: ApproxKind,
    pub settings: ApproxSettings,
    pub n_imp: usize,
}

impl ClassificationPosterior {
    pub fn new(
        spec: KernelSpec,
        data: Dataset,
        prior: LogSpacePrior,
        approx: ApproxKind,
        n_imp: usize,
    ) -> Result<Self> {
        if data.task != super::Task::Classification {
            return Err(Error::InvalidArgument(
                "classification posterior needs classification data".into(),
            ));
        }
        if data.input_dim() != spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: spec.input_dim,
                found: data.input_dim(),
            });
        }
        if n_imp == 0 {
            return Err(Error::InvalidArgument("n_imp must be at least 1".into()));
        }
        Ok(ClassificationPosterior {
            spec,
            data,
            prior,
            approx,
            settings: ApproxSettings::default_for(approx),
            n_imp,
        })
    }

    /// Deterministic surrogate: approximate log evidence plus log prior.
    /// Used for mode finding.
    pub fn approx_log_posterior(
        &self,
        theta: &Vector,
        settings: ApproxSettings,
        counter: &OpCounter,
    ) -> Result<f64> {
        let fit = latent_approx(self.approx, &self.spec, theta, &self.data, counter, settings)?;
        if !fit.converged {
            return Err(Error::NonFiniteObjective);
        }
        Ok(fit.log_evidence + self.prior.log_density(theta))
    }
}

impl LogDensity for ClassificationPosterior {
    fn dim(&self) -> usize {
        self.spec.n_kernel_params()
    }

    fn log_density(&self, theta: &Vector, rng: &mut SimRng, counter: &OpCounter) -> Result<f64> {
        // an unconverged fit is still a valid importance density
        let estimate = latent_approx(self.approx, &self.spec, theta, &self.data, counter, self.settings)
            .and_then(|fit| pseudo_marginal_estimate(&self.data, &fit, self.n_imp, rng));
        Ok(degenerate_as_neg_inf(estimate)? + self.prior.log_density(theta))
    }

    fn is_noisy(&self) -> bool {
        true
    }
}
