use super::kernel::{covariance_matrix, KernelSpec};
use super::laplace::{check_classification, newton_system, posterior_covariance};
use super::probit::{inverse_mills_ratio, log_normal_cdf};
use super::{ApproxSettings, Dataset, GaussianApprox};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, CholeskyFactor, Matrix, OpCounter, Vector};

/// Natural parameters of the Gaussian sites: precision and precision times
/// mean.
#[derive(Clone, Debug, PartialEq)]
pub struct EpSiteParams {
    pub precision: Vector,
    pub shifted_mean: Vector,
}

// A site flips the sign of its proposed precision change this many sweeps
// in a row, with a non-shrinking magnitude, before we call it oscillating.
const OSCILLATION_SWEEPS: usize = 8;

/// Expectation propagation for probit classification with sequential site
/// updates and a full recomputation of the posterior after every sweep.
///
/// Cubic operations: two factorizations (`K` and the final covariance) plus
/// three per sweep.
pub fn ep_approx(
    spec: &KernelSpec,
    theta: &Vector,
    data: &Dataset,
    counter: &OpCounter,
    settings: ApproxSettings,
) -> Result<GaussianApprox> {
    let approx = ep_approx_unchecked(spec, theta, data, counter, settings)?;
    if !approx.converged {
        return Err(Error::NoConvergence {
            what: "EP",
            iterations: settings.max_iter,
        });
    }
    Ok(approx)
}

/// As [`ep_approx`], but returns the last sweep's fit when the cap is hit.
/// Oscillating sites are still reported as errors.
pub fn ep_approx_unchecked(
    spec: &KernelSpec,
    theta: &Vector,
    data: &Dataset,
    counter: &OpCounter,
    settings: ApproxSettings,
) -> Result<GaussianApprox> {
    check_classification(spec, theta, data)?;
    let n = data.len();
    let y = &data.y;
    let k = covariance_matrix(spec, theta, &data.x, false)?;
    let (prior_chol, _) = cholesky_with_jitter(&k, counter)?;

    let mut sites = EpSiteParams {
        precision: Vector::zeros(n),
        shifted_mean: Vector::zeros(n),
    };
    let mut sigma = k.clone();
    let mut mu = Vector::zeros(n);
    let mut b_chol = CholeskyFactor::identity(n);
    let mut sweeps = 0;
    let mut converged = false;
    let mut last_delta = vec![0.0f64; n];
    let mut flips = vec![0usize; n];

    while sweeps < settings.max_iter {
        sweeps += 1;
        let previous = sites.clone();
        for i in 0..n {
            let s_ii = sigma[(i, i)];
            let cav_prec = 1.0 / s_ii - sites.precision[i];
            let cav_shift = mu[i] / s_ii - sites.shifted_mean[i];
            if !(cav_prec > 0.0) {
                continue;
            }
            let cav_var = 1.0 / cav_prec;
            let cav_mean = cav_shift * cav_var;
            let denom = (1.0 + cav_var).sqrt();
            let z = y[i] * cav_mean / denom;
            let r = inverse_mills_ratio(z);
            let hat_mean = cav_mean + y[i] * cav_var * r / denom;
            let hat_var = cav_var - cav_var * cav_var * r * (z + r) / (1.0 + cav_var);
            let new_prec = 1.0 / hat_var - cav_prec;
            if !(new_prec >= 0.0) || !new_prec.is_finite() {
                continue;
            }
            let delta = new_prec - sites.precision[i];

            if delta.abs() > settings.tol {
                if last_delta[i] * delta < 0.0 && delta.abs() >= 0.5 * last_delta[i].abs() {
                    flips[i] += 1;
                    if flips[i] >= OSCILLATION_SWEEPS {
                        return Err(Error::OscillationDetected { site: i });
                    }
                } else {
                    flips[i] = 0;
                }
                last_delta[i] = delta;
            }

            sites.precision[i] = new_prec;
            sites.shifted_mean[i] = hat_mean / hat_var - cav_shift;
            let s_i = sigma.column(i).into_owned();
            let coef = delta / (1.0 + delta * s_ii);
            sigma.ger(-coef, &s_i, &s_i, 1.0);
            mu = &sigma * &sites.shifted_mean;
        }

        // recompute from the sites: L Lᵀ = I + S K S, Σ = K - VᵀV
        let sqrt_prec = sites.precision.map(f64::sqrt);
        b_chol = cholesky_with_jitter(&newton_system(&k, &sqrt_prec), counter)?.0;
        sigma = posterior_covariance(&k, &sqrt_prec, &b_chol, counter);
        mu = &sigma * &sites.shifted_mean;

        let change = (&sites.precision - &previous.precision)
            .amax()
            .max((&sites.shifted_mean - &previous.shifted_mean).amax());
        if change < settings.tol {
            converged = true;
            break;
        }
    }

    let log_evidence = ep_log_evidence(y, &sites, &sigma, &mu, &b_chol);
    if !log_evidence.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let (chol_cov, _) = cholesky_with_jitter(&sigma, counter)?;
    Ok(GaussianApprox {
        mean: mu,
        chol_cov,
        log_evidence,
        prior_chol,
        iterations: sweeps,
        converged,
    })
}

/// `ln Z_EP` from the site parameters and the recomputed posterior.
fn ep_log_evidence(
    y: &Vector,
    sites: &EpSiteParams,
    sigma: &Matrix,
    mu: &Vector,
    b_chol: &CholeskyFactor,
) -> f64 {
    let n = y.len();
    let tau = &sites.precision;
    let nu = &sites.shifted_mean;
    let mut total = -b_chol.lower().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    total += 0.5 * nu.dot(&(sigma * nu));
    for i in 0..n {
        let cav_prec = 1.0 / sigma[(i, i)] - tau[i];
        let cav_shift = mu[i] / sigma[(i, i)] - nu[i];
        let cav_var = 1.0 / cav_prec;
        let cav_mean = cav_shift * cav_var;
        total += log_normal_cdf(y[i] * cav_mean / (1.0 + cav_var).sqrt());
        total += 0.5 * cav_shift * (tau[i] / cav_prec * cav_shift - 2.0 * nu[i]) / (tau[i] + cav_prec);
        total -= 0.5 * nu[i] * nu[i] / (cav_prec + tau[i]);
        total += 0.5 * (1.0 + tau[i] / cav_prec).ln();
    }
    total
}
