use super::store::{effective_sample_size, normalize_log_weights};
use super::{ProposalParams, WeightedSampleStore};
use crate::error::{Error, Result};
use crate::linalg::{CholeskyFactor, Matrix, Vector};

/// Which covariance the adaptation estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovarianceMode {
    Full,
    Diagonal,
}

impl CovarianceMode {
    pub fn name(self) -> &'static str {
        match self {
            CovarianceMode::Full => "full",
            CovarianceMode::Diagonal => "diag",
        }
    }
}

impl std::str::FromStr for CovarianceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(CovarianceMode::Full),
            "diag" | "diagonal" => Ok(CovarianceMode::Diagonal),
            other => Err(format!("unknown covariance mode `{other}` (expected full or diag)")),
        }
    }
}

/// Weighted mean and `1/Σw`-normalized weighted covariance.
pub fn weighted_moments(
    samples: &[Vector],
    log_w: &[f64],
    mode: CovarianceMode,
) -> Result<(Vector, Matrix)> {
    let w = normalize_log_weights(log_w)?;
    let d = samples.first().map_or(0, |s| s.len());
    let mut mean = Vector::zeros(d);
    for (theta, wi) in samples.iter().zip(&w) {
        if *wi > 0.0 {
            mean.axpy(*wi, theta, 1.0);
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for (theta, wi) in samples.iter().zip(&w) {
        if *wi > 0.0 {
            let c = theta - &mean;
            cov.ger(*wi, &c, &c, 1.0);
        }
    }
    if mode == CovarianceMode::Diagonal {
        cov = Matrix::from_diagonal(&cov.diagonal());
    }
    Ok((mean, cov))
}

/// Moments of every stored sample under its current mixture weight.
pub fn moment_match(store: &WeightedSampleStore, mode: CovarianceMode) -> Result<(Vector, Matrix)> {
    weighted_moments(store.samples(), &store.log_weights(), mode)
}

/// Factors a moment-matched covariance. A failed factorization is retried
/// once with a ridge of `1e-8·trace/d`; after that the previous proposal is
/// kept. The flag reports whether the fallback was taken.
pub fn proposal_from_moments(
    mean: Vector,
    cov: &Matrix,
    previous: &ProposalParams,
) -> (ProposalParams, bool) {
    if mean.iter().all(|m| m.is_finite()) && cov.iter().all(|c| c.is_finite()) {
        if let Ok(chol) = CholeskyFactor::factor(cov) {
            return (ProposalParams { mean, chol_cov: chol }, false);
        }
        let d = cov.nrows() as f64;
        let ridge = 1e-8 * cov.trace() / d;
        if ridge > 0.0 {
            let mut ridged = cov.clone();
            for i in 0..cov.nrows() {
                ridged[(i, i)] += ridge;
            }
            if let Ok(chol) = CholeskyFactor::factor(&ridged) {
                return (ProposalParams { mean, chol_cov: chol }, false);
            }
        }
    }
    (previous.clone(), true)
}

/// Shrinks the weighted moments of one iteration towards a prior proposal:
/// `(n_eff·m_w + s·m_prior)/(n_eff + s)` for both mean and covariance, with
/// `n_eff` the effective sample size of the iteration's weights.
///
/// With all weights zero the prior is returned unchanged.
pub fn mamis_p_update(
    prior: &ProposalParams,
    prior_strength: f64,
    samples: &[Vector],
    log_w: &[f64],
    mode: CovarianceMode,
) -> Result<ProposalParams> {
    if !(prior_strength >= 0.0) {
        return Err(Error::InvalidArgument("prior strength must be non-negative".into()));
    }
    let w = match normalize_log_weights(log_w) {
        Ok(w) => w,
        Err(Error::ZeroTotalWeight) => return Ok(prior.clone()),
        Err(e) => return Err(e),
    };
    if prior_strength.is_infinite() {
        return Ok(prior.clone());
    }
    let n_eff = effective_sample_size(&w)?;
    let (m_w, c_w) = weighted_moments(samples, log_w, mode)?;
    let total = n_eff + prior_strength;
    let a = n_eff / total;
    let b = prior_strength / total;
    let mean = &m_w * a + &prior.mean * b;
    let cov = c_w * a + prior.cov() * b;
    let (gamma, _) = proposal_from_moments(mean, &cov, prior);
    Ok(gamma)
}
