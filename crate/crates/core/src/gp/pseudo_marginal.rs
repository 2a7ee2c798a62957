use super::probit::probit_log_likelihood;
use super::{Dataset, GaussianApprox};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, mvn_log_density, mvn_sample, CholeskyFactor, SimRng, Vector};

/// Log of the importance-sampling estimate
/// `(1/N) Σ p(y | fᵢ) p(fᵢ | θ) / q(fᵢ)` with `fᵢ ~ q = N(mean, L Lᵀ)` and a
/// zero-mean latent prior with factor `prior_chol`.
///
/// The estimate is unbiased in linear space for any valid `q`.
pub fn importance_log_marginal(
    log_likelihood: impl Fn(&Vector) -> f64,
    prior_chol: &CholeskyFactor,
    mean: &Vector,
    chol_cov: &CholeskyFactor,
    n_imp: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    if n_imp == 0 {
        return Err(Error::InvalidArgument("n_imp must be at least 1".into()));
    }
    let zero = Vector::zeros(mean.len());
    let mut log_w = Vec::with_capacity(n_imp);
    for _ in 0..n_imp {
        let f = mvn_sample(mean, chol_cov, rng);
        let lw = log_likelihood(&f) + mvn_log_density(&f, &zero, prior_chol)?
            - mvn_log_density(&f, mean, chol_cov)?;
        log_w.push(if lw.is_nan() { f64::NEG_INFINITY } else { lw });
    }
    let total = log_sum_exp(&log_w);
    if total == f64::NEG_INFINITY {
        return Err(Error::AllWeightsDegenerate);
    }
    Ok(total - (n_imp as f64).ln())
}

/// Unbiased estimate of `p(y | θ)` for probit classification, in log space,
/// using a Gaussian latent approximation built at the same `θ` as the
/// importance density. Performs no cubic operations.
pub fn pseudo_marginal_estimate(
    data: &Dataset,
    approx: &GaussianApprox,
    n_imp: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    if approx.mean.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: approx.mean.len(),
        });
    }
    let y = &data.y;
    importance_log_marginal(
        |f| y.iter().zip(f.iter()).map(|(&yi, &fi)| probit_log_likelihood(yi, fi)).sum(),
        &approx.prior_chol,
        &approx.mean,
        &approx.chol_cov,
        n_imp,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{ep_approx, laplace_approx, ApproxSettings, KernelSpec, Task};
    use crate::linalg::{stream_rng, Matrix, OpCounter};

    #[test]
    fn unit_likelihood_with_prior_proposal_is_exact() {
        let prior = CholeskyFactor::factor(&Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]))
            .unwrap();
        let mean = Vector::zeros(2);
        let mut rng = stream_rng(1, 0);
        for n_imp in [1, 7, 64] {
            let v = importance_log_marginal(|_| 0.0, &prior, &mean, &prior, n_imp, &mut rng).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn degenerate_weights_error() {
        let prior = CholeskyFactor::identity(1);
        let mean = Vector::zeros(1);
        let mut rng = stream_rng(1, 0);
        let r = importance_log_marginal(|_| f64::NEG_INFINITY, &prior, &mean, &prior, 4, &mut rng);
        assert!(matches!(r, Err(Error::AllWeightsDegenerate)));
    }

    #[test]
    fn more_importance_samples_reduce_variance() {
        let x = Matrix::from_column_slice(3, 1, &[-0.5, 0.2, 1.0]);
        let data = Dataset::new(x, Vector::from_vec(vec![1.0, -1.0, 1.0]), Task::Classification)
            .unwrap();
        let theta = Vector::from_vec(vec![0.5, 0.0]);
        let approx = laplace_approx(
            &KernelSpec::rbf(1),
            &theta,
            &data,
            &OpCounter::new(),
            ApproxSettings::laplace_default(),
        )
        .unwrap();
        let variance = |n_imp: usize| {
            let mut rng = stream_rng(77, n_imp as u64);
            let draws: Vec<f64> = (0..1000)
                .map(|_| pseudo_marginal_estimate(&data, &approx, n_imp, &mut rng).unwrap().exp())
                .collect();
            let m = draws.iter().sum::<f64>() / draws.len() as f64;
            draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64
        };
        assert!(variance(64) < variance(1));
    }

    #[test]
    fn one_point_mean_is_half() {
        let data = Dataset::new(
            Matrix::from_element(1, 1, 0.0),
            Vector::from_element(1, 1.0),
            Task::Classification,
        )
        .unwrap();
        let theta = Vector::from_vec(vec![0.0, 0.0]);
        let approx = ep_approx(
            &KernelSpec::rbf(1),
            &theta,
            &data,
            &OpCounter::new(),
            ApproxSettings::ep_default(),
        )
        .unwrap();
        let mut rng = stream_rng(5, 0);
        let reps = 20_000;
        let draws: Vec<f64> = (0..reps)
            .map(|_| pseudo_marginal_estimate(&data, &approx, 64, &mut rng).unwrap().exp())
            .collect();
        let m = draws.iter().sum::<f64>() / reps as f64;
        let sd = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((m - 0.5).abs() <= 3.0 * sd / (reps as f64).sqrt() + 1e-12);
    }
}
