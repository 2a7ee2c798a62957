use super::kernel::{covariance_matrix, KernelSpec};
use super::probit::{probit_derivatives, probit_log_likelihood};
use super::{ApproxSettings, Dataset, GaussianApprox, Task};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, CholeskyFactor, Matrix, OpCounter, Vector};

pub(crate) fn check_classification(spec: &KernelSpec, theta: &Vector, data: &Dataset) -> Result<()> {
    if data.task != Task::Classification {
        return Err(Error::InvalidArgument(
            "latent approximations need a classification dataset".into(),
        ));
    }
    if theta.len() != spec.n_kernel_params() {
        return Err(Error::DimensionMismatch {
            expected: spec.n_kernel_params(),
            found: theta.len(),
        });
    }
    Ok(())
}

/// Covariance `K - VᵀV` of the latent Gaussian given `V = L⁻¹ S K`, where
/// `S` is a diagonal scaling and `L Lᵀ = I + S K S`. Charged as two cubic
/// operations.
pub(crate) fn posterior_covariance(
    k: &Matrix,
    sqrt_prec: &Vector,
    b_chol: &CholeskyFactor,
    counter: &OpCounter,
) -> Matrix {
    counter.charge(2);
    let mut sk = k.clone();
    for (i, s) in sqrt_prec.iter().enumerate() {
        sk.row_mut(i).scale_mut(*s);
    }
    let v = b_chol
        .lower()
        .solve_lower_triangular(&sk)
        .expect("factor has a positive diagonal");
    let sigma = k - v.transpose() * v;
    (&sigma + sigma.transpose()) * 0.5
}

pub(crate) fn newton_system(k: &Matrix, sqrt_w: &Vector) -> Matrix {
    let n = k.nrows();
    Matrix::from_fn(n, n, |i, j| {
        let v = sqrt_w[i] * k[(i, j)] * sqrt_w[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    })
}

fn objective(a: &Vector, f: &Vector, y: &Vector) -> f64 {
    -0.5 * a.dot(f) + y.iter().zip(f.iter()).map(|(&yi, &fi)| probit_log_likelihood(yi, fi)).sum::<f64>()
}

/// Laplace approximation to `p(f | y, θ)` for probit classification.
///
/// Cubic operations: two factorizations (`K` and the final covariance), one
/// per Newton factorization, and two to form the covariance.
pub fn laplace_approx(
    spec: &KernelSpec,
    theta: &Vector,
    data: &Dataset,
    counter: &OpCounter,
    settings: ApproxSettings,
) -> Result<GaussianApprox> {
    let approx = laplace_approx_unchecked(spec, theta, data, counter, settings)?;
    if !approx.converged {
        return Err(Error::NoConvergence {
            what: "Laplace mode search",
            iterations: settings.max_iter,
        });
    }
    Ok(approx)
}

/// As [`laplace_approx`], but returns the last iterate when the cap is hit.
pub fn laplace_approx_unchecked(
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

    let mut f = Vector::zeros(n);
    let mut a = Vector::zeros(n);
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    let (b_chol, sqrt_w) = loop {
        let mut grad = Vector::zeros(n);
        let mut w = Vector::zeros(n);
        for i in 0..n {
            let (g, wi) = probit_derivatives(y[i], f[i]);
            grad[i] = g;
            w[i] = wi;
        }
        let sqrt_w = w.map(f64::sqrt);
        let (b_chol, _) = cholesky_with_jitter(&newton_system(&k, &sqrt_w), counter)?;
        iterations += 1;
        if change < settings.tol {
            converged = true;
            break (b_chol, sqrt_w);
        }
        if iterations > settings.max_iter {
            break (b_chol, sqrt_w);
        }

        let b = w.component_mul(&f) + grad;
        let t = b_chol.solve(&sqrt_w.component_mul(&(&k * &b)))?;
        let a_newton = &b - sqrt_w.component_mul(&t);

        // step halving keeps the objective from decreasing
        let current = objective(&a, &f, y);
        let mut step = 1.0;
        let (mut a_next, mut f_next);
        loop {
            a_next = &a + (&a_newton - &a) * step;
            f_next = &k * &a_next;
            if objective(&a_next, &f_next, y) >= current - 1e-12 * current.abs() || step < 1e-3 {
                break;
            }
            step *= 0.5;
        }
        change = (&f_next - &f).amax();
        f = f_next;
        a = a_next;
    };

    let log_evidence = objective(&a, &f, y)
        - b_chol.lower().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let sigma = posterior_covariance(&k, &sqrt_w, &b_chol, counter);
    let (chol_cov, _) = cholesky_with_jitter(&sigma, counter)?;
    Ok(GaussianApprox {
        mean: f,
        chol_cov,
        log_evidence,
        prior_chol,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::probit::inverse_mills_ratio;

    fn single(y: f64) -> Dataset {
        Dataset::new(Matrix::from_element(1, 1, 0.0), Vector::from_element(1, y), Task::Classification)
            .unwrap()
    }

    #[test]
    fn prior_dominated_mode_is_near_zero() {
        let theta = Vector::from_vec(vec![(1e-10f64).ln(), 0.0]);
        let approx = laplace_approx(
            &KernelSpec::rbf(1),
            &theta,
            &single(1.0),
            &OpCounter::new(),
            ApproxSettings::laplace_default(),
        )
        .unwrap();
        assert!(approx.mean[0].abs() < 1e-4);
    }

    #[test]
    fn one_point_matches_scalar_newton() {
        let theta = Vector::from_vec(vec![0.0, 0.0]);
        let counter = OpCounter::new();
        let approx = laplace_approx(
            &KernelSpec::rbf(1),
            &theta,
            &single(1.0),
            &counter,
            ApproxSettings::laplace_default(),
        )
        .unwrap();
        assert_eq!(counter.get() as usize, 2 + approx.iterations + 2);

        // scalar oracle: solve r(f) = f, r the inverse Mills ratio
        let mut m = 0.0f64;
        for _ in 0..100 {
            let r = inverse_mills_ratio(m);
            let dr = -r * (r + m);
            m -= (r - m) / (dr - 1.0);
        }
        assert!((approx.mean[0] - m).abs() < 1e-6);

        let r = inverse_mills_ratio(m);
        let w = r * (r + m);
        let precision = 1.0 + w;
        // ∫ exp(Ψ(f̂) - ½A(f - f̂)²) df with Ψ = ln Φ(f) + ln N(f | 0, 1)
        let psi = probit_log_likelihood(1.0, m) - 0.5 * m * m - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let expected = psi + 0.5 * (2.0 * std::f64::consts::PI / precision).ln();
        assert!((approx.log_evidence - expected).abs() < 1e-6);
        let var = approx.chol_cov.reconstruct()[(0, 0)];
        assert!((var - 1.0 / precision).abs() < 1e-8);
    }

    #[test]
    fn caps_iterations() {
        let theta = Vector::from_vec(vec![2.0, 0.0]);
        let settings = ApproxSettings { tol: 0.0, max_iter: 3 };
        let data = single(-1.0);
        let err = laplace_approx(&KernelSpec::rbf(1), &theta, &data, &OpCounter::new(), settings);
        assert!(matches!(err, Err(Error::NoConvergence { .. })));
        let counter = OpCounter::new();
        let approx =
            laplace_approx_unchecked(&KernelSpec::rbf(1), &theta, &data, &counter, settings).unwrap();
        assert!(!approx.converged);
        assert_eq!(counter.get() as usize, 2 + approx.iterations + 2);
    }
}
