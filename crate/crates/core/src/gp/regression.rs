use super::kernel::{covariance_matrix, InverseSquaredScales, KernelFamily, KernelSpec};
use super::{Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, Matrix, OpCounter, Vector};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn check_regression(spec: &KernelSpec, theta: &Vector, data: &Dataset) -> Result<()> {
    if data.task != Task::Regression {
        return Err(Error::InvalidArgument(
            "regression marginal likelihood needs a regression dataset".into(),
        ));
    }
    let expected = spec.n_kernel_params() + 1;
    if theta.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: theta.len(),
        });
    }
    Ok(())
}

/// `ln N(y | 0, K + λI)`, one Cholesky factorization.
pub fn log_marginal_regression(
    spec: &KernelSpec,
    theta: &Vector,
    data: &Dataset,
    counter: &OpCounter,
) -> Result<f64> {
    check_regression(spec, theta, data)?;
    let c = covariance_matrix(spec, theta, &data.x, true)?;
    let (chol, _) = cholesky_with_jitter(&c, counter)?;
    let z = chol.solve_triangular(&data.y, false)?;
    let n = data.len() as f64;
    Ok(-0.5 * chol.log_det() - 0.5 * z.norm_squared() - n * HALF_LN_2PI)
}

/// Value and gradient with respect to the log-space parameters.
///
/// Charged as three cubic operations: the factorization plus the explicit
/// inverse of `C`.
pub fn log_marginal_regression_with_grad(
    spec: &KernelSpec,
    theta: &Vector,
    data: &Dataset,
    counter: &OpCounter,
) -> Result<(f64, Vector)> {
    check_regression(spec, theta, data)?;
    let n = data.len();
    let kernel_theta = theta.rows(0, spec.n_kernel_params()).into_owned();
    let k = covariance_matrix(spec, &kernel_theta, &data.x, false)?;
    let noise = theta[theta.len() - 1].exp();
    let mut c = k.clone();
    for i in 0..n {
        c[(i, i)] += noise;
    }
    let (chol, _) = cholesky_with_jitter(&c, counter)?;
    let alpha = chol.solve(&data.y)?;
    let value = -0.5 * chol.log_det() - 0.5 * data.y.dot(&alpha) - n as f64 * HALF_LN_2PI;

    // W = α αᵀ - C⁻¹, and ∂/∂θⱼ = ½ Σ W ∘ ∂C/∂θⱼ
    let c_inv = chol.inverse(counter);
    let w: Matrix = &alpha * alpha.transpose() - c_inv;

    let scales = InverseSquaredScales::new(spec, theta.as_slice());
    let mut grad = Vector::zeros(theta.len());
    let mut ls_grad = vec![0.0; spec.n_length_scales()];
    let mut sigma_grad = 0.0;
    for j in 0..n {
        for i in 0..n {
            let wk = w[(i, j)] * k[(i, j)];
            sigma_grad += wk;
            if i == j {
                continue;
            }
            match spec.family {
                KernelFamily::Rbf => {
                    let r2 = scales.weighted_sq_dist(
                        data.x.row(i).iter().copied(),
                        data.x.row(j).iter().copied(),
                    );
                    ls_grad[0] += wk * 2.0 * r2;
                }
                KernelFamily::Ard => {
                    for (r, g) in ls_grad.iter_mut().enumerate() {
                        let d = data.x[(i, r)] - data.x[(j, r)];
                        *g += wk * 2.0 * d * d * scales.0[r];
                    }
                }
            }
        }
    }
    grad[0] = 0.5 * sigma_grad;
    for (r, g) in ls_grad.into_iter().enumerate() {
        grad[1 + r] = 0.5 * g;
    }
    grad[theta.len() - 1] = 0.5 * noise * w.trace();
    Ok((value, grad))
}
