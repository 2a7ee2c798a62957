use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    /// One shared length-scale.
    Rbf,
    /// One length-scale per input dimension.
    Ard,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Ard => "ard",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelFamily::Rbf),
            "ard" => Ok(KernelFamily::Ard),
            other => Err(format!("unknown kernel `{other}` (expected rbf or ard)")),
        }
    }
}

/// Squared-exponential covariance `σ exp(-Σ_r (x_r - x'_r)² / τ_r²)`.
///
/// Parameters are read from the front of a log-space vector:
/// `ln σ` followed by one `ln τ` (RBF) or `d` of them (ARD). For regression
/// the noise variance `ln λ` comes last.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub input_dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, input_dim: usize) -> Self {
        KernelSpec { family, input_dim }
    }

    pub fn rbf(input_dim: usize) -> Self {
        Self::new(KernelFamily::Rbf, input_dim)
    }

    pub fn ard(input_dim: usize) -> Self {
        Self::new(KernelFamily::Ard, input_dim)
    }

    pub fn n_length_scales(&self) -> usize {
        match self.family {
            KernelFamily::Rbf => 1,
            KernelFamily::Ard => self.input_dim,
        }
    }

    /// Number of kernel parameters (`σ` plus length-scales).
    pub fn n_kernel_params(&self) -> usize {
        1 + self.n_length_scales()
    }

    /// Kernel value for inputs `xi`, `xj` under log-space parameters `theta`.
    pub fn eval(&self, theta: &[f64], xi: &[f64], xj: &[f64]) -> Result<f64> {
        if xi.len() != self.input_dim || xj.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: if xi.len() != self.input_dim { xi.len() } else { xj.len() },
            });
        }
        if theta.len() < self.n_kernel_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_kernel_params(),
                found: theta.len(),
            });
        }
        let scales = InverseSquaredScales::new(self, theta);
        let r2 = scales.weighted_sq_dist(xi.iter().copied(), xj.iter().copied());
        Ok(theta[0].exp() * (-r2).exp())
    }
}

/// `1/τ_r²` for each input dimension.
pub(crate) struct InverseSquaredScales(pub(crate) Vec<f64>);

impl InverseSquaredScales {
    pub(crate) fn new(spec: &KernelSpec, theta: &[f64]) -> Self {
        let inv = |log_tau: f64| (-2.0 * log_tau).exp();
        match spec.family {
            KernelFamily::Rbf => InverseSquaredScales(vec![inv(theta[1]); spec.input_dim]),
            KernelFamily::Ard => {
                InverseSquaredScales(theta[1..1 + spec.input_dim].iter().map(|&t| inv(t)).collect())
            }
        }
    }

    pub(crate) fn weighted_sq_dist(
        &self,
        a: impl Iterator<Item = f64>,
        b: impl Iterator<Item = f64>,
    ) -> f64 {
        a.zip(b)
            .zip(&self.0)
            .map(|((u, v), w)| (u - v) * (u - v) * w)
            .sum()
    }
}

/// Assembles `K`, or `C = K + λI` when `add_noise` (λ is the last entry of
/// `theta`). Assembly is quadratic in `n` and is not charged.
pub fn covariance_matrix(
    spec: &KernelSpec,
    theta: &Vector,
    x: &Matrix,
    add_noise: bool,
) -> Result<Matrix> {
    if x.ncols() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            found: x.ncols(),
        });
    }
    let expected = spec.n_kernel_params() + usize::from(add_noise);
    if theta.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: theta.len(),
        });
    }
    let n = x.nrows();
    let sigma = theta[0].exp();
    let scales = InverseSquaredScales::new(spec, theta.as_slice());
    let mut k = Matrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = sigma;
        for i in j + 1..n {
            let r2 = scales.weighted_sq_dist(x.row(i).iter().copied(), x.row(j).iter().copied());
            let v = sigma * (-r2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    if add_noise {
        let noise = theta[theta.len() - 1].exp();
        for i in 0..n {
            k[(i, i)] += noise;
        }
    }
    Ok(k)
}
