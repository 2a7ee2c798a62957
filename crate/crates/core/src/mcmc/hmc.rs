use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mh::{sanitize, ChainState};
use crate::error::{Error, Result};
use crate::linalg::{CholeskyFactor, Matrix, OpCounter, SimRng, Vector};
use crate::target::GradLogDensity;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassVariant {
    Identity,
    /// Inverse of the diagonal of the approximate posterior covariance.
    DiagInverseCov,
    /// Inverse of the approximate posterior covariance.
    InverseCov,
}

impl MassVariant {
    pub fn name(self) -> &'static str {
        match self {
            MassVariant::Identity => "identity",
            MassVariant::DiagInverseCov => "diag",
            MassVariant::InverseCov => "full",
        }
    }
}

impl std::str::FromStr for MassVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "i" => Ok(MassVariant::Identity),
            "diag" | "diagonal" => Ok(MassVariant::DiagInverseCov),
            "full" | "h" => Ok(MassVariant::InverseCov),
            other => Err(format!("unknown mass matrix `{other}` (expected identity, diag or full)")),
        }
    }
}

/// Momentum covariance `M` with its factor and inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct MassMatrix {
    chol: CholeskyFactor,
    inverse: Matrix,
}

impl MassMatrix {
    pub fn identity(d: usize) -> Self {
        MassMatrix {
            chol: CholeskyFactor::identity(d),
            inverse: Matrix::identity(d, d),
        }
    }

    /// `M = α·B` with `B` chosen by `variant` from the approximate
    /// posterior covariance.
    pub fn from_variant(variant: MassVariant, approx_cov: &Matrix, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument("mass scale must be positive".into()));
        }
        let d = approx_cov.nrows();
        let inv_m = match variant {
            MassVariant::Identity => Matrix::identity(d, d),
            MassVariant::DiagInverseCov => Matrix::from_diagonal(&approx_cov.diagonal()),
            MassVariant::InverseCov => approx_cov.clone(),
        } / alpha;
        let inv_chol = CholeskyFactor::factor(&inv_m)?;
        let m = inv_chol.inverse_uncounted();
        Ok(MassMatrix {
            chol: CholeskyFactor::factor(&m)?,
            inverse: inv_m,
        })
    }

    pub fn dim(&self) -> usize {
        self.inverse.nrows()
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    pub fn sample_momentum(&self, rng: &mut SimRng) -> Vector {
        let z = Vector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        self.chol.lower() * z
    }

    pub fn kinetic(&self, p: &Vector) -> f64 {
        0.5 * p.dot(&(&self.inverse * p))
    }

    pub fn velocity(&self, p: &Vector) -> Vector {
        &self.inverse * p
    }
}

/// Phase-space point carried through the integrator.
#[derive(Clone, Debug)]
pub struct PhasePoint {
    pub theta: Vector,
    pub momentum: Vector,
    pub log_target: f64,
    pub grad: Vector,
}

impl PhasePoint {
    pub fn log_joint(&self, mass: &MassMatrix) -> f64 {
        self.log_target - mass.kinetic(&self.momentum)
    }
}

/// One leapfrog step of size `eps`; one gradient evaluation.
pub fn leapfrog<T: GradLogDensity + ?Sized>(
    point: &PhasePoint,
    eps: f64,
    mass: &MassMatrix,
    target: &T,
    counter: &OpCounter,
) -> Result<PhasePoint> {
    let half = &point.momentum + &point.grad * (0.5 * eps);
    let theta = &point.theta + mass.velocity(&half) * eps;
    let (v, g) = target.log_density_and_grad(&theta, counter)?;
    let log_target = sanitize(v);
    let g = if g.iter().all(|x| x.is_finite()) {
        g
    } else {
        Vector::zeros(theta.len())
    };
    let momentum = half + &g * (0.5 * eps);
    Ok(PhasePoint {
        theta,
        momentum,
        log_target,
        grad: g,
    })
}

pub(crate) fn ensure_grad<T: GradLogDensity + ?Sized>(
    state: &ChainState,
    target: &T,
    counter: &OpCounter,
) -> Result<ChainState> {
    match state.grad {
        Some(_) => Ok(state.clone()),
        None => ChainState::with_grad(target, state.theta.clone(), counter),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HmcSettings {
    pub step_size: f64,
    pub max_leapfrog: usize,
    /// Draw the number of leapfrog steps uniformly from `1..=max_leapfrog`.
    pub jitter: bool,
}

/// One HMC transition. A trajectory that reaches a non-finite log target is
/// rejected.
pub fn hmc_step<T: GradLogDensity + ?Sized>(
    state: &ChainState,
    mass: &MassMatrix,
    settings: HmcSettings,
    target: &T,
    rng: &mut SimRng,
    counter: &OpCounter,
) -> Result<(ChainState, bool)> {
    if settings.max_leapfrog == 0 || !(settings.step_size > 0.0) {
        return Err(Error::InvalidArgument("HMC needs a positive step size and step count".into()));
    }
    let state = ensure_grad(state, target, counter)?;
    let steps = if settings.jitter {
        rng.random_range(1..=settings.max_leapfrog)
    } else {
        settings.max_leapfrog
    };
    let start = PhasePoint {
        theta: state.theta.clone(),
        momentum: mass.sample_momentum(rng),
        log_target: state.log_target,
        grad: state.grad.clone().expect("gradient ensured"),
    };
    let mut point = start.clone();
    for _ in 0..steps {
        point = leapfrog(&point, settings.step_size, mass, target, counter)?;
        if !point.log_target.is_finite() {
            return Ok((state, false));
        }
    }
    let log_ratio = point.log_joint(mass) - start.log_joint(mass);
    let u: f64 = rng.random();
    if log_ratio.is_finite() && u.ln() < log_ratio {
        Ok((
            ChainState {
                theta: point.theta,
                log_target: point.log_target,
                grad: Some(point.grad),
            },
            true,
        ))
    } else {
        Ok((state, false))
    }
}
