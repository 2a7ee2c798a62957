use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{mvn_sample, CholeskyFactor, OpCounter, SimRng, Vector};
use crate::target::{GradLogDensity, LogDensity};

/// Current point of a chain with its cached log target. For a noisy target
/// the cached value is the estimate drawn when the point was accepted and is
/// never refreshed while the chain stays there.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub theta: Vector,
    pub log_target: f64,
    pub grad: Option<Vector>,
}

impl ChainState {
    /// Evaluates the target once at `theta`.
    pub fn new<T: LogDensity + ?Sized>(
        target: &T,
        theta: Vector,
        rng: &mut SimRng,
        counter: &OpCounter,
    ) -> Result<Self> {
        let log_target = sanitize(target.log_density(&theta, rng, counter)?);
        Ok(ChainState {
            theta,
            log_target,
            grad: None,
        })
    }

    /// Evaluates value and gradient once at `theta`.
    pub fn with_grad<T: GradLogDensity + ?Sized>(
        target: &T,
        theta: Vector,
        counter: &OpCounter,
    ) -> Result<Self> {
        let (v, g) = target.log_density_and_grad(&theta, counter)?;
        Ok(ChainState {
            theta,
            log_target: sanitize(v),
            grad: Some(g),
        })
    }
}

pub(crate) fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// One random-walk Metropolis step with increment `N(0, L Lᵀ)`. Exactly one
/// target evaluation. With a noisy target this is pseudo-marginal MH.
pub fn mh_step<T: LogDensity + ?Sized>(
    state: &ChainState,
    step_chol: &CholeskyFactor,
    target: &T,
    rng: &mut SimRng,
    counter: &OpCounter,
) -> Result<(ChainState, bool)> {
    if step_chol.order() != state.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: state.theta.len(),
            found: step_chol.order(),
        });
    }
    let proposal = mvn_sample(&state.theta, step_chol, rng);
    let log_f = sanitize(target.log_density(&proposal, rng, counter)?);
    let u: f64 = rng.random();
    if u.ln() < log_f - state.log_target {
        Ok((
            ChainState {
                theta: proposal,
                log_target: log_f,
                grad: None,
            },
            true,
        ))
    } else {
        Ok((state.clone(), false))
    }
}

/// Pilot-run tuning of a scale by stochastic approximation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuningSettings {
    pub target_rate: f64,
    pub tol: f64,
    pub batch_size: usize,
    pub max_batches: usize,
    pub gain: f64,
}

impl TuningSettings {
    pub fn new(target_rate: f64) -> Self {
        TuningSettings {
            target_rate,
            tol: 0.05,
            batch_size: 200,
            max_batches: 20,
            gain: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuningOutcome {
    pub scale: f64,
    pub batches: usize,
    pub last_rate: f64,
    pub ops: u64,
}

/// Runs batches of `batch_size` steps through `run_batch(scale, steps)`,
/// which returns the batch acceptance rate, and updates
/// `scale ← scale·exp(g·(rate - target))` until two consecutive batches
/// land within `tol` of the target. The step `g` starts at `gain` and is
/// divided by one plus the number of sign changes of `rate - target` so far
/// (Kesten's rule), which damps oscillation where the rate is steep in the
/// scale. The returned scale is the one used for the last batch.
pub fn tune_scale(
    mut run_batch: impl FnMut(f64, usize) -> Result<f64>,
    initial_scale: f64,
    settings: TuningSettings,
    counter: &OpCounter,
) -> Result<TuningOutcome> {
    if !(settings.target_rate > 0.0 && settings.target_rate < 1.0) {
        return Err(Error::InvalidArgument("target acceptance rate must lie in (0, 1)".into()));
    }
    if !(initial_scale > 0.0) {
        return Err(Error::InvalidArgument("initial scale must be positive".into()));
    }
    let start = counter.get();
    let mut scale = initial_scale;
    let mut hits = 0;
    let mut rate = f64::NAN;
    let mut sign_changes = 0u32;
    let mut last_error = 0.0f64;
    for batch in 1..=settings.max_batches {
        rate = run_batch(scale, settings.batch_size)?;
        let error = rate - settings.target_rate;
        if error * last_error < 0.0 {
            sign_changes += 1;
        }
        last_error = error;
        if error.abs() <= settings.tol {
            hits += 1;
            if hits == 2 {
                return Ok(TuningOutcome {
                    scale,
                    batches: batch,
                    last_rate: rate,
                    ops: counter.get() - start,
                });
            }
        } else {
            hits = 0;
        }
        scale *= (settings.gain / (1.0 + sign_changes as f64) * error).exp();
    }
    Err(Error::TuningFailed {
        batches: settings.max_batches,
        rate,
        target: settings.target_rate,
    })
}

/// Tunes the random-walk covariance `α·Σ` for MH and returns `α` together
/// with the chain state reached during the pilot runs.
pub fn tune_mh<T: LogDensity + ?Sized>(
    state: ChainState,
    base_chol: &CholeskyFactor,
    initial_scale: f64,
    settings: TuningSettings,
    target: &T,
    rng: &mut SimRng,
    counter: &OpCounter,
) -> Result<(TuningOutcome, ChainState)> {
    let mut current = state;
    let outcome = tune_scale(
        |alpha, steps| {
            let chol = base_chol.scaled(alpha);
            let mut accepted = 0;
            for _ in 0..steps {
                let (next, acc) = mh_step(&current, &chol, target, rng, counter)?;
                current = next;
                accepted += acc as usize;
            }
            Ok(accepted as f64 / steps as f64)
        },
        initial_scale,
        settings,
        counter,
    )?;
    Ok((outcome, current))
}
