use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::mh::{sanitize, ChainState};
use crate::error::{Error, Result};
use crate::linalg::{OpCounter, SimRng};
use crate::target::LogDensity;

pub const MAX_SHRINK: usize = 1000;

/// One sweep of component-wise slice sampling in ascending index order,
/// with stepping out by `w` and shrinkage towards the current point.
pub fn slice_step<T: LogDensity + ?Sized>(
    state: &ChainState,
    w: f64,
    target: &T,
    rng: &mut SimRng,
    counter: &OpCounter,
) -> Result<ChainState> {
    if target.is_noisy() {
        return Err(Error::InvalidArgument("slice sampling needs an exact target".into()));
    }
    if !(w > 0.0) {
        return Err(Error::InvalidArgument("slice width must be positive".into()));
    }
    let mut theta = state.theta.clone();
    let mut log_f = state.log_target;
    for i in 0..theta.len() {
        let e: f64 = Exp1.sample(rng);
        let level = log_f - e;
        let x0 = theta[i];
        let eval = |x: f64, rng: &mut SimRng| -> Result<f64> {
            let mut t = theta.clone();
            t[i] = x;
            Ok(sanitize(target.log_density(&t, rng, counter)?))
        };

        let u: f64 = rng.random();
        let mut left = x0 - w * u;
        let mut right = left + w;
        while eval(left, rng)? > level {
            left -= w;
        }
        while eval(right, rng)? > level {
            right += w;
        }

        let mut accepted = None;
        for _ in 0..MAX_SHRINK {
            let x = left + rng.random::<f64>() * (right - left);
            if x == x0 {
                // the current point always lies in the slice
                accepted = Some((x0, log_f));
                break;
            }
            let lf = eval(x, rng)?;
            if lf > level {
                accepted = Some((x, lf));
                break;
            }
            if x < x0 {
                left = x;
            } else {
                right = x;
            }
        }
        let (x, lf) = accepted.ok_or(Error::ShrinkageExhausted(MAX_SHRINK))?;
        theta[i] = x;
        log_f = lf;
    }
    Ok(ChainState {
        theta,
        log_target: log_f,
        grad: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{stream_rng, Matrix, Vector};
    use crate::target::{FnTarget, GaussianTarget};

    #[test]
    fn uniform_support_is_sampled_uniformly() {
        let target = FnTarget::new(1, |t: &Vector| {
            if (0.0..=1.0).contains(&t[0]) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        });
        let mut rng = stream_rng(1, 0);
        let c = OpCounter::new();
        let mut s = ChainState::new(&target, Vector::from_element(1, 0.5), &mut rng, &c).unwrap();
        let n = 20_000;
        let mut below = 0;
        for _ in 0..n {
            s = slice_step(&s, 5.0, &target, &mut rng, &c).unwrap();
            assert!((0.0..=1.0).contains(&s.theta[0]));
            below += (s.theta[0] < 0.25) as usize;
        }
        let frac = below as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.02, "{frac}");
    }

    #[test]
    fn standard_normal_variance() {
        let target = GaussianTarget::new(Vector::zeros(1), &Matrix::identity(1, 1)).unwrap();
        let mut rng = stream_rng(2, 0);
        let c = OpCounter::new();
        let mut s = ChainState::new(&target, Vector::zeros(1), &mut rng, &c).unwrap();
        let n = 100_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            s = slice_step(&s, 1.5, &target, &mut rng, &c).unwrap();
            sum2 += s.theta[0] * s.theta[0];
        }
        let var = sum2 / n as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn point_support_returns_current() {
        let target = FnTarget::new(1, |t: &Vector| if t[0] == 1.0 { 0.0 } else { f64::NEG_INFINITY });
        let mut rng = stream_rng(3, 0);
        let c = OpCounter::new();
        let s = ChainState::new(&target, Vector::from_element(1, 1.0), &mut rng, &c).unwrap();
        assert_eq!(slice_step(&s, 1.5, &target, &mut rng, &c).unwrap().theta, s.theta);
    }

    #[test]
    fn each_evaluation_is_charged() {
        let target = GaussianTarget::new(Vector::zeros(2), &Matrix::identity(2, 2))
            .unwrap()
            .with_cost(1);
        let mut rng = stream_rng(4, 0);
        let c = OpCounter::new();
        let s = ChainState::new(&target, Vector::zeros(2), &mut rng, &c).unwrap();
        slice_step(&s, 1.5, &target, &mut rng, &c).unwrap();
        // two stepping-out evaluations and at least one shrinkage draw per component
        assert!(c.get() >= 1 + 2 * 3);
    }
}
