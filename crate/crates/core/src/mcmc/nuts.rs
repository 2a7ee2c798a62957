use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::hmc::{ensure_grad, leapfrog, MassMatrix, PhasePoint};
use super::mh::ChainState;
use crate::error::{Error, Result};
use crate::linalg::{OpCounter, SimRng};
use crate::target::GradLogDensity;

/// Trajectories whose log joint falls this far below the slice level are
/// treated as divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;

pub const DEFAULT_MAX_DEPTH: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NutsStats {
    pub depth: usize,
    pub leapfrog_steps: usize,
    /// Mean Metropolis acceptance over every leaf of the final tree.
    pub accept_stat: f64,
    pub hit_max_depth: bool,
    pub diverged: bool,
}

struct Tree {
    minus: PhasePoint,
    plus: PhasePoint,
    proposal: PhasePoint,
    n_valid: usize,
    keep_going: bool,
    alpha_sum: f64,
    n_alpha: usize,
    diverged: bool,
}

fn no_u_turn(minus: &PhasePoint, plus: &PhasePoint, mass: &MassMatrix) -> bool {
    let span = &plus.theta - &minus.theta;
    span.dot(&mass.velocity(&minus.momentum)) >= 0.0 && span.dot(&mass.velocity(&plus.momentum)) >= 0.0
}

#[allow(clippy::too_many_arguments)]
fn build_tree<T: GradLogDensity + ?Sized>(
    point: &PhasePoint,
    log_slice: f64,
    direction: f64,
    depth: usize,
    eps: f64,
    joint0: f64,
    mass: &MassMatrix,
    target: &T,
    rng: &mut SimRng,
    counter: &OpCounter,
    steps: &mut usize,
) -> Result<Tree> {
    if depth == 0 {
        let next = leapfrog(point, direction * eps, mass, target, counter)?;
        *steps += 1;
        let joint = next.log_joint(mass);
        let joint = if joint.is_nan() { f64::NEG_INFINITY } else { joint };
        let n_valid = (log_slice <= joint) as usize;
        let keep_going = log_slice < joint + MAX_ENERGY_ERROR;
        let alpha = if joint.is_finite() { (joint - joint0).exp().min(1.0) } else { 0.0 };
        return Ok(Tree {
            minus: next.clone(),
            plus: next.clone(),
            proposal: next,
            n_valid,
            keep_going,
            alpha_sum: alpha,
            n_alpha: 1,
            diverged: !keep_going,
        });
    }
    let mut tree = build_tree(point, log_slice, direction, depth - 1, eps, joint0, mass, target, rng, counter, steps)?;
    if !tree.keep_going {
        return Ok(tree);
    }
    let edge = if direction < 0.0 { &tree.minus } else { &tree.plus };
    let other = build_tree(edge, log_slice, direction, depth - 1, eps, joint0, mass, target, rng, counter, steps)?;
    if direction < 0.0 {
        tree.minus = other.minus;
    } else {
        tree.plus = other.plus;
    }
    let total = tree.n_valid + other.n_valid;
    if total > 0 && rng.random::<f64>() * (total as f64) < other.n_valid as f64 {
        tree.proposal = other.proposal;
    }
    tree.alpha_sum += other.alpha_sum;
    tree.n_alpha += other.n_alpha;
    tree.keep_going = other.keep_going && no_u_turn(&tree.minus, &tree.plus, mass);
    tree.n_valid = total;
    tree.diverged |= other.diverged;
    Ok(tree)
}

/// One No-U-Turn transition with slice sampling, recursive doubling and a
/// U-turn criterion measured through the mass matrix.
pub fn nuts_step<T: GradLogDensity + ?Sized>(
    state: &ChainState,
    mass: &MassMatrix,
    eps: f64,
    max_depth: usize,
    target: &T,
    rng: &mut SimRng,
    counter: &OpCounter,
) -> Result<(ChainState, NutsStats)> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument("NUTS step size must be positive".into()));
    }
    let state = ensure_grad(state, target, counter)?;
    let start = PhasePoint {
        theta: state.theta.clone(),
        momentum: mass.sample_momentum(rng),
        log_target: state.log_target,
        grad: state.grad.clone().expect("gradient ensured"),
    };
    let joint0 = start.log_joint(mass);
    let e: f64 = Exp1.sample(rng);
    let log_slice = joint0 - e;

    let mut minus = start.clone();
    let mut plus = start.clone();
    let mut current = state;
    let mut n_valid = 1usize;
    let mut stats = NutsStats::default();
    let mut steps = 0;
    let mut alpha_sum = 0.0;
    let mut n_alpha = 0usize;
    loop {
        if stats.depth == max_depth {
            stats.hit_max_depth = true;
            break;
        }
        let direction = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let edge = if direction < 0.0 { &minus } else { &plus };
        let tree = build_tree(
            edge, log_slice, direction, stats.depth, eps, joint0, mass, target, rng, counter, &mut steps,
        )?;
        if direction < 0.0 {
            minus = tree.minus;
        } else {
            plus = tree.plus;
        }
        alpha_sum = tree.alpha_sum;
        n_alpha = tree.n_alpha;
        stats.diverged |= tree.diverged;
        if tree.keep_going && rng.random::<f64>() * (n_valid as f64) < tree.n_valid as f64 {
            current = ChainState {
                theta: tree.proposal.theta,
                log_target: tree.proposal.log_target,
                grad: Some(tree.proposal.grad),
            };
        }
        n_valid += tree.n_valid;
        stats.depth += 1;
        if !(tree.keep_going && no_u_turn(&minus, &plus, mass)) {
            break;
        }
    }
    stats.leapfrog_steps = steps;
    stats.accept_stat = if n_alpha > 0 { alpha_sum / n_alpha as f64 } else { 0.0 };
    Ok((current, stats))
}

/// Heuristic initial step size: doubles or halves `eps` until the one-step
/// acceptance ratio crosses one half.
pub fn find_reasonable_epsilon<T: GradLogDensity + ?Sized>(
    state: &ChainState,
    mass: &MassMatrix,
    initial: f64,
    target: &T,
    rng: &mut SimRng,
    counter: &OpCounter,
) -> Result<f64> {
    let state = ensure_grad(state, target, counter)?;
    let start = PhasePoint {
        theta: state.theta.clone(),
        momentum: mass.sample_momentum(rng),
        log_target: state.log_target,
        grad: state.grad.clone().expect("gradient ensured"),
    };
    let joint0 = start.log_joint(mass);
    let mut eps = initial;
    let log_ratio = |eps: f64| -> Result<f64> {
        let next = leapfrog(&start, eps, mass, target, counter)?;
        let j = next.log_joint(mass);
        Ok(if j.is_finite() { j - joint0 } else { f64::NEG_INFINITY })
    };
    let mut lr = log_ratio(eps)?;
    let a = if lr > 0.5f64.ln() { 1.0 } else { -1.0 };
    // bounded so a flat or broken target cannot loop forever
    for _ in 0..100 {
        if !(a * lr > -a * 2f64.ln()) {
            break;
        }
        eps *= 2f64.powf(a);
        lr = log_ratio(eps)?;
    }
    Ok(eps)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualAveragingParams {
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    pub target_accept: f64,
}

impl Default for DualAveragingParams {
    fn default() -> Self {
        DualAveragingParams {
            gamma: 0.05,
            t0: 30.0,
            kappa: 0.75,
            target_accept: 0.65,
        }
    }
}

impl DualAveragingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.t0 >= 0.0 && self.kappa > 0.5 && self.kappa <= 1.0) {
            return Err(Error::InvalidArgument(
                "dual averaging needs gamma > 0, t0 >= 0 and kappa in (0.5, 1]".into(),
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidArgument("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Step-size adaptation state.
#[derive(Clone, Debug)]
pub struct DualAveraging {
    params: DualAveragingParams,
    mu: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    m: usize,
}

impl DualAveraging {
    pub fn new(eps0: f64, params: DualAveragingParams) -> Result<Self> {
        params.validate()?;
        Ok(DualAveraging {
            params,
            mu: (10.0 * eps0).ln(),
            h_bar: 0.0,
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            m: 0,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn final_step_size(&self) -> f64 {
        self.log_eps_bar.exp()
    }

    /// Feeds one transition's acceptance statistic and returns the next step.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.m += 1;
        let m = self.m as f64;
        let p = &self.params;
        let w = 1.0 / (m + p.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (p.target_accept - accept_stat);
        self.log_eps = self.mu - m.sqrt() / p.gamma * self.h_bar;
        let eta = m.powf(-p.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        self.step_size()
    }
}

#[derive(Clone, Debug)]
pub struct NutsDaOutcome {
    pub state: ChainState,
    pub step_size: f64,
    /// Counter value when adaptation ended.
    pub eot_ops: u64,
    pub kept: usize,
    pub max_depth_hits: usize,
}

/// NUTS with dual-averaging step-size adaptation over `n_adapt` transitions,
/// then `n_keep` transitions at the frozen step. The observer sees every
/// kept transition with the step size used.
#[allow(clippy::too_many_arguments)]
pub fn nutsda_run<T: GradLogDensity + ?Sized>(
    state0: &ChainState,
    mass: &MassMatrix,
    da: DualAveragingParams,
    initial_step: f64,
    n_adapt: usize,
    n_keep: usize,
    max_depth: usize,
    target: &T,
    rng: &mut SimRng,
    counter: &OpCounter,
    mut observer: impl FnMut(&ChainState, &NutsStats, f64) -> ControlFlow<()>,
) -> Result<NutsDaOutcome> {
    let mut state = ensure_grad(state0, target, counter)?;
    let mut max_depth_hits = 0;
    let step = if n_adapt > 0 {
        let eps0 = find_reasonable_epsilon(&state, mass, initial_step, target, rng, counter)?;
        let mut adapt = DualAveraging::new(eps0, da)?;
        let mut eps = eps0;
        for _ in 0..n_adapt {
            let (next, stats) = nuts_step(&state, mass, eps, max_depth, target, rng, counter)?;
            max_depth_hits += stats.hit_max_depth as usize;
            state = next;
            eps = adapt.update(stats.accept_stat);
        }
        adapt.final_step_size()
    } else {
        initial_step
    };
    let eot_ops = counter.get();
    let mut kept = 0;
    for _ in 0..n_keep {
        let (next, stats) = nuts_step(&state, mass, step, max_depth, target, rng, counter)?;
        max_depth_hits += stats.hit_max_depth as usize;
        state = next;
        kept += 1;
        if observer(&state, &stats, step).is_break() {
            break;
        }
    }
    Ok(NutsDaOutcome {
        state,
        step_size: step,
        eot_ops,
        kept,
        max_depth_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{stream_rng, Matrix, Vector};
    use crate::target::{GaussianTarget, LogDensity};

    fn gaussian_2d() -> GaussianTarget {
        GaussianTarget::new(
            Vector::from_vec(vec![1.0, -0.5]),
            &Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]),
        )
        .unwrap()
    }

    #[test]
    fn recovers_gaussian_moments() {
        let target = gaussian_2d();
        let mass = MassMatrix::identity(2);
        let mut rng = stream_rng(31, 0);
        let c = OpCounter::new();
        let mut s = ChainState::with_grad(&target, target.mean.clone(), &c).unwrap();
        let n = 100_000;
        let mut sum = Vector::zeros(2);
        let mut outer = Matrix::zeros(2, 2);
        for _ in 0..n {
            s = nuts_step(&s, &mass, 0.4, DEFAULT_MAX_DEPTH, &target, &mut rng, &c).unwrap().0;
            sum += &s.theta;
            outer += &s.theta * s.theta.transpose();
        }
        let mean = sum / n as f64;
        let cov = outer / n as f64 - &mean * mean.transpose();
        assert!((&mean - &target.mean).amax() < 0.03, "{mean}");
        let truth = target.cov();
        for (a, b) in cov.iter().zip(truth.iter()) {
            assert!((a - b).abs() <= 0.05 * b.abs().max(0.5), "{cov}");
        }
    }

    #[test]
    fn one_dimensional_trees_stop_on_their_own() {
        let target = GaussianTarget::new(Vector::zeros(1), &Matrix::identity(1, 1)).unwrap();
        let mass = MassMatrix::identity(1);
        let mut rng = stream_rng(2, 0);
        let c = OpCounter::new();
        let mut s = ChainState::with_grad(&target, Vector::zeros(1), &c).unwrap();
        for _ in 0..2000 {
            let (n, stats) = nuts_step(&s, &mass, 0.1, DEFAULT_MAX_DEPTH, &target, &mut rng, &c).unwrap();
            assert!(!stats.hit_max_depth);
            s = n;
        }
    }

    #[test]
    fn unreachable_slice_keeps_current_state() {
        // a target that is -inf away from the start point leaves no valid leaf
        struct Spike;
        impl LogDensity for Spike {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, t: &Vector, _: &mut SimRng, _: &OpCounter) -> Result<f64> {
                Ok(if t[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY })
            }
        }
        impl GradLogDensity for Spike {
            fn log_density_and_grad(&self, t: &Vector, c: &OpCounter) -> Result<(f64, Vector)> {
                let mut rng = stream_rng(0, 0);
                Ok((self.log_density(t, &mut rng, c)?, Vector::zeros(1)))
            }
        }
        let mut rng = stream_rng(3, 0);
        let c = OpCounter::new();
        let s = ChainState::with_grad(&Spike, Vector::zeros(1), &c).unwrap();
        let (n, stats) = nuts_step(&s, &MassMatrix::identity(1), 0.1, 10, &Spike, &mut rng, &c).unwrap();
        assert_eq!(n.theta, s.theta);
        assert_eq!(stats.depth, 1);
    }

    #[test]
    fn dual_averaging_hits_target_acceptance() {
        let target = gaussian_2d().with_cost(1);
        let mass = MassMatrix::identity(2);
        let mut rng = stream_rng(4, 0);
        let c = OpCounter::new();
        let s = ChainState::with_grad(&target, Vector::zeros(2), &c).unwrap();
        let mut steps = Vec::new();
        let mut accept = 0.0;
        let out = nutsda_run(
            &s,
            &mass,
            DualAveragingParams::default(),
            1.0,
            1000,
            5000,
            DEFAULT_MAX_DEPTH,
            &target,
            &mut rng,
            &c,
            |_, stats, eps| {
                steps.push(eps);
                accept += stats.accept_stat;
                ControlFlow::Continue(())
            },
        )
        .unwrap();
        let rate = accept / out.kept as f64;
        assert!((0.55..=0.75).contains(&rate), "rate {rate}");
        assert!(steps.iter().all(|&e| e == out.step_size));
        assert!(out.eot_ops > 0);
    }

    #[test]
    fn no_adaptation_reduces_to_fixed_step() {
        let target = gaussian_2d();
        let mass = MassMatrix::identity(2);
        let c = OpCounter::new();
        let s = ChainState::with_grad(&target, Vector::zeros(2), &c).unwrap();
        let mut rng = stream_rng(5, 0);
        let mut via_run = Vec::new();
        nutsda_run(
            &s,
            &mass,
            DualAveragingParams::default(),
            0.3,
            0,
            20,
            DEFAULT_MAX_DEPTH,
            &target,
            &mut rng,
            &c,
            |st, _, _| {
                via_run.push(st.theta.clone());
                ControlFlow::Continue(())
            },
        )
        .unwrap();
        let mut rng = stream_rng(5, 0);
        let mut cur = s.clone();
        for theta in via_run {
            cur = nuts_step(&cur, &mass, 0.3, DEFAULT_MAX_DEPTH, &target, &mut rng, &c).unwrap().0;
            assert_eq!(cur.theta, theta);
        }
    }

    #[test]
    fn dual_averaging_params_are_checked() {
        let bad = DualAveragingParams {
            kappa: 0.4,
            ..Default::default()
        };
        assert!(DualAveraging::new(1.0, bad).is_err());
    }
}
