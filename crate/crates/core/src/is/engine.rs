use std::ops::ControlFlow;

use super::adapt::{mamis_p_update, moment_match, proposal_from_moments, weighted_moments, CovarianceMode};
use super::{ProposalParams, Schedule, WeightedSampleStore};
use crate::error::{Error, Result};
use crate::linalg::{OpCounter, SimRng};
use crate::target::LogDensity;

/// How the next proposal is estimated after each iteration.
#[derive(Clone, Debug, PartialEq)]
pub enum Adaptation {
    /// Moment matching over every sample under the mixture weights.
    Amis,
    /// Moment matching over the latest iteration under classical weights.
    Mamis,
    /// As `Mamis`, shrunk towards a fixed prior proposal.
    MamisRegularized { prior: ProposalParams, strength: f64 },
}

impl Adaptation {
    pub fn name(&self) -> &'static str {
        match self {
            Adaptation::Amis => "amis",
            Adaptation::Mamis => "mamis",
            Adaptation::MamisRegularized { .. } => "mamis-p",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsSettings {
    pub schedule: Schedule,
    pub adaptation: Adaptation,
    pub covariance: CovarianceMode,
    /// With `Adaptation::Amis`, adapt like MAMIS from this zero-based
    /// iteration on.
    pub switch_to_mamis_at: Option<usize>,
}

impl IsSettings {
    pub fn new(schedule: Schedule, adaptation: Adaptation) -> Self {
        IsSettings {
            schedule,
            adaptation,
            covariance: CovarianceMode::Full,
            switch_to_mamis_at: None,
        }
    }
}

/// Runs adaptive multiple importance sampling. Every sample's target value
/// is evaluated exactly once; the mixture denominators of all earlier
/// samples are updated each time a proposal is added. The observer sees the
/// store after every iteration and can stop the run early.
///
/// With a noisy target this is the pseudo-marginal variant: the cached
/// estimate stands in for the target value in every later weight.
pub fn run_adaptive<T: LogDensity + ?Sized>(
    target: &T,
    gamma0: &ProposalParams,
    settings: &IsSettings,
    rng: &mut SimRng,
    counter: &OpCounter,
    mut observer: impl FnMut(&WeightedSampleStore) -> ControlFlow<()>,
) -> Result<WeightedSampleStore> {
    settings.schedule.validate()?;
    if gamma0.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: gamma0.dim(),
        });
    }
    let mut store = WeightedSampleStore::new(target.dim());
    let mut gamma = gamma0.clone();
    let iterations = settings.schedule.iterations;
    for t in 0..iterations {
        let n = settings.schedule.size(t);
        store.add_proposal(gamma.clone(), n)?;
        for _ in 0..n {
            let theta = gamma.sample(rng);
            let log_f = target.log_density(&theta, rng, counter)?;
            store.push_sample(theta, log_f)?;
        }
        match store.effective_sample_size() {
            Ok(ess) if ess >= 2.0 => {}
            _ => {
                log::debug!("importance weights degenerate after iteration {t}");
                store.degenerate_iterations.push(t);
            }
        }
        if observer(&store).is_break() {
            break;
        }
        if t + 1 < iterations {
            let (next, collapsed) = next_proposal(&store, t, &gamma, settings)?;
            if collapsed {
                log::debug!("proposal collapsed after iteration {t}; keeping the previous one");
                store.collapsed_iterations.push(t);
            }
            gamma = next;
        }
    }
    Ok(store)
}

fn next_proposal(
    store: &WeightedSampleStore,
    t: usize,
    current: &ProposalParams,
    settings: &IsSettings,
) -> Result<(ProposalParams, bool)> {
    let mode = settings.covariance;
    let switched = settings.switch_to_mamis_at.is_some_and(|s| t >= s);
    let moments = match &settings.adaptation {
        Adaptation::Amis if !switched => moment_match(store, mode),
        Adaptation::Amis | Adaptation::Mamis => {
            let range = store.iteration_range(t);
            weighted_moments(&store.samples()[range], &store.iteration_log_weights(t), mode)
        }
        Adaptation::MamisRegularized { prior, strength } => {
            let range = store.iteration_range(t);
            let g = mamis_p_update(
                prior,
                *strength,
                &store.samples()[range],
                &store.iteration_log_weights(t),
                mode,
            )?;
            return Ok((g, false));
        }
    };
    match moments {
        Ok((mean, cov)) => Ok(proposal_from_moments(mean, &cov, current)),
        Err(Error::ZeroTotalWeight) => Ok((current.clone(), true)),
        Err(e) => Err(e),
    }
}

/// Generic AMIS with full or diagonal covariance adaptation.
pub fn amis_run<T: LogDensity + ?Sized>(
    target: &T,
    gamma0: &ProposalParams,
    schedule: Schedule,
    covariance: CovarianceMode,
    rng: &mut SimRng,
    counter: &OpCounter,
) -> Result<WeightedSampleStore> {
    let mut settings = IsSettings::new(schedule, Adaptation::Amis);
    settings.covariance = covariance;
    run_adaptive(target, gamma0, &settings, rng, counter, |_| ControlFlow::Continue(()))
}

/// Modified AMIS: adapts from the latest iteration only; the returned store
/// carries the full mixture weights.
pub fn mamis_run<T: LogDensity + ?Sized>(
    target: &T,
    gamma0: &ProposalParams,
    schedule: Schedule,
    rng: &mut SimRng,
    counter: &OpCounter,
) -> Result<WeightedSampleStore> {
    let settings = IsSettings::new(schedule, Adaptation::Mamis);
    run_adaptive(target, gamma0, &settings, rng, counter, |_| ControlFlow::Continue(()))
}

/// Result of an AMIS tuning phase followed by MAMIS.
#[derive(Clone, Debug)]
pub struct HandoffRun {
    pub store: WeightedSampleStore,
    /// Operations charged during the AMIS phase.
    pub tuning_ops: u64,
    pub tuning_samples: usize,
    /// Initial proposal handed to MAMIS.
    pub handoff: ProposalParams,
}

impl HandoffRun {
    /// Tuning cost in units of `n³` operations, counting a factorization as
    /// `n³/3`.
    pub fn tuning_cost_n3(&self) -> u64 {
        (self.tuning_ops as f64 / 3.0).round() as u64
    }
}

/// Runs AMIS, discards its samples, and starts MAMIS from its final moment
/// estimate. The tuning phase is charged to `counter`.
pub fn amis_mamis_run<T: LogDensity + ?Sized>(
    target: &T,
    gamma0: &ProposalParams,
    amis_schedule: Option<Schedule>,
    mamis_settings: &IsSettings,
    rng: &mut SimRng,
    counter: &OpCounter,
    observer: impl FnMut(&WeightedSampleStore) -> ControlFlow<()>,
) -> Result<HandoffRun> {
    let start = counter.get();
    let (handoff, tuning_samples) = match amis_schedule {
        Some(schedule) => {
            let mut settings = IsSettings::new(schedule, Adaptation::Amis);
            settings.covariance = mamis_settings.covariance;
            let tuning = run_adaptive(target, gamma0, &settings, rng, counter, |_| {
                ControlFlow::Continue(())
            })?;
            let gamma = match moment_match(&tuning, settings.covariance) {
                Ok((mean, cov)) => proposal_from_moments(mean, &cov, tuning.proposals().last().unwrap()).0,
                Err(Error::ZeroTotalWeight) => tuning.proposals().last().unwrap().clone(),
                Err(e) => return Err(e),
            };
            (gamma, tuning.len())
        }
        None => (gamma0.clone(), 0),
    };
    let tuning_ops = counter.get() - start;
    let store = run_adaptive(target, &handoff, mamis_settings, rng, counter, observer)?;
    Ok(HandoffRun {
        store,
        tuning_ops,
        tuning_samples,
        handoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::is::{self_normalized_expectation, weighted_mean};
    use crate::linalg::{stream_rng, Matrix, Vector};
    use crate::target::{FnTarget, GaussianTarget};

    fn std_normal_1d() -> GaussianTarget {
        GaussianTarget::new(Vector::zeros(1), &Matrix::identity(1, 1)).unwrap()
    }

    fn q(mean: f64, var: f64) -> ProposalParams {
        ProposalParams::new(Vector::from_element(1, mean), &Matrix::from_element(1, 1, var)).unwrap()
    }

    #[test]
    fn matched_proposal_gives_uniform_weights() {
        let target = std_normal_1d();
        for adaptation in [Adaptation::Amis, Adaptation::Mamis] {
            let mut rng = stream_rng(4, 0);
            let settings = IsSettings::new(Schedule::constant(1, 10).unwrap(), adaptation);
            let store = run_adaptive(&target, &q(0.0, 1.0), &settings, &mut rng, &OpCounter::new(), |_| {
                ControlFlow::Continue(())
            })
            .unwrap();
            for wi in store.normalized_weights().unwrap() {
                assert!((wi - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_iteration_mamis_equals_amis() {
        let target = FnTarget::new(1, |t: &Vector| -0.5 * (t[0] - 1.0).powi(2) - t[0].abs());
        let run = |a: Adaptation| {
            let mut rng = stream_rng(9, 1);
            let s = IsSettings::new(Schedule::constant(1, 50).unwrap(), a);
            run_adaptive(&target, &q(0.0, 2.0), &s, &mut rng, &OpCounter::new(), |_| {
                ControlFlow::Continue(())
            })
            .unwrap()
        };
        let a = run(Adaptation::Amis);
        let m = run(Adaptation::Mamis);
        assert_eq!(a.log_weights(), m.log_weights());
    }

    #[test]
    fn target_evaluated_once_per_sample() {
        let target = std_normal_1d().with_cost(1);
        let counter = OpCounter::new();
        let mut rng = stream_rng(1, 0);
        let schedule = Schedule::affine(5, 3, 2).unwrap();
        let store = amis_run(&target, &q(2.0, 4.0), schedule, CovarianceMode::Full, &mut rng, &counter)
            .unwrap();
        assert_eq!(counter.get() as usize, schedule.total());
        assert_eq!(store.len(), schedule.total());
    }

    #[test]
    fn mamis_final_weights_use_full_mixture() {
        let target = std_normal_1d();
        let mut rng = stream_rng(2, 0);
        let mut store = mamis_run(
            &target,
            &q(1.0, 3.0),
            Schedule::affine(2, 0, 5).unwrap(),
            &mut rng,
            &OpCounter::new(),
        )
        .unwrap();
        let qs: Vec<(f64, f64, f64)> = store
            .proposals()
            .iter()
            .zip(store.sizes())
            .map(|(p, &n)| (p.mean[0], p.cov()[(0, 0)], n as f64))
            .collect();
        for (i, theta) in store.samples().iter().enumerate() {
            let x = theta[0];
            let delta: f64 = qs
                .iter()
                .map(|&(m, v, n)| n * (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
                .sum();
            assert!((store.log_deltas()[i] - delta.ln()).abs() < 1e-10);
        }
        let before = store.log_weights();
        store.recompute_mixture();
        for (a, b) in before.iter().zip(store.log_weights()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn second_moment_of_standard_normal() {
        let target = std_normal_1d();
        let mut rng = stream_rng(11, 0);
        let store = amis_run(
            &target,
            &q(0.5, 2.0),
            Schedule::constant(10, 10_000).unwrap(),
            CovarianceMode::Full,
            &mut rng,
            &OpCounter::new(),
        )
        .unwrap();
        let est = self_normalized_expectation(&store, |t| t[0] * t[0]).unwrap();
        // sd of θ² is √2; importance weights near 1 keep the variance close
        let se = 2f64.sqrt() / (store.len() as f64).sqrt();
        assert!((est - 1.0).abs() < 3.0 * se, "estimate {est}");
    }

    #[test]
    fn adapts_to_a_mismatched_gaussian() {
        let cov = Matrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
        let mean = Vector::from_vec(vec![1.0, -2.0]);
        let target = GaussianTarget::new(mean.clone(), &cov).unwrap();
        let gamma0 = ProposalParams::new(Vector::zeros(2), &(Matrix::identity(2, 2) * 9.0)).unwrap();
        let mut rng = stream_rng(21, 0);
        let store = amis_run(
            &target,
            &gamma0,
            Schedule::constant(200, 100).unwrap(),
            CovarianceMode::Full,
            &mut rng,
            &OpCounter::new(),
        )
        .unwrap();
        let (m, c) = moment_match(&store, CovarianceMode::Full).unwrap();
        assert!((&m - &mean).amax() < 0.02 * 2.0);
        for (a, b) in c.iter().zip(cov.iter()) {
            assert!((a - b).abs() < 0.02 * 2.0, "{c}");
        }
        assert_eq!(weighted_mean(&store).unwrap(), m);
    }

    #[test]
    fn handoff_without_amis_is_plain_mamis() {
        let target = std_normal_1d().with_cost(1);
        let schedule = Schedule::affine(3, 0, 10).unwrap();
        let mut rng = stream_rng(6, 0);
        let plain = mamis_run(&target, &q(1.0, 2.0), schedule, &mut rng, &OpCounter::new()).unwrap();
        let mut rng = stream_rng(6, 0);
        let counter = OpCounter::new();
        let settings = IsSettings::new(schedule, Adaptation::Mamis);
        let h = amis_mamis_run(&target, &q(1.0, 2.0), None, &settings, &mut rng, &counter, |_| {
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(h.tuning_ops, 0);
        assert_eq!(plain.log_weights(), h.store.log_weights());
    }

    #[test]
    fn handoff_records_tuning_cost() {
        let target = std_normal_1d().with_cost(1);
        let counter = OpCounter::new();
        let mut rng = stream_rng(8, 0);
        let settings = IsSettings::new(Schedule::affine(2, 0, 100).unwrap(), Adaptation::Mamis);
        let h = amis_mamis_run(
            &target,
            &q(2.0, 5.0),
            Some(Schedule::constant(13, 1000).unwrap()),
            &settings,
            &mut rng,
            &counter,
            |_| ControlFlow::Continue(()),
        )
        .unwrap();
        assert_eq!(h.tuning_samples, 13_000);
        assert_eq!(h.tuning_ops, 13_000);
        assert_eq!(h.tuning_cost_n3(), 4333);
        assert_eq!(counter.get(), 13_000 + 300);
        assert_eq!(h.store.len(), 300);
    }

    #[test]
    fn observer_can_stop_the_run() {
        let target = std_normal_1d();
        let mut rng = stream_rng(8, 0);
        let settings = IsSettings::new(Schedule::constant(10, 5).unwrap(), Adaptation::Amis);
        let mut seen = 0;
        let store = run_adaptive(&target, &q(0.0, 1.0), &settings, &mut rng, &OpCounter::new(), |_| {
            seen += 1;
            if seen == 3 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(store.iterations(), 3);
    }
}
