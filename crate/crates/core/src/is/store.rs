use std::ops::Range;

use super::ProposalParams;
use crate::error::{Error, Result};
use crate::linalg::{log_add_exp, log_sum_exp, Vector};

/// All samples drawn so far, with their cached target values and the
/// deterministic-mixture denominators `δ = Σₘ Nₘ qₘ(θ)` kept in log space.
#[derive(Clone, Debug)]
pub struct WeightedSampleStore {
    dim: usize,
    samples: Vec<Vector>,
    log_f: Vec<f64>,
    log_delta: Vec<f64>,
    log_q_own: Vec<f64>,
    proposals: Vec<ProposalParams>,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    pub degenerate_iterations: Vec<usize>,
    pub collapsed_iterations: Vec<usize>,
}

impl WeightedSampleStore {
    pub fn new(dim: usize) -> Self {
        WeightedSampleStore {
            dim,
            samples: Vec::new(),
            log_f: Vec::new(),
            log_delta: Vec::new(),
            log_q_own: Vec::new(),
            proposals: Vec::new(),
            sizes: Vec::new(),
            offsets: vec![0],
            degenerate_iterations: Vec::new(),
            collapsed_iterations: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iterations(&self) -> usize {
        self.proposals.len()
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }

    pub fn log_targets(&self) -> &[f64] {
        &self.log_f
    }

    pub fn log_deltas(&self) -> &[f64] {
        &self.log_delta
    }

    pub fn proposals(&self) -> &[ProposalParams] {
        &self.proposals
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Index range of the samples drawn at iteration `t`.
    pub fn iteration_range(&self, t: usize) -> Range<usize> {
        let end = self.offsets.get(t + 1).copied().unwrap_or(self.samples.len());
        self.offsets[t]..end
    }

    /// Opens iteration `t` with proposal `gamma` and planned size `n`, and
    /// adds `n·q(θ)` to the denominator of every stored sample.
    pub fn add_proposal(&mut self, gamma: ProposalParams, n: usize) -> Result<()> {
        if gamma.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: gamma.dim(),
            });
        }
        if !self.proposals.is_empty() {
            self.offsets.push(self.samples.len());
        }
        let ln_n = (n as f64).ln();
        for (theta, delta) in self.samples.iter().zip(self.log_delta.iter_mut()) {
            *delta = log_add_exp(*delta, ln_n + gamma.log_density(theta));
        }
        self.proposals.push(gamma);
        self.sizes.push(n);
        Ok(())
    }

    /// Stores a sample drawn from the current proposal together with its
    /// (possibly estimated) log target value.
    pub fn push_sample(&mut self, theta: Vector, log_f: f64) -> Result<()> {
        if self.proposals.is_empty() {
            return Err(Error::InvalidArgument("push_sample before add_proposal".into()));
        }
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: theta.len(),
            });
        }
        let terms: Vec<f64> = self
            .proposals
            .iter()
            .zip(&self.sizes)
            .map(|(q, &n)| (n as f64).ln() + q.log_density(&theta))
            .collect();
        let own = self.proposals.last().expect("non-empty").log_density(&theta);
        self.log_delta.push(log_sum_exp(&terms));
        self.log_q_own.push(own);
        self.log_f.push(if log_f.is_nan() { f64::NEG_INFINITY } else { log_f });
        self.samples.push(theta);
        Ok(())
    }

    fn total_planned(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// `ln wᵢ = ln f(θᵢ) - ln(δᵢ / Σⱼ Nⱼ)` for every stored sample.
    pub fn log_weights(&self) -> Vec<f64> {
        if self.proposals.len() == 1 {
            // a single proposal: the classical weights, without the ln N round trip
            return self.iteration_log_weights(0);
        }
        let ln_total = (self.total_planned() as f64).ln();
        self.log_f
            .iter()
            .zip(&self.log_delta)
            .map(|(&lf, &ld)| if lf == f64::NEG_INFINITY { lf } else { lf - ld + ln_total })
            .collect()
    }

    /// Classical weights `f(θ)/qₜ(θ)` of the samples from iteration `t` only.
    pub fn iteration_log_weights(&self, t: usize) -> Vec<f64> {
        self.iteration_range(t)
            .map(|i| {
                let lf = self.log_f[i];
                if lf == f64::NEG_INFINITY {
                    lf
                } else {
                    lf - self.log_q_own[i]
                }
            })
            .collect()
    }

    /// Weights divided by their sum. Errors if every weight is zero.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_weights())
    }

    /// Recomputes every denominator from scratch over all proposals.
    pub fn recompute_mixture(&mut self) {
        for (theta, delta) in self.samples.iter().zip(self.log_delta.iter_mut()) {
            let terms: Vec<f64> = self
                .proposals
                .iter()
                .zip(&self.sizes)
                .map(|(q, &n)| (n as f64).ln() + q.log_density(theta))
                .collect();
            *delta = log_sum_exp(&terms);
        }
    }

    pub fn effective_sample_size(&self) -> Result<f64> {
        effective_sample_size_log(&self.log_weights())
    }
}

pub(crate) fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let total = log_sum_exp(log_w);
    if !total.is_finite() {
        return Err(Error::ZeroTotalWeight);
    }
    Ok(log_w.iter().map(|lw| (lw - total).exp()).collect())
}

/// `(Σw)² / Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::ZeroTotalWeight);
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok(sum * sum / sq)
}

/// Effective sample size from log weights, stable under any common shift.
pub fn effective_sample_size_log(log_w: &[f64]) -> Result<f64> {
    let total = log_sum_exp(log_w);
    if !total.is_finite() {
        return Err(Error::ZeroTotalWeight);
    }
    let sq: Vec<f64> = log_w.iter().map(|lw| 2.0 * lw).collect();
    Ok((2.0 * total - log_sum_exp(&sq)).exp())
}

/// `Σ wᵢ h(θᵢ) / Σ wᵢ` over every stored sample.
pub fn self_normalized_expectation(
    store: &WeightedSampleStore,
    h: impl Fn(&Vector) -> f64,
) -> Result<f64> {
    let w = store.normalized_weights()?;
    Ok(store
        .samples()
        .iter()
        .zip(&w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(theta, wi)| wi * h(theta))
        .sum())
}

/// Self-normalized estimate of the mean vector.
pub fn weighted_mean(store: &WeightedSampleStore) -> Result<Vector> {
    let w = store.normalized_weights()?;
    let mut mean = Vector::zeros(store.dim());
    for (theta, wi) in store.samples().iter().zip(&w) {
        if *wi > 0.0 {
            mean.axpy(*wi, theta, 1.0);
        }
    }
    Ok(mean)
}

/// `ln(Σ w / Σ N)`, the estimate of the target's normalizing constant.
pub fn log_normalizing_constant(store: &WeightedSampleStore) -> Result<f64> {
    let total = log_sum_exp(&store.log_weights());
    if !total.is_finite() {
        return Err(Error::ZeroTotalWeight);
    }
    Ok(total - (store.total_planned() as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use proptest::prelude::*;

    fn scalar_q(mean: f64, var: f64) -> ProposalParams {
        ProposalParams::new(Vector::from_element(1, mean), &Matrix::from_element(1, 1, var)).unwrap()
    }

    fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
        (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn ess_examples() {
        assert_eq!(effective_sample_size(&[0.5; 8]).unwrap(), 8.0);
        assert_eq!(effective_sample_size(&[0.0, 3.0, 0.0]).unwrap(), 1.0);
        assert!((effective_sample_size(&[1.0, 1.0, 2.0]).unwrap() - 16.0 / 6.0).abs() < 1e-15);
        assert!(matches!(effective_sample_size(&[0.0, 0.0]), Err(Error::ZeroTotalWeight)));
        let log_w: Vec<f64> = [1.0f64, 1.0, 2.0].iter().map(|w| w.ln() + 700.0).collect();
        assert!((effective_sample_size_log(&log_w).unwrap() - 16.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn incremental_mixture_matches_scratch_oracle() {
        // three hand-specified scalar proposals, two samples each
        let qs = [(0.0, 1.0), (1.0, 0.5), (-0.5, 2.0)];
        let xs = [[0.3, -1.2], [1.4, 0.9], [-2.0, 0.1]];
        let log_f = |x: f64| -0.5 * x * x;
        let mut store = WeightedSampleStore::new(1);
        for (t, &(m, v)) in qs.iter().enumerate() {
            store.add_proposal(scalar_q(m, v), 2).unwrap();
            for &x in &xs[t] {
                store.push_sample(Vector::from_element(1, x), log_f(x)).unwrap();
            }
        }
        let all: Vec<f64> = xs.iter().flatten().copied().collect();
        let deltas: Vec<f64> = all
            .iter()
            .map(|&x| qs.iter().map(|&(m, v)| 2.0 * normal_pdf(x, m, v)).sum())
            .collect();
        let raw: Vec<f64> = all
            .iter()
            .zip(&deltas)
            .map(|(&x, d)| log_f(x).exp() / (d / 6.0))
            .collect();
        let sum: f64 = raw.iter().sum();
        for i in 0..6 {
            assert!((store.log_deltas()[i].exp() / deltas[i] - 1.0).abs() < 1e-12);
        }
        for (w, r) in store.normalized_weights().unwrap().iter().zip(&raw) {
            assert!((w - r / sum).abs() < 1e-12);
        }
        let before = store.log_deltas().to_vec();
        store.recompute_mixture();
        for (a, b) in before.iter().zip(store.log_deltas()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_iteration_gives_classical_weights() {
        let q = scalar_q(0.5, 2.0);
        let mut store = WeightedSampleStore::new(1);
        store.add_proposal(q.clone(), 3).unwrap();
        for x in [0.0, 1.0, -1.0] {
            store.push_sample(Vector::from_element(1, x), -x * x).unwrap();
        }
        for (i, lw) in store.log_weights().iter().enumerate() {
            let theta = &store.samples()[i];
            let expected = -theta[0] * theta[0] - q.log_density(theta);
            assert_eq!(*lw, expected);
        }
    }

    #[test]
    fn constant_function_has_unit_expectation() {
        let mut store = WeightedSampleStore::new(1);
        store.add_proposal(scalar_q(0.0, 1.0), 2).unwrap();
        store.push_sample(Vector::from_element(1, 0.2), -0.3).unwrap();
        store.push_sample(Vector::from_element(1, -0.7), -1.1).unwrap();
        assert_eq!(self_normalized_expectation(&store, |_| 1.0).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn estimates_ignore_target_scale(
            xs in proptest::collection::vec(-3.0f64..3.0, 2..12),
            shift in -50.0f64..50.0,
        ) {
            let build = |c: f64| {
                let mut store = WeightedSampleStore::new(1);
                store.add_proposal(scalar_q(0.0, 1.5), xs.len()).unwrap();
                for &x in &xs {
                    store.push_sample(Vector::from_element(1, x), -0.5 * (x - 1.0).powi(2) + c).unwrap();
                }
                store
            };
            let a = self_normalized_expectation(&build(0.0), |t| t[0]).unwrap();
            let b = self_normalized_expectation(&build(shift), |t| t[0]).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn weights_are_finite_and_nonnegative(
            xs in proptest::collection::vec(-5.0f64..5.0, 1..10),
            means in proptest::collection::vec(-2.0f64..2.0, 1..4),
        ) {
            let mut store = WeightedSampleStore::new(1);
            for &m in &means {
                store.add_proposal(scalar_q(m, 1.0), xs.len()).unwrap();
                for &x in &xs {
                    store.push_sample(Vector::from_element(1, x), -x.abs()).unwrap();
                }
            }
            for w in store.normalized_weights().unwrap() {
                prop_assert!(w.is_finite() && w >= 0.0);
            }
        }
    }
}
