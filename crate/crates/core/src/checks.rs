//! Independent oracle comparisons: finite differences for gradients,
//! tensor Gauss-Hermite quadrature for probit evidence, a from-scratch
//! mixture recomputation for importance weights, and exact op accounting.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::gp::{
    ep_approx, laplace_approx, latent_approx, log_marginal_regression, log_marginal_regression_with_grad,
    normal_cdf, pseudo_marginal_estimate, ApproxKind, ApproxSettings, Dataset, KernelFamily, KernelSpec, Task,
};
use crate::is::{run_adaptive, Adaptation, IsSettings, ProposalParams, Schedule, WeightedSampleStore};
use crate::linalg::{log_sum_exp, stream_rng, CholeskyFactor, Matrix, OpCounter, Vector};
use crate::target::GaussianTarget;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const CHECK_NAMES: &[&str] = &[
    "gradient-fd",
    "pm-unbiasedness",
    "approx-accuracy",
    "mixture-oracle",
    "op-accounting",
];

/// Runs one named check with the given seed.
pub fn run_check(name: &str, seed: u64) -> Result<CheckOutcome> {
    match name {
        "gradient-fd" => gradient_check(100, seed),
        "pm-unbiasedness" => pm_unbiasedness(100_000, 64, seed),
        "approx-accuracy" => approx_accuracy(20, seed),
        "mixture-oracle" => mixture_oracle(seed),
        "op-accounting" => op_accounting(),
        other => Err(Error::InvalidArgument(format!(
            "unknown check `{other}` (available: {})",
            CHECK_NAMES.join(", ")
        ))),
    }
}

pub fn run_all(seed: u64) -> Vec<Result<CheckOutcome>> {
    CHECK_NAMES.iter().map(|n| run_check(n, seed)).collect()
}

/// Nodes and weights of the `m`-point Gauss-Hermite rule for
/// `∫ e^{-x²} g(x) dx`, from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = Matrix::from_fn(m, m, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|k| (eig.eigenvalues[k], sqrt_pi * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `ln ∫ Πᵢ Φ(yᵢ fᵢ) N(f | 0, K) df` by an `m`-point tensor Gauss-Hermite
/// rule. Cost grows as `mⁿ`; meant for `n ≤ 3`.
pub fn probit_evidence_quadrature(k: &Matrix, y: &[f64], m: usize) -> Result<f64> {
    let n = y.len();
    if k.nrows() != n || n == 0 || n > 3 {
        return Err(Error::InvalidArgument("quadrature oracle handles 1 to 3 points".into()));
    }
    let l = CholeskyFactor::factor(k)?;
    let (nodes, weights) = gauss_hermite(m);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let z = Vector::from_fn(n, |i, _| sqrt2 * nodes[idx[i]]);
        let f = l.lower() * z;
        let w: f64 = idx.iter().map(|&i| weights[i]).product();
        let g: f64 = (0..n).map(|i| normal_cdf(y[i] * f[i])).product();
        total += w * g;
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok((total / std::f64::consts::PI.powf(n as f64 / 2.0)).ln());
            }
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn random_regression_instance(rng: &mut crate::linalg::SimRng, family: KernelFamily) -> Result<(KernelSpec, Dataset, Vector)> {
    let n = rng.random_range(2..=10);
    let d = rng.random_range(1..=3);
    let x = Matrix::from_fn(n, d, |_, _| StandardNormal.sample(rng));
    let y = Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let spec = KernelSpec::new(family, d);
    let unif = Uniform::new(-1.0, 1.0).expect("valid range");
    let theta = Vector::from_fn(spec.n_kernel_params() + 1, |_, _| unif.sample(rng));
    Ok((spec, Dataset::new(x, y, Task::Regression)?, theta))
}

/// Analytic regression gradient against central differences with step
/// `1e-5` in log space, on random instances alternating RBF and ARD. A
/// component passes when `|g - fd| ≤ 1e-5·max(1, |fd|)`.
pub fn gradient_check(instances: usize, seed: u64) -> Result<CheckOutcome> {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-5;
    let mut rng = stream_rng(seed, 0x6772_6164);
    let c = OpCounter::new();
    let mut worst = 0.0f64;
    for i in 0..instances {
        let family = if i % 2 == 0 { KernelFamily::Rbf } else { KernelFamily::Ard };
        let (spec, data, theta) = random_regression_instance(&mut rng, family)?;
        let (_, g) = log_marginal_regression_with_grad(&spec, &theta, &data, &c)?;
        for j in 0..theta.len() {
            let mut up = theta.clone();
            up[j] += H;
            let mut dn = theta.clone();
            dn[j] -= H;
            let fd = (log_marginal_regression(&spec, &up, &data, &c)? - log_marginal_regression(&spec, &dn, &data, &c)?)
                / (2.0 * H);
            worst = worst.max((g[j] - fd).abs() / fd.abs().max(1.0));
        }
    }
    Ok(CheckOutcome {
        name: "gradient-fd",
        passed: worst <= TOL,
        detail: format!("{instances} instances, worst scaled error {worst:.2e} (tolerance {TOL:.0e})"),
    })
}

/// One probit observation `y = +1` at a single input with unit prior
/// variance: the evidence is exactly 1/2 by symmetry.
pub fn unit_probit_problem() -> (KernelSpec, Dataset, Vector) {
    let data = Dataset::new(Matrix::zeros(1, 1), Vector::from_element(1, 1.0), Task::Classification)
        .expect("valid one-point dataset");
    (KernelSpec::rbf(1), data, Vector::zeros(2))
}

/// Sample mean and standard error of the linear-space evidence estimate.
pub fn pm_estimate_mean(kind: ApproxKind, replications: usize, n_imp: usize, seed: u64) -> Result<(f64, f64)> {
    let (spec, data, theta) = unit_probit_problem();
    let approx = latent_approx(kind, &spec, &theta, &data, &OpCounter::new(), ApproxSettings::default_for(kind))?;
    let mut rng = stream_rng(seed, 0x706d + kind as u64);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..replications {
        let e = pseudo_marginal_estimate(&data, &approx, n_imp, &mut rng)?.exp();
        sum += e;
        sum2 += e * e;
    }
    let n = replications as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Mean of `exp(estimate)` within three standard errors of 1/2 for both
/// importance densities.
pub fn pm_unbiasedness(replications: usize, n_imp: usize, seed: u64) -> Result<CheckOutcome> {
    let mut passed = true;
    let mut detail = Vec::new();
    for kind in [ApproxKind::Laplace, ApproxKind::Ep] {
        let (mean, se) = pm_estimate_mean(kind, replications, n_imp, seed)?;
        let ok = (mean - 0.5).abs() <= 3.0 * se;
        passed &= ok;
        detail.push(format!("{}: {mean:.6} ± {se:.1e}", kind.name()));
    }
    Ok(CheckOutcome {
        name: "pm-unbiasedness",
        passed,
        detail: format!("{replications} replications, n_imp {n_imp}; {}", detail.join(", ")),
    })
}

/// Worst absolute log-evidence errors `(laplace, ep)` against a 64-point
/// tensor quadrature over random two-point probit problems with scalar
/// inputs in `[-1.5, 1.5]`, random labels, `σ` log-uniform on `[0.25, 2]`
/// and `τ` log-uniform on `[0.5, 2]`. The Laplace error grows with `σ`
/// (about 0.03 at `σ = e` for a single point), so the range matters.
pub fn approx_errors(instances: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = stream_rng(seed, 0x7175_6164);
    let log_sigma = Uniform::new(0.25f64.ln(), 2f64.ln()).expect("valid range");
    let log_tau = Uniform::new(0.5f64.ln(), 2f64.ln()).expect("valid range");
    let xs = Uniform::new(-1.5, 1.5).expect("valid range");
    let spec = KernelSpec::rbf(1);
    let c = OpCounter::new();
    let (mut la_worst, mut ep_worst) = (0.0f64, 0.0f64);
    for _ in 0..instances {
        let x = Matrix::from_fn(2, 1, |_, _| xs.sample(&mut rng));
        let y = Vector::from_fn(2, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let theta = Vector::from_vec(vec![log_sigma.sample(&mut rng), log_tau.sample(&mut rng)]);
        let data = Dataset::new(x, y, Task::Classification)?;
        let k = crate::gp::covariance_matrix(&spec, &theta, &data.x, false)?;
        let truth = probit_evidence_quadrature(&k, data.y.as_slice(), 64)?;
        let la = laplace_approx(&spec, &theta, &data, &c, ApproxSettings::laplace_default())?.log_evidence;
        let ep = ep_approx(&spec, &theta, &data, &c, ApproxSettings::ep_default())?.log_evidence;
        la_worst = la_worst.max((la - truth).abs());
        ep_worst = ep_worst.max((ep - truth).abs());
    }
    Ok((la_worst, ep_worst))
}

pub fn approx_accuracy(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let (la, ep) = approx_errors(instances, seed)?;
    Ok(CheckOutcome {
        name: "approx-accuracy",
        passed: la <= 0.05 && ep <= 0.01,
        detail: format!("{instances} instances, worst |Δ ln Z|: laplace {la:.4} (≤ 0.05), ep {ep:.4} (≤ 0.01)"),
    })
}

/// `ln Σₜ Nₜ qₜ(θᵢ)` for every stored sample, summed afresh.
pub fn scratch_log_deltas(store: &WeightedSampleStore) -> Vec<f64> {
    store
        .samples()
        .iter()
        .map(|theta| {
            let terms: Vec<f64> = store
                .proposals()
                .iter()
                .zip(store.sizes())
                .map(|(q, &n)| (n as f64).ln() + q.log_density(theta))
                .collect();
            log_sum_exp(&terms)
        })
        .collect()
}

/// Largest relative difference between two sets of log denominators,
/// measured in linear space.
pub fn max_relative_discrepancy(log_a: &[f64], log_b: &[f64]) -> f64 {
    if log_a.len() != log_b.len() {
        return f64::INFINITY;
    }
    log_a
        .iter()
        .zip(log_b)
        .map(|(a, b)| if a.is_nan() || b.is_nan() { f64::INFINITY } else { (a - b).exp_m1().abs() })
        .fold(0.0, f64::max)
}

/// Toy AMIS run on a correlated 2-D Gaussian from a deliberately offset
/// proposal.
pub fn toy_amis_store(iterations: usize, seed: u64) -> Result<WeightedSampleStore> {
    let target = GaussianTarget::new(
        Vector::from_vec(vec![1.0, -1.0]),
        &Matrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]),
    )?;
    let gamma0 = ProposalParams::new(Vector::zeros(2), &(Matrix::identity(2, 2) * 3.0))?;
    let settings = IsSettings::new(Schedule::affine(iterations, 20, 5)?, Adaptation::Amis);
    let mut rng = stream_rng(seed, 0x616d_6973);
    run_adaptive(&target, &gamma0, &settings, &mut rng, &OpCounter::new(), |_| {
        std::ops::ControlFlow::Continue(())
    })
}

/// Compares `incremental(store)` against [`scratch_log_deltas`] after toy
/// runs of one to five iterations, and single-iteration weights against
/// the classical `f/q`.
pub fn mixture_oracle_with(
    seed: u64,
    incremental: impl Fn(&WeightedSampleStore) -> Vec<f64>,
) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for t in 1..=5 {
        let store = toy_amis_store(t, seed + t as u64)?;
        worst = worst.max(max_relative_discrepancy(&incremental(&store), &scratch_log_deltas(&store)));
    }
    let one = toy_amis_store(1, seed)?;
    let q = &one.proposals()[0];
    let classical_exact = one
        .log_weights()
        .iter()
        .zip(one.samples().iter().zip(one.log_targets()))
        .all(|(&lw, (theta, &lf))| lw == lf - q.log_density(theta));
    Ok(CheckOutcome {
        name: "mixture-oracle",
        passed: worst <= 1e-10 && classical_exact,
        detail: format!(
            "worst relative denominator error {worst:.2e} (≤ 1e-10); single-iteration weights {}",
            if classical_exact { "classical" } else { "differ from classical" }
        ),
    })
}

pub fn mixture_oracle(seed: u64) -> Result<CheckOutcome> {
    mixture_oracle_with(seed, |s| s.log_deltas().to_vec())
}

/// Counts charged per evaluation against the stated costs: 1 for a
/// regression value, 3 with its gradient, `2 + iterations + 2` for
/// Laplace and `2 + 3·sweeps` for EP.
pub fn op_accounting() -> Result<CheckOutcome> {
    let mut failures = Vec::new();
    let mut rng = stream_rng(5, 0x6f70);
    let charged = |f: &dyn Fn(&OpCounter) -> Result<u64>| -> Result<(u64, u64)> {
        let c = OpCounter::new();
        let expected = f(&c)?;
        Ok((c.get(), expected))
    };
    let (spec, data, theta) = random_regression_instance(&mut rng, KernelFamily::Ard)?;
    let cases: Vec<(&str, (u64, u64))> = vec![
        ("regression value", charged(&|c| log_marginal_regression(&spec, &theta, &data, c).map(|_| 1))?),
        (
            "regression gradient",
            charged(&|c| log_marginal_regression_with_grad(&spec, &theta, &data, c).map(|_| 3))?,
        ),
    ];
    let x = Matrix::from_fn(6, 2, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
    let y = Vector::from_fn(6, |i, _| if i % 3 == 0 { -1.0 } else { 1.0 });
    let cdata = Dataset::new(x, y, Task::Classification)?;
    let cspec = KernelSpec::rbf(2);
    let ctheta = Vector::from_vec(vec![0.5, 0.2]);
    let la = charged(&|c| {
        laplace_approx(&cspec, &ctheta, &cdata, c, ApproxSettings::laplace_default())
            .map(|a| 2 + a.iterations as u64 + 2)
    })?;
    let ep = charged(&|c| {
        ep_approx(&cspec, &ctheta, &cdata, c, ApproxSettings::ep_default()).map(|a| 2 + 3 * a.iterations as u64)
    })?;
    let mut detail = Vec::new();
    for (name, (got, want)) in cases.into_iter().chain([("laplace", la), ("ep", ep)]) {
        detail.push(format!("{name} {got}/{want}"));
        if got != want {
            failures.push(name);
        }
    }
    Ok(CheckOutcome {
        name: "op-accounting",
        passed: failures.is_empty(),
        detail: format!("charged/expected: {}", detail.join(", ")),
    })
}
