use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::Path;

use rayon::prelude::*;

use super::config::{Auto, ExperimentConfig, SamplerId};
use super::data::{load_dataset, synthetic_dataset, LoadOptions};
use super::trace::{iqr_aggregate, trace_grid, ConvergenceTrace, IqrCurve, RunningMean};
use crate::error::{Error, Result};
use crate::gp::{ClassificationPosterior, Dataset, KernelSpec, LogSpacePrior, RegressionPosterior, Task};
use crate::init::{initialize, ApproxEvidenceObjective, Initialization, ModeSettings, ProposalVariant};
use crate::is::{
    amis_mamis_run, run_adaptive, self_normalized_expectation, Adaptation, CovarianceMode, IsSettings, Schedule,
    WeightedSampleStore,
};
use crate::linalg::{stream_rng, OpCounter, SimRng, Vector};
use crate::mcmc::{
    hmc_step, mh_step, nuts_step, nutsda_run, slice_step, tune_mh, tune_scale, ChainState, DualAveragingParams,
    HmcSettings, MassMatrix, TuningSettings,
};
use crate::target::LogDensity;

#[derive(Clone, Debug)]
pub enum Model {
    Regression(RegressionPosterior),
    Classification(ClassificationPosterior),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Regression(p) => LogDensity::dim(p),
            Model::Classification(p) => LogDensity::dim(p),
        }
    }

    pub fn target(&self) -> &dyn LogDensity {
        match self {
            Model::Regression(p) => p,
            Model::Classification(p) => p,
        }
    }

    fn exact(&self) -> Result<&RegressionPosterior> {
        match self {
            Model::Regression(p) => Ok(p),
            Model::Classification(_) => Err(Error::InvalidArgument(
                "sampler needs an exact target; classification likelihoods are estimated".into(),
            )),
        }
    }
}

/// Dataset, posterior and the shared initialization every replicate (and
/// every sweep variant) starts from.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub model: Model,
    pub init: Initialization,
}

pub fn load_config_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    if cfg.data_path.as_os_str().is_empty() {
        return synthetic_dataset(cfg.synthetic_n, cfg.synthetic_d, cfg.task, cfg.data_seed);
    }
    let options = LoadOptions {
        subsample: (cfg.subsample > 0).then_some(cfg.subsample),
        seed: cfg.data_seed,
        positive_class: match cfg.positive_class {
            Auto::Auto => None,
            Auto::Value(v) => Some(v),
        },
    };
    load_dataset(&cfg.data_path, cfg.task, &options)
}

/// Loads data, builds the posterior and runs mode finding plus the Hessian
/// at `θ = 0`. The operations spent are recorded in `init.op_cost`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let data = load_config_dataset(cfg)?;
    let spec = KernelSpec::new(cfg.kernel, data.input_dim());
    let prior = LogSpacePrior { sd: cfg.prior_sd };
    let settings = ModeSettings {
        tol: cfg.init_tol,
        max_iter: cfg.init_max_iter,
    };
    let counter = OpCounter::new();
    let (model, init) = match cfg.task {
        Task::Regression => {
            let post = RegressionPosterior::new(spec, data, prior)?;
            let theta0 = Vector::zeros(LogDensity::dim(&post));
            let init = initialize(&post, &theta0, settings, &counter)?;
            (Model::Regression(post), init)
        }
        Task::Classification => {
            let post = ClassificationPosterior::new(spec, data, prior, cfg.approx, cfg.n_imp)?;
            let theta0 = Vector::zeros(LogDensity::dim(&post));
            let init = initialize(&ApproxEvidenceObjective::new(&post), &theta0, settings, &counter)?;
            (Model::Classification(post), init)
        }
    };
    Ok(Prepared { model, init })
}

fn norm(theta: &Vector) -> f64 {
    theta.norm()
}

struct Recorder<'a> {
    trace: ConvergenceTrace,
    mean: RunningMean,
    counter: &'a OpCounter,
    budget: u64,
}

impl Recorder<'_> {
    fn record(&mut self, theta: &Vector) -> Result<()> {
        let m = self.mean.push(norm(theta));
        self.trace.push(self.counter.get(), m)
    }

    fn done(&self) -> bool {
        self.counter.get() >= self.budget
    }
}

fn tuning(cfg: &ExperimentConfig, rate: f64) -> TuningSettings {
    TuningSettings {
        target_rate: rate,
        tol: cfg.tune_tol,
        batch_size: cfg.tune_batch,
        max_batches: cfg.tune_max_batches,
        gain: 1.0,
    }
}

/// Runs one replicate and returns its trace of the running estimate of
/// `E‖θ‖` against the cumulative op count, which starts at the shared
/// initialization cost.
pub fn run_replicate(cfg: &ExperimentConfig, prepared: &Prepared, replicate: u64) -> Result<ConvergenceTrace> {
    let counter = OpCounter::starting_at(prepared.init.op_cost);
    let mut rng = stream_rng(cfg.seed, replicate);
    let trace = if cfg.sampler.is_importance_sampler() {
        run_is(cfg, prepared, &mut rng, &counter)?
    } else {
        run_mcmc(cfg, prepared, &mut rng, &counter)?
    };
    if trace.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "budget of {} ops ran out before the first estimate (end of tuning at {})",
            cfg.budget, trace.eot
        )));
    }
    Ok(trace)
}

fn run_is(cfg: &ExperimentConfig, prepared: &Prepared, rng: &mut SimRng, counter: &OpCounter) -> Result<ConvergenceTrace> {
    let target = prepared.model.target();
    let gamma0 = prepared.init.proposal(ProposalVariant::Full, 1.0)?;
    let schedule = cfg.schedule()?;
    let mut trace = ConvergenceTrace::new(prepared.init.op_cost);
    let budget = cfg.budget;
    let mut observe = |store: &WeightedSampleStore| {
        match self_normalized_expectation(store, norm) {
            Ok(v) => {
                trace.push(counter.get(), v).expect("op counts only grow");
            }
            Err(e) => log::debug!("no estimate after iteration {}: {e}", store.iterations()),
        }
        if counter.get() >= budget {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };
    let adaptation = match cfg.sampler {
        SamplerId::Amis(_) | SamplerId::PmAmis => Adaptation::Amis,
        SamplerId::Mamis(_) | SamplerId::AmisMamis => Adaptation::Mamis,
        SamplerId::MamisP => Adaptation::MamisRegularized {
            prior: gamma0.clone(),
            strength: cfg.prior_strength,
        },
        other => unreachable!("{} is not an importance sampler", other.name()),
    };
    let mut settings = IsSettings::new(schedule, adaptation);
    if let SamplerId::Amis(mode) | SamplerId::Mamis(mode) = cfg.sampler {
        settings.covariance = mode;
    }
    if matches!(cfg.sampler, SamplerId::Amis(_) | SamplerId::PmAmis) {
        settings.switch_to_mamis_at = cfg.switch_to_mamis_at;
    }
    if cfg.sampler == SamplerId::AmisMamis {
        let amis_n = super::config::default_schedule(SamplerId::Amis(CovarianceMode::Full), cfg.kernel).1;
        let handoff = match cfg.handoff_samples {
            Auto::Value(n) => n,
            Auto::Auto => return Err(Error::config("is.handoff_samples", "unresolved")),
        };
        let amis_schedule = (handoff > 0)
            .then(|| Schedule::constant(handoff.div_ceil(amis_n), amis_n))
            .transpose()?;
        let run = amis_mamis_run(target, &gamma0, amis_schedule, &settings, rng, counter, &mut observe)?;
        trace.eot = prepared.init.op_cost + run.tuning_ops;
        return Ok(trace);
    }
    run_adaptive(target, &gamma0, &settings, rng, counter, &mut observe)?;
    Ok(trace)
}

fn run_mcmc(cfg: &ExperimentConfig, prepared: &Prepared, rng: &mut SimRng, counter: &OpCounter) -> Result<ConvergenceTrace> {
    let init = &prepared.init;
    let m = init.mode.mode.clone();
    let d = m.len();
    let mut rec = Recorder {
        trace: ConvergenceTrace::new(init.op_cost),
        mean: RunningMean::default(),
        counter,
        budget: cfg.budget,
    };
    match cfg.sampler {
        SamplerId::Mh(_) | SamplerId::PmMh => {
            let variant = match cfg.sampler {
                SamplerId::Mh(v) => v,
                _ => ProposalVariant::Full,
            };
            let target = prepared.model.target();
            let base = init.proposal(variant, 1.0)?.chol_cov;
            let initial = match cfg.mh_initial_scale {
                Auto::Auto => 2.38 * 2.38 / d as f64,
                Auto::Value(s) => s,
            };
            let state = ChainState::new(target, m, rng, counter)?;
            let (outcome, mut state) = tune_mh(state, &base, initial, tuning(cfg, cfg.mh_rate), target, rng, counter)?;
            rec.trace.eot = counter.get();
            let step = base.scaled(outcome.scale);
            for _ in 0..cfg.burn_in {
                state = mh_step(&state, &step, target, rng, counter)?.0;
            }
            while !rec.done() {
                state = mh_step(&state, &step, target, rng, counter)?.0;
                rec.record(&state.theta)?;
            }
        }
        SamplerId::Hmc(variant) => {
            let target = prepared.model.exact()?;
            let mass = MassMatrix::from_variant(variant, &init.approx_cov()?, 1.0)?;
            let mut state = ChainState::with_grad(target, m, counter)?;
            let settings = |eps| HmcSettings {
                step_size: eps,
                max_leapfrog: cfg.max_leapfrog,
                jitter: true,
            };
            let outcome = tune_scale(
                |eps, steps| {
                    let mut accepted = 0;
                    for _ in 0..steps {
                        let (next, acc) = hmc_step(&state, &mass, settings(eps), target, rng, counter)?;
                        state = next;
                        accepted += acc as usize;
                    }
                    Ok(accepted as f64 / steps as f64)
                },
                cfg.hmc_initial_step,
                tuning(cfg, cfg.hmc_rate),
                counter,
            )?;
            rec.trace.eot = counter.get();
            let s = settings(outcome.scale);
            for _ in 0..cfg.burn_in {
                state = hmc_step(&state, &mass, s, target, rng, counter)?.0;
            }
            while !rec.done() {
                state = hmc_step(&state, &mass, s, target, rng, counter)?.0;
                rec.record(&state.theta)?;
            }
        }
        SamplerId::Nuts(variant) => {
            let target = prepared.model.exact()?;
            let mass = MassMatrix::from_variant(variant, &init.approx_cov()?, 1.0)?;
            let mut state = ChainState::with_grad(target, m, counter)?;
            for _ in 0..cfg.burn_in {
                state = nuts_step(&state, &mass, cfg.nuts_step, cfg.max_depth, target, rng, counter)?.0;
            }
            while !rec.done() {
                state = nuts_step(&state, &mass, cfg.nuts_step, cfg.max_depth, target, rng, counter)?.0;
                rec.record(&state.theta)?;
            }
        }
        SamplerId::NutsDa(variant) => {
            let target = prepared.model.exact()?;
            let mass = MassMatrix::from_variant(variant, &init.approx_cov()?, 1.0)?;
            let state = ChainState::with_grad(target, m, counter)?;
            let da = DualAveragingParams {
                gamma: cfg.da_gamma,
                t0: cfg.da_t0,
                kappa: cfg.da_kappa,
                target_accept: cfg.da_delta,
            };
            let mut seen = 0usize;
            let mut err = None;
            let outcome = nutsda_run(
                &state,
                &mass,
                da,
                cfg.hmc_initial_step,
                cfg.nutsda_adapt,
                usize::MAX,
                cfg.max_depth,
                target,
                rng,
                counter,
                |s, _, _| {
                    seen += 1;
                    if seen > cfg.burn_in {
                        if let Err(e) = rec.record(&s.theta) {
                            err = Some(e);
                            return ControlFlow::Break(());
                        }
                    }
                    if rec.done() {
                        ControlFlow::Break(())
                    } else {
                        ControlFlow::Continue(())
                    }
                },
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            rec.trace.eot = outcome.eot_ops;
        }
        SamplerId::Slice => {
            let target = prepared.model.exact()?;
            let mut state = ChainState::new(target, m, rng, counter)?;
            for _ in 0..cfg.burn_in {
                state = slice_step(&state, cfg.slice_width, target, rng, counter)?;
            }
            while !rec.done() {
                state = slice_step(&state, cfg.slice_width, target, rng, counter)?;
                rec.record(&state.theta)?;
            }
        }
        other => unreachable!("{} is not an MCMC sampler", other.name()),
    }
    Ok(rec.trace)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub init_cost: u64,
    /// Successful replicates, by replicate index.
    pub traces: Vec<(u64, ConvergenceTrace)>,
    pub failures: Vec<(u64, String)>,
    pub curve: IqrCurve,
}

impl ExperimentOutput {
    pub fn trace_list(&self) -> Vec<ConvergenceTrace> {
        self.traces.iter().map(|(_, t)| t.clone()).collect()
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start thread pool: {e}")))
}

/// Resolves `cfg`, prepares the shared initialization and runs every
/// replicate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cfg = cfg.resolved()?;
    let prepared = prepare(&cfg)?;
    run_prepared(&cfg, &prepared)
}

/// Resolves `cfg` and runs its replicates in parallel. Replicate `r` draws
/// from stream `r` of the run seed, so results do not depend on the thread
/// count.
pub fn run_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<ExperimentOutput> {
    let cfg = &cfg.resolved()?;
    let adjusted;
    let prepared = match &prepared.model {
        Model::Classification(p) if p.approx != cfg.approx => {
            return Err(Error::config(
                "model.approx",
                "differs from the approximation the shared initialization was built with",
            ))
        }
        // the initialization depends on the approximation only, so a
        // different importance sample count reuses it
        Model::Classification(p) if p.n_imp != cfg.n_imp => {
            if cfg.n_imp == 0 {
                return Err(Error::config("model.n_imp", "must be at least 1"));
            }
            let mut q = prepared.clone();
            if let Model::Classification(p) = &mut q.model {
                p.n_imp = cfg.n_imp;
            }
            adjusted = q;
            &adjusted
        }
        _ => prepared,
    };
    let pool = thread_pool(cfg.threads)?;
    let results: Vec<(u64, Result<ConvergenceTrace>)> = pool.install(|| {
        (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| (r, run_replicate(cfg, prepared, r)))
            .collect()
    });
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(t) => traces.push((r, t)),
            Err(e) => {
                log::warn!("{}: replicate {r} failed and is excluded: {e}", cfg.sampler.name());
                failures.push((r, e.to_string()));
            }
        }
    }
    if traces.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "every replicate of {} failed; first error: {}",
            cfg.sampler.name(),
            failures.first().map_or("none", |f| f.1.as_str())
        )));
    }
    let list: Vec<ConvergenceTrace> = traces.iter().map(|(_, t)| t.clone()).collect();
    let grid = trace_grid(&list, cfg.budget, cfg.grid_points)?;
    let curve = iqr_aggregate(&list, &grid)?;
    Ok(ExperimentOutput {
        config: cfg.clone(),
        init_cost: prepared.init.op_cost,
        traces,
        failures,
        curve,
    })
}

/// Runs every variant of `cfg.variants` (or `cfg.sampler` alone when the
/// list is empty) from one shared initialization. Variant failures are
/// isolated.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<(SamplerId, Result<ExperimentOutput>)>> {
    let base = cfg.resolved()?;
    let prepared = prepare(&base)?;
    let variants = if cfg.variants.is_empty() {
        vec![cfg.sampler]
    } else {
        cfg.variants.clone()
    };
    Ok(variants
        .into_iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.sampler = v;
            let res = run_prepared(&c, &prepared);
            (v, res)
        })
        .collect())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let mut s = String::from("cubic_ops,estimate\n");
    for (o, v) in trace.points() {
        writeln!(s, "{o},{v}").unwrap();
    }
    s
}

pub fn aggregate_csv(curve: &IqrCurve) -> String {
    let mut s = String::from("cubic_ops,q1,median,q3\n");
    for p in &curve.points {
        writeln!(s, "{},{},{},{}", p.ops, p.q1, p.median, p.q3).unwrap();
    }
    s
}

/// Resolved config followed by comment lines with the initialization cost,
/// each replicate's end-of-tuning count and any failures. Comments keep the
/// manifest loadable as a config.
pub fn manifest(out: &ExperimentOutput) -> String {
    let mut s = out.config.to_text();
    writeln!(s, "# init_cost = {}", out.init_cost).unwrap();
    for (r, t) in &out.traces {
        writeln!(s, "# eot.{r:03} = {}", t.eot).unwrap();
    }
    for (r, e) in &out.failures {
        writeln!(s, "# failed.{r:03} = {e}").unwrap();
    }
    s
}

/// Writes `trace_NNN.csv` per successful replicate, `aggregate.csv` and
/// `manifest.txt` into `dir`.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    create_dir(dir)?;
    for (r, t) in &out.traces {
        write_file(&dir.join(format!("trace_{r:03}.csv")), &trace_csv(t))?;
    }
    write_file(&dir.join("aggregate.csv"), &aggregate_csv(&out.curve))?;
    write_file(&dir.join("manifest.txt"), &manifest(out))
}

/// Median curves of several variants on a common grid, one column per
/// variant.
pub fn comparison_csv(outputs: &[(SamplerId, &ExperimentOutput)], budget: u64, points: usize) -> Result<String> {
    let all: Vec<ConvergenceTrace> = outputs.iter().flat_map(|(_, o)| o.trace_list()).collect();
    let grid = trace_grid(&all, budget, points)?;
    let medians = outputs
        .iter()
        .map(|(_, o)| iqr_aggregate(&o.trace_list(), &grid))
        .collect::<Result<Vec<_>>>()?;
    let mut s = String::from("cubic_ops");
    for (v, _) in outputs {
        write!(s, ",{}", v.name()).unwrap();
    }
    s.push('\n');
    for (i, g) in grid.iter().enumerate() {
        write!(s, "{g}").unwrap();
        for c in &medians {
            write!(s, ",{}", c.points[i].median).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

/// Writes each variant's outputs into `dir/<variant>/` and the combined
/// `comparison.csv` of successful variants into `dir`.
pub fn write_sweep(dir: &Path, cfg: &ExperimentConfig, results: &[(SamplerId, Result<ExperimentOutput>)]) -> Result<()> {
    create_dir(dir)?;
    let mut ok = Vec::new();
    for (v, res) in results {
        if let Ok(out) = res {
            write_outputs(&dir.join(v.name()), out)?;
            ok.push((*v, out));
        }
    }
    if !ok.is_empty() {
        write_file(&dir.join("comparison.csv"), &comparison_csv(&ok, cfg.budget, cfg.grid_points)?)?;
    }
    Ok(())
}
