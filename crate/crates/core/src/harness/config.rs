//! Line-oriented `section.key = value` experiment configuration.
//!
//! Keys whose value is `auto` are filled from the kernel family and sampler
//! when the config is resolved; a resolved config written back out is
//! itself a valid config that reproduces the run.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gp::{ApproxKind, KernelFamily, Task};
use crate::init::ProposalVariant;
use crate::is::{CovarianceMode, Schedule};
use crate::mcmc::MassVariant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerId {
    Mh(ProposalVariant),
    PmMh,
    Hmc(MassVariant),
    Nuts(MassVariant),
    NutsDa(MassVariant),
    Slice,
    Amis(CovarianceMode),
    Mamis(CovarianceMode),
    AmisMamis,
    MamisP,
    PmAmis,
}

fn suffix_proposal(s: &str) -> Option<ProposalVariant> {
    match s {
        "i" => Some(ProposalVariant::Identity),
        "d" => Some(ProposalVariant::Diag),
        "h" => Some(ProposalVariant::Full),
        _ => None,
    }
}

fn suffix_mass(s: &str) -> Option<MassVariant> {
    match s {
        "i" => Some(MassVariant::Identity),
        "d" => Some(MassVariant::DiagInverseCov),
        "h" => Some(MassVariant::InverseCov),
        _ => None,
    }
}

fn mass_suffix(m: MassVariant) -> &'static str {
    match m {
        MassVariant::Identity => "i",
        MassVariant::DiagInverseCov => "d",
        MassVariant::InverseCov => "h",
    }
}

impl SamplerId {
    pub fn name(self) -> String {
        match self {
            SamplerId::Mh(v) => format!(
                "mh-{}",
                match v {
                    ProposalVariant::Identity => "i",
                    ProposalVariant::Diag => "d",
                    ProposalVariant::Full => "h",
                }
            ),
            SamplerId::PmMh => "pm-mh".into(),
            SamplerId::Hmc(m) => format!("hmc-{}", mass_suffix(m)),
            SamplerId::Nuts(m) => format!("nuts-{}", mass_suffix(m)),
            SamplerId::NutsDa(m) => format!("nutsda-{}", mass_suffix(m)),
            SamplerId::Slice => "ss".into(),
            SamplerId::Amis(CovarianceMode::Full) => "amis".into(),
            SamplerId::Amis(CovarianceMode::Diagonal) => "amis-d".into(),
            SamplerId::Mamis(CovarianceMode::Full) => "mamis".into(),
            SamplerId::Mamis(CovarianceMode::Diagonal) => "mamis-d".into(),
            SamplerId::AmisMamis => "amis-mamis".into(),
            SamplerId::MamisP => "mamis-p".into(),
            SamplerId::PmAmis => "pm-amis".into(),
        }
    }

    pub fn is_importance_sampler(self) -> bool {
        matches!(
            self,
            SamplerId::Amis(_) | SamplerId::Mamis(_) | SamplerId::AmisMamis | SamplerId::MamisP | SamplerId::PmAmis
        )
    }

    /// Samplers that need an exact target (gradients or slice levels).
    pub fn needs_exact_target(self) -> bool {
        matches!(
            self,
            SamplerId::Hmc(_) | SamplerId::Nuts(_) | SamplerId::NutsDa(_) | SamplerId::Slice
        )
    }

    pub fn is_pseudo_marginal(self) -> bool {
        matches!(self, SamplerId::PmMh | SamplerId::PmAmis)
    }
}

impl FromStr for SamplerId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        let parsed = match s.as_str() {
            "pm-mh" => Some(SamplerId::PmMh),
            "ss" | "slice" => Some(SamplerId::Slice),
            "amis" => Some(SamplerId::Amis(CovarianceMode::Full)),
            "amis-d" => Some(SamplerId::Amis(CovarianceMode::Diagonal)),
            "mamis" => Some(SamplerId::Mamis(CovarianceMode::Full)),
            "mamis-d" => Some(SamplerId::Mamis(CovarianceMode::Diagonal)),
            "amis-mamis" => Some(SamplerId::AmisMamis),
            "mamis-p" => Some(SamplerId::MamisP),
            "pm-amis" => Some(SamplerId::PmAmis),
            other => other.split_once('-').and_then(|(family, v)| match family {
                "mh" => suffix_proposal(v).map(SamplerId::Mh),
                "hmc" => suffix_mass(v).map(SamplerId::Hmc),
                "nuts" => suffix_mass(v).map(SamplerId::Nuts),
                "nutsda" => suffix_mass(v).map(SamplerId::NutsDa),
                _ => None,
            }),
        };
        parsed.ok_or_else(|| format!("unknown sampler `{s}`"))
    }
}

/// A value that may be left for the resolver to fill in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Auto<T> {
    Auto,
    Value(T),
}

impl<T: FromStr> FromStr for Auto<T> {
    type Err = T::Err;

    fn from_str(s: &str) -> std::result::Result<Self, T::Err> {
        if s.trim().eq_ignore_ascii_case("auto") {
            Ok(Auto::Auto)
        } else {
            s.trim().parse().map(Auto::Value)
        }
    }
}

impl<T: std::fmt::Display> std::fmt::Display for Auto<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => v.fmt(f),
        }
    }
}

impl<T: Copy> Auto<T> {
    fn or(self, default: T) -> T {
        match self {
            Auto::Auto => default,
            Auto::Value(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicates: usize,
    /// 0 means one thread per available core.
    pub threads: usize,
    /// Stop each replicate once the counter reaches this many cubic ops.
    pub budget: u64,
    pub grid_points: usize,
    pub output: PathBuf,

    /// Empty path selects a synthetic dataset.
    pub data_path: PathBuf,
    pub task: Task,
    /// 0 keeps all rows.
    pub subsample: usize,
    pub data_seed: u64,
    pub positive_class: Auto<f64>,
    pub synthetic_n: usize,
    pub synthetic_d: usize,

    pub kernel: KernelFamily,
    pub prior_sd: f64,
    pub approx: ApproxKind,
    pub n_imp: usize,

    pub init_tol: f64,
    pub init_max_iter: usize,

    pub sampler: SamplerId,
    pub variants: Vec<SamplerId>,

    pub is_iterations: Auto<usize>,
    pub is_base: Auto<usize>,
    pub is_slope: Auto<usize>,
    pub prior_strength: f64,
    /// AMIS samples spent before handing off to MAMIS.
    pub handoff_samples: Auto<usize>,
    /// AMIS iterations run before switching the adaptation to MAMIS.
    pub switch_to_mamis_at: Option<usize>,

    pub burn_in: usize,
    pub mh_rate: f64,
    pub hmc_rate: f64,
    pub tune_batch: usize,
    pub tune_tol: f64,
    pub tune_max_batches: usize,
    pub mh_initial_scale: Auto<f64>,
    pub hmc_initial_step: f64,
    pub max_leapfrog: usize,
    pub nuts_step: f64,
    pub max_depth: usize,
    pub nutsda_adapt: usize,
    pub da_gamma: f64,
    pub da_t0: f64,
    pub da_kappa: f64,
    pub da_delta: f64,
    pub slice_width: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            replicates: 20,
            threads: 0,
            budget: 20_000,
            grid_points: 200,
            output: PathBuf::from("output"),
            data_path: PathBuf::new(),
            task: Task::Regression,
            subsample: 0,
            data_seed: 0,
            positive_class: Auto::Auto,
            synthetic_n: 100,
            synthetic_d: 2,
            kernel: KernelFamily::Rbf,
            prior_sd: 3.0,
            approx: ApproxKind::Ep,
            n_imp: 64,
            init_tol: 1e-5,
            init_max_iter: 200,
            sampler: SamplerId::Amis(CovarianceMode::Full),
            variants: Vec::new(),
            is_iterations: Auto::Auto,
            is_base: Auto::Auto,
            is_slope: Auto::Auto,
            prior_strength: 10.0,
            handoff_samples: Auto::Auto,
            switch_to_mamis_at: None,
            burn_in: 0,
            mh_rate: 0.25,
            hmc_rate: 0.65,
            tune_batch: 200,
            tune_tol: 0.05,
            tune_max_batches: 20,
            mh_initial_scale: Auto::Auto,
            hmc_initial_step: 0.1,
            max_leapfrog: 10,
            nuts_step: 0.1,
            max_depth: 10,
            nutsda_adapt: 1000,
            da_gamma: 0.05,
            da_t0: 30.0,
            da_kappa: 0.75,
            da_delta: 0.65,
            slice_width: 1.5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{}`: {e}", value.trim())))
}

fn list(values: &[SamplerId]) -> String {
    values.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
}

/// Per-iteration sizes and iteration count: `(T, base, slope)` with
/// `N_t = base + slope·t` for `t = 1..=T`.
pub fn default_schedule(sampler: SamplerId, kernel: KernelFamily) -> (usize, usize, usize) {
    match (sampler, kernel) {
        (SamplerId::PmAmis, _) => (60, 400, 0),
        (SamplerId::Amis(_), KernelFamily::Rbf) => (1120, 25, 0),
        (SamplerId::Amis(_), KernelFamily::Ard) => (280, 100, 0),
        (SamplerId::AmisMamis, KernelFamily::Ard) => (5, 0, 1000),
        (_, KernelFamily::Rbf) => (46, 0, 26),
        (_, KernelFamily::Ard) => (5, 3000, 1000),
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "run.seed",
        "run.replicates",
        "run.threads",
        "run.budget",
        "run.grid_points",
        "run.output",
        "data.path",
        "data.task",
        "data.subsample",
        "data.seed",
        "data.positive_class",
        "data.synthetic_n",
        "data.synthetic_d",
        "model.kernel",
        "model.prior_sd",
        "model.approx",
        "model.n_imp",
        "init.tol",
        "init.max_iter",
        "sampler.id",
        "sweep.variants",
        "is.iterations",
        "is.base",
        "is.slope",
        "is.prior_strength",
        "is.handoff_samples",
        "is.switch_to_mamis_at",
        "mcmc.burn_in",
        "mcmc.mh_rate",
        "mcmc.hmc_rate",
        "mcmc.tune_batch",
        "mcmc.tune_tol",
        "mcmc.tune_max_batches",
        "mcmc.mh_initial_scale",
        "hmc.initial_step",
        "hmc.max_leapfrog",
        "nuts.step_size",
        "nuts.max_depth",
        "nutsda.n_adapt",
        "nutsda.gamma",
        "nutsda.t0",
        "nutsda.kappa",
        "nutsda.delta",
        "slice.width",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim();
        let v = value.trim();
        match k {
            "run.seed" => self.seed = parse(k, v)?,
            "run.replicates" => self.replicates = parse(k, v)?,
            "run.threads" => self.threads = parse(k, v)?,
            "run.budget" => self.budget = parse(k, v)?,
            "run.grid_points" => self.grid_points = parse(k, v)?,
            "run.output" => self.output = PathBuf::from(v),
            "data.path" => self.data_path = PathBuf::from(v),
            "data.task" => self.task = parse(k, v)?,
            "data.subsample" => self.subsample = parse(k, v)?,
            "data.seed" => self.data_seed = parse(k, v)?,
            "data.positive_class" => self.positive_class = parse(k, v)?,
            "data.synthetic_n" => self.synthetic_n = parse(k, v)?,
            "data.synthetic_d" => self.synthetic_d = parse(k, v)?,
            "model.kernel" => self.kernel = parse(k, v)?,
            "model.prior_sd" => self.prior_sd = parse(k, v)?,
            "model.approx" => self.approx = parse(k, v)?,
            "model.n_imp" => self.n_imp = parse(k, v)?,
            "init.tol" => self.init_tol = parse(k, v)?,
            "init.max_iter" => self.init_max_iter = parse(k, v)?,
            "sampler.id" => self.sampler = parse(k, v)?,
            "sweep.variants" => {
                self.variants = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(k, s))
                    .collect::<Result<_>>()?
            }
            "is.iterations" => self.is_iterations = parse(k, v)?,
            "is.base" => self.is_base = parse(k, v)?,
            "is.slope" => self.is_slope = parse(k, v)?,
            "is.prior_strength" => self.prior_strength = parse(k, v)?,
            "is.handoff_samples" => self.handoff_samples = parse(k, v)?,
            "is.switch_to_mamis_at" => {
                self.switch_to_mamis_at = if v.eq_ignore_ascii_case("none") { None } else { Some(parse(k, v)?) }
            }
            "mcmc.burn_in" => self.burn_in = parse(k, v)?,
            "mcmc.mh_rate" => self.mh_rate = parse(k, v)?,
            "mcmc.hmc_rate" => self.hmc_rate = parse(k, v)?,
            "mcmc.tune_batch" => self.tune_batch = parse(k, v)?,
            "mcmc.tune_tol" => self.tune_tol = parse(k, v)?,
            "mcmc.tune_max_batches" => self.tune_max_batches = parse(k, v)?,
            "mcmc.mh_initial_scale" => self.mh_initial_scale = parse(k, v)?,
            "hmc.initial_step" => self.hmc_initial_step = parse(k, v)?,
            "hmc.max_leapfrog" => self.max_leapfrog = parse(k, v)?,
            "nuts.step_size" => self.nuts_step = parse(k, v)?,
            "nuts.max_depth" => self.max_depth = parse(k, v)?,
            "nutsda.n_adapt" => self.nutsda_adapt = parse(k, v)?,
            "nutsda.gamma" => self.da_gamma = parse(k, v)?,
            "nutsda.t0" => self.da_t0 = parse(k, v)?,
            "nutsda.kappa" => self.da_kappa = parse(k, v)?,
            "nutsda.delta" => self.da_delta = parse(k, v)?,
            "slice.width" => self.slice_width = parse(k, v)?,
            _ => return Err(Error::config(k, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "run.seed" => self.seed.to_string(),
            "run.replicates" => self.replicates.to_string(),
            "run.threads" => self.threads.to_string(),
            "run.budget" => self.budget.to_string(),
            "run.grid_points" => self.grid_points.to_string(),
            "run.output" => self.output.display().to_string(),
            "data.path" => self.data_path.display().to_string(),
            "data.task" => self.task.name().into(),
            "data.subsample" => self.subsample.to_string(),
            "data.seed" => self.data_seed.to_string(),
            "data.positive_class" => self.positive_class.to_string(),
            "data.synthetic_n" => self.synthetic_n.to_string(),
            "data.synthetic_d" => self.synthetic_d.to_string(),
            "model.kernel" => self.kernel.name().into(),
            "model.prior_sd" => self.prior_sd.to_string(),
            "model.approx" => self.approx.name().into(),
            "model.n_imp" => self.n_imp.to_string(),
            "init.tol" => self.init_tol.to_string(),
            "init.max_iter" => self.init_max_iter.to_string(),
            "sampler.id" => self.sampler.name(),
            "sweep.variants" => list(&self.variants),
            "is.iterations" => self.is_iterations.to_string(),
            "is.base" => self.is_base.to_string(),
            "is.slope" => self.is_slope.to_string(),
            "is.prior_strength" => self.prior_strength.to_string(),
            "is.handoff_samples" => self.handoff_samples.to_string(),
            "is.switch_to_mamis_at" => self.switch_to_mamis_at.map_or("none".into(), |v| v.to_string()),
            "mcmc.burn_in" => self.burn_in.to_string(),
            "mcmc.mh_rate" => self.mh_rate.to_string(),
            "mcmc.hmc_rate" => self.hmc_rate.to_string(),
            "mcmc.tune_batch" => self.tune_batch.to_string(),
            "mcmc.tune_tol" => self.tune_tol.to_string(),
            "mcmc.tune_max_batches" => self.tune_max_batches.to_string(),
            "mcmc.mh_initial_scale" => self.mh_initial_scale.to_string(),
            "hmc.initial_step" => self.hmc_initial_step.to_string(),
            "hmc.max_leapfrog" => self.max_leapfrog.to_string(),
            "nuts.step_size" => self.nuts_step.to_string(),
            "nuts.max_depth" => self.max_depth.to_string(),
            "nutsda.n_adapt" => self.nutsda_adapt.to_string(),
            "nutsda.gamma" => self.da_gamma.to_string(),
            "nutsda.t0" => self.da_t0.to_string(),
            "nutsda.kappa" => self.da_kappa.to_string(),
            "nutsda.delta" => self.da_delta.to_string(),
            "slice.width" => self.slice_width.to_string(),
            _ => return Err(Error::config(key, "unknown key")),
        })
    }

    /// Every key with its current value, one `key = value` per line.
    /// `f64` values use the shortest representation that round-trips.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("listed key")).unwrap();
        }
        out
    }

    /// Fills every `auto` value for the configured sampler and validates
    /// the combination.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let (t, base, slope) = default_schedule(c.sampler, c.kernel);
        c.is_iterations = Auto::Value(c.is_iterations.or(t));
        c.is_base = Auto::Value(c.is_base.or(base));
        c.is_slope = Auto::Value(c.is_slope.or(slope));
        let amis_n = default_schedule(SamplerId::Amis(CovarianceMode::Full), c.kernel).1;
        c.handoff_samples = Auto::Value(c.handoff_samples.or(13_000 / amis_n * amis_n));
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, "must be positive"))
            }
        };
        positive("run.replicates", self.replicates >= 1)?;
        positive("run.budget", self.budget >= 1)?;
        positive("run.grid_points", self.grid_points >= 1)?;
        positive("model.prior_sd", self.prior_sd > 0.0)?;
        positive("model.n_imp", self.n_imp >= 1)?;
        positive("init.tol", self.init_tol > 0.0)?;
        positive("mcmc.tune_batch", self.tune_batch >= 1)?;
        positive("mcmc.tune_max_batches", self.tune_max_batches >= 1)?;
        positive("hmc.max_leapfrog", self.max_leapfrog >= 1)?;
        positive("hmc.initial_step", self.hmc_initial_step > 0.0)?;
        positive("nuts.step_size", self.nuts_step > 0.0)?;
        positive("nuts.max_depth", self.max_depth >= 1)?;
        positive("slice.width", self.slice_width > 0.0)?;
        positive("is.prior_strength", self.prior_strength > 0.0)?;
        if self.data_path.as_os_str().is_empty() {
            positive("data.synthetic_n", self.synthetic_n >= 1)?;
            positive("data.synthetic_d", self.synthetic_d >= 1)?;
        }
        for rate in [("mcmc.mh_rate", self.mh_rate), ("mcmc.hmc_rate", self.hmc_rate)] {
            if !(rate.1 > 0.0 && rate.1 < 1.0) {
                return Err(Error::config(rate.0, "must lie in (0, 1)"));
            }
        }
        if let Auto::Value(s) = self.mh_initial_scale {
            positive("mcmc.mh_initial_scale", s > 0.0)?;
        }
        if let (Auto::Value(t), Auto::Value(b), Auto::Value(s)) = (self.is_iterations, self.is_base, self.is_slope) {
            Schedule::affine(t, b, s).map_err(|e| Error::config("is.iterations", e.to_string()))?;
        }
        for &s in std::iter::once(&self.sampler).chain(&self.variants) {
            self.check_sampler(s)?;
        }
        Ok(())
    }

    fn check_sampler(&self, s: SamplerId) -> Result<()> {
        let key = "sampler.id";
        match self.task {
            Task::Regression if s.is_pseudo_marginal() => {
                Err(Error::config(key, format!("{} needs a classification task", s.name())))
            }
            Task::Classification if s.needs_exact_target() => Err(Error::config(
                key,
                format!("{} needs an exact target and only runs on regression", s.name()),
            )),
            _ => Ok(()),
        }
    }

    /// Schedule for the configured sampler; errors unless resolved.
    pub fn schedule(&self) -> Result<Schedule> {
        match (self.is_iterations, self.is_base, self.is_slope) {
            (Auto::Value(t), Auto::Value(b), Auto::Value(s)) => Schedule::affine(t, b, s),
            _ => Err(Error::config("is.iterations", "unresolved schedule")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_names_round_trip() {
        for name in [
            "mh-i", "mh-d", "mh-h", "pm-mh", "hmc-i", "hmc-d", "hmc-h", "nuts-i", "nuts-d", "nuts-h", "nutsda-i",
            "nutsda-d", "nutsda-h", "ss", "amis", "amis-d", "mamis", "mamis-d", "amis-mamis", "mamis-p", "pm-amis",
        ] {
            assert_eq!(name.parse::<SamplerId>().unwrap().name(), name);
        }
        assert!("mh-x".parse::<SamplerId>().is_err());
    }

    #[test]
    fn kernel_dependent_schedule_defaults() {
        let mut c = ExperimentConfig::default();
        let sched = |c: &ExperimentConfig| {
            let r = c.resolved().unwrap().schedule().unwrap();
            (r.iterations, r.size(0), r.size(1))
        };
        assert_eq!(sched(&c), (1120, 25, 25));
        c.sampler = SamplerId::Mamis(CovarianceMode::Full);
        assert_eq!(sched(&c), (46, 26, 52));
        c.kernel = KernelFamily::Ard;
        assert_eq!(sched(&c), (5, 4000, 5000));
        c.sampler = SamplerId::Amis(CovarianceMode::Full);
        assert_eq!(sched(&c), (280, 100, 100));
        c.sampler = SamplerId::PmAmis;
        c.task = Task::Classification;
        assert_eq!(sched(&c), (60, 400, 400));
        c.sampler = SamplerId::AmisMamis;
        let r = c.resolved().unwrap();
        assert_eq!(r.handoff_samples, Auto::Value(13_000));
        assert_eq!(sched(&c), (5, 1000, 2000));
    }

    #[test]
    fn unknown_keys_and_bad_values_name_the_key() {
        let err = ExperimentConfig::parse_text("run.sed = 3").unwrap_err();
        assert!(err.to_string().contains("run.sed"));
        let err = ExperimentConfig::parse_text("run.seed = x").unwrap_err();
        assert!(err.to_string().contains("run.seed"));
        let err = ExperimentConfig::parse_text("no equals sign").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn incompatible_sampler_is_rejected() {
        let c = ExperimentConfig::parse_text("data.task = classification\nsampler.id = nuts-h").unwrap();
        assert!(c.resolved().is_err());
        let c = ExperimentConfig::parse_text("sampler.id = pm-amis").unwrap();
        assert!(c.resolved().is_err());
    }

    #[test]
    fn text_round_trips() {
        let mut c = ExperimentConfig::parse_text(
            "# comment\nrun.seed = 9\nsweep.variants = mh-h, amis\nmodel.prior_sd = 0.1\ndata.positive_class = 2",
        )
        .unwrap();
        c = c.resolved().unwrap();
        let back = ExperimentConfig::parse_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.variants.len(), 2);
    }
}
