//! MCMC baselines: random-walk and pseudo-marginal Metropolis-Hastings,
//! Hamiltonian Monte Carlo, NUTS with optional dual averaging, and
//! component-wise slice sampling.

mod hmc;
mod mh;
mod nuts;
mod slice;

pub use hmc::{hmc_step, leapfrog, HmcSettings, MassMatrix, MassVariant, PhasePoint};
pub use mh::{mh_step, tune_mh, tune_scale, ChainState, TuningOutcome, TuningSettings};
pub use nuts::{
    find_reasonable_epsilon, nuts_step, nutsda_run, DualAveraging, DualAveragingParams,
    NutsDaOutcome, NutsStats, DEFAULT_MAX_DEPTH,
};
pub use slice::{slice_step, MAX_SHRINK};
