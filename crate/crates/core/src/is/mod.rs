//! Adaptive importance sampling: AMIS with deterministic-mixture weights,
//! the modified variant that adapts from the latest iteration only, the
//! AMIS-to-MAMIS handoff and the prior-regularized update.

mod adapt;
mod engine;
mod proposal;
mod store;

pub use adapt::{
    mamis_p_update, moment_match, proposal_from_moments, weighted_moments, CovarianceMode,
};
pub use engine::{amis_mamis_run, amis_run, mamis_run, run_adaptive, Adaptation, HandoffRun, IsSettings};
pub use proposal::{ProposalParams, Schedule};
pub use store::{
    effective_sample_size, effective_sample_size_log, log_normalizing_constant,
    self_normalized_expectation, weighted_mean, WeightedSampleStore,
};
