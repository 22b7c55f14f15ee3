//! Value-of-information influence diagnostics.
//!
//! A data block's influence is measured by how much a quadratic-loss Bayes
//! action moves when the block is removed (retrospective EVSI), set against
//! how much it would be expected to move before the block is seen
//! (prospective EVSI). Their ratio, EVOIR, has expectation one under the
//! model.

pub mod error;
pub mod glmm;
pub mod linreg;
pub mod mc;
pub mod oracle;
pub mod seed;
pub mod stats;
pub mod voi;

pub use error::{ErrorKind, Result, VoiError};
pub use mc::{
    prospective_evsi_knn, prospective_evsi_naive, retrospective_evsi_mc, Completion, Estimate,
    MetaModelConfig, PosteriorSampler, SeedPlan,
};
pub use voi::{
    bayes_action, evoir, evoir_calibration_p, prospective_evsi_mc, quadratic_loss,
    retrospective_evsi, ActionVector, InfluenceRecord, LossSpec, PosteriorDraws,
};
