//! Shared fixtures for the benchmarks.

use evoir_core::glmm::{ClinicData, McmcConfig, SyntheticSpec};

/// The default seventeen-site synthetic clinic data set.
pub fn clinic_data(seed: u64) -> ClinicData {
    SyntheticSpec::default()
        .generate(seed)
        .and_then(|s| s.clinic_data())
        .expect("default synthetic recipe is valid")
}

/// A single short chain, long enough to leave the adaptation phase.
pub fn short_mcmc(iterations: usize) -> McmcConfig {
    McmcConfig {
        chains: 1,
        iterations,
        burn_in: iterations / 2,
        thin: 1,
        ..McmcConfig::default()
    }
}
