//! Shared inputs for the benchmarks.

use coac_core::sim::generate_dataset;
use coac_core::{Dataset, ExperimentConfig};

/// Simulated dataset from the default experiment at one length and noise level.
pub fn simulated(n: usize, sigma_sq: f64) -> Dataset {
    generate_dataset(&ExperimentConfig::default(), n, sigma_sq, 0).expect("valid simulation inputs")
}
