use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::regression::Dataset;

/// Independent stream for one trial: the master seed picks the key and the
/// trial id picks the stream, so trials can run in any order.
pub fn trial_rng(master_seed: u64, trial_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_id);
    rng
}

/// Seed for the fold shuffle of one trial, kept apart from the data stream.
pub fn fold_seed(master_seed: u64, trial_id: u64) -> u64 {
    trial_rng(master_seed ^ 0x9e37_79b9_7f4a_7c15, trial_id).next_u64()
}

/// Noise-free polynomial output `sum_j theta_j x^(j+1)`.
pub fn truth_output(theta: &[f64], x: f64) -> f64 {
    theta.iter().rev().fold(0.0, |acc, t| (acc + t) * x)
}

/// Draw `n` samples for one trial. Sample `i` takes `x_i` uniform on the
/// configured interval and then one standard normal for its noise, so a
/// shorter dataset is a prefix of a longer one from the same trial.
pub fn generate_dataset(
    config: &ExperimentConfig,
    n: usize,
    sigma_sq: f64,
    trial_id: u64,
) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be >= 0, got {sigma_sq}"
        )));
    }
    let (lo, hi) = config.x_interval;
    let sigma = sigma_sq.sqrt();
    let mut rng = trial_rng(config.master_seed, trial_id);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut y_bar = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = rng.random_range(lo..hi);
        let z: f64 = rng.sample(StandardNormal);
        let clean = truth_output(&config.truth_theta, xi);
        x.push(xi);
        y_bar.push(clean);
        y.push(clean + sigma * z);
    }
    Dataset::new(
        Vector::new(x)?,
        Vector::new(y)?,
        Some(Vector::new(y_bar)?),
        (sigma_sq > 0.0).then_some(sigma_sq),
    )
}

/// Population variance of the noise-free targets.
pub fn signal_variance(dataset: &Dataset) -> Result<f64> {
    let y_bar = dataset
        .y_bar
        .as_ref()
        .ok_or(Error::MissingGroundTruth("y_bar"))?;
    let n = y_bar.len() as f64;
    let mean = y_bar.iter().sum::<f64>() / n;
    Ok(y_bar.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}
