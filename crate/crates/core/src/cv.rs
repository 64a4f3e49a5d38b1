//! k-fold cross-validation order selection, the baseline the bound-based
//! selection is compared against.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{fit, Dataset, FitResult, KernelSpec};
use crate::selection::argmin_first;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub m_grid: Vec<usize>,
    /// Held-out MSE per order, averaged over folds.
    pub cv_error_curve: Vec<f64>,
    pub m_star_hat: usize,
    pub fold_sizes: Vec<usize>,
    /// Chosen order refit on all rows.
    pub refit: FitResult,
    pub wall_time_ns: u64,
}

/// Shuffle `0..n` with `seed` and cut it into `k` folds whose sizes differ
/// by at most one.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::InvalidParameter(format!(
            "need 2 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Pick the order in `1..=max_order` with the smallest k-fold held-out MSE
/// (smallest order on ties), then refit it on the full dataset.
pub fn kfold_select_order(
    dataset: &Dataset,
    max_order: usize,
    k: usize,
    kernel: &KernelSpec,
    seed: u64,
) -> Result<CvReport> {
    let start = Instant::now();
    if max_order == 0 {
        return Err(Error::InvalidParameter(
            "maximum order must be at least 1".into(),
        ));
    }
    let n = dataset.n();
    let folds = kfold_partition(n, k, seed)?;
    let mut in_fold = vec![usize::MAX; n];
    for (f, rows) in folds.iter().enumerate() {
        for &i in rows {
            in_fold[i] = f;
        }
    }
    let mut sums = vec![0.0; max_order];
    for (f, held) in folds.iter().enumerate() {
        let train_rows: Vec<usize> = (0..n).filter(|&i| in_fold[i] != f).collect();
        if train_rows.len() < max_order {
            return Err(Error::FoldTooSmall {
                fold: f,
                train_rows: train_rows.len(),
                required: max_order,
            });
        }
        let train = dataset.subset(&train_rows)?;
        for m in 1..=max_order {
            let theta = fit(&train, m, kernel)?.theta_hat;
            let sse: f64 = held
                .iter()
                .map(|&i| (kernel.evaluate(dataset.x[i], &theta) - dataset.y[i]).powi(2))
                .sum();
            sums[m - 1] += sse / held.len() as f64;
        }
    }
    let cv_error_curve: Vec<f64> = sums.iter().map(|s| s / k as f64).collect();
    let defined: Vec<Option<f64>> = cv_error_curve.iter().map(|&v| Some(v)).collect();
    let m_star_hat = argmin_first(&defined).expect("non-empty grid") + 1;
    let refit = fit(dataset, m_star_hat, kernel)?;
    Ok(CvReport {
        k,
        m_grid: (1..=max_order).collect(),
        cv_error_curve,
        m_star_hat,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        refit,
        wall_time_ns: start.elapsed().as_nanos() as u64,
    })
}
