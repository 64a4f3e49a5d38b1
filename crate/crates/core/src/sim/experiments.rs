use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{fold_seed, generate_dataset, signal_variance};
use super::{fmt_f64, fmt_opt, ExperimentConfig, Table};
use crate::bounds::{
    d2nmse_upper, first_crossing, general_rn_bounds, policy_measure, rn_bounds_known_order,
    rn_bounds_via_mse_known_order, sample_complexity_known_order, ConfidenceParams, OrderPolicy,
    RiskMeasure,
};
use crate::cv::kfold_select_order;
use crate::error::{Error, Result};
use crate::regression::{fit, oracle_nmse, Dataset, OrderScan};
use crate::selection::select_order;

/// Per-trial outcome of the two order-selection methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub n: usize,
    pub sigma_sq: f64,
    /// Per order `1..=M`; `None` where the order is rank deficient.
    pub r_ms: Vec<Option<f64>>,
    pub oracle_r_n: Vec<Option<f64>>,
    /// General upper bound on `r^N` at the variance the selection used.
    pub bound_r_n_high: Vec<Option<f64>>,
    pub m_star_hat: usize,
    pub m_star_hat_cv: usize,
    /// Oracle `r^N` and training `r^MS` of each method's refit model.
    pub refit_oracle_mse: f64,
    pub refit_oracle_mse_cv: f64,
    pub refit_train_mse: f64,
    pub refit_train_mse_cv: f64,
    pub signal_variance: f64,
    pub proposed_time_ns: u64,
    pub cv_time_ns: u64,
}

/// Errors that only mean "no value at this grid point".
fn undefined(e: &Error) -> bool {
    matches!(
        e,
        Error::KappaDomain { .. }
            | Error::BadShape(_)
            | Error::OrderExceedsData { .. }
            | Error::RankDeficient { .. }
            | Error::InsufficientSamples { .. }
    )
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if undefined(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mean in iteration order; `None` if any value is undefined.
fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut k) = (0.0, 0usize);
    for v in values {
        sum += v?;
        k += 1;
    }
    Some(sum / k as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for v in values {
        s += v;
        k += 1;
    }
    s / k as f64
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values.iter().copied());
    (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Trial-averaged curves over the data-length grid at one noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthSweep {
    pub sigma_sq: f64,
    pub n_grid: Vec<usize>,
    /// Oracle normalized risk at the known order.
    pub oracle: Vec<Option<f64>>,
    /// Known-order bound at the known order (no data needed).
    pub bound_known: Vec<Option<f64>>,
    /// General bound minimized over `1..=M` (order unknown).
    pub bound_general: Vec<Option<f64>>,
    pub oracle_r_n: Vec<Option<f64>>,
    /// Upper `r^N` bound from the validated variance at the known order.
    pub bound_via_mse_r_n: Vec<Option<f64>>,
}

pub fn length_sweep(
    config: &ExperimentConfig,
    sigma_sq: f64,
    params: ConfidenceParams,
) -> Result<LengthSweep> {
    let n_max = *config.n_grid.last().expect("validated non-empty");
    let k = config.known_order;
    let conv = config.convention;
    let kernel = config.kernel();
    let per_trial: Vec<Vec<[Option<f64>; 4]>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let full = generate_dataset(config, n_max, sigma_sq, t)?;
            config
                .n_grid
                .iter()
                .map(|&n| {
                    let ds = full.prefix(n)?;
                    let oracle_r_n = if n > k {
                        defined(OrderScan::new(&ds, k, kernel).and_then(|s| s.oracle_nmse(k)))?
                    } else {
                        None
                    };
                    let oracle = oracle_r_n.map(|r| conv.normalize(r, sigma_sq));
                    let selected = OrderPolicy::Selected {
                        max_order: config.max_order(),
                    };
                    let general = defined(policy_measure(
                        &ds,
                        kernel,
                        selected,
                        RiskMeasure::GeneralBound,
                        params,
                        conv,
                    ))?;
                    let via_mse = defined(
                        OrderScan::new(&ds, k, kernel)
                            .and_then(|s| s.r_ms(k))
                            .and_then(|r| rn_bounds_via_mse_known_order(r, k, n, params))
                            .map(|b| b.r_n_high),
                    )?;
                    Ok([oracle, general, oracle_r_n, via_mse])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let column = |c: usize| -> Vec<Option<f64>> {
        (0..config.n_grid.len())
            .map(|i| mean_defined(per_trial.iter().map(|t| t[i][c])))
            .collect()
    };
    let bound_known = config
        .n_grid
        .iter()
        .map(|&n| {
            defined(
                rn_bounds_known_order(k, n, sigma_sq, params.beta)
                    .map(|b| conv.normalize(b.r_n_high, sigma_sq)),
            )
        })
        .collect::<Result<_>>()?;
    Ok(LengthSweep {
        sigma_sq,
        n_grid: config.n_grid.clone(),
        oracle: column(0),
        bound_known,
        bound_general: column(1),
        oracle_r_n: column(2),
        bound_via_mse_r_n: column(3),
    })
}

fn crossing_cells(n_grid: &[usize], curve: &[Option<f64>], epsilon: f64) -> Result<[String; 2]> {
    let filled: Vec<f64> = curve.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
    match first_crossing(n_grid, &filled, epsilon) {
        Ok(c) => Ok([c.n.to_string(), fmt_f64(c.interpolated)]),
        Err(Error::NotReached { .. }) => Ok([String::new(), String::new()]),
        Err(e) => Err(e),
    }
}

/// Required data length per epsilon: (a) crossing of the trial-averaged
/// oracle risk at the known order, (b) the known-order closed form, and
/// (c) crossing of the trial-averaged general bound with the order selected
/// per length. Unreached crossings are left empty.
pub fn run_sample_complexity_table(config: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(
        "table1_sample_complexity",
        &[
            "epsilon",
            "sigma_sq",
            "n_oracle",
            "n_oracle_interpolated",
            "n_known_order",
            "n_general",
            "n_general_interpolated",
        ],
    );
    for &sigma_sq in &config.sweep_noise_var_grid {
        let sweep = length_sweep(config, sigma_sq, config.params)?;
        for &eps in &config.epsilon_grid {
            let [n_o, n_oi] = crossing_cells(&sweep.n_grid, &sweep.oracle, eps)?;
            let [n_g, n_gi] = crossing_cells(&sweep.n_grid, &sweep.bound_general, eps)?;
            let known = sample_complexity_known_order(config.known_order, eps, config.params.beta)?;
            table.push(vec![
                fmt_f64(eps),
                fmt_f64(sigma_sq),
                n_o,
                n_oi,
                known.to_string(),
                n_g,
                n_gi,
            ]);
        }
    }
    Ok(table)
}

/// Run both selection methods on every trial of one `(n, sigma_sq)` cell.
pub fn compare_methods(
    config: &ExperimentConfig,
    n: usize,
    sigma_sq: f64,
) -> Result<Vec<TrialRecord>> {
    let kernel = config.kernel();
    let m_cap = config.max_order();
    (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let ds = generate_dataset(config, n, sigma_sq, t)?;
            let y_bar = ds.y_bar.clone().expect("simulated data has y_bar");

            let started = Instant::now();
            let report = select_order(
                &ds,
                m_cap,
                kernel,
                config.comparison_params,
                config.sigma_policy,
                config.convention,
            )?;
            let refit = fit(&ds, report.m_star_hat, kernel)?;
            let proposed_time_ns = started.elapsed().as_nanos() as u64;

            let cv = kfold_select_order(
                &ds,
                m_cap,
                config.cv_folds,
                kernel,
                fold_seed(config.master_seed, t),
            )?;

            let scan = OrderScan::new(&ds, m_cap, kernel)?;
            let oracle_r_n = (1..=m_cap).map(|m| scan.oracle_nmse(m).ok()).collect();
            let bound_r_n_high = report
                .r_ms_curve
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.and_then(|r| {
                        general_rn_bounds(
                            r,
                            i + 1,
                            n,
                            report.sigma_sq_used,
                            config.comparison_params,
                        )
                        .ok()
                        .map(|b| b.r_n_high)
                    })
                })
                .collect();
            Ok(TrialRecord {
                trial_id: t,
                n,
                sigma_sq,
                r_ms: report.r_ms_curve.clone(),
                oracle_r_n,
                bound_r_n_high,
                m_star_hat: report.m_star_hat,
                m_star_hat_cv: cv.m_star_hat,
                refit_oracle_mse: oracle_nmse(&refit, &y_bar)?,
                refit_oracle_mse_cv: oracle_nmse(&cv.refit, &y_bar)?,
                refit_train_mse: refit.r_ms,
                refit_train_mse_cv: cv.refit.r_ms,
                signal_variance: signal_variance(&ds)?,
                proposed_time_ns,
                cv_time_ns: cv.wall_time_ns,
            })
        })
        .collect()
}

/// SNR in dB from the trial-averaged empirical signal variance.
fn snr_db(records: &[TrialRecord]) -> f64 {
    let signal = mean(records.iter().map(|r| r.signal_variance));
    10.0 * (signal / records[0].sigma_sq).log10()
}

/// Comparison tables: deterministic statistics plus wall-clock timings.
#[derive(Debug, Clone)]
pub struct ComparisonTables {
    pub table: Table,
    pub timing: Table,
    pub records: Vec<TrialRecord>,
}

/// Timing and accuracy of both methods per `(sigma_sq, n)` cell.
pub fn run_cv_comparison(config: &ExperimentConfig) -> Result<ComparisonTables> {
    let mut table = Table::new(
        "table2_cv_comparison",
        &[
            "sigma_sq",
            "n",
            "snr_db",
            "mse_proposed",
            "mse_cv",
            "train_mse_proposed",
            "train_mse_cv",
            "m_hat_mean_proposed",
            "m_hat_mean_cv",
        ],
    );
    let mut timing = Table::new(
        "table2_timing",
        &[
            "sigma_sq",
            "n",
            "time_proposed_s",
            "time_cv_s",
            "cv_to_proposed_ratio",
        ],
    );
    let mut all = Vec::new();
    for &sigma_sq in &config.noise_var_grid {
        for &n in &config.comparison_n_grid {
            let recs = compare_methods(config, n, sigma_sq)?;
            table.push(vec![
                fmt_f64(sigma_sq),
                n.to_string(),
                fmt_f64(snr_db(&recs)),
                fmt_f64(mean(recs.iter().map(|r| r.refit_oracle_mse))),
                fmt_f64(mean(recs.iter().map(|r| r.refit_oracle_mse_cv))),
                fmt_f64(mean(recs.iter().map(|r| r.refit_train_mse))),
                fmt_f64(mean(recs.iter().map(|r| r.refit_train_mse_cv))),
                fmt_f64(mean(recs.iter().map(|r| r.m_star_hat as f64))),
                fmt_f64(mean(recs.iter().map(|r| r.m_star_hat_cv as f64))),
            ]);
            let tp: u64 = recs.iter().map(|r| r.proposed_time_ns).sum();
            let tc: u64 = recs.iter().map(|r| r.cv_time_ns).sum();
            timing.push(vec![
                fmt_f64(sigma_sq),
                n.to_string(),
                fmt_f64(tp as f64 * 1e-9),
                fmt_f64(tc as f64 * 1e-9),
                fmt_f64(tc as f64 / tp.max(1) as f64),
            ]);
            all.extend(recs);
        }
    }
    Ok(ComparisonTables {
        table,
        timing,
        records: all,
    })
}

/// Average and spread of the selected order of both methods at one data
/// length, per noise variance.
pub fn run_selection_table(config: &ExperimentConfig) -> Result<ComparisonTables> {
    let n = config.selection_n;
    let mut table = Table::new(
        "table3_selection",
        &[
            "sigma_sq",
            "n",
            "snr_db",
            "mse_proposed",
            "mse_cv",
            "train_mse_proposed",
            "train_mse_cv",
            "m_hat_mean_proposed",
            "m_hat_mean_cv",
            "m_hat_sd_proposed",
            "m_hat_sd_cv",
        ],
    );
    let mut timing = Table::new(
        "table3_timing",
        &["sigma_sq", "n", "time_proposed_s", "time_cv_s"],
    );
    let mut all = Vec::new();
    for &sigma_sq in &config.noise_var_grid {
        let recs = compare_methods(config, n, sigma_sq)?;
        let mp: Vec<f64> = recs.iter().map(|r| r.m_star_hat as f64).collect();
        let mc: Vec<f64> = recs.iter().map(|r| r.m_star_hat_cv as f64).collect();
        table.push(vec![
            fmt_f64(sigma_sq),
            n.to_string(),
            fmt_f64(snr_db(&recs)),
            fmt_f64(mean(recs.iter().map(|r| r.refit_oracle_mse))),
            fmt_f64(mean(recs.iter().map(|r| r.refit_oracle_mse_cv))),
            fmt_f64(mean(recs.iter().map(|r| r.refit_train_mse))),
            fmt_f64(mean(recs.iter().map(|r| r.refit_train_mse_cv))),
            fmt_f64(mean(mp.iter().copied())),
            fmt_f64(mean(mc.iter().copied())),
            fmt_f64(sample_sd(&mp)),
            fmt_f64(sample_sd(&mc)),
        ]);
        let tp: u64 = recs.iter().map(|r| r.proposed_time_ns).sum();
        let tc: u64 = recs.iter().map(|r| r.cv_time_ns).sum();
        timing.push(vec![
            fmt_f64(sigma_sq),
            n.to_string(),
            fmt_f64(tp as f64 * 1e-9),
            fmt_f64(tc as f64 * 1e-9),
        ]);
        all.extend(recs);
    }
    Ok(ComparisonTables {
        table,
        timing,
        records: all,
    })
}

/// Plot-ready curves: trial averages against the data length at the known
/// order, and against the order at a fixed data length.
pub fn run_bound_curves(config: &ExperimentConfig) -> Result<(Table, Table)> {
    let conv = config.convention.as_str();
    let mut per_n = Table::new(
        "curves_per_n",
        &[
            "sweep_var",
            "sigma_sq",
            "alpha",
            "beta",
            "oracle",
            "bound_known",
            "bound_general",
            "oracle_r_n",
            "bound_via_mse_r_n",
            "convention",
        ],
    );
    for &sigma_sq in &config.sweep_noise_var_grid {
        let s = length_sweep(config, sigma_sq, config.params)?;
        for i in 0..s.n_grid.len() {
            per_n.push(vec![
                s.n_grid[i].to_string(),
                fmt_f64(sigma_sq),
                fmt_f64(config.params.alpha),
                fmt_f64(config.params.beta),
                fmt_opt(s.oracle[i]),
                fmt_opt(s.bound_known[i]),
                fmt_opt(s.bound_general[i]),
                fmt_opt(s.oracle_r_n[i]),
                fmt_opt(s.bound_via_mse_r_n[i]),
                conv.to_string(),
            ]);
        }
    }

    let mut per_m = Table::new(
        "curves_per_m",
        &[
            "sweep_var",
            "sigma_sq",
            "alpha",
            "beta",
            "n",
            "oracle",
            "bound_known",
            "bound_general",
            "convention",
        ],
    );
    for &sigma_sq in &config.sweep_noise_var_grid {
        for &params in &config.figure_params {
            let rows = order_sweep(config, sigma_sq, params)?;
            for (m, [oracle, known, general]) in rows.into_iter().enumerate() {
                per_m.push(vec![
                    (m + 1).to_string(),
                    fmt_f64(sigma_sq),
                    fmt_f64(params.alpha),
                    fmt_f64(params.beta),
                    config.curve_n.to_string(),
                    fmt_opt(oracle),
                    fmt_opt(known),
                    fmt_opt(general),
                    conv.to_string(),
                ]);
            }
        }
    }
    Ok((per_n, per_m))
}

/// Trial averages per order at `curve_n`: oracle normalized risk, the
/// known-order bound from the validated variance, and the general bound.
pub fn order_sweep(
    config: &ExperimentConfig,
    sigma_sq: f64,
    params: ConfidenceParams,
) -> Result<Vec<[Option<f64>; 3]>> {
    let n = config.curve_n;
    let m_cap = config.max_order();
    let conv = config.convention;
    let per_trial: Vec<Vec<[Option<f64>; 3]>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let ds: Dataset = generate_dataset(config, n, sigma_sq, t)?;
            let scan = OrderScan::new(&ds, m_cap, config.kernel())?;
            (1..=m_cap)
                .map(|m| {
                    let oracle = defined(scan.oracle_nmse(m))?.map(|r| conv.normalize(r, sigma_sq));
                    let r_ms = defined(scan.r_ms(m))?;
                    let known = match r_ms {
                        Some(r) => defined(
                            rn_bounds_via_mse_known_order(r, m, n, params)
                                .map(|b| conv.normalize(b.r_n_high, sigma_sq)),
                        )?,
                        None => None,
                    };
                    let general = match r_ms {
                        Some(r) => defined(d2nmse_upper(r, m, n, sigma_sq, params, conv))?,
                        None => None,
                    };
                    Ok([oracle, known, general])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..m_cap)
        .map(|i| {
            let col = |c: usize| mean_defined(per_trial.iter().map(|t| t[i][c]));
            [col(0), col(1), col(2)]
        })
        .collect())
}

/// One row per trial of a comparison run, without timings.
pub fn trial_records_table(name: &str, records: &[TrialRecord]) -> Table {
    let join = |v: &[Option<f64>]| v.iter().map(|x| fmt_opt(*x)).collect::<Vec<_>>().join(";");
    let mut table = Table::new(
        name,
        &[
            "trial_id",
            "n",
            "sigma_sq",
            "m_star_hat",
            "m_star_hat_cv",
            "refit_oracle_mse",
            "refit_oracle_mse_cv",
            "r_ms",
            "oracle_r_n",
            "bound_r_n_high",
        ],
    );
    for r in records {
        table.push(vec![
            r.trial_id.to_string(),
            r.n.to_string(),
            fmt_f64(r.sigma_sq),
            r.m_star_hat.to_string(),
            r.m_star_hat_cv.to_string(),
            fmt_f64(r.refit_oracle_mse),
            fmt_f64(r.refit_oracle_mse_cv),
            join(&r.r_ms),
            join(&r.oracle_r_n),
            join(&r.bound_r_n_high),
        ]);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            trials: 40,
            n_grid: (20..=120).step_by(5).collect(),
            noise_var_grid: vec![0.2],
            sweep_noise_var_grid: vec![0.2],
            epsilon_grid: vec![0.1, 0.05],
            comparison_n_grid: vec![60],
            selection_n: 50,
            curve_n: 100,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn helpers() {
        assert_eq!(mean_defined([Some(1.0), Some(3.0)].into_iter()), Some(2.0));
        assert_eq!(mean_defined([Some(1.0), None].into_iter()), None);
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(sample_sd(&[7.0]), 0.0);
    }

    #[test]
    fn known_order_column_matches_closed_form() {
        let c = small();
        let t = run_sample_complexity_table(&c).unwrap();
        assert_eq!(t.rows.len(), 2);
        for (i, &eps) in c.epsilon_grid.iter().enumerate() {
            let want = sample_complexity_known_order(5, eps, 2.0).unwrap();
            assert_eq!(t.get(i, "n_known_order").unwrap(), want.to_string());
        }
    }

    #[test]
    fn sweep_bound_dominates_oracle() {
        let s = length_sweep(
            &small(),
            0.2,
            ConfidenceParams {
                alpha: 2.0,
                beta: 2.0,
            },
        )
        .unwrap();
        for i in 0..s.n_grid.len() {
            let (o, b) = (s.oracle[i].unwrap(), s.bound_known[i].unwrap());
            assert!(b >= o, "n = {}: {b} < {o}", s.n_grid[i]);
        }
    }

    #[test]
    fn comparison_is_thread_count_invariant() {
        let c = ExperimentConfig {
            trials: 12,
            ..small()
        };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| compare_methods(&c, 60, 0.3)).unwrap()
        };
        let strip = |mut v: Vec<TrialRecord>| {
            for r in &mut v {
                r.proposed_time_ns = 0;
                r.cv_time_ns = 0;
            }
            v
        };
        assert_eq!(strip(run(1)), strip(run(4)));
    }

    #[test]
    fn per_order_curves_have_one_row_per_order() {
        let c = ExperimentConfig {
            trials: 10,
            ..small()
        };
        let (per_n, per_m) = run_bound_curves(&c).unwrap();
        assert_eq!(per_n.rows.len(), c.n_grid.len());
        assert_eq!(per_m.rows.len(), c.max_order() * c.figure_params.len());
        assert_eq!(per_m.get(0, "convention"), Some("canonical_half"));
    }

    #[test]
    fn records_table_has_a_row_per_trial() {
        let c = ExperimentConfig {
            trials: 5,
            ..small()
        };
        let recs = compare_methods(&c, 60, 0.2).unwrap();
        let t = trial_records_table("x", &recs);
        assert_eq!(t.rows.len(), 5);
        assert_eq!(t.get(0, "r_ms").unwrap().split(';').count(), c.max_order());
    }
}
