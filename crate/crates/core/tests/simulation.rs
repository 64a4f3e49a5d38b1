//! End-to-end properties of the experiment tables.

use std::fs;

use coac_core::sim::{
    run_and_write, run_bound_curves, run_cv_comparison, run_sample_complexity_table,
    run_selection_table, Experiment, Table,
};
use coac_core::{sample_complexity_known_order, ExperimentConfig};

fn num(t: &Table, row: usize, col: &str) -> f64 {
    t.get(row, col)
        .unwrap()
        .parse()
        .unwrap_or_else(|_| panic!("{col} row {row} is not a number"))
}

fn cell(t: &Table, row: usize, col: &str) -> Option<f64> {
    t.get(row, col).and_then(|v| v.parse().ok())
}

fn rows_where<'a>(t: &'a Table, col: &'a str, value: &'a str) -> impl Iterator<Item = usize> + 'a {
    (0..t.rows.len()).filter(move |&i| t.get(i, col) == Some(value))
}

fn smoke() -> ExperimentConfig {
    ExperimentConfig {
        trials: 30,
        n_grid: (15..=200).step_by(5).collect(),
        epsilon_grid: vec![0.1, 0.05, 0.03],
        ..ExperimentConfig::default()
    }
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let config = ExperimentConfig {
        trials: 8,
        ..smoke()
    };
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut manifests = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads([1, 1, 4][i])
            .build()
            .unwrap();
        manifests.push(
            pool.install(|| run_and_write(&config, &Experiment::ALL, d.path()))
                .unwrap(),
        );
    }
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(manifests[0], manifests[2]);
    let read = |i: usize, f: &str| fs::read(dirs[i].path().join(f)).unwrap();
    for out in manifests[0].outputs.iter().filter(|o| o.deterministic) {
        assert_eq!(read(0, &out.path), read(1, &out.path), "{}", out.path);
        assert_eq!(read(0, &out.path), read(2, &out.path), "{}", out.path);
    }
    assert_eq!(read(0, "manifest.json"), read(2, "manifest.json"));
    assert!(manifests[0].outputs.iter().any(|o| !o.deterministic));
}

#[test]
fn sample_complexity_table_is_monotone_and_noise_ordered() {
    let config = smoke();
    let t = run_sample_complexity_table(&config).unwrap();
    assert_eq!(t.rows.len(), 2 * config.epsilon_grid.len());
    for s2 in ["0.2", "0.4"] {
        let rows: Vec<usize> = rows_where(&t, "sigma_sq", s2).collect();
        for col in ["n_oracle", "n_known_order", "n_general"] {
            let vals: Vec<f64> = rows.iter().filter_map(|&i| cell(&t, i, col)).collect();
            assert!(
                vals.windows(2).all(|w| w[0] < w[1]),
                "{col} at {s2}: {vals:?}"
            );
        }
        for (&i, &eps) in rows.iter().zip(&config.epsilon_grid) {
            let want =
                sample_complexity_known_order(config.known_order, eps, config.params.beta).unwrap();
            assert_eq!(num(&t, i, "n_known_order"), want as f64);
        }
    }
    for k in 0..config.epsilon_grid.len() {
        let (lo, hi) = (k, k + config.epsilon_grid.len());
        match (cell(&t, lo, "n_general"), cell(&t, hi, "n_general")) {
            (Some(a), Some(b)) => assert!(b >= a, "eps row {k}: {b} < {a}"),
            (Some(_), None) | (None, None) => {}
            (None, Some(b)) => panic!("reached at the larger noise ({b}) but not the smaller"),
        }
    }
}

#[test]
fn oracle_crossing_sits_at_the_mean_threshold() {
    let config = ExperimentConfig {
        trials: 1000,
        n_grid: (40..=60).collect(),
        epsilon_grid: vec![0.05],
        sweep_noise_var_grid: vec![0.2],
        ..ExperimentConfig::default()
    };
    let t = run_sample_complexity_table(&config).unwrap();
    let n = num(&t, 0, "n_oracle");
    assert!((n - 50.0).abs() <= 3.0, "{n}");
}

#[test]
fn selection_table_smoke_has_every_row_and_field() {
    let config = ExperimentConfig {
        trials: 50,
        ..ExperimentConfig::default()
    };
    let r = run_selection_table(&config).unwrap();
    assert_eq!(r.table.rows.len(), 9);
    for row in &r.table.rows {
        assert!(row.iter().all(|c| !c.is_empty()), "{row:?}");
    }
    for i in 0..9 {
        let (sp, sc) = (
            num(&r.table, i, "m_hat_sd_proposed"),
            num(&r.table, i, "m_hat_sd_cv"),
        );
        assert!(sp <= sc, "row {i}: proposed sd {sp} > cv sd {sc}");
    }
    assert_eq!(r.records.len(), 9 * 50);
    assert!(r
        .records
        .iter()
        .all(|x| x.refit_oracle_mse >= 0.0 && x.r_ms.iter().flatten().all(|&v| v >= 0.0)));
}

/// Once the noise is far below the bias of the smaller models, no order
/// under 5 is chosen. Above the true order the residuals are pure noise, so
/// both selections are invariant to the noise scale and keep the
/// overfitting rate they have at moderate noise.
#[test]
fn vanishing_noise_removes_underfitting_and_leaves_scale_free_choices() {
    let config = ExperimentConfig {
        trials: 20,
        noise_var_grid: vec![1e-6, 1e-8],
        ..ExperimentConfig::default()
    };
    let r = run_selection_table(&config).unwrap();
    let (a, b) = r.records.split_at(20);
    for (x, y) in a.iter().zip(b) {
        assert!(
            x.m_star_hat >= 5 && x.m_star_hat_cv >= 5,
            "trial {}",
            x.trial_id
        );
        assert_eq!(
            (x.m_star_hat, x.m_star_hat_cv),
            (y.m_star_hat, y.m_star_hat_cv)
        );
    }
}

#[test]
fn cv_comparison_reports_low_error_at_low_noise_and_a_faster_proposed_method() {
    let config = ExperimentConfig {
        trials: 50,
        noise_var_grid: vec![0.5, 0.1],
        ..ExperimentConfig::default()
    };
    let r = run_cv_comparison(&config).unwrap();
    assert_eq!(r.table.rows.len(), 4);
    let low = rows_where(&r.table, "sigma_sq", "0.1")
        .find(|&i| r.table.get(i, "n") == Some("300"))
        .unwrap();
    assert!(num(&r.table, low, "mse_proposed") < 0.01);
    assert!(num(&r.table, low, "mse_cv") < 0.01);
    for i in 0..4 {
        assert!(num(&r.timing, i, "time_proposed_s") < num(&r.timing, i, "time_cv_s"));
        let snr = num(&r.table, i, "snr_db");
        let s2 = num(&r.table, i, "sigma_sq");
        assert!(
            (snr - 10.0 * (0.5 / s2).log10()).abs() < 0.5,
            "snr {snr} at {s2}"
        );
    }
}

#[test]
fn bound_curves_are_ordered() {
    let config = ExperimentConfig {
        trials: 100,
        n_grid: (15..=300).step_by(15).collect(),
        ..ExperimentConfig::default()
    };
    let (per_n, per_m) = run_bound_curves(&config).unwrap();
    for i in 0..per_n.rows.len() {
        assert!(
            num(&per_n, i, "bound_known") >= num(&per_n, i, "oracle"),
            "row {i}"
        );
    }
    let block = |s2: &str, a: &str| -> Vec<usize> {
        rows_where(&per_m, "sigma_sq", s2)
            .filter(|&i| per_m.get(i, "alpha") == Some(a))
            .collect()
    };
    let (two, three) = (block("0.2", "2"), block("0.2", "3"));
    assert_eq!(two.len(), 10);
    for col in ["oracle", "bound_known", "bound_general"] {
        let curve: Vec<f64> = two.iter().map(|&i| num(&per_m, i, col)).collect();
        let argmin = (0..10)
            .min_by(|&a, &b| curve[a].total_cmp(&curve[b]))
            .unwrap();
        assert_eq!(argmin + 1, 5, "{col}: {curve:?}");
    }
    for (&a, &b) in two.iter().zip(&three) {
        assert_eq!(per_m.get(a, "sweep_var"), per_m.get(b, "sweep_var"));
        assert!(num(&per_m, b, "bound_known") > num(&per_m, a, "bound_known"));
        assert!(num(&per_m, b, "bound_general") > num(&per_m, a, "bound_general"));
    }
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let bad = ExperimentConfig {
        noise_var_grid: vec![],
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    assert!(run_and_write(&bad, &Experiment::ALL, dir.path()).is_err());
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}
