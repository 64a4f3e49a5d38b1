use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::{ConfidenceParams, Convention};
use crate::error::{Error, Result};
use crate::regression::{KernelFamily, KernelSpec};
use crate::selection::SigmaPolicy;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Fifth-order polynomial used by every default experiment.
pub const DEFAULT_TRUTH: [f64; 5] = [2.3348, -2.3403, 0.6988, -0.0809, 0.0032];

/// Everything an experiment run depends on. The outputs are a pure function
/// of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub truth_theta: Vec<f64>,
    pub x_interval: (f64, f64),
    /// `max_order` is the order cap `M` of every scan.
    pub kernel: KernelSpec,
    /// Noise variances of the comparison tables.
    pub noise_var_grid: Vec<f64>,
    /// Data lengths swept by the sample-complexity table and the per-`n`
    /// curves. Each trial draws one dataset of the largest length and uses
    /// its prefixes.
    pub n_grid: Vec<usize>,
    pub trials: usize,
    /// Multipliers of the sample-complexity table and the per-`n` curves.
    pub params: ConfidenceParams,
    pub epsilon_grid: Vec<f64>,
    pub master_seed: u64,
    pub convention: Convention,
    pub sigma_policy: SigmaPolicy,
    /// True order, for the known-order columns and curves.
    pub known_order: usize,
    /// Noise variances of the sample-complexity table and the curves.
    pub sweep_noise_var_grid: Vec<f64>,
    /// Multipliers of both comparison tables.
    pub comparison_params: ConfidenceParams,
    /// Data lengths of the timing comparison.
    pub comparison_n_grid: Vec<usize>,
    /// Data length of the order-selection table.
    pub selection_n: usize,
    pub cv_folds: usize,
    /// Data length of the per-order curves.
    pub curve_n: usize,
    /// One per-order curve is emitted for each multiplier pair.
    pub figure_params: Vec<ConfidenceParams>,
    /// Also write one row per trial for the comparison tables.
    pub write_trial_records: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            truth_theta: DEFAULT_TRUTH.to_vec(),
            x_interval: (0.0, 10.0),
            kernel: KernelSpec::polynomial(10),
            noise_var_grid: vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1],
            n_grid: (15..=300).collect(),
            trials: 1000,
            params: ConfidenceParams {
                alpha: 2.0,
                beta: 2.0,
            },
            epsilon_grid: vec![0.1, 0.09, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03, 0.02],
            master_seed: 2024,
            convention: Convention::CanonicalHalf,
            sigma_policy: SigmaPolicy::Oracle,
            known_order: 5,
            sweep_noise_var_grid: vec![0.2, 0.4],
            comparison_params: ConfidenceParams {
                alpha: 3.0,
                beta: 3.0,
            },
            comparison_n_grid: vec![100, 300],
            selection_n: 50,
            cv_folds: 5,
            curve_n: 300,
            figure_params: vec![
                ConfidenceParams {
                    alpha: 2.0,
                    beta: 2.0,
                },
                ConfidenceParams {
                    alpha: 3.0,
                    beta: 3.0,
                },
            ],
            write_trial_records: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_json_str(&text)
    }

    pub fn max_order(&self) -> usize {
        self.kernel.max_order
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Collect every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        check(
            &mut errs,
            self.schema_version == CONFIG_SCHEMA_VERSION,
            format!(
                "schema_version: expected {CONFIG_SCHEMA_VERSION}, got {}",
                self.schema_version
            ),
        );
        check(
            &mut errs,
            !self.truth_theta.is_empty(),
            "truth_theta: must not be empty".into(),
        );
        check(
            &mut errs,
            self.truth_theta.iter().all(|v| v.is_finite()),
            "truth_theta: entries must be finite".into(),
        );
        let (lo, hi) = self.x_interval;
        check(
            &mut errs,
            lo.is_finite() && hi.is_finite() && lo < hi,
            format!("x_interval: need low < high, got ({lo}, {hi})"),
        );
        check(
            &mut errs,
            self.kernel.max_order >= 2,
            "kernel.max_order: must be at least 2".into(),
        );
        if let KernelFamily::CustomColumnFunctions(_) = self.kernel.family {
            errs.push("kernel.family: custom kernels cannot be configured from JSON".into());
        }
        positive(&mut errs, "noise_var_grid", &self.noise_var_grid);
        positive(
            &mut errs,
            "sweep_noise_var_grid",
            &self.sweep_noise_var_grid,
        );
        positive(&mut errs, "epsilon_grid", &self.epsilon_grid);
        check(
            &mut errs,
            !self.n_grid.is_empty(),
            "n_grid: must not be empty".into(),
        );
        check(
            &mut errs,
            self.n_grid.windows(2).all(|w| w[0] < w[1]),
            "n_grid: must be strictly increasing".into(),
        );
        check(
            &mut errs,
            self.n_grid.first().map_or(true, |&n| n >= 2),
            "n_grid: lengths must be at least 2".into(),
        );
        check(
            &mut errs,
            self.trials >= 1,
            "trials: must be at least 1".into(),
        );
        check(
            &mut errs,
            self.known_order >= 1 && self.known_order <= self.kernel.max_order,
            format!(
                "known_order: must lie in 1..={}, got {}",
                self.kernel.max_order, self.known_order
            ),
        );
        check(
            &mut errs,
            self.n_grid.last().map_or(true, |&n| n > self.known_order),
            "n_grid: largest length must exceed known_order".into(),
        );
        check(
            &mut errs,
            !self.comparison_n_grid.is_empty(),
            "comparison_n_grid: must not be empty".into(),
        );
        check(
            &mut errs,
            self.cv_folds >= 2,
            format!("cv_folds: must be at least 2, got {}", self.cv_folds),
        );
        let m = self.kernel.max_order;
        for (name, n) in self
            .comparison_n_grid
            .iter()
            .map(|&n| ("comparison_n_grid", n))
            .chain([("selection_n", self.selection_n), ("curve_n", self.curve_n)])
        {
            if n <= m {
                errs.push(format!(
                    "{name}: length {n} must exceed kernel.max_order {m}"
                ));
                continue;
            }
            if name != "curve_n" && self.cv_folds <= n {
                let train = n - n.div_ceil(self.cv_folds);
                if train < m {
                    errs.push(format!(
                        "{name}: {}-fold training sets of {train} rows are smaller than kernel.max_order {m}",
                        self.cv_folds
                    ));
                }
            }
            if name != "curve_n" && self.cv_folds > n {
                errs.push(format!("cv_folds: {} exceeds {name} {n}", self.cv_folds));
            }
            if name != "curve_n" && self.sigma_policy == SigmaPolicy::Estimated {
                let a = self.comparison_params.alpha;
                if (n - m) as f64 <= 2.0 * a * a {
                    errs.push(format!(
                        "{name}: estimated noise needs n - M > 2 alpha^2, got n = {n}, M = {m}, alpha = {a}"
                    ));
                }
            }
        }
        check(
            &mut errs,
            !self.figure_params.is_empty(),
            "figure_params: must not be empty".into(),
        );
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn check(errs: &mut Vec<String>, ok: bool, msg: String) {
    if !ok {
        errs.push(msg);
    }
}

fn positive(errs: &mut Vec<String>, name: &str, grid: &[f64]) {
    if grid.is_empty() {
        errs.push(format!("{name}: must not be empty"));
    } else if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        errs.push(format!(
            "{name}: entries must be positive and finite, got {v}"
        ));
    }
}
