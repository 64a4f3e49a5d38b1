//! Nested-order least-squares fitting.
//!
//! Hypothesis class `H_m` uses the first `m` kernel columns. Every fit goes
//! through a column-scaled Householder QR; fitted targets are the projection
//! `Q_m Q_m^T y`, which is equal to `A_m theta_hat` but does not inherit the
//! conditioning of high-order monomial columns.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Householder, Matrix, Vector};

/// Observed data plus, for simulated data, the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vector,
    pub y: Vector,
    /// Noise-free targets. Simulation only.
    pub y_bar: Option<Vector>,
    /// Known noise variance.
    pub noise_var: Option<f64>,
}

impl Dataset {
    pub fn new(
        x: Vector,
        y: Vector,
        y_bar: Option<Vector>,
        noise_var: Option<f64>,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::BadShape(format!(
                "a dataset needs at least 2 samples, got {}",
                x.len()
            )));
        }
        if let Some(yb) = &y_bar {
            if yb.len() != x.len() {
                return Err(Error::LengthMismatch {
                    expected: x.len(),
                    found: yb.len(),
                });
            }
        }
        if let Some(v) = noise_var {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonpositiveVariance(v));
            }
        }
        Ok(Self {
            x,
            y,
            y_bar,
            noise_var,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// The first `n` samples. Nested prefixes of one long draw form the
    /// growing-`n` streams used for sample-complexity scans.
    pub fn prefix(&self, n: usize) -> Result<Dataset> {
        if n > self.n() {
            return Err(Error::BadShape(format!(
                "prefix of length {n} requested from {} samples",
                self.n()
            )));
        }
        let cut = |v: &Vector| Vector::new(v[..n].to_vec());
        Dataset::new(
            cut(&self.x)?,
            cut(&self.y)?,
            self.y_bar.as_ref().map(cut).transpose()?,
            self.noise_var,
        )
    }

    /// Drops ground-truth fields.
    pub fn observed_only(&self) -> Dataset {
        Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
            y_bar: None,
            noise_var: None,
        }
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::NonpositiveVariance(noise_var));
        }
        self.noise_var = Some(noise_var);
        Ok(self)
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let pick = |v: &Vector| Vector::new(rows.iter().map(|&i| v[i]).collect());
        Dataset::new(
            pick(&self.x)?,
            pick(&self.y)?,
            self.y_bar.as_ref().map(pick).transpose()?,
            self.noise_var,
        )
    }

    /// Reads a CSV with header `x,y` or `x,y,y_bar`.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let names: Vec<&str> = headers.iter().collect();
        let has_truth = match names.as_slice() {
            ["x", "y"] => false,
            ["x", "y", "y_bar"] => true,
            _ => {
                return Err(Error::Csv {
                    line: 1,
                    message: format!(
                        "expected header `x,y` or `x,y,y_bar`, found `{}`",
                        names.join(",")
                    ),
                })
            }
        };
        let (mut xs, mut ys, mut ybs) = (Vec::new(), Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<f64> {
                let raw = record.get(i).unwrap_or_default();
                let v: f64 = raw.parse().map_err(|_| Error::Csv {
                    line,
                    message: format!("cannot parse {name} value `{raw}` as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv {
                        line,
                        message: format!("non-finite {name} value `{raw}`"),
                    });
                }
                Ok(v)
            };
            xs.push(field(0, "x")?);
            ys.push(field(1, "y")?);
            if has_truth {
                ybs.push(field(2, "y_bar")?);
            }
        }
        let y_bar = if has_truth {
            Some(Vector::new(ybs)?)
        } else {
            None
        };
        Dataset::new(Vector::new(xs)?, Vector::new(ys)?, y_bar, None)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(if self.y_bar.is_some() {
            "x,y,y_bar\n"
        } else {
            "x,y\n"
        });
        for i in 0..self.n() {
            match &self.y_bar {
                Some(yb) => out.push_str(&format!("{},{},{}\n", self.x[i], self.y[i], yb[i])),
                None => out.push_str(&format!("{},{}\n", self.x[i], self.y[i])),
            }
        }
        out
    }
}

/// Column `j` (1-based) of a custom kernel evaluated at `x`.
#[derive(Clone)]
pub struct ColumnFunctions(pub Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>);

impl fmt::Debug for ColumnFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ColumnFunctions(..)")
    }
}

/// Two custom kernels are equal only when they share the same closure.
impl PartialEq for ColumnFunctions {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Row `i` is `[x, x^2, ..., x^m]`.
    #[default]
    PolynomialNoIntercept,
    /// Row `i` is `[1, x, ..., x^(m-1)]`.
    PolynomialWithIntercept,
    #[serde(skip)]
    CustomColumnFunctions(ColumnFunctions),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub max_order: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, max_order: usize) -> Result<Self> {
        if max_order < 1 {
            return Err(Error::InvalidParameter(
                "kernel max_order must be at least 1".into(),
            ));
        }
        Ok(Self { family, max_order })
    }

    pub fn polynomial(max_order: usize) -> Self {
        Self {
            family: KernelFamily::PolynomialNoIntercept,
            max_order: max_order.max(1),
        }
    }

    fn column(&self, x: f64, j: usize) -> f64 {
        match &self.family {
            KernelFamily::PolynomialNoIntercept => x.powi(j as i32),
            KernelFamily::PolynomialWithIntercept => x.powi(j as i32 - 1),
            KernelFamily::CustomColumnFunctions(f) => (f.0)(x, j),
        }
    }

    /// Model output `sum_j theta_j phi_j(x)` at one input.
    pub fn evaluate(&self, x: f64, theta: &[f64]) -> f64 {
        theta
            .iter()
            .enumerate()
            .map(|(j, t)| t * self.column(x, j + 1))
            .sum()
    }
}

/// Design matrix `A_m`: one row per sample, the first `m` kernel columns.
pub fn build_design_matrix(x: &[f64], m: usize, kernel: &KernelSpec) -> Result<Matrix> {
    if m == 0 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    if m > kernel.max_order {
        return Err(Error::OrderExceedsKernel {
            order: m,
            max_order: kernel.max_order,
        });
    }
    if m > x.len() {
        return Err(Error::OrderExceedsData {
            order: m,
            rows: x.len(),
        });
    }
    Matrix::from_fn(x.len(), m, |i, j| kernel.column(x[i], j + 1))
}

/// Least-squares fit within one hypothesis class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub order: usize,
    pub theta_hat: Vector,
    pub y_hat: Vector,
    /// Minimum empirical mean squared error against the noisy targets.
    pub r_ms: f64,
    pub n: usize,
}

pub fn fit(dataset: &Dataset, m: usize, kernel: &KernelSpec) -> Result<FitResult> {
    OrderScan::new(dataset, m, kernel)?.fit(m)
}

pub fn empirical_mse(fit: &FitResult, y: &[f64]) -> Result<f64> {
    mean_sq_diff(&fit.y_hat, y)
}

/// Noise-free risk `r^N`: mean squared distance from the fitted targets to
/// the noise-free targets.
pub fn oracle_nmse(fit: &FitResult, y_bar: &[f64]) -> Result<f64> {
    mean_sq_diff(&fit.y_hat, y_bar)
}

/// KL divergence between `N(mu1, s^2 I)` and `N(mu2, s^2 I)` normalized per
/// sample: `||mu1 - mu2||^2 / (2 n s^2)`.
pub fn kl_gaussian_equal_var(mu1: &[f64], mu2: &[f64], noise_var: f64, n: usize) -> Result<f64> {
    if mu1.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: mu1.len(),
        });
    }
    if noise_var.is_nan() || noise_var <= 0.0 {
        return Err(Error::NonpositiveVariance(noise_var));
    }
    Ok(mean_sq_diff(mu1, mu2)? / (2.0 * noise_var))
}

pub(crate) fn mean_sq_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::BadShape("empty vectors".into()));
    }
    Ok(a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64)
}

/// One factorization of `A_M` serving every nested class `H_1..H_M`.
///
/// The empirical risk of order `m` is the tail energy of `Q^T y` past index
/// `m`, so the whole `r^MS` curve costs a single QR.
#[derive(Debug, Clone)]
pub struct OrderScan<'a> {
    dataset: &'a Dataset,
    kernel: KernelSpec,
    qr: Householder,
    qty: Vec<f64>,
    usable: usize,
}

impl<'a> OrderScan<'a> {
    pub fn new(dataset: &'a Dataset, max_order: usize, kernel: &KernelSpec) -> Result<Self> {
        let a = build_design_matrix(&dataset.x, max_order, kernel)?;
        let qr = Householder::factor_scaled(&a)?;
        let mut qty = dataset.y.as_slice().to_vec();
        qr.apply_qt(&mut qty);
        let usable = qr.full_rank_prefix();
        Ok(Self {
            dataset,
            kernel: kernel.clone(),
            qr,
            qty,
            usable,
        })
    }

    pub fn max_order(&self) -> usize {
        self.qr.cols()
    }

    /// Highest order whose design block has full column rank; every lower
    /// order is full rank too.
    pub fn full_rank_orders(&self) -> usize {
        self.usable
    }

    pub fn check_order(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.max_order() {
            return Err(Error::InvalidParameter(format!(
                "order {m} outside scanned range 1..={}",
                self.max_order()
            )));
        }
        self.qr.check_rank(m)
    }

    /// `r^MS_{m,n}` from the residual energy of `Q^T y`.
    pub fn r_ms(&self, m: usize) -> Result<f64> {
        self.check_order(m)?;
        Ok(norm_sq(&self.qty[m..]) / self.dataset.n() as f64)
    }

    pub fn fitted(&self, m: usize) -> Result<Vec<f64>> {
        self.check_order(m)?;
        Ok(self.qr.project_prefix(m, &self.qty))
    }

    pub fn fit(&self, m: usize) -> Result<FitResult> {
        self.check_order(m)?;
        let theta = self.qr.solve_prefix(m, &self.qty);
        let y_hat = self.qr.project_prefix(m, &self.qty);
        let r_ms = mean_sq_diff(&y_hat, &self.dataset.y)?;
        Ok(FitResult {
            order: m,
            theta_hat: Vector::new(theta)?,
            y_hat: Vector::new(y_hat)?,
            r_ms,
            n: self.dataset.n(),
        })
    }

    /// Oracle `r^N_{m,n}`; needs `y_bar`.
    pub fn oracle_nmse(&self, m: usize) -> Result<f64> {
        let y_bar = self
            .dataset
            .y_bar
            .as_ref()
            .ok_or(Error::MissingGroundTruth("y_bar"))?;
        mean_sq_diff(&self.fitted(m)?, y_bar)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
}
