//! Chebyshev bounds on the noise-free risk of a least-squares fit.
//!
//! For Gaussian noise both `r^N_{m,n}` and `r^MS_{m,n}` are scaled chi-square
//! samples. Chebyshev's inequality on `r^N` gives confidence bounds
//! (multiplier `beta`); the same inequality on the observable `r^MS` validates
//! the noise variance and the unmodeled-dynamics energy (multiplier `alpha`).
//!
//! `r^2N` is the KL divergence `r^N / (2 sigma^2)`. The closed form of the
//! worst-case `r^2N` equals `r^N / sigma^2` instead; both are exposed
//! through [`Convention`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{Dataset, KernelSpec, OrderScan};

/// Chebyshev probability `max(0, 1 - 1/k^2)` for a multiplier `k`.
pub fn chebyshev_probability(k: f64) -> f64 {
    if k <= 1.0 {
        0.0
    } else {
        1.0 - 1.0 / (k * k)
    }
}

/// Validation (`alpha`) and confidence (`beta`) multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsRepr", try_from = "ParamsRepr")]
pub struct ConfidenceParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ConfidenceParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn p_alpha(&self) -> f64 {
        chebyshev_probability(self.alpha)
    }

    pub fn p_beta(&self) -> f64 {
        chebyshev_probability(self.beta)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    alpha: f64,
    beta: f64,
    #[serde(default, skip_deserializing)]
    p_alpha: f64,
    #[serde(default, skip_deserializing)]
    p_beta: f64,
}

impl From<ConfidenceParams> for ParamsRepr {
    fn from(p: ConfidenceParams) -> Self {
        Self {
            alpha: p.alpha,
            beta: p.beta,
            p_alpha: p.p_alpha(),
            p_beta: p.p_beta(),
        }
    }
}

impl TryFrom<ParamsRepr> for ConfidenceParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        ConfidenceParams::new(r.alpha, r.beta)
    }
}

/// Normalization applied to a noise-free risk before comparing with epsilon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `r^N / (2 sigma^2)`: the KL divergence between equal-variance Gaussians.
    #[default]
    CanonicalHalf,
    /// `r^N / sigma^2`, the normalization of the closed-form d2NMSE bound.
    Unhalved,
}

impl Convention {
    pub fn normalize(self, r_n: f64, sigma_sq: f64) -> f64 {
        match self {
            Convention::CanonicalHalf => r_n / (2.0 * sigma_sq),
            Convention::Unhalved => r_n / sigma_sq,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Convention::CanonicalHalf => "canonical_half",
            Convention::Unhalved => "unhalved",
        }
    }
}

/// Range of noise variances consistent with an observed `r^MS` at
/// validation probability `p_alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseVarianceRange {
    pub low: f64,
    pub high: f64,
    pub p_alpha: f64,
    pub source_r_ms: f64,
    pub m: usize,
    pub n: usize,
}

impl NoiseVarianceRange {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    pub fn contains(&self, sigma_sq: f64) -> bool {
        self.low <= sigma_sq && sigma_sq <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    KnownOrder,
    General,
}

/// Bounds on `r^N_{m,n}` and on `r^2N_{m,n} = r^N / (2 sigma_sq_used)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBounds {
    pub m: usize,
    pub n: usize,
    pub r_n_low: f64,
    pub r_n_high: f64,
    pub r_2n_low: f64,
    pub r_2n_high: f64,
    pub params: ConfidenceParams,
    pub sigma_sq_used: f64,
    pub mode: BoundMode,
}

impl RiskBounds {
    pub fn contains(&self, r_n: f64) -> bool {
        self.r_n_low <= r_n && r_n <= self.r_n_high
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        m: usize,
        n: usize,
        low: f64,
        high: f64,
        params: ConfidenceParams,
        sigma_sq_used: f64,
        mode: BoundMode,
    ) -> Self {
        // Squared norms: a negative end carries no information.
        let low = low.max(0.0);
        let high = high.max(0.0);
        Self {
            m,
            n,
            r_n_low: low,
            r_n_high: high,
            r_2n_low: low / (2.0 * sigma_sq_used),
            r_2n_high: high / (2.0 * sigma_sq_used),
            params,
            sigma_sq_used,
            mode,
        }
    }
}

fn check_variance(sigma_sq: f64) -> Result<()> {
    if sigma_sq > 0.0 && sigma_sq.is_finite() {
        Ok(())
    } else {
        Err(Error::NonpositiveVariance(sigma_sq))
    }
}

fn check_multiplier(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and >= 0, got {v}"
        )))
    }
}

fn check_risk(r_ms: f64) -> Result<()> {
    if r_ms >= 0.0 && r_ms.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "r_ms must be finite and >= 0, got {r_ms}"
        )))
    }
}

/// Mean and variance of `R^N_{m,n} = (1/n) w^T H_m w`.
pub fn chisq_moments_rn(m: usize, n: usize, sigma_sq: f64) -> Result<(f64, f64)> {
    if m == 0 || m > n {
        return Err(Error::BadShape(format!(
            "need 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    check_variance(sigma_sq)?;
    let (m, n) = (m as f64, n as f64);
    Ok((m / n * sigma_sq, 2.0 * m / (n * n) * sigma_sq * sigma_sq))
}

/// Mean and variance of `R^MS_{m,n}` when the class misses unmodeled
/// energy `(1/n) ||G_m B_m Delta_m||^2` (zero once `m >= m*`).
pub fn chisq_moments_rms(
    m: usize,
    n: usize,
    sigma_sq: f64,
    unmodeled_energy: f64,
) -> Result<(f64, f64)> {
    if m >= n {
        return Err(Error::BadShape(format!("need m < n, got m = {m}, n = {n}")));
    }
    check_variance(sigma_sq)?;
    if !(unmodeled_energy >= 0.0 && unmodeled_energy.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "unmodeled energy must be finite and >= 0, got {unmodeled_energy}"
        )));
    }
    let (mf, nf) = (m as f64, n as f64);
    let keep = 1.0 - mf / nf;
    let mean = keep * sigma_sq + unmodeled_energy;
    let var = 2.0 / nf * keep * sigma_sq * sigma_sq
        + 4.0 * sigma_sq / (nf * nf) * (nf * unmodeled_energy);
    Ok((mean, var))
}

/// Chebyshev interval on `r^N` when the true order is inside the class and
/// the noise variance is known.
pub fn rn_bounds_known_order(m: usize, n: usize, sigma_sq: f64, beta: f64) -> Result<RiskBounds> {
    check_multiplier("beta", beta)?;
    let (mean, var) = chisq_moments_rn(m, n, sigma_sq)?;
    let half_width = beta * var.sqrt();
    Ok(RiskBounds::assemble(
        m,
        n,
        mean - half_width,
        mean + half_width,
        ConfidenceParams { alpha: 0.0, beta },
        sigma_sq,
        BoundMode::KnownOrder,
    ))
}

/// Smallest `n` with `(m + beta sqrt(2m)) / (2n) <= epsilon`.
pub fn sample_complexity_known_order(m: usize, epsilon: f64, beta: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    check_multiplier("beta", beta)?;
    let m = m as f64;
    let target = (m + beta * (2.0 * m).sqrt()) / (2.0 * epsilon);
    // 5 / (2 * 0.05) must give 50, not 51, despite 0.05 not being exact.
    let snapped = if (target - target.round()).abs() <= 1e-9 * target.max(1.0) {
        target.round()
    } else {
        target.ceil()
    };
    Ok((snapped as usize).max(1))
}

/// Noise variances validated by an observed `r_ms` at multiplier `alpha`.
pub fn validate_noise_variance(
    r_ms: f64,
    m: usize,
    n: usize,
    alpha: f64,
) -> Result<NoiseVarianceRange> {
    if !(r_ms > 0.0 && r_ms.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "r_ms must be positive, got {r_ms}"
        )));
    }
    check_multiplier("alpha", alpha)?;
    let (lo_den, hi_den) = validation_denominators(m, n, alpha)?;
    let nr = n as f64 * r_ms;
    Ok(NoiseVarianceRange {
        low: nr / lo_den,
        high: nr / hi_den,
        p_alpha: chebyshev_probability(alpha),
        source_r_ms: r_ms,
        m,
        n,
    })
}

/// `(n - m + alpha sqrt(2(n-m)), n - m - alpha sqrt(2(n-m)))`, rejecting
/// `n - m <= 2 alpha^2` where the second one is not positive.
fn validation_denominators(m: usize, n: usize, alpha: f64) -> Result<(f64, f64)> {
    let dof = n.saturating_sub(m) as f64;
    let two_a2 = 2.0 * alpha * alpha;
    if n <= m || dof <= two_a2 {
        return Err(Error::InsufficientSamples {
            n,
            m,
            alpha,
            minimal_n: m + two_a2.floor() as usize + 1,
        });
    }
    let spread = alpha * (2.0 * dof).sqrt();
    Ok((dof + spread, dof - spread))
}

/// Known-order bounds with the noise variance replaced by its validated
/// range. `r_2n` is normalized by the high end of that range.
pub fn rn_bounds_via_mse_known_order(
    r_ms: f64,
    m: usize,
    n: usize,
    params: ConfidenceParams,
) -> Result<RiskBounds> {
    if m == 0 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    let range = validate_noise_variance(r_ms, m, n, params.alpha)?;
    let (lo_den, hi_den) = validation_denominators(m, n, params.alpha)?;
    let mf = m as f64;
    let spread = params.beta * (2.0 * mf).sqrt();
    let low = (mf - spread) * r_ms / hi_den;
    let high = (mf + spread) * r_ms / lo_den;
    Ok(RiskBounds::assemble(
        m,
        n,
        low,
        high,
        params,
        range.high,
        BoundMode::KnownOrder,
    ))
}

fn check_general(r_ms: f64, m: usize, n: usize, sigma_sq: f64) -> Result<()> {
    if m == 0 || m >= n {
        return Err(Error::BadShape(format!(
            "need 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    check_variance(sigma_sq)?;
    check_risk(r_ms)
}

fn kappa_argument(r_ms: f64, m: usize, n: usize, sigma_sq: f64, alpha: f64) -> f64 {
    let nf = n as f64;
    let eta = (1.0 - m as f64 / nf) * sigma_sq;
    alpha * alpha * sigma_sq / nf + r_ms - eta / 2.0
}

/// Bounds on `r^N_{m,n}` without assuming the true order is in the class.
/// The unmodeled energy is validated from `r_ms` at multiplier `alpha`, then
/// the confidence interval at multiplier `beta` is placed around it.
pub fn general_rn_bounds(
    r_ms: f64,
    m: usize,
    n: usize,
    sigma_sq: f64,
    params: ConfidenceParams,
) -> Result<RiskBounds> {
    check_general(r_ms, m, n, sigma_sq)?;
    let (center, spread) = general_center_spread(r_ms, m, n, sigma_sq, params)?;
    Ok(RiskBounds::assemble(
        m,
        n,
        center - spread,
        center + spread,
        params,
        sigma_sq,
        BoundMode::General,
    ))
}

/// Center and half-width (`kappa` plus the `beta` term) of the general
/// interval, before clamping.
fn general_center_spread(
    r_ms: f64,
    m: usize,
    n: usize,
    sigma_sq: f64,
    params: ConfidenceParams,
) -> Result<(f64, f64)> {
    let (alpha, beta) = (params.alpha, params.beta);
    let (mf, nf) = (m as f64, n as f64);
    let argument = kappa_argument(r_ms, m, n, sigma_sq, alpha);
    let kappa = if alpha == 0.0 {
        0.0
    } else if argument < 0.0 {
        return Err(Error::KappaDomain { m, n, argument });
    } else {
        2.0 * alpha * sigma_sq.sqrt() / nf * argument.sqrt()
    };
    let eta = (1.0 - mf / nf) * sigma_sq;
    let center = r_ms + 2.0 * alpha * alpha * sigma_sq / nf - eta + mf / nf * sigma_sq;
    Ok((center, kappa + beta * (2.0 * mf).sqrt() * sigma_sq / nf))
}

/// Worst-case normalized noise-free risk for order `m`.
///
/// Unlike [`RiskBounds::r_2n_high`] the value is not clamped at zero, so the
/// two conventions differ by exactly a factor of two everywhere. It only goes
/// negative when `r_ms` sits far below its expectation.
pub fn d2nmse_upper(
    r_ms: f64,
    m: usize,
    n: usize,
    sigma_sq: f64,
    params: ConfidenceParams,
    convention: Convention,
) -> Result<f64> {
    match convention {
        Convention::CanonicalHalf => {
            check_general(r_ms, m, n, sigma_sq)?;
            let (center, spread) = general_center_spread(r_ms, m, n, sigma_sq, params)?;
            Ok((center + spread) / (2.0 * sigma_sq))
        }
        Convention::Unhalved => {
            // Closed form, evaluated term by term.
            check_general(r_ms, m, n, sigma_sq)?;
            let (alpha, beta) = (params.alpha, params.beta);
            let (mf, nf) = (m as f64, n as f64);
            let nr = r_ms / sigma_sq;
            let inner = alpha * alpha / nf + nr - 0.5 * (1.0 - mf / nf);
            if inner < 0.0 && alpha != 0.0 {
                return Err(Error::KappaDomain {
                    m,
                    n,
                    argument: inner * sigma_sq,
                });
            }
            let root = if alpha == 0.0 { 0.0 } else { inner.sqrt() };
            Ok(nr
                + 2.0 * alpha / nf * root
                + (2.0 * alpha * alpha + 2.0 * mf + beta * (2.0 * mf).sqrt() - nf) / nf)
        }
    }
}

/// Closed inequality: a bound exactly at epsilon is learnable.
pub fn is_learnable(r_2n_high: f64, epsilon: f64) -> Result<bool> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    Ok(r_2n_high <= epsilon)
}

/// Bound value for every order `1..=top` of a scan. Orders past the
/// full-rank prefix or outside the kappa domain come back as errors.
pub fn order_bound_curve(
    scan: &OrderScan<'_>,
    top: usize,
    n: usize,
    sigma_sq: f64,
    params: ConfidenceParams,
    convention: Convention,
) -> Vec<(usize, Result<f64>)> {
    (1..=top)
        .map(|m| {
            let value = scan
                .r_ms(m)
                .and_then(|r| d2nmse_upper(r, m, n, sigma_sq, params, convention));
            (m, value)
        })
        .collect()
}

/// Which order the bound is evaluated at while `n` grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Known true order.
    Fixed(usize),
    /// Per-`n` minimizer over `1..=max_order` (capped at `n - 1`).
    Selected { max_order: usize },
}

/// First grid point where a decreasing curve reaches epsilon, plus the
/// crossing interpolated linearly from the previous grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub n: usize,
    pub interpolated: f64,
}

pub fn first_crossing(n_grid: &[usize], curve: &[f64], epsilon: f64) -> Result<Crossing> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    if n_grid.len() != curve.len() {
        return Err(Error::LengthMismatch {
            expected: n_grid.len(),
            found: curve.len(),
        });
    }
    let i = curve
        .iter()
        .position(|&c| c <= epsilon)
        .ok_or(Error::NotReached { epsilon })?;
    let interpolated = if i == 0 || !curve[i - 1].is_finite() {
        n_grid[i] as f64
    } else {
        let (n0, n1) = (n_grid[i - 1] as f64, n_grid[i] as f64);
        let (c0, c1) = (curve[i - 1], curve[i]);
        n0 + (c0 - epsilon) / (c0 - c1) * (n1 - n0)
    };
    Ok(Crossing {
        n: n_grid[i],
        interpolated,
    })
}

/// Quantity averaged over trials while `n` grows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMeasure {
    /// Ground-truth `r^N` from `y_bar`, normalized by the convention.
    Oracle,
    /// Known-order upper bound; depends on the data only through `n`.
    KnownOrderBound,
    /// Worst-case bound computed from `r_ms`.
    #[default]
    GeneralBound,
}

/// Measure for one (prefix) dataset under an order policy, using the
/// dataset's own noise variance. Under [`OrderPolicy::Selected`] the order is
/// the minimizer of the general bound and the measure is read at that order.
pub fn policy_measure(
    dataset: &Dataset,
    kernel: &KernelSpec,
    policy: OrderPolicy,
    measure: RiskMeasure,
    params: ConfidenceParams,
    convention: Convention,
) -> Result<f64> {
    let sigma_sq = dataset
        .noise_var
        .ok_or(Error::MissingGroundTruth("noise_var"))?;
    let n = dataset.n();
    let (scan, m, bound) = match policy {
        OrderPolicy::Fixed(m) => {
            if measure == RiskMeasure::KnownOrderBound {
                let b = rn_bounds_known_order(m, n, sigma_sq, params.beta)?;
                return Ok(convention.normalize(b.r_n_high, sigma_sq));
            }
            let scan = OrderScan::new(dataset, m, kernel)?;
            let bound = match measure {
                RiskMeasure::GeneralBound => Some(d2nmse_upper(
                    scan.r_ms(m)?,
                    m,
                    n,
                    sigma_sq,
                    params,
                    convention,
                )?),
                _ => None,
            };
            (scan, m, bound)
        }
        OrderPolicy::Selected { max_order } => {
            let top = max_order.min(n.saturating_sub(1)).min(kernel.max_order);
            let scan = OrderScan::new(dataset, top, kernel)?;
            let mut first_err = None;
            let mut best: Option<(usize, f64)> = None;
            for (m, v) in order_bound_curve(&scan, top, n, sigma_sq, params, convention) {
                match v {
                    Ok(v) if best.map_or(true, |(_, b)| v < b) => best = Some((m, v)),
                    Ok(_) => {}
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            let (m, v) = match best {
                Some(b) => b,
                None => return Err(first_err.unwrap_or(Error::BadShape("no order to scan".into()))),
            };
            (scan, m, Some(v))
        }
    };
    match measure {
        RiskMeasure::Oracle => Ok(convention.normalize(scan.oracle_nmse(m)?, sigma_sq)),
        RiskMeasure::KnownOrderBound => {
            let b = rn_bounds_known_order(m, n, sigma_sq, params.beta)?;
            Ok(convention.normalize(b.r_n_high, sigma_sq))
        }
        RiskMeasure::GeneralBound => Ok(bound.expect("general bound computed above")),
    }
}

/// Trial average of [`policy_measure`] at each grid length, using nested
/// prefixes of each trial's dataset. A grid length where some trial has no
/// defined bound (too short for the order, or outside the kappa domain) gets
/// `f64::INFINITY`.
pub fn trial_averaged_bound_curve(
    trials: &[Dataset],
    n_grid: &[usize],
    kernel: &KernelSpec,
    policy: OrderPolicy,
    measure: RiskMeasure,
    params: ConfidenceParams,
    convention: Convention,
) -> Result<Vec<f64>> {
    if trials.is_empty() || n_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one trial and one grid point".into(),
        ));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "n grid must be strictly increasing".into(),
        ));
    }
    n_grid
        .iter()
        .map(|&n| {
            let mut sum = 0.0;
            for ds in trials {
                match policy_measure(&ds.prefix(n)?, kernel, policy, measure, params, convention) {
                    Ok(v) => sum += v,
                    Err(
                        Error::KappaDomain { .. }
                        | Error::BadShape(_)
                        | Error::OrderExceedsData { .. }
                        | Error::RankDeficient { .. },
                    ) => return Ok(f64::INFINITY),
                    Err(e) => return Err(e),
                }
            }
            Ok(sum / trials.len() as f64)
        })
        .collect()
}

/// Smallest grid length whose trial-averaged measure is at most epsilon.
/// Each trial dataset must be at least as long as the grid's end.
#[allow(clippy::too_many_arguments)]
pub fn sample_complexity_empirical(
    trials: &[Dataset],
    n_grid: &[usize],
    kernel: &KernelSpec,
    policy: OrderPolicy,
    measure: RiskMeasure,
    epsilon: f64,
    params: ConfidenceParams,
    convention: Convention,
) -> Result<Crossing> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    let curve =
        trial_averaged_bound_curve(trials, n_grid, kernel, policy, measure, params, convention)?;
    first_crossing(n_grid, &curve, epsilon)
}
