//! Order selection by minimizing the worst-case normalized risk bound.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    d2nmse_upper, validate_noise_variance, ConfidenceParams, Convention, NoiseVarianceRange,
};
use crate::error::{Error, Result};
use crate::regression::{Dataset, KernelSpec, OrderScan};

/// Source of the noise variance used inside the bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPolicy {
    /// `Dataset::noise_var`, known for simulated data.
    #[default]
    Oracle,
    /// Midpoint of the validated range at the largest order `M`, where the
    /// unmodeled energy is smallest.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryVerdict {
    InteriorMinimum,
    /// The minimizer sits at the cap: a larger `M` may do better.
    AtCapExtendM,
}

/// An order left out of the scan, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedOrder {
    pub m: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n: usize,
    pub m_grid: Vec<usize>,
    /// Worst-case bound per order; `None` for excluded orders.
    pub bound_curve: Vec<Option<f64>>,
    pub r_ms_curve: Vec<Option<f64>>,
    pub m_star_hat: usize,
    pub epsilon_min: f64,
    pub params: ConfidenceParams,
    pub sigma_policy: SigmaPolicy,
    pub boundary_verdict: BoundaryVerdict,
    pub sigma_sq_used: f64,
    /// Validated range behind an estimated variance.
    pub noise_range: Option<NoiseVarianceRange>,
    pub excluded_orders: Vec<ExcludedOrder>,
    pub convention: Convention,
}

impl SelectionReport {
    pub fn max_order(&self) -> usize {
        self.m_grid.len()
    }

    /// Bound at the largest order, if it was defined.
    pub fn bound_at_cap(&self) -> Option<f64> {
        self.bound_curve.last().copied().flatten()
    }
}

/// First index of the minimum over the defined entries.
pub(crate) fn argmin_first(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn resolve_sigma(
    scan: &OrderScan<'_>,
    dataset: &Dataset,
    max_order: usize,
    params: ConfidenceParams,
    policy: SigmaPolicy,
) -> Result<(f64, Option<NoiseVarianceRange>)> {
    match policy {
        SigmaPolicy::Oracle => {
            let v = dataset
                .noise_var
                .ok_or(Error::MissingGroundTruth("noise_var"))?;
            Ok((v, None))
        }
        SigmaPolicy::Estimated => {
            let range = validate_noise_variance(
                scan.r_ms(max_order)?,
                max_order,
                dataset.n(),
                params.alpha,
            )?;
            Ok((range.midpoint(), Some(range)))
        }
    }
}

/// Fit every order `1..=max_order` and return the minimizer of the bound,
/// preferring the smallest order on ties.
///
/// Only `x` and `y` are read, plus `noise_var` under [`SigmaPolicy::Oracle`].
pub fn select_order(
    dataset: &Dataset,
    max_order: usize,
    kernel: &KernelSpec,
    params: ConfidenceParams,
    sigma_policy: SigmaPolicy,
    convention: Convention,
) -> Result<SelectionReport> {
    let n = dataset.n();
    if max_order == 0 {
        return Err(Error::InvalidParameter(
            "maximum order must be at least 1".into(),
        ));
    }
    if sigma_policy == SigmaPolicy::Estimated && (max_order < 2 || max_order >= n) {
        return Err(Error::InvalidParameter(format!(
            "estimated noise needs 2 <= M <= n - 1, got M = {max_order}, n = {n}"
        )));
    }
    let scan = OrderScan::new(dataset, max_order, kernel)?;
    if scan.full_rank_orders() == 0 {
        scan.check_order(1)?;
    }
    let (sigma_sq, noise_range) =
        match resolve_sigma(&scan, dataset, max_order, params, sigma_policy) {
            // The top order itself may be rank deficient; fall back to the
            // highest usable one for the variance estimate.
            Err(Error::RankDeficient { .. }) if sigma_policy == SigmaPolicy::Estimated => {
                resolve_sigma(
                    &scan,
                    dataset,
                    scan.full_rank_orders(),
                    params,
                    sigma_policy,
                )?
            }
            other => other?,
        };

    let mut bound_curve = Vec::with_capacity(max_order);
    let mut r_ms_curve = Vec::with_capacity(max_order);
    let mut excluded_orders = Vec::new();
    for m in 1..=max_order {
        let outcome = scan
            .r_ms(m)
            .and_then(|r| Ok((r, d2nmse_upper(r, m, n, sigma_sq, params, convention)?)));
        match outcome {
            Ok((r, b)) => {
                r_ms_curve.push(Some(r));
                bound_curve.push(Some(b));
            }
            Err(
                e @ (Error::RankDeficient { .. } | Error::KappaDomain { .. } | Error::BadShape(_)),
            ) => {
                r_ms_curve.push(scan.r_ms(m).ok());
                bound_curve.push(None);
                excluded_orders.push(ExcludedOrder {
                    m,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let best = argmin_first(&bound_curve).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "no order in 1..={max_order} has a defined bound: {}",
            excluded_orders[0].reason
        ))
    })?;
    let m_star_hat = best + 1;
    Ok(SelectionReport {
        n,
        m_grid: (1..=max_order).collect(),
        epsilon_min: bound_curve[best].expect("argmin is defined"),
        bound_curve,
        r_ms_curve,
        m_star_hat,
        params,
        sigma_policy,
        boundary_verdict: if m_star_hat == max_order {
            BoundaryVerdict::AtCapExtendM
        } else {
            BoundaryVerdict::InteriorMinimum
        },
        sigma_sq_used: sigma_sq,
        noise_range,
        excluded_orders,
        convention,
    })
}

/// Smallest epsilon for which some scanned order is learnable.
pub fn epsilon_min(report: &SelectionReport) -> f64 {
    report.bound_curve[report.m_star_hat - 1].unwrap_or(report.epsilon_min)
}

/// Repeat [`select_order`] while the minimizer sits at the cap, doubling the
/// cap up to `max_cap`. With `epsilon` given, a cap whose bound already meets
/// it ends the search.
#[allow(clippy::too_many_arguments)]
pub fn validate_order_cap(
    dataset: &Dataset,
    initial_cap: usize,
    max_cap: usize,
    kernel: &KernelSpec,
    params: ConfidenceParams,
    sigma_policy: SigmaPolicy,
    convention: Convention,
    epsilon: Option<f64>,
) -> Result<SelectionReport> {
    if initial_cap == 0 || initial_cap > max_cap || max_cap >= dataset.n() {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= initial cap <= max cap <= n - 1, got {initial_cap}, {max_cap}, n = {}",
            dataset.n()
        )));
    }
    if let Some(eps) = epsilon {
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::NonpositiveEpsilon(eps));
        }
    }
    let mut cap = initial_cap;
    loop {
        let report = select_order(dataset, cap, kernel, params, sigma_policy, convention)?;
        let met = matches!((epsilon, report.bound_at_cap()), (Some(eps), Some(b)) if b <= eps);
        if report.boundary_verdict == BoundaryVerdict::InteriorMinimum || met || cap >= max_cap {
            return Ok(report);
        }
        cap = (cap * 2).min(max_cap);
    }
}
