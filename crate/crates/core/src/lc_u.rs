//! Local caching-aided unicast.
//!
//! Each receiver fills its cache on its own by reverse water-filling its
//! expected cached-only distortion; at delivery time the sender water-fills
//! the link capacity across the receivers of the current demand.

use serde::{Deserialize, Serialize};

use crate::par;
use crate::source_model::{
    self, CachePlan, DemandModel, DemandRealization, Estimate, ExpectationMode, SourceLibrary,
    PROB_TOL,
};
use crate::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;
const BISECTION_ITERS: usize = 200;
const BISECTION_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfillResult {
    pub allocation: Vec<f64>,
    /// Lagrange multiplier of the budget constraint, in the units of
    /// `weight / cost`.
    pub water_level: f64,
    pub active_set: Vec<usize>,
}

impl WaterfillResult {
    pub fn total(&self) -> f64 {
        self.allocation.iter().sum()
    }
}

/// Marginal value `2 ln2 · w · 2^(-2(c + x)) / a` of one more unit of budget.
pub fn marginal_value(weight: f64, offset: f64, cost: f64, alloc: f64) -> f64 {
    2.0 * LN2 * weight * (-2.0 * (offset + alloc)).exp2() / cost
}

/// `Σ_k w_k 2^(-2(c_k + x_k))`.
pub fn weighted_distortion(weights: &[f64], offsets: &[f64], alloc: &[f64]) -> f64 {
    weights
        .iter()
        .zip(offsets)
        .zip(alloc)
        .map(|((w, c), x)| w * (-2.0 * (c + x)).exp2())
        .sum()
}

/// Minimizes `Σ_k w_k 2^(-2(c_k + x_k))` subject to `Σ_k a_k x_k = budget`,
/// `x ≥ 0`.
///
/// The solution is `x_k = (ν + h_k)^+` with `h_k = ½ log2(w_k / a_k) - c_k`,
/// which is the usual reverse water-filling form written on a log scale. The
/// level `ν` is bisected (at most 200 steps or width 1e-12) and then closed
/// exactly on the final active set, so the budget is met to rounding error.
/// Terms with zero weight never receive budget. A term sitting exactly on
/// the water line gets zero.
pub fn reverse_waterfill(
    weights: &[f64],
    offsets: &[f64],
    costs: &[f64],
    budget: f64,
) -> Result<WaterfillResult> {
    let k = weights.len();
    if offsets.len() != k || costs.len() != k {
        return Err(Error::dimension(
            "weights, offsets and costs must have equal length",
        ));
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::domain(format!(
            "budget {budget} must be a non-negative real"
        )));
    }
    if costs.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::domain("costs must be positive"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::domain("weights must be non-negative"));
    }
    let live: Vec<usize> = (0..k).filter(|&i| weights[i] > 0.0).collect();
    if live.is_empty() {
        return Err(Error::Degenerate("every weight is zero".into()));
    }
    let height: Vec<f64> = (0..k)
        .map(|i| {
            if weights[i] > 0.0 {
                0.5 * (weights[i] / costs[i]).log2() - offsets[i]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let level_to_lambda = |nu: f64| 2.0 * LN2 * (-2.0 * nu).exp2();
    let h_max = live
        .iter()
        .map(|&i| height[i])
        .fold(f64::NEG_INFINITY, f64::max);

    if budget == 0.0 {
        return Ok(WaterfillResult {
            allocation: vec![0.0; k],
            water_level: level_to_lambda(-h_max),
            active_set: vec![],
        });
    }

    let spent = |nu: f64| {
        live.iter()
            .map(|&i| costs[i] * (nu + height[i]).max(0.0))
            .sum::<f64>()
    };
    let h_min = live
        .iter()
        .map(|&i| height[i])
        .fold(f64::INFINITY, f64::min);
    let cost_sum: f64 = live.iter().map(|&i| costs[i]).sum();
    let (mut lo, mut hi) = (-h_max, -h_min + budget / cost_sum);
    for _ in 0..BISECTION_ITERS {
        if hi - lo <= BISECTION_WIDTH * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if spent(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // close the level exactly on the active set found by bisection
    let mut nu = 0.5 * (lo + hi);
    for _ in 0..live.len() + 1 {
        let active: Vec<usize> = live
            .iter()
            .copied()
            .filter(|&i| nu + height[i] > 0.0)
            .collect();
        let a_sum: f64 = active.iter().map(|&i| costs[i]).sum();
        let ah_sum: f64 = active.iter().map(|&i| costs[i] * height[i]).sum();
        let closed = (budget - ah_sum) / a_sum;
        let consistent = live
            .iter()
            .all(|&i| (closed + height[i] > 0.0) == active.contains(&i));
        nu = closed;
        if consistent {
            break;
        }
    }

    let allocation: Vec<f64> = (0..k)
        .map(|i| {
            if weights[i] > 0.0 {
                (nu + height[i]).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let active_set = (0..k).filter(|&i| allocation[i] > 0.0).collect();
    Ok(WaterfillResult {
        allocation,
        water_level: level_to_lambda(nu),
        active_set,
    })
}

/// Per-receiver cache allocation of LC-U, assuming nothing further is
/// delivered. Files with zero request probability are never cached.
pub fn lcu_cache_allocation(
    lib: &SourceLibrary,
    demand_row: &[f64],
    budget: f64,
) -> Result<WaterfillResult> {
    if demand_row.len() != lib.m() {
        return Err(Error::dimension(format!(
            "demand row has {} entries, library {}",
            demand_row.len(),
            lib.m()
        )));
    }
    let sum: f64 = demand_row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::domain(format!("demand row sums to {sum}")));
    }
    let weights: Vec<f64> = demand_row
        .iter()
        .zip(lib.variances())
        .map(|(q, v)| q * v)
        .collect();
    let m = lib.m();
    reverse_waterfill(&weights, &vec![0.0; m], &vec![1.0; m], budget)
}

/// Caches every receiver independently; rows are solved concurrently.
pub fn lcu_cache_plan(
    lib: &SourceLibrary,
    model: &DemandModel,
    budgets: &[f64],
) -> Result<CachePlan> {
    if budgets.len() != model.n() {
        return Err(Error::dimension(format!(
            "{} budgets for {} receivers",
            budgets.len(),
            model.n()
        )));
    }
    let rows = par::map_range(model.n(), |i| {
        lcu_cache_allocation(lib, model.row(i), budgets[i])
    });
    let rates = rows
        .into_iter()
        .map(|r| r.map(|w| w.allocation))
        .collect::<Result<Vec<_>>>()?;
    CachePlan::new(rates, budgets.to_vec())
}

/// Sender-side unicast rates of one demand; sums to `capacity`.
pub fn lcu_transmission_rates(
    lib: &SourceLibrary,
    cache: &CachePlan,
    d: &DemandRealization,
    capacity: f64,
) -> Result<WaterfillResult> {
    if d.n() != cache.n() {
        return Err(Error::dimension(format!(
            "demand has {} receivers, cache plan {}",
            d.n(),
            cache.n()
        )));
    }
    if let Some(&bad) = d.files().iter().find(|&&f| f >= lib.m()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            limit: lib.m(),
        });
    }
    let weights: Vec<f64> = d.files().iter().map(|&f| lib.variance(f)).collect();
    let offsets: Vec<f64> = d
        .files()
        .iter()
        .enumerate()
        .map(|(i, &f)| cache.rate(i, f))
        .collect();
    reverse_waterfill(&weights, &offsets, &vec![1.0; d.n()], capacity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcuOutcome {
    pub cache: CachePlan,
    pub estimate: Estimate,
}

/// Full LC-U pipeline: local cache allocation, then per-demand water-filling,
/// averaged over the demand distribution.
pub fn lcu_expected_distortion(
    lib: &SourceLibrary,
    model: &DemandModel,
    budgets: &[f64],
    capacity: f64,
    mode: ExpectationMode,
) -> Result<LcuOutcome> {
    if model.m() != lib.m() {
        return Err(Error::dimension("demand model and library disagree on m"));
    }
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::domain(format!(
            "capacity {capacity} must be non-negative"
        )));
    }
    let cache = lcu_cache_plan(lib, model, budgets)?;
    let estimate = source_model::expected_distortion(
        lib,
        model,
        &cache,
        |d| {
            lcu_transmission_rates(lib, &cache, d, capacity)
                .expect("validated inputs")
                .allocation
        },
        mode,
    )?;
    Ok(LcuOutcome { cache, estimate })
}

/// Largest relative spread of the marginal values over the active set and
/// the largest relative excess of an inactive marginal value above the
/// water level. Both are zero for an exact KKT point.
pub fn kkt_residuals(
    weights: &[f64],
    offsets: &[f64],
    costs: &[f64],
    result: &WaterfillResult,
) -> (f64, f64) {
    let lambda = result.water_level;
    let mut stationarity: f64 = 0.0;
    let mut slackness: f64 = 0.0;
    for k in 0..weights.len() {
        if weights[k] == 0.0 {
            continue;
        }
        let mv = marginal_value(weights[k], offsets[k], costs[k], result.allocation[k]);
        if result.allocation[k] > 0.0 {
            stationarity = stationarity.max((mv - lambda).abs() / lambda);
        } else {
            slackness = slackness.max((mv - lambda).max(0.0) / lambda);
        }
    }
    (stationarity, slackness)
}
