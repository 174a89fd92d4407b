//! The fully symmetric program: uniform popularity and one variance, so
//! every file is cached at `M̃` and multicast at `R̃`, and unicast is never
//! needed. The objective `σ² 2^(-2(M̃+R̃))` only depends on `M̃ + R̃`.

use super::config::{CcCmSolution, Scheme, TraceEntry, UnicastMode};
use crate::coded_multicast::{rate_uniform, MulticastRatePlan};
use crate::source_model::distortion;
use crate::{Error, Result};

const BISECTION_STEPS: usize = 100;
const TIGHTNESS_POINTS: usize = 64;

/// Largest `R̃` in `[0, capacity]` with `rate_uniform(M̃, R̃, n) ≤ capacity`.
fn largest_multicast(cached: f64, capacity: f64, n: usize) -> f64 {
    if rate_uniform(cached, capacity, n) <= capacity {
        return capacity;
    }
    let (mut lo, mut hi) = (0.0, capacity);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if rate_uniform(cached, mid, n) <= capacity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Storing range `M̃ + R̃*(M̃)` at `M̃ = cache` and the best value over an even
/// grid of `M̃ ∈ [0, cache]`, as `(best M̃, best range, range at cache)`.
pub fn uniform_tightness(cache: f64, capacity: f64, n: usize) -> (f64, f64, f64) {
    let range = |mt: f64| mt + largest_multicast(mt, capacity, n);
    let at_full = range(cache);
    let mut best = (cache, at_full);
    for k in 0..TIGHTNESS_POINTS {
        let mt = cache * k as f64 / TIGHTNESS_POINTS as f64;
        let v = range(mt);
        if v > best.1 {
            best = (mt, v);
        }
    }
    (best.0, best.1, at_full)
}

/// `cache` is the per-file cache rate `M̃` available (the receiver budget
/// divided by the number of files).
pub fn optimize_uniform(sigma2: f64, cache: f64, capacity: f64, n: usize) -> Result<CcCmSolution> {
    optimize_uniform_from(sigma2, cache, capacity, n, &[])
}

/// [`optimize_uniform`] that also tries each `warm` cache rate (clamped to
/// `cache`).
pub fn optimize_uniform_from(
    sigma2: f64,
    cache: f64,
    capacity: f64,
    n: usize,
    warm: &[f64],
) -> Result<CcCmSolution> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::domain(format!("variance {sigma2} must be positive")));
    }
    if !(cache.is_finite() && cache >= 0.0) {
        return Err(Error::domain(format!(
            "cache rate {cache} must be non-negative"
        )));
    }
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::domain(format!(
            "capacity {capacity} is negative; the program is infeasible"
        )));
    }
    if n == 0 {
        return Err(Error::domain("need at least one receiver"));
    }
    // caching everything is checked per instance rather than assumed
    let (mut cached, mut range, _) = uniform_tightness(cache, capacity, n);
    for &w in warm {
        let mt = w.clamp(0.0, cache);
        let v = mt + largest_multicast(mt, capacity, n);
        if v > range {
            (cached, range) = (mt, v);
        }
    }
    let multicast = largest_multicast(cached, capacity, n);
    let load = rate_uniform(cached, multicast, n);
    let objective = distortion(sigma2, cached + multicast)?;
    let plan = MulticastRatePlan::symmetric(n, &[cached], &[multicast], &[0.0])?;
    let constraint_slack = capacity - load;
    Ok(CcCmSolution {
        scheme: Scheme::Uniform,
        feasible: constraint_slack >= 0.0,
        plan,
        objective,
        constraint_slack,
        multicast_load: load,
        unicast_load: 0.0,
        solver_trace: vec![TraceEntry {
            restart: 0,
            iteration: 0,
            objective,
            step: 0.0,
        }],
        m_tilde: None,
        unicast_mode: UnicastMode::PerFile,
    })
}
/// The one-column plan of a uniform solution repeated over `m` files.
pub fn uniform_plan(solution: &CcCmSolution, m: usize) -> Result<MulticastRatePlan> {
    let p = &solution.plan;
    if p.m() != 1 {
        return Err(Error::dimension(format!(
            "uniform plan has {} columns, expected 1",
            p.m()
        )));
    }
    MulticastRatePlan::symmetric(
        p.n(),
        &vec![p.cached[0][0]; m],
        &vec![p.multicast[0][0]; m],
        &vec![p.unicast[0][0]; m],
    )
}
