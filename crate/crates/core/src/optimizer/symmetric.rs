//! The receiver-symmetric program: one cache and multicast rate per file,
//! shared by every receiver.

use std::ops::Range;

use rand::Rng;

use super::config::{CcCmSolution, OptimizerConfig, Scheme, TraceEntry, UnicastMode};
use super::rlfu::optimize_rlfu;
use super::solver::{self, project_capped_simplex, random_cache_row, unicast_fill, Problem};
use crate::coded_multicast::{rate_symmetric, MulticastRatePlan};
use crate::lc_u::lcu_cache_allocation;
use crate::rng;
use crate::source_model::{self, DemandModel, SourceLibrary, PROB_TOL};
use crate::{Error, Result};

/// Popularity row and cache budget of a receiver-symmetric instance.
pub fn symmetric_inputs(model: &DemandModel, budgets: &[f64]) -> Result<(Vec<f64>, f64)> {
    if budgets.len() != model.n() {
        return Err(Error::dimension(format!(
            "{} budgets for {} receivers",
            budgets.len(),
            model.n()
        )));
    }
    if !model.is_symmetric() {
        return Err(Error::contract(
            "receivers have different demand distributions",
        ));
    }
    if budgets.iter().any(|b| b != &budgets[0]) {
        return Err(Error::contract("receivers have different cache budgets"));
    }
    Ok((model.row(0).to_vec(), budgets[0]))
}

pub(super) fn check_symmetric(
    lib: &SourceLibrary,
    q: &[f64],
    cache: f64,
    capacity: f64,
    n: usize,
) -> Result<()> {
    if q.len() != lib.m() {
        return Err(Error::dimension(format!(
            "popularity has {} files, library {}",
            q.len(),
            lib.m()
        )));
    }
    if n == 0 {
        return Err(Error::domain("need at least one receiver"));
    }
    if q.iter().any(|p| !(p.is_finite() && *p >= 0.0))
        || (q.iter().sum::<f64>() - 1.0).abs() > PROB_TOL
    {
        return Err(Error::domain("popularity must be a probability vector"));
    }
    if !(cache.is_finite() && cache >= 0.0) {
        return Err(Error::domain(format!(
            "cache budget {cache} must be non-negative"
        )));
    }
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::domain(format!(
            "capacity {capacity} is negative; the program is infeasible"
        )));
    }
    Ok(())
}

/// Per-file unicast that minimizes `Σ_j q_j σ_j² 2^(-2(s_j + u_j))` subject
/// to `n Σ_j q_j u_j ≤ leftover`.
pub(super) fn symmetric_unicast(
    lib: &SourceLibrary,
    q: &[f64],
    storing: &[f64],
    n: usize,
    leftover: f64,
) -> Vec<f64> {
    let w: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(j, p)| p * lib.variance(j))
        .collect();
    let a: Vec<f64> = q.iter().map(|p| n as f64 * p).collect();
    unicast_fill(&w, storing, &a, leftover)
}

pub(super) fn symmetric_objective(lib: &SourceLibrary, q: &[f64], delivered: &[f64]) -> f64 {
    q.iter()
        .enumerate()
        .map(|(j, p)| p * lib.variance(j) * (-2.0 * delivered[j]).exp2())
        .sum()
}

/// Cache and multicast rates per file with the load they induce.
pub(super) struct Point {
    pub cached: Vec<f64>,
    pub multicast: Vec<f64>,
    pub load: f64,
}

pub(super) struct Symmetric<'a> {
    pub lib: &'a SourceLibrary,
    pub q: &'a [f64],
    pub cache: f64,
    pub capacity: f64,
    pub n: usize,
}

impl Symmetric<'_> {
    /// Builds the solution record, evaluating the objective afresh. `point.load`
    /// must come from the closed-form rate of the scheme.
    pub(super) fn finish(
        &self,
        point: Point,
        (scheme, m_tilde): (Scheme, Option<usize>),
        trace: Vec<TraceEntry>,
        tolerance: f64,
    ) -> Result<CcCmSolution> {
        let (n, q) = (self.n, self.q);
        let Point {
            cached,
            multicast,
            load,
        } = point;
        let storing: Vec<f64> = cached.iter().zip(&multicast).map(|(c, r)| c + r).collect();
        let unicast = symmetric_unicast(self.lib, q, &storing, n, self.capacity - load);
        let plan = MulticastRatePlan::symmetric(n, &cached, &multicast, &unicast)?;
        let model = DemandModel::identical(q.to_vec(), n)?;
        let cache_plan = plan.cache_plan(&vec![self.cache; n])?;
        let objective = source_model::expected_distortion_per_file(
            self.lib,
            &model,
            &cache_plan,
            &plan.delivered_per_file(),
        )?;
        let unicast_load = n as f64 * q.iter().zip(&unicast).map(|(p, u)| p * u).sum::<f64>();
        let constraint_slack = self.capacity - load - unicast_load;
        let nonneg = cached
            .iter()
            .chain(&multicast)
            .chain(&unicast)
            .all(|v| *v >= 0.0);
        Ok(CcCmSolution {
            scheme,
            feasible: nonneg && constraint_slack >= -tolerance,
            plan,
            objective,
            constraint_slack,
            multicast_load: load,
            unicast_load,
            solver_trace: trace,
            m_tilde,
            unicast_mode: UnicastMode::PerFile,
        })
    }

    fn m(&self) -> usize {
        self.q.len()
    }
}

impl Problem for Symmetric<'_> {
    fn dim(&self) -> usize {
        2 * self.m()
    }

    fn capacity(&self) -> f64 {
        self.capacity
    }

    fn multicast_coords(&self) -> Range<usize> {
        self.m()..self.dim()
    }

    fn project(&self, x: &mut [f64]) {
        let m = self.m();
        project_capped_simplex(&mut x[..m], self.cache);
        for v in &mut x[m..] {
            *v = v.max(0.0);
        }
    }

    fn load(&self, x: &[f64]) -> f64 {
        let m = self.m();
        rate_symmetric(&x[..m], &x[m..], self.q, self.n).expect("projected point")
    }

    fn value(&self, x: &[f64]) -> f64 {
        let m = self.m();
        let storing: Vec<f64> = (0..m).map(|j| x[j] + x[m + j]).collect();
        let u = symmetric_unicast(
            self.lib,
            self.q,
            &storing,
            self.n,
            self.capacity - self.load(x),
        );
        let delivered: Vec<f64> = storing.iter().zip(&u).map(|(s, u)| s + u).collect();
        symmetric_objective(self.lib, self.q, &delivered)
    }
}

pub fn optimize_symmetric(
    lib: &SourceLibrary,
    q: &[f64],
    cache: f64,
    capacity: f64,
    n: usize,
    cfg: &OptimizerConfig,
) -> Result<CcCmSolution> {
    optimize_symmetric_from(lib, q, cache, capacity, n, cfg, &[])
}

/// [`optimize_symmetric`] with extra starts at the `warm` plans.
pub fn optimize_symmetric_from(
    lib: &SourceLibrary,
    q: &[f64],
    cache: f64,
    capacity: f64,
    n: usize,
    cfg: &OptimizerConfig,
    warm: &[&MulticastRatePlan],
) -> Result<CcCmSolution> {
    cfg.validate()?;
    check_symmetric(lib, q, cache, capacity, n)?;
    let m = q.len();
    let problem = Symmetric {
        lib,
        q,
        cache,
        capacity,
        n,
    };
    let lcu = lcu_cache_allocation(lib, q, cache)?.allocation;

    let mut starts = vec![[lcu.clone(), vec![0.0; m]].concat()];
    if cfg.restarts > 1 {
        let fast = OptimizerConfig {
            restarts: 2,
            ..cfg.clone()
        };
        let truncated = optimize_rlfu(lib, q, cache, capacity, n, &fast)?;
        starts.push(
            [
                truncated.plan.cached[0].clone(),
                truncated.plan.multicast[0].clone(),
            ]
            .concat(),
        );
    }
    if cfg.restarts > 2 {
        let share = capacity / n as f64;
        starts.push(
            [
                lcu,
                q.iter()
                    .map(|&p| if p > 0.0 { share } else { 0.0 })
                    .collect(),
            ]
            .concat(),
        );
    }
    for r in 3..cfg.restarts {
        let mut s = rng::derived_stream(cfg.seed, &[r as u64]);
        let mut x = random_cache_row(&mut s, m, cache);
        x.extend((0..m).map(|_| capacity * s.random::<f64>()));
        starts.push(x);
    }
    for w in warm {
        if w.m() != m {
            return Err(Error::dimension("warm start does not match m"));
        }
        starts.push([w.cached[0].clone(), w.multicast[0].clone()].concat());
    }

    let out = solver::solve(&problem, starts, cfg);
    let (cached, multicast) = out.x.split_at(m);
    let load = rate_symmetric(cached, multicast, q, n)?;
    let point = Point {
        cached: cached.to_vec(),
        multicast: multicast.to_vec(),
        load,
    };
    problem.finish(point, (Scheme::Symmetric, None), out.trace, cfg.tolerance)
}
