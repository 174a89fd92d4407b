//! The general program: per-receiver cache and multicast rates, unicast per
//! requested file under the demand-averaged capacity constraint, or per
//! demand under the every-demand constraint.

use std::ops::Range;

use rand::Rng;

use super::config::{CcCmSolution, OptimizerConfig, Scheme, UnicastMode};
use super::solver::{self, project_capped_simplex, random_cache_row, unicast_fill, Problem};
use crate::coded_multicast::{
    gcc_average_terms, rate_gcc_demand, GammaMode, MulticastRatePlan, RECEIVER_CAP,
};
use crate::lc_u::lcu_cache_plan;
use crate::rng;
use crate::source_model::{
    self, enumerate_demands, DemandModel, DemandRealization, ExpectationMode, SourceLibrary,
    EXACT_CAP,
};
use crate::{Error, Result};

struct General<'a> {
    lib: &'a SourceLibrary,
    model: &'a DemandModel,
    budgets: &'a [f64],
    capacity: f64,
    mode: UnicastMode,
    /// Demands with positive probability, for the per-demand mode.
    demands: Vec<(DemandRealization, f64)>,
}

impl General<'_> {
    fn n(&self) -> usize {
        self.model.n()
    }

    fn m(&self) -> usize {
        self.model.m()
    }

    fn plan(&self, x: &[f64]) -> MulticastRatePlan {
        let (n, m) = (self.n(), self.m());
        let rows = |off: usize| {
            (0..n)
                .map(|i| x[off + i * m..off + (i + 1) * m].to_vec())
                .collect::<Vec<_>>()
        };
        MulticastRatePlan::coded(rows(0), rows(n * m)).expect("projected point")
    }

    /// Per-file unicast for the averaged constraint.
    fn per_file_unicast(&self, plan: &MulticastRatePlan, leftover: f64) -> Vec<Vec<f64>> {
        let (n, m) = (self.n(), self.m());
        let nf = n as f64;
        let mut w = Vec::with_capacity(n * m);
        let mut c = Vec::with_capacity(n * m);
        let mut a = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                let q = self.model.prob(i, j);
                w.push(q * self.lib.variance(j) / nf);
                c.push(plan.storing_rate(i, j));
                a.push(q);
            }
        }
        let u = unicast_fill(&w, &c, &a, leftover);
        u.chunks(m).map(<[f64]>::to_vec).collect()
    }

    fn demand_unicast(&self, plan: &MulticastRatePlan, d: &DemandRealization) -> (f64, Vec<f64>) {
        let load = rate_gcc_demand(plan, d).expect("validated receivers");
        let w: Vec<f64> = d.files().iter().map(|&f| self.lib.variance(f)).collect();
        let c: Vec<f64> = d
            .files()
            .iter()
            .enumerate()
            .map(|(i, &f)| plan.storing_rate(i, f))
            .collect();
        let u = unicast_fill(&w, &c, &vec![1.0; d.n()], self.capacity - load);
        (load, u)
    }
}

impl Problem for General<'_> {
    fn dim(&self) -> usize {
        2 * self.n() * self.m()
    }

    fn capacity(&self) -> f64 {
        self.capacity
    }

    fn multicast_coords(&self) -> Range<usize> {
        self.n() * self.m()..self.dim()
    }

    fn project(&self, x: &mut [f64]) {
        let (n, m) = (self.n(), self.m());
        for i in 0..n {
            project_capped_simplex(&mut x[i * m..(i + 1) * m], self.budgets[i]);
        }
        for v in &mut x[n * m..] {
            *v = v.max(0.0);
        }
    }

    fn load(&self, x: &[f64]) -> f64 {
        let plan = self.plan(x);
        match self.mode {
            UnicastMode::PerFile => gcc_average_terms(&plan, self.model, GammaMode::Exact)
                .expect("validated receivers")
                .rate(),
            UnicastMode::PerDemand => self
                .demands
                .iter()
                .map(|(d, _)| rate_gcc_demand(&plan, d).expect("validated receivers"))
                .fold(0.0, f64::max),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let plan = self.plan(x);
        let nf = self.n() as f64;
        match self.mode {
            UnicastMode::PerFile => {
                let leftover = self.capacity - self.load(x);
                let u = self.per_file_unicast(&plan, leftover);
                (0..self.n())
                    .map(|i| {
                        (0..self.m())
                            .map(|j| {
                                self.model.prob(i, j)
                                    * self.lib.variance(j)
                                    * (-2.0 * (plan.storing_rate(i, j) + u[i][j])).exp2()
                            })
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / nf
            }
            UnicastMode::PerDemand => self
                .demands
                .iter()
                .map(|(d, p)| {
                    let (_, u) = self.demand_unicast(&plan, d);
                    let total: f64 = d
                        .files()
                        .iter()
                        .enumerate()
                        .map(|(i, &f)| {
                            self.lib.variance(f) * (-2.0 * (plan.storing_rate(i, f) + u[i])).exp2()
                        })
                        .sum();
                    p * total / nf
                })
                .sum(),
        }
    }
}

pub fn optimize_general(
    lib: &SourceLibrary,
    model: &DemandModel,
    budgets: &[f64],
    capacity: f64,
    cfg: &OptimizerConfig,
) -> Result<CcCmSolution> {
    optimize_general_from(lib, model, budgets, capacity, cfg, &[])
}

/// [`optimize_general`] with extra starts at the `warm` plans (for instance
/// the solution at a smaller cache size).
pub fn optimize_general_from(
    lib: &SourceLibrary,
    model: &DemandModel,
    budgets: &[f64],
    capacity: f64,
    cfg: &OptimizerConfig,
    warm: &[&MulticastRatePlan],
) -> Result<CcCmSolution> {
    cfg.validate()?;
    let (n, m) = (model.n(), model.m());
    if lib.m() != m {
        return Err(Error::dimension("demand model and library disagree on m"));
    }
    if budgets.len() != n {
        return Err(Error::dimension(format!(
            "{} budgets for {n} receivers",
            budgets.len()
        )));
    }
    if n > RECEIVER_CAP {
        return Err(Error::ReceiverCap {
            receivers: n,
            cap: RECEIVER_CAP,
        });
    }
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::domain(format!(
            "capacity {capacity} is negative; the program is infeasible"
        )));
    }
    let demands = match cfg.unicast_mode {
        UnicastMode::PerFile => Vec::new(),
        UnicastMode::PerDemand => enumerate_demands(model, EXACT_CAP, |d, p| (d.clone(), p))?,
    };
    let lcu = lcu_cache_plan(lib, model, budgets)?;
    let problem = General {
        lib,
        model,
        budgets,
        capacity,
        mode: cfg.unicast_mode,
        demands,
    };

    let lcu_cache: Vec<f64> = lcu.rates().iter().flatten().copied().collect();
    let mut starts = Vec::new();
    starts.push([lcu_cache.clone(), vec![0.0; n * m]].concat());
    if cfg.restarts > 1 {
        let full: Vec<f64> = model
            .rows()
            .iter()
            .flatten()
            .map(|&q| if q > 0.0 { capacity } else { 0.0 })
            .collect();
        starts.push([lcu_cache, full].concat());
    }
    if cfg.restarts > 2 {
        let mut x = vec![0.0; 2 * n * m];
        for (i, row) in model.rows().iter().enumerate() {
            let top = (0..m).fold(0, |best, j| if row[j] > row[best] { j } else { best });
            x[i * m + top] = budgets[i];
            x[n * m + i * m + top] = capacity;
        }
        starts.push(x);
    }
    for r in 3..cfg.restarts {
        let mut s = rng::derived_stream(cfg.seed, &[r as u64]);
        let mut x = Vec::with_capacity(2 * n * m);
        let sparse = r % 2 == 1;
        let mut picks = Vec::with_capacity(n);
        for &b in budgets {
            if sparse {
                let j = s.random_range(0..m);
                let mut row = vec![0.0; m];
                row[j] = b;
                picks.push(j);
                x.extend(row);
            } else {
                x.extend(random_cache_row(&mut s, m, b));
            }
        }
        for i in 0..n {
            for j in 0..m {
                let on = !sparse || picks[i] == j;
                x.push(if on {
                    capacity * s.random::<f64>()
                } else {
                    0.0
                });
            }
        }
        starts.push(x);
    }
    for w in warm {
        if w.n() != n || w.m() != m {
            return Err(Error::dimension("warm start does not match n x m"));
        }
        starts.push([w.cached.concat(), w.multicast.concat()].concat());
    }

    let out = solver::solve(&problem, starts, cfg);
    let plan = problem.plan(&out.x);
    finish_general(&problem, plan, out.trace, cfg)
}

fn finish_general(
    p: &General<'_>,
    plan: MulticastRatePlan,
    trace: Vec<super::config::TraceEntry>,
    cfg: &OptimizerConfig,
) -> Result<CcCmSolution> {
    let cache = plan.cache_plan(p.budgets)?;
    let (plan, objective, multicast_load, unicast_load, constraint_slack) = match p.mode {
        UnicastMode::PerFile => {
            let load = gcc_average_terms(&plan, p.model, GammaMode::Exact)?.rate();
            let unicast = p.per_file_unicast(&plan, p.capacity - load);
            let plan = MulticastRatePlan::new(plan.cached, plan.multicast, unicast)?;
            let objective = source_model::expected_distortion_per_file(
                p.lib,
                p.model,
                &cache,
                &plan.delivered_per_file(),
            )?;
            let unicast_load: f64 = (0..p.n())
                .map(|i| {
                    (0..p.m())
                        .map(|j| p.model.prob(i, j) * plan.unicast[i][j])
                        .sum::<f64>()
                })
                .sum();
            (
                plan,
                objective,
                load,
                unicast_load,
                p.capacity - load - unicast_load,
            )
        }
        UnicastMode::PerDemand => {
            let estimate = source_model::expected_distortion(
                p.lib,
                p.model,
                &cache,
                |d| {
                    let (_, u) = p.demand_unicast(&plan, d);
                    d.files()
                        .iter()
                        .enumerate()
                        .map(|(i, &f)| plan.multicast[i][f] + u[i])
                        .collect()
                },
                ExpectationMode::Exact,
            )?;
            let mut worst_total: f64 = 0.0;
            let mut worst_multicast: f64 = 0.0;
            let mut mean_unicast = 0.0;
            for (d, prob) in &p.demands {
                let load = rate_gcc_demand(&plan, d)?;
                let (_, u) = p.demand_unicast(&plan, d);
                let spent: f64 = u.iter().sum();
                worst_total = worst_total.max(load + spent);
                worst_multicast = worst_multicast.max(load);
                mean_unicast += prob * spent;
            }
            (
                plan,
                estimate.mean,
                worst_multicast,
                mean_unicast,
                p.capacity - worst_total,
            )
        }
    };
    let nonneg = plan
        .cached
        .iter()
        .chain(&plan.multicast)
        .chain(&plan.unicast)
        .flatten()
        .all(|v| *v >= 0.0);
    Ok(CcCmSolution {
        scheme: Scheme::General,
        feasible: nonneg && constraint_slack >= -cfg.tolerance,
        plan,
        objective,
        constraint_slack,
        multicast_load,
        unicast_load,
        solver_trace: trace,
        m_tilde: None,
        unicast_mode: p.mode,
    })
}
