//! Truncated-uniform caching: every receiver caches the same amount `M̃` of
//! each of the `m̃` most popular files and all files are multicast at `R̃`.
//! The cutoff is scanned; `(M̃, R̃)` and the per-file unicast are optimized
//! for each candidate.

use std::ops::Range;

use rand::Rng;

use super::config::{CcCmSolution, CutoffScan, OptimizerConfig, Scheme};
use super::solver::{self, Problem};
use super::symmetric::{check_symmetric, symmetric_objective, symmetric_unicast, Point, Symmetric};
use crate::coded_multicast::rate_rlfu;
use crate::source_model::SourceLibrary;
use crate::{par, rng};
use crate::{Error, Result};

struct Truncated<'a> {
    base: Symmetric<'a>,
    /// Files by decreasing popularity, ties by index.
    order: &'a [usize],
    sorted_q: &'a [f64],
    cutoff: usize,
}

impl Truncated<'_> {
    fn rates(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.order.len();
        let mut cached = vec![0.0; m];
        for &j in &self.order[..self.cutoff] {
            cached[j] = x[0];
        }
        (cached, vec![x[1]; m])
    }
}

impl Problem for Truncated<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn capacity(&self) -> f64 {
        self.base.capacity
    }

    fn multicast_coords(&self) -> Range<usize> {
        1..2
    }

    fn project(&self, x: &mut [f64]) {
        x[0] = x[0].clamp(0.0, self.base.cache / self.cutoff as f64);
        x[1] = x[1].max(0.0);
    }

    fn load(&self, x: &[f64]) -> f64 {
        rate_rlfu(x[0], x[1], self.cutoff, self.sorted_q, self.base.n).expect("projected point")
    }

    fn value(&self, x: &[f64]) -> f64 {
        let b = &self.base;
        let (cached, multicast) = self.rates(x);
        let storing: Vec<f64> = cached.iter().zip(&multicast).map(|(c, r)| c + r).collect();
        let u = symmetric_unicast(b.lib, b.q, &storing, b.n, b.capacity - self.load(x));
        let delivered: Vec<f64> = storing.iter().zip(&u).map(|(s, u)| s + u).collect();
        symmetric_objective(b.lib, b.q, &delivered)
    }
}

pub fn optimize_rlfu(
    lib: &SourceLibrary,
    q: &[f64],
    cache: f64,
    capacity: f64,
    n: usize,
    cfg: &OptimizerConfig,
) -> Result<CcCmSolution> {
    optimize_rlfu_from(lib, q, cache, capacity, n, cfg, &[])
}

/// [`optimize_rlfu`] that also tries the cutoffs of the `warm` solutions and
/// starts from their `(M̃, R̃)`.
pub fn optimize_rlfu_from(
    lib: &SourceLibrary,
    q: &[f64],
    cache: f64,
    capacity: f64,
    n: usize,
    cfg: &OptimizerConfig,
    warm: &[&CcCmSolution],
) -> Result<CcCmSolution> {
    cfg.validate()?;
    check_symmetric(lib, q, cache, capacity, n)?;
    let m = q.len();
    let scan = cfg
        .rlfu_cutoff_scan
        .unwrap_or_else(|| CutoffScan::for_cache(cache, m));
    let mut candidates = scan.candidates();
    if candidates.is_empty() {
        return Err(Error::contract(format!(
            "cutoff scan {}..={} is empty",
            scan.from, scan.to
        )));
    }
    if let Some(&bad) = candidates.iter().find(|&&c| c == 0 || c > m) {
        return Err(Error::contract(format!("cutoff {bad} outside 1..={m}")));
    }
    let mut warm_points = Vec::with_capacity(warm.len());
    for w in warm {
        let c = w
            .m_tilde
            .ok_or_else(|| Error::contract("warm start carries no cutoff"))?;
        if w.plan.m() != m || c == 0 || c > m {
            return Err(Error::dimension("warm start does not match m"));
        }
        let row = &w.plan.cached[0];
        warm_points.push((
            c,
            row.iter().copied().fold(0.0, f64::max),
            w.plan.multicast[0][0],
        ));
        if !candidates.contains(&c) {
            candidates.push(c);
        }
    }
    candidates.sort_unstable();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
    let sorted_q: Vec<f64> = order.iter().map(|&j| q[j]).collect();

    let runs = par::map_slice(&candidates, |&cutoff| -> Result<CcCmSolution> {
        let problem = Truncated {
            base: Symmetric {
                lib,
                q,
                cache,
                capacity,
                n,
            },
            order: &order,
            sorted_q: &sorted_q,
            cutoff,
        };
        let full = cache / cutoff as f64;
        let mut starts = vec![vec![full, 0.0]];
        if cfg.restarts > 1 {
            starts.push(vec![full, capacity / n as f64]);
        }
        for r in 2..cfg.restarts {
            let mut s = rng::derived_stream(cfg.seed, &[cutoff as u64, r as u64]);
            starts.push(vec![full * s.random::<f64>(), capacity * s.random::<f64>()]);
        }
        for &(c, mt, rt) in &warm_points {
            starts.push(vec![if c == cutoff { mt } else { full }, rt]);
        }
        let out = solver::solve(&problem, starts, cfg);
        let (cached, multicast) = problem.rates(&out.x);
        let load = rate_rlfu(out.x[0], out.x[1], cutoff, &sorted_q, n)?;
        problem.base.finish(
            Point {
                cached,
                multicast,
                load,
            },
            (Scheme::Rlfu, Some(cutoff)),
            out.trace,
            cfg.tolerance,
        )
    });

    let mut best: Option<CcCmSolution> = None;
    for run in runs {
        let run = run?;
        // candidates ascend, so strict improvement keeps the smaller cutoff on ties
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("non-empty scan"))
}
