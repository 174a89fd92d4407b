//! Multi-start projected descent shared by the CC-CM programs.
//!
//! A problem exposes its decision vector (cache and multicast rates), a
//! projection onto the cache and sign constraints, the multicast load, and
//! the objective with unicast already optimized for the leftover capacity.
//! Points whose load exceeds the capacity are pulled back by scaling the
//! multicast coordinates toward zero, which always reaches a feasible point.

use std::cmp::Ordering;
use std::ops::Range;

use rand::Rng;

use super::config::{OptimizerConfig, TraceEntry};
use crate::lc_u::reverse_waterfill;
use crate::par;
use crate::rng::Stream;

const REPAIR_STEPS: usize = 100;
const REPAIR_WIDTH: f64 = 1e-13;
const GRADIENT_STEP: f64 = 1e-6;
const STALLS_TO_STOP: usize = 3;

pub(crate) trait Problem: Sync {
    fn dim(&self) -> usize;
    fn capacity(&self) -> f64;
    /// Coordinates scaled by the feasibility repair.
    fn multicast_coords(&self) -> Range<usize>;
    /// Projection onto the cache budgets and `x ≥ 0`.
    fn project(&self, x: &mut [f64]);
    fn load(&self, x: &[f64]) -> f64;
    /// Objective at a point whose load fits the capacity.
    fn value(&self, x: &[f64]) -> f64;
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub trace: Vec<TraceEntry>,
}

/// Scales the multicast coordinates down until the load fits. The load is
/// non-decreasing in the scale, so an Illinois regula falsi on the bracket
/// `[0, 1]` finds the largest feasible scale; the lower end stays feasible.
pub(crate) fn repair<P: Problem>(p: &P, x: &mut [f64]) {
    let cap = p.capacity();
    let high = p.load(x) - cap;
    if high <= 0.0 {
        return;
    }
    let coords = p.multicast_coords();
    let base: Vec<f64> = x[coords.clone()].to_vec();
    let scaled = |t: f64, x: &mut [f64]| {
        for (k, b) in coords.clone().zip(&base) {
            x[k] = b * t;
        }
    };
    scaled(0.0, x);
    let low = p.load(x) - cap;
    let (mut lo, mut hi, mut f_lo, mut f_hi) = (0.0, 1.0, low, high);
    let mut side = 0i8;
    for _ in 0..REPAIR_STEPS {
        if hi - lo <= REPAIR_WIDTH || f_lo == 0.0 {
            break;
        }
        let secant = lo - f_lo * (hi - lo) / (f_hi - f_lo);
        let t = if secant > lo && secant < hi {
            secant
        } else {
            0.5 * (lo + hi)
        };
        scaled(t, x);
        let f = p.load(x) - cap;
        if f <= 0.0 {
            lo = t;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    scaled(lo, x);
}

fn feasible_point<P: Problem>(p: &P, mut x: Vec<f64>) -> Vec<f64> {
    p.project(&mut x);
    repair(p, &mut x);
    x
}

fn evaluate<P: Problem>(p: &P, x: Vec<f64>) -> (Vec<f64>, f64) {
    let y = feasible_point(p, x);
    let v = p.value(&y);
    (y, v)
}

fn gradient<P: Problem>(p: &P, x: &[f64]) -> Vec<f64> {
    par::map_range(x.len(), |k| {
        let h = GRADIENT_STEP * x[k].abs().max(1.0);
        let mut up = x.to_vec();
        up[k] += h;
        let mut down = x.to_vec();
        down[k] = (down[k] - h).max(0.0);
        let width = up[k] - down[k];
        let (_, fu) = evaluate(p, up);
        let (_, fd) = evaluate(p, down);
        (fu - fd) / width
    })
}

/// Local descent from one start. Every accepted step strictly lowers the
/// objective.
fn descend<P: Problem>(p: &P, start: Vec<f64>, cfg: &OptimizerConfig, restart: usize) -> Outcome {
    let rule = cfg.step_rule;
    let (mut x, mut f) = evaluate(p, start);
    let mut trace = vec![TraceEntry {
        restart,
        iteration: 0,
        objective: f,
        step: 0.0,
    }];
    let mut step = rule.initial;
    let mut pattern = rule.initial;
    let mut stalls = 0;
    for iteration in 1..=cfg.max_iterations {
        let g = gradient(p, &x);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut accepted = None;
        if norm > 0.0 && norm.is_finite() {
            let mut s = step;
            for _ in 0..rule.max_backtracks {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(&g)
                    .map(|(xi, gi)| xi - s * gi / norm)
                    .collect();
                let (y, fy) = evaluate(p, trial);
                if fy < f - rule.sufficient_decrease * s * norm {
                    accepted = Some((y, fy, s));
                    step = (s / rule.shrink).min(rule.initial * 4.0);
                    break;
                }
                s *= rule.shrink;
            }
            if accepted.is_none() {
                step = s.max(cfg.tolerance);
            }
        }
        if accepted.is_none() {
            while pattern >= cfg.tolerance && accepted.is_none() {
                'coords: for k in 0..x.len() {
                    for dir in [1.0, -1.0] {
                        let mut trial = x.clone();
                        trial[k] += dir * pattern;
                        let (y, fy) = evaluate(p, trial);
                        if fy < f {
                            accepted = Some((y, fy, pattern));
                            break 'coords;
                        }
                    }
                }
                if accepted.is_none() {
                    pattern *= rule.shrink;
                }
            }
        }
        let Some((y, fy, s)) = accepted else { break };
        let gain = f - fy;
        x = y;
        f = fy;
        trace.push(TraceEntry {
            restart,
            iteration,
            objective: f,
            step: s,
        });
        if gain <= cfg.tolerance * f.abs().max(1.0) {
            stalls += 1;
            if stalls >= STALLS_TO_STOP {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Outcome { x, value: f, trace }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Runs every start (in parallel) and keeps the lowest objective, ties
/// broken by the lexicographically smallest point. The trace holds every
/// restart.
pub(crate) fn solve<P: Problem>(p: &P, starts: Vec<Vec<f64>>, cfg: &OptimizerConfig) -> Outcome {
    debug_assert!(starts.iter().all(|s| s.len() == p.dim()));
    let indexed: Vec<(usize, Vec<f64>)> = starts.into_iter().enumerate().collect();
    let runs = par::map_slice(&indexed, |(r, s)| descend(p, s.clone(), cfg, *r));
    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for run in runs {
        trace.extend(run.trace);
        let better = match &best {
            None => true,
            Some((bx, bv)) => {
                run.value < *bv || (run.value == *bv && lexicographic(&run.x, bx).is_lt())
            }
        };
        if better {
            best = Some((run.x, run.value));
        }
    }
    let (x, value) = best.expect("at least one start");
    Outcome { x, value, trace }
}

/// Minimizes `Σ w_k 2^(-2(c_k + x_k))` over `Σ a_k x_k ≤ budget`; entries
/// with zero weight or zero cost get nothing.
pub(crate) fn unicast_fill(
    weights: &[f64],
    offsets: &[f64],
    costs: &[f64],
    budget: f64,
) -> Vec<f64> {
    let live: Vec<usize> = (0..weights.len())
        .filter(|&k| weights[k] > 0.0 && costs[k] > 0.0)
        .collect();
    let mut out = vec![0.0; weights.len()];
    if budget <= 0.0 || live.is_empty() {
        return out;
    }
    let pick = |v: &[f64]| live.iter().map(|&k| v[k]).collect::<Vec<_>>();
    let fill = reverse_waterfill(&pick(weights), &pick(offsets), &pick(costs), budget)
        .expect("positive weights and costs");
    for (slot, &k) in live.iter().enumerate() {
        out[k] = fill.allocation[slot];
    }
    out
}

/// Random cache row: a uniform fill fraction of `budget` spread over `m`
/// files with exponential weights.
pub(crate) fn random_cache_row(s: &mut Stream, m: usize, budget: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..m)
        .map(|_| -s.random::<f64>().max(f64::MIN_POSITIVE).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let fill = s.random::<f64>();
    raw.iter().map(|v| budget * fill * v / total).collect()
}

/// Euclidean projection onto `{x ≥ 0, Σ x ≤ budget}`.
pub(crate) fn project_capped_simplex(x: &mut [f64], budget: f64) {
    for v in x.iter_mut() {
        *v = v.max(0.0);
    }
    if x.iter().sum::<f64>() <= budget {
        return;
    }
    if budget <= 0.0 {
        x.fill(0.0);
        return;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - budget) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `min (x0 - 1)^2 + (x1 - 2)^2` with load `x1` capped at 1.5.
    struct Quadratic;

    impl Problem for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn capacity(&self) -> f64 {
            1.5
        }
        fn multicast_coords(&self) -> Range<usize> {
            1..2
        }
        fn project(&self, x: &mut [f64]) {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        fn load(&self, x: &[f64]) -> f64 {
            x[1]
        }
        fn value(&self, x: &[f64]) -> f64 {
            (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2)
        }
    }

    #[test]
    fn descent_reaches_constrained_minimum() {
        let cfg = OptimizerConfig::default();
        let out = solve(&Quadratic, vec![vec![0.0, 0.0], vec![3.0, 3.0]], &cfg);
        assert!((out.x[0] - 1.0).abs() < 1e-4, "{:?}", out.x);
        assert!((out.x[1] - 1.5).abs() < 1e-4);
        for r in 0..2 {
            let values: Vec<f64> = out
                .trace
                .iter()
                .filter(|t| t.restart == r)
                .map(|t| t.objective)
                .collect();
            assert!(values.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn repair_lands_on_the_capacity() {
        let mut x = vec![0.5, 4.0];
        repair(&Quadratic, &mut x);
        assert!(x[1] <= 1.5 && x[1] > 1.5 - 1e-12);
        assert_eq!(x[0], 0.5);
    }

    #[test]
    fn unicast_fill_skips_dead_entries() {
        let x = unicast_fill(&[1.0, 0.0, 1.0], &[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0], 2.0);
        assert_eq!(x, vec![2.0, 0.0, 0.0]);
        assert_eq!(unicast_fill(&[1.0], &[0.0], &[1.0], 0.0), vec![0.0]);
    }

    proptest! {
        #[test]
        fn capped_simplex_projection(v in prop::collection::vec(-2.0f64..3.0, 1..8), budget in prop_oneof![Just(0.0f64), 0.0f64..4.0]) {
            let mut x = v.clone();
            project_capped_simplex(&mut x, budget);
            prop_assert!(x.iter().all(|&t| t >= 0.0));
            prop_assert!(x.iter().sum::<f64>() <= budget + 1e-9);
            // optimality: no feasible grid perturbation toward v is closer
            let dist = |y: &[f64]| y.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let base = dist(&x);
            for k in 0..x.len() {
                for l in 0..x.len() {
                    if k == l || x[l] < 1e-3 { continue; }
                    let mut y = x.clone();
                    y[k] += 1e-3;
                    y[l] -= 1e-3;
                    prop_assert!(dist(&y) >= base - 1e-9);
                }
            }
        }
    }
}
