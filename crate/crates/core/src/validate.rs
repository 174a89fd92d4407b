//! The acceptance suite behind `cachecast validate`.
//!
//! Quick runs the exact property checks (criteria 1 to 4); full adds the
//! oracle comparisons and the reproduced gains (5 to 10). Failures are
//! report entries, never errors.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coded_multicast::{
    gcc_average_terms, gcc_color, gcc_demand_terms, is_proper, lambda_prob, naive_multicast_rate,
    rate_gcc_demand, rate_uniform, simulated_multicast_rate, ColoringRule, ConflictGraph,
    GammaMode, MulticastRatePlan, DEFAULT_DENOM_CAP,
};
use crate::experiment::{
    csv_bytes, run_sweep, Evaluation, InstanceConfig, SigmaSpec, SweepScheme, SweepSpec, SweepTable,
};
use crate::lc_u::{
    kkt_residuals, lcu_cache_allocation, lcu_expected_distortion, lcu_transmission_rates,
    weighted_distortion,
};
use crate::optimizer::{
    optimize_general, optimize_rlfu, optimize_uniform, OptimizerConfig, UnicastMode,
};
use crate::rng::{self, Stream};
use crate::source_model::{
    enumerate_demands, sample_demand, zipf_demand, DemandModel, DemandRealization, ExpectationMode,
    SourceLibrary,
};
use crate::{oracle, Result};

const SEED: u64 = 4242;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl std::str::FromStr for Level {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            other => Err(crate::Error::config(format!(
                "unknown level {other:?}; use quick or full"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub time_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub level: Level,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

/// `(passed, detail)` of one check, before timing.
type Outcome = Result<(bool, String)>;

struct Criterion {
    id: u8,
    name: &'static str,
    time_limit: f64,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        name: "water-filling KKT and grid oracle",
        time_limit: 10.0,
        run: kkt_suite,
    },
    Criterion {
        id: 2,
        name: "coloring proper and within one of the chromatic number",
        time_limit: 30.0,
        run: coloring_suite,
    },
    Criterion {
        id: 3,
        name: "algebraic identities",
        time_limit: 20.0,
        run: identities,
    },
    Criterion {
        id: 4,
        name: "seeded sweeps are byte-identical",
        time_limit: 60.0,
        run: determinism,
    },
    Criterion {
        id: 5,
        name: "per-demand load vs packet simulator",
        time_limit: 600.0,
        run: simulator_vs_closed_form,
    },
    Criterion {
        id: 6,
        name: "sampled average load vs demand enumeration",
        time_limit: 120.0,
        run: average_vs_enumeration,
    },
    Criterion {
        id: 7,
        name: "CC-CM equals LC-U with one receiver",
        time_limit: 120.0,
        run: single_receiver,
    },
    Criterion {
        id: 8,
        name: "Zipf library gains (n=20, m=100, alpha=0.6)",
        time_limit: 600.0,
        run: zipf_gains,
    },
    Criterion {
        id: 9,
        name: "uniform library gains (alpha=0, sigma2=1.5)",
        time_limit: 300.0,
        run: uniform_gains,
    },
    Criterion {
        id: 10,
        name: "curves monotone in M and CC-CM below LC-U",
        time_limit: 1200.0,
        run: curve_shapes,
    },
];

pub fn criterion_ids(level: Level) -> Vec<u8> {
    match level {
        Level::Quick => (1..=4).collect(),
        Level::Full => (1..=10).collect(),
    }
}

/// Runs one criterion; `None` for an unknown id.
pub fn run_criterion(id: u8) -> Option<CriterionReport> {
    let c = CRITERIA.iter().find(|c| c.id == id)?;
    let start = Instant::now();
    let (ok, detail) = match (c.run)() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let seconds = start.elapsed().as_secs_f64();
    let in_time = seconds <= c.time_limit;
    let detail = if in_time {
        detail
    } else {
        format!("{detail}; took {seconds:.1}s, limit {}s", c.time_limit)
    };
    Some(CriterionReport {
        id,
        name: c.name.to_string(),
        passed: ok && in_time,
        detail,
        seconds,
        time_limit: c.time_limit,
    })
}

pub fn validate(level: Level) -> ValidationReport {
    let criteria: Vec<CriterionReport> = criterion_ids(level)
        .into_iter()
        .filter_map(run_criterion)
        .collect();
    ValidationReport {
        level,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

fn stream(criterion: u64, tags: &[u64]) -> Stream {
    rng::derived_stream(SEED, &[&[criterion], tags].concat())
}

fn random_row(s: &mut Stream, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| 0.05 + s.random::<f64>()).collect();
    let t: f64 = w.iter().sum();
    w.iter().map(|x| x / t).collect()
}

fn random_library(s: &mut Stream, m: usize) -> Result<SourceLibrary> {
    SourceLibrary::new((0..m).map(|_| s.random_range(0.5..2.0)).collect(), 1000)
}

fn kkt_suite() -> Outcome {
    const INSTANCES: u64 = 100;
    const KKT_TOL: f64 = 1e-6;
    const GRID_STEP: f64 = 0.01;
    const GRID_TOL: f64 = 1e-3;
    let mut worst_kkt: f64 = 0.0;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut grid_checks = 0;
    for k in 0..INSTANCES {
        let mut s = stream(1, &[k]);
        let m = s.random_range(1..=10);
        let n = s.random_range(1..=5);
        let lib = random_library(&mut s, m)?;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_row(&mut s, m)).collect();
        let model = DemandModel::new(rows)?;
        let budget = s.random_range(0.0..4.0);
        let mut cache_rates = Vec::with_capacity(n);
        for i in 0..n {
            let w: Vec<f64> = model
                .row(i)
                .iter()
                .zip(lib.variances())
                .map(|(q, v)| q * v)
                .collect();
            let res = lcu_cache_allocation(&lib, model.row(i), budget)?;
            let (a, b) = kkt_residuals(&w, &vec![0.0; m], &vec![1.0; m], &res);
            worst_kkt = worst_kkt.max(a).max(b);
            if m <= 4 {
                let ours = weighted_distortion(&w, &vec![0.0; m], &res.allocation);
                let grid = oracle::simplex_grid_min(&w, &vec![0.0; m], budget, GRID_STEP);
                worst_gap = worst_gap.max(ours - grid);
                grid_checks += 1;
            }
            cache_rates.push(res.allocation);
        }
        let cache = crate::source_model::CachePlan::new(cache_rates, vec![budget; n])?;
        let d = sample_demand(&model, &mut s);
        let capacity = s.random_range(0.0..5.0);
        let res = lcu_transmission_rates(&lib, &cache, &d, capacity)?;
        let w: Vec<f64> = d.files().iter().map(|&f| lib.variance(f)).collect();
        let off: Vec<f64> = d
            .files()
            .iter()
            .enumerate()
            .map(|(i, &f)| cache.rate(i, f))
            .collect();
        let (a, b) = kkt_residuals(&w, &off, &vec![1.0; n], &res);
        worst_kkt = worst_kkt.max(a).max(b);
        if n <= 4 {
            let ours = weighted_distortion(&w, &off, &res.allocation);
            let grid = oracle::simplex_grid_min(&w, &off, capacity, GRID_STEP);
            worst_gap = worst_gap.max(ours - grid);
            grid_checks += 1;
        }
    }
    Ok((
        worst_kkt <= KKT_TOL && worst_gap <= GRID_TOL,
        format!(
            "worst KKT residual {worst_kkt:.2e} (tol {KKT_TOL:e}); worst excess over grid {worst_gap:.2e} on {grid_checks} problems (tol {GRID_TOL:e})"
        ),
    ))
}

fn bitmask_adjacency(g: &ConflictGraph) -> Vec<u32> {
    (0..g.len())
        .map(|u| {
            (0..g.len())
                .filter(|&v| v != u && g.adjacent(u, v))
                .fold(0u32, |acc, v| acc | 1 << v)
        })
        .collect()
}

fn coloring_suite() -> Outcome {
    const GRAPHS: u64 = 200;
    let (mut improper, mut over, mut exact) = (0, 0, 0);
    for k in 0..GRAPHS {
        let mut s = stream(2, &[k]);
        let order = s.random_range(1..=12);
        let density: f64 = s.random();
        let edges: Vec<(usize, usize)> = (0..order)
            .flat_map(|u| (u + 1..order).map(move |v| (u, v)))
            .filter(|_| s.random::<f64>() < density)
            .collect();
        let g = ConflictGraph::from_edges(order, &edges)?;
        let c = gcc_color(&g);
        let chi = oracle::chromatic_number(&bitmask_adjacency(&g));
        if !is_proper(&g, &c) {
            improper += 1;
        }
        if c.count > chi + 1 {
            over += 1;
        }
        if c.count == chi {
            exact += 1;
        }
    }
    Ok((
        improper == 0 && over == 0,
        format!("{GRAPHS} graphs: {improper} improper, {over} above chi+1, {exact} optimal"),
    ))
}

fn random_plan(s: &mut Stream, n: usize, m: usize) -> Result<MulticastRatePlan> {
    let mut mat = || -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..m).map(|_| 2.0 * s.random::<f64>()).collect())
            .collect()
    };
    let cached = mat();
    let multicast = mat();
    MulticastRatePlan::coded(cached, multicast)
}

fn identities() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut failures = Vec::new();
    let mut s = stream(3, &[0]);
    for _ in 0..100 {
        let (mt, rt) = (3.0 * s.random::<f64>(), 3.0 * s.random::<f64>());
        if (rate_uniform(mt, rt, 1) - rt).abs() > TOL {
            failures.push(format!("rate_uniform({mt},{rt},1)"));
        }
    }
    for k in 0..100 {
        let mut s = stream(3, &[1, k]);
        let m = s.random_range(1..=5);
        let plan = random_plan(&mut s, 1, m)?;
        let f = s.random_range(0..m);
        let d = DemandRealization::new(vec![f], m)?;
        let rate = rate_gcc_demand(&plan, &d)?;
        if (rate - plan.multicast[0][f]).abs() > TOL {
            failures.push(format!(
                "single-receiver load {rate} vs {}",
                plan.multicast[0][f]
            ));
        }
    }
    let mut worst_partition: f64 = 0.0;
    for n in 1..=6usize {
        let mut s = stream(3, &[2, n as u64]);
        let plan = random_plan(&mut s, n, 2)?;
        for i in 0..n {
            for f in 0..2 {
                let total: f64 = (0..1u32 << n)
                    .filter(|sub| sub >> i & 1 == 1)
                    .map(|sub| lambda_prob(i, f, sub, &plan))
                    .sum::<Result<f64>>()?;
                worst_partition = worst_partition.max((total - (1.0 - plan.p_cached(i, f))).abs());
            }
        }
    }
    if worst_partition > 1e-12 {
        failures.push(format!("lambda partition off by {worst_partition:e}"));
    }
    let mut above = 0;
    for k in 0..1000 {
        let mut s = stream(3, &[3, k]);
        let n = s.random_range(1..=6);
        let m = s.random_range(1..=5);
        let plan = random_plan(&mut s, n, m)?;
        let files = (0..n).map(|_| s.random_range(0..m)).collect();
        let d = DemandRealization::new(files, m)?;
        if rate_gcc_demand(&plan, &d)? > naive_multicast_rate(&plan, &d) + TOL {
            above += 1;
        }
    }
    if above > 0 {
        failures.push(format!("{above} of 1000 demands above the naive load"));
    }
    let ok = failures.is_empty();
    Ok((
        ok,
        if ok {
            format!("all identities hold; lambda partition within {worst_partition:.1e}")
        } else {
            failures.join("; ")
        },
    ))
}

fn small_spec() -> SweepSpec {
    SweepSpec {
        instance: InstanceConfig {
            n: 4,
            m: 8,
            samples_per_file: 1000,
            alpha: Some(0.8),
            q: None,
            sigma2: SigmaSpec::Uniform {
                lo: 0.7,
                hi: 1.6,
                seed: 3,
            },
            cache: None,
            budgets: None,
        },
        capacities: vec![1.0, 3.0],
        cache_sizes: vec![0.0, 1.0, 2.0, 4.0],
        schemes: vec![SweepScheme::Lcu, SweepScheme::CcmRlfu],
        trials: 500,
        evaluation: Evaluation::MonteCarlo,
        seed: SEED,
        optimizer: OptimizerConfig {
            restarts: 3,
            max_iterations: 60,
            seed: SEED,
            ..OptimizerConfig::default()
        },
    }
}

fn determinism() -> Outcome {
    let spec = small_spec();
    let runs: Vec<Vec<u8>> = (0..3)
        .map(|_| csv_bytes(&run_sweep(&spec)?))
        .collect::<Result<_>>()?;
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    Ok((
        same,
        format!(
            "3 runs of a {}-row sweep: {}",
            spec.schemes.len() * spec.capacities.len() * spec.cache_sizes.len(),
            if same { "identical" } else { "differ" }
        ),
    ))
}

/// Rates on a half-bit lattice so packetization is exact.
fn lattice_plan(s: &mut Stream, n: usize, m: usize) -> Result<MulticastRatePlan> {
    let mut mat = |choices: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| choices[s.random_range(0..choices.len())])
                    .collect()
            })
            .collect()
    };
    let cached = mat(&[0.0, 0.5, 1.0]);
    let multicast = mat(&[0.5, 1.0]);
    MulticastRatePlan::coded(cached, multicast)
}

fn simulator_vs_closed_form() -> Outcome {
    const INSTANCES: u64 = 20;
    const TRIALS: usize = 4;
    const REL_TOL: f64 = 0.1;
    let mut worst: f64 = 0.0;
    let (mut dev_small, mut dev_large) = (0.0, 0.0);
    for k in 0..INSTANCES {
        let mut s = stream(5, &[k]);
        let n = s.random_range(2..=4);
        let m = s.random_range(n..=4);
        let plan = lattice_plan(&mut s, n, m)?;
        let mut files: Vec<usize> = (0..m).collect();
        files.shuffle(&mut s);
        files.truncate(n);
        let d = DemandRealization::new(files, m)?;
        let closed = rate_gcc_demand(&plan, &d)?;
        let sim = |b: u32| {
            simulated_multicast_rate(
                &plan,
                &d,
                b,
                DEFAULT_DENOM_CAP,
                TRIALS,
                SEED ^ k,
                ColoringRule::Constrained,
            )
        };
        let small = (sim(50)?.mean - closed).abs() / closed;
        let large = (sim(500)?.mean - closed).abs() / closed;
        worst = worst.max(large);
        dev_small += small / INSTANCES as f64;
        dev_large += large / INSTANCES as f64;
    }
    Ok((
        worst <= REL_TOL && dev_large < dev_small,
        format!(
            "worst relative gap at B=500 {worst:.4} (tol {REL_TOL}); mean gap {dev_small:.4} at B=50, {dev_large:.4} at B=500"
        ),
    ))
}

fn average_vs_enumeration() -> Outcome {
    const INSTANCES: u64 = 5;
    const SAMPLES: usize = 100_000;
    const REL_TOL: f64 = 0.05;
    let mut worst: f64 = 0.0;
    for k in 0..INSTANCES {
        let mut s = stream(6, &[k]);
        let plan = random_plan(&mut s, 3, 3)?;
        let model = DemandModel::new((0..3).map(|_| random_row(&mut s, 3)).collect())?;
        let sampled = gcc_average_terms(
            &plan,
            &model,
            GammaMode::MonteCarlo {
                samples: SAMPLES,
                seed: SEED ^ k,
            },
        )?
        .rate();
        let per = enumerate_demands(&model, 1e6, |d, p| {
            gcc_demand_terms(&plan, d).map(|t| (p * t.coded, p * t.naive))
        })?;
        let mut psi = 0.0;
        let mut naive = 0.0;
        for t in per {
            let (a, b) = t?;
            psi += a;
            naive += b;
        }
        let exact = psi.min(naive);
        worst = worst.max((sampled - exact).abs() / exact);
    }
    Ok((
        worst <= REL_TOL,
        format!("{INSTANCES} instances n=3 m=3, worst relative gap {worst:.2e} (tol {REL_TOL})"),
    ))
}

fn single_receiver() -> Outcome {
    const INSTANCES: u64 = 5;
    const TOL: f64 = 1e-4;
    let cfg = OptimizerConfig {
        unicast_mode: UnicastMode::PerDemand,
        seed: SEED,
        ..OptimizerConfig::default()
    };
    let mut worst: f64 = 0.0;
    for k in 0..INSTANCES {
        let mut s = stream(7, &[k]);
        let m = s.random_range(2..=5);
        let lib = random_library(&mut s, m)?;
        let model = DemandModel::new(vec![random_row(&mut s, m)])?;
        let budget = s.random_range(0.0..3.0);
        let capacity = s.random_range(0.0..3.0);
        let ccm = optimize_general(&lib, &model, &[budget], capacity, &cfg)?;
        let lcu =
            lcu_expected_distortion(&lib, &model, &[budget], capacity, ExpectationMode::Exact)?;
        worst = worst.max((ccm.objective - lcu.estimate.mean).abs());
    }
    Ok((
        worst <= TOL,
        format!("{INSTANCES} instances, worst objective gap {worst:.2e} (tol {TOL:e})"),
    ))
}

const LCU_SAMPLES: usize = 2000;

fn lcu_mc(lib: &SourceLibrary, model: &DemandModel, cache: f64, capacity: f64) -> Result<f64> {
    let mode = ExpectationMode::MonteCarlo {
        samples: LCU_SAMPLES,
        seed: SEED,
    };
    Ok(
        lcu_expected_distortion(lib, model, &vec![cache; model.n()], capacity, mode)?
            .estimate
            .mean,
    )
}

fn zipf_library() -> Result<SourceLibrary> {
    SourceLibrary::uniform(100, 0.7, 1.6, 7, 1000)
}

fn zipf_gains() -> Outcome {
    let lib = zipf_library()?;
    let model = zipf_demand(100, 0.6, 20)?;
    let cfg = OptimizerConfig {
        seed: SEED,
        ..OptimizerConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (capacity, cache, floor) in [(2.0, 50.0, 1.5), (8.0, 50.0, 3.5)] {
        let ccm = optimize_rlfu(&lib, model.row(0), cache, capacity, 20, &cfg)?;
        let ratio = lcu_mc(&lib, &model, cache, capacity)? / ccm.objective;
        ok &= ratio >= floor && ccm.feasible;
        parts.push(format!(
            "R={capacity} M={cache}: ratio {ratio:.3} (need >= {floor})"
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn uniform_gains() -> Outcome {
    let lib = SourceLibrary::constant(100, 1.5, 1000)?;
    let model = zipf_demand(100, 0.0, 20)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (capacity, cache, floor) in [(10.0, 50.0, 6.0), (10.0, 70.0, 9.0)] {
        let ccm = optimize_uniform(1.5, cache / 100.0, capacity, 20)?;
        let ratio = lcu_mc(&lib, &model, cache, capacity)? / ccm.objective;
        ok &= ratio >= floor && ccm.feasible;
        parts.push(format!(
            "R={capacity} M={cache}: ratio {ratio:.3} (need >= {floor})"
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn large_spec(alpha: f64, sigma2: SigmaSpec, capacities: Vec<f64>, ccm: SweepScheme) -> SweepSpec {
    SweepSpec {
        instance: InstanceConfig {
            n: 20,
            m: 100,
            samples_per_file: 1000,
            alpha: Some(alpha),
            q: None,
            sigma2,
            cache: None,
            budgets: None,
        },
        capacities,
        cache_sizes: (1..=20).map(|k| 5.0 * k as f64).collect(),
        schemes: vec![SweepScheme::Lcu, ccm],
        trials: LCU_SAMPLES,
        evaluation: Evaluation::MonteCarlo,
        seed: SEED,
        optimizer: OptimizerConfig {
            seed: SEED,
            ..OptimizerConfig::default()
        },
    }
}

/// `(violations of monotonicity in M, points where CC-CM is not below LC-U)`.
fn shape_violations(t: &SweepTable, ccm: SweepScheme) -> (Vec<String>, Vec<String>) {
    const TOL: f64 = 1e-6;
    let mut mono = Vec::new();
    let mut dom = Vec::new();
    for &r in &t.spec.capacities {
        for scheme in [SweepScheme::Lcu, ccm] {
            for w in t.curve(scheme, r).windows(2) {
                if w[1].1 > w[0].1 + TOL {
                    mono.push(format!("{scheme} R={r} M={}", w[1].0));
                }
            }
        }
        let (a, b) = (t.curve(ccm, r), t.curve(SweepScheme::Lcu, r));
        for ((m, c), (_, l)) in a.iter().zip(&b) {
            if c >= l {
                dom.push(format!("R={r} M={m}"));
            }
        }
    }
    (mono, dom)
}

fn curve_shapes() -> Outcome {
    let zipf = large_spec(
        0.6,
        SigmaSpec::Uniform {
            lo: 0.7,
            hi: 1.6,
            seed: 7,
        },
        vec![2.0, 5.0, 8.0],
        SweepScheme::CcmRlfu,
    );
    let flat = large_spec(
        0.0,
        SigmaSpec::Constant(1.5),
        vec![2.0, 5.0, 10.0],
        SweepScheme::CcmUniform,
    );
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec, ccm) in [
        ("zipf", zipf, SweepScheme::CcmRlfu),
        ("uniform", flat, SweepScheme::CcmUniform),
    ] {
        let t = run_sweep(&spec)?;
        let (mono, dom) = shape_violations(&t, ccm);
        ok &= mono.is_empty() && dom.is_empty();
        parts.push(format!(
            "{name}: {} points, {} non-monotone{}, {} not dominated{}",
            t.rows.len(),
            mono.len(),
            list(&mono),
            dom.len(),
            list(&dom)
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!(" ({})", items.join(", "))
    }
}
