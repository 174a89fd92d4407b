use cachecast::coded_multicast::{gcc_average_terms, rate_symmetric, GammaMode, MulticastRatePlan};
use cachecast::lc_u::lcu_expected_distortion;
use cachecast::optimizer::*;
use cachecast::oracle::{greedy_increment_allocation, uniform_grid_max};
use cachecast::source_model::*;
use cachecast::Error;

fn exact_lcu(lib: &SourceLibrary, model: &DemandModel, budgets: &[f64], capacity: f64) -> f64 {
    lcu_expected_distortion(lib, model, budgets, capacity, ExpectationMode::Exact)
        .unwrap()
        .estimate
        .mean
}

fn small_instance() -> (SourceLibrary, DemandModel) {
    let lib = SourceLibrary::new(vec![1.0, 1.4, 0.8], 1000).unwrap();
    let model = DemandModel::new(vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.5, 0.3]]).unwrap();
    (lib, model)
}

fn assert_descending(sol: &CcCmSolution) {
    let restarts = sol
        .solver_trace
        .iter()
        .map(|t| t.restart)
        .max()
        .unwrap_or(0);
    for r in 0..=restarts {
        let values: Vec<f64> = sol
            .solver_trace
            .iter()
            .filter(|t| t.restart == r)
            .map(|t| t.objective)
            .collect();
        assert!(
            values.windows(2).all(|w| w[1] < w[0]),
            "restart {r}: {values:?}"
        );
    }
}

#[test]
fn zero_capacity_keeps_only_the_cache() {
    let (lib, model) = small_instance();
    let budgets = [1.0, 0.5];
    let sol = optimize_general(&lib, &model, &budgets, 0.0, &OptimizerConfig::default()).unwrap();
    assert!(sol.feasible);
    assert!(sol
        .plan
        .multicast
        .iter()
        .chain(&sol.plan.unicast)
        .flatten()
        .all(|v| *v == 0.0));
    let cached_only = exact_lcu(&lib, &model, &budgets, 0.0);
    assert!(
        (sol.objective - cached_only).abs() < 1e-9,
        "{} vs {cached_only}",
        sol.objective
    );
}

#[test]
fn single_receiver_reduces_to_lcu() {
    let lib = SourceLibrary::new(vec![1.2, 0.9, 1.5, 0.7], 1000).unwrap();
    let model = DemandModel::new(vec![vec![0.4, 0.3, 0.2, 0.1]]).unwrap();
    for (cache, capacity) in [(1.2, 1.5), (0.0, 2.0), (3.0, 0.5)] {
        let lcu = exact_lcu(&lib, &model, &[cache], capacity);
        let cfg = OptimizerConfig {
            unicast_mode: UnicastMode::PerDemand,
            ..Default::default()
        };
        let sol = optimize_general(&lib, &model, &[cache], capacity, &cfg).unwrap();
        assert!(sol.feasible);
        assert!(
            (sol.objective - lcu).abs() < 1e-4,
            "{} vs {lcu}",
            sol.objective
        );
        // averaging the constraint over demands can only help
        let relaxed = optimize_general(
            &lib,
            &model,
            &[cache],
            capacity,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(relaxed.objective <= lcu + 1e-9);
    }
}

#[test]
fn general_beats_tiny_grid() {
    let lib = SourceLibrary::new(vec![1.0, 1.5], 1000).unwrap();
    let model = DemandModel::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
    let (budget, capacity, step) = (0.1, 0.2, 0.05);
    let sol = optimize_general(
        &lib,
        &model,
        &[budget; 2],
        capacity,
        &OptimizerConfig::default(),
    )
    .unwrap();
    assert!(sol.feasible);
    assert_descending(&sol);

    let levels = |top: f64| {
        (0..=(top / step).round() as usize)
            .map(|k| k as f64 * step)
            .collect::<Vec<_>>()
    };
    let cache_rows: Vec<[f64; 2]> = levels(budget)
        .iter()
        .flat_map(|&a| levels(budget).into_iter().map(move |b| [a, b]))
        .filter(|r| r[0] + r[1] <= budget + 1e-12)
        .collect();
    let multicast = levels(capacity);
    let mut best = f64::INFINITY;
    for c0 in &cache_rows {
        for c1 in &cache_rows {
            for &t00 in &multicast {
                for &t01 in &multicast {
                    for &t10 in &multicast {
                        for &t11 in &multicast {
                            let cached = vec![c0.to_vec(), c1.to_vec()];
                            let plan = MulticastRatePlan::coded(
                                cached.clone(),
                                vec![vec![t00, t01], vec![t10, t11]],
                            )
                            .unwrap();
                            let load = gcc_average_terms(&plan, &model, GammaMode::Exact)
                                .unwrap()
                                .rate();
                            if load > capacity + 1e-12 {
                                continue;
                            }
                            let mut w = Vec::new();
                            let mut off = Vec::new();
                            let mut cost = Vec::new();
                            for i in 0..2 {
                                for j in 0..2 {
                                    w.push(model.prob(i, j) * lib.variance(j) / 2.0);
                                    off.push(plan.storing_rate(i, j));
                                    cost.push(model.prob(i, j));
                                }
                            }
                            let u = greedy_increment_allocation(
                                &w,
                                &off,
                                &cost,
                                capacity - load,
                                0.0025,
                            );
                            let value: f64 =
                                (0..4).map(|k| w[k] * (-2.0 * (off[k] + u[k])).exp2()).sum();
                            best = best.min(value);
                        }
                    }
                }
            }
        }
    }
    assert!(
        sol.objective <= best + 1e-2,
        "{} vs grid {best}",
        sol.objective
    );
}

#[test]
fn general_dominates_lcu() {
    let (lib, model) = small_instance();
    for (budgets, capacity) in [([1.0, 0.5], 1.0), ([0.3, 0.3], 2.0), ([2.0, 0.0], 0.4)] {
        let lcu = exact_lcu(&lib, &model, &budgets, capacity);
        for mode in [UnicastMode::PerFile, UnicastMode::PerDemand] {
            let cfg = OptimizerConfig {
                unicast_mode: mode,
                restarts: 4,
                ..Default::default()
            };
            let sol = optimize_general(&lib, &model, &budgets, capacity, &cfg).unwrap();
            assert!(sol.feasible, "{mode:?}: slack {}", sol.constraint_slack);
            assert!(
                sol.objective <= lcu + 1e-6,
                "{mode:?}: {} vs {lcu}",
                sol.objective
            );
            assert_descending(&sol);
        }
    }
}

#[test]
fn general_is_deterministic_and_rejects_bad_input() {
    let (lib, model) = small_instance();
    let cfg = OptimizerConfig {
        restarts: 3,
        ..Default::default()
    };
    let a = optimize_general(&lib, &model, &[0.6, 0.4], 1.0, &cfg).unwrap();
    let b = optimize_general(&lib, &model, &[0.6, 0.4], 1.0, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        optimize_general(&lib, &model, &[0.6, 0.4], -1.0, &cfg),
        Err(Error::Domain(_))
    ));
    assert!(optimize_general(&lib, &model, &[0.6], 1.0, &cfg).is_err());
    let crowd = zipf_demand(3, 0.5, 21).unwrap();
    assert!(matches!(
        optimize_general(&lib, &crowd, &[1.0; 21], 1.0, &cfg),
        Err(Error::ReceiverCap { .. })
    ));
}

#[test]
fn symmetric_single_file_matches_uniform() {
    let lib = SourceLibrary::constant(1, 1.3, 1000).unwrap();
    let sym = optimize_symmetric(&lib, &[1.0], 2.0, 1.0, 3, &OptimizerConfig::default()).unwrap();
    let uni = optimize_uniform(1.3, 2.0, 1.0, 3).unwrap();
    assert!(sym.feasible && uni.feasible);
    assert!(
        (sym.objective - uni.objective).abs() < 1e-4,
        "{} vs {}",
        sym.objective,
        uni.objective
    );
}

#[test]
fn symmetric_improves_with_capacity() {
    let lib = SourceLibrary::new(vec![1.0, 1.2, 0.8], 1000).unwrap();
    let q = [0.5, 0.3, 0.2];
    let cfg = OptimizerConfig::default();
    let tight = optimize_symmetric(&lib, &q, 0.5, 0.6, 4, &cfg).unwrap();
    let ample = optimize_symmetric(&lib, &q, 0.5, 30.0, 4, &cfg).unwrap();
    assert!(tight.feasible && ample.feasible);
    assert!(ample.objective < tight.objective);
    assert!(ample.objective < 1e-3, "{}", ample.objective);
}

#[test]
fn symmetric_beats_grid() {
    let lib = SourceLibrary::new(vec![1.0, 1.2, 0.8], 1000).unwrap();
    let q = [0.5, 0.3, 0.2];
    let (cache, capacity, n, step) = (0.5, 0.6, 4, 0.1);
    let sol =
        optimize_symmetric(&lib, &q, cache, capacity, n, &OptimizerConfig::default()).unwrap();
    assert!(sol.feasible);
    assert_descending(&sol);

    let units = |top: f64| (top / step).round() as usize;
    let mut best = f64::INFINITY;
    for a in 0..=units(cache) {
        for b in 0..=units(cache) - a {
            for c in 0..=units(cache) - a - b {
                let cached = [a as f64 * step, b as f64 * step, c as f64 * step];
                for x in 0..=units(capacity) {
                    for y in 0..=units(capacity) {
                        for z in 0..=units(capacity) {
                            let multicast = [x as f64 * step, y as f64 * step, z as f64 * step];
                            let load = rate_symmetric(&cached, &multicast, &q, n).unwrap();
                            if load > capacity + 1e-12 {
                                continue;
                            }
                            let w: Vec<f64> = (0..3).map(|j| q[j] * lib.variance(j)).collect();
                            let off: Vec<f64> = (0..3).map(|j| cached[j] + multicast[j]).collect();
                            let cost: Vec<f64> = q.iter().map(|p| n as f64 * p).collect();
                            let u = greedy_increment_allocation(
                                &w,
                                &off,
                                &cost,
                                capacity - load,
                                0.005,
                            );
                            let value: f64 =
                                (0..3).map(|k| w[k] * (-2.0 * (off[k] + u[k])).exp2()).sum();
                            best = best.min(value);
                        }
                    }
                }
            }
        }
    }
    assert!(
        sol.objective <= best + 1e-2,
        "{} vs grid {best}",
        sol.objective
    );
}

#[test]
fn symmetric_rejects_asymmetric_input() {
    let (_, model) = small_instance();
    assert!(matches!(
        symmetric_inputs(&model, &[1.0, 1.0]),
        Err(Error::Contract(_))
    ));
    let even = zipf_demand(3, 0.0, 2).unwrap();
    assert!(matches!(
        symmetric_inputs(&even, &[1.0, 2.0]),
        Err(Error::Contract(_))
    ));
    let (q, m) = symmetric_inputs(&even, &[1.5, 1.5]).unwrap();
    assert_eq!((q.len(), m), (3, 1.5));
}

#[test]
fn rlfu_uniform_popularity_caches_every_file() {
    let lib = SourceLibrary::uniform(8, 0.7, 1.6, 11, 1000).unwrap();
    let q = vec![1.0 / 8.0; 8];
    let sol = optimize_rlfu(&lib, &q, 3.0, 2.0, 5, &OptimizerConfig::default()).unwrap();
    assert!(sol.feasible);
    assert_eq!(sol.m_tilde, Some(8));
    assert_descending(&sol);
}

#[test]
fn rlfu_without_cache_only_transmits() {
    let lib = SourceLibrary::constant(6, 1.0, 1000).unwrap();
    let q = zipf_demand(6, 0.8, 1).unwrap().row(0).to_vec();
    let sol = optimize_rlfu(&lib, &q, 0.0, 1.5, 4, &OptimizerConfig::default()).unwrap();
    assert!(sol.feasible);
    assert!(sol.plan.cached.iter().flatten().all(|v| *v == 0.0));
    assert!(sol.constraint_slack.abs() < 1e-6);
}

#[test]
fn rlfu_scan_must_be_non_empty() {
    let lib = SourceLibrary::constant(6, 1.0, 1000).unwrap();
    let q = vec![1.0 / 6.0; 6];
    let cfg = OptimizerConfig {
        rlfu_cutoff_scan: Some(CutoffScan {
            from: 5,
            to: 4,
            max_candidates: 50,
        }),
        ..Default::default()
    };
    assert!(matches!(
        optimize_rlfu(&lib, &q, 1.0, 1.0, 3, &cfg),
        Err(Error::Contract(_))
    ));
    let too_far = OptimizerConfig {
        rlfu_cutoff_scan: Some(CutoffScan {
            from: 5,
            to: 7,
            max_candidates: 50,
        }),
        ..Default::default()
    };
    assert!(matches!(
        optimize_rlfu(&lib, &q, 1.0, 1.0, 3, &too_far),
        Err(Error::Contract(_))
    ));
}

#[test]
fn rlfu_beats_lcu_on_a_skewed_library() {
    let lib = SourceLibrary::uniform(20, 0.7, 1.6, 3, 1000).unwrap();
    let model = zipf_demand(20, 0.6, 6).unwrap();
    let sol = optimize_rlfu(&lib, model.row(0), 5.0, 2.0, 6, &OptimizerConfig::default()).unwrap();
    assert!(sol.feasible);
    let lcu = lcu_expected_distortion(
        &lib,
        &model,
        &[5.0; 6],
        2.0,
        ExpectationMode::monte_carlo(5),
    )
    .unwrap();
    assert!(
        sol.objective < lcu.estimate.mean - 3.0 * lcu.estimate.stderr,
        "{} vs {:?}",
        sol.objective,
        lcu.estimate
    );
}

#[test]
fn rlfu_warm_start_keeps_its_cutoff_in_the_scan() {
    let lib = SourceLibrary::constant(10, 1.0, 1000).unwrap();
    let q = zipf_demand(10, 1.2, 1).unwrap().row(0).to_vec();
    let first = optimize_rlfu(&lib, &q, 2.0, 1.0, 4, &OptimizerConfig::default()).unwrap();
    let cfg = OptimizerConfig {
        rlfu_cutoff_scan: Some(CutoffScan {
            from: 10,
            to: 10,
            max_candidates: 1,
        }),
        ..Default::default()
    };
    let warm = optimize_rlfu_from(&lib, &q, 2.0, 1.0, 4, &cfg, &[&first]).unwrap();
    assert!(warm.objective <= first.objective + 1e-12);
}

#[test]
fn uniform_examples() {
    let none = optimize_uniform(1.5, 0.8, 0.0, 20).unwrap();
    assert_eq!(none.plan.multicast[0][0], 0.0);
    assert!((none.objective - 1.5 * (-1.6f64).exp2()).abs() < 1e-15);

    let one = optimize_uniform(1.5, 0.8, 3.0, 1).unwrap();
    assert!((one.plan.multicast[0][0] - 3.0).abs() < 1e-12);

    let sol = optimize_uniform(1.5, 50.0, 10.0, 20).unwrap();
    let (mt, rt) = uniform_grid_max(50.0, 10.0, 20, 0.01);
    let range = sol.plan.cached[0][0] + sol.plan.multicast[0][0];
    assert!(
        (range - (mt + rt)).abs() < 1e-3,
        "{range} vs grid {}",
        mt + rt
    );
    assert!(sol.feasible && sol.constraint_slack < 1e-9);
}

#[test]
fn uniform_caches_everything_it_can() {
    for n in [1, 2, 5, 20] {
        for (cache, capacity) in [(0.5, 10.0), (0.7, 10.0), (2.0, 1.0), (0.05, 8.0)] {
            let (best, best_range, at_full) = uniform_tightness(cache, capacity, n);
            assert!(
                at_full >= best_range - 1e-12,
                "n={n} M={cache} R={capacity}: best at {best}"
            );
        }
    }
}
