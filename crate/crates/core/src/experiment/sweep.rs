use serde::{Deserialize, Serialize};

use super::config::{valid_schemes, Config, Evaluation, InstanceConfig, SweepScheme};
use crate::lc_u::lcu_expected_distortion;
use crate::optimizer::{
    optimize_general, optimize_rlfu, optimize_rlfu_from, optimize_symmetric,
    optimize_symmetric_from, optimize_uniform, optimize_uniform_from, symmetric_inputs,
    CcCmSolution, OptimizerConfig, Scheme,
};
use crate::source_model::{DemandModel, ExpectationMode, SourceLibrary, EXACT_CAP, PROB_TOL};
use crate::{par, rng};
use crate::{Error, Result};

/// Stream tag of the LC-U demand samples, shared by every grid point.
const LCU_TAG: u64 = 1;

/// A validated sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub instance: InstanceConfig,
    pub capacities: Vec<f64>,
    pub cache_sizes: Vec<f64>,
    pub schemes: Vec<SweepScheme>,
    pub trials: usize,
    pub evaluation: Evaluation,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl SweepSpec {
    pub fn from_config(cfg: &Config, seed: u64) -> Result<Self> {
        let sweep = cfg
            .sweep
            .as_ref()
            .ok_or_else(|| Error::config("config has no [sweep] section"))?;
        let spec = SweepSpec {
            instance: cfg.instance.clone(),
            capacities: sweep.capacities.clone(),
            cache_sizes: sweep.cache_sizes.clone(),
            schemes: sweep.schemes.clone(),
            trials: sweep.trials,
            evaluation: sweep.evaluation,
            seed,
            optimizer: OptimizerConfig {
                seed,
                ..cfg.optimizer.clone()
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::config(format!(
                "no schemes selected; valid schemes are {}",
                valid_schemes()
            )));
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(Error::config("a scheme is listed twice"));
        }
        if self.capacities.is_empty() || self.cache_sizes.is_empty() {
            return Err(Error::config(
                "capacities and cache_sizes must be non-empty",
            ));
        }
        let ok = |v: &f64| v.is_finite() && *v >= 0.0;
        if !self.capacities.iter().all(ok) || !self.cache_sizes.iter().all(ok) {
            return Err(Error::config(
                "capacities and cache sizes must be finite and non-negative",
            ));
        }
        if self.cache_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("cache_sizes must be strictly ascending"));
        }
        if self.capacities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("capacities must be strictly ascending"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: SweepScheme,
    pub capacity: f64,
    pub cache: f64,
    pub distortion: f64,
    /// Zero for exact values.
    pub stderr: f64,
    pub meta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    /// The library realization the sweep ran on.
    pub variances: Vec<f64>,
    /// Scheme-major, then capacity, then cache size, in spec order.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// `(M, distortion)` along one curve.
    pub fn curve(&self, scheme: SweepScheme, capacity: f64) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.capacity == capacity)
            .map(|r| (r.cache, r.distortion))
            .collect()
    }

    pub fn get(&self, scheme: SweepScheme, capacity: f64, cache: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.capacity == capacity && r.cache == cache)
    }
}

fn lcu_mode(spec: &SweepSpec, model: &DemandModel) -> ExpectationMode {
    let mc = ExpectationMode::MonteCarlo {
        samples: spec.trials,
        seed: rng::derive_seed(spec.seed, &[LCU_TAG]),
    };
    match spec.evaluation {
        Evaluation::Exact => ExpectationMode::Exact,
        Evaluation::MonteCarlo => mc,
        Evaluation::Auto if model.demand_space() <= EXACT_CAP => ExpectationMode::Exact,
        Evaluation::Auto => mc,
    }
}

fn lcu_rows(spec: &SweepSpec, lib: &SourceLibrary, model: &DemandModel) -> Result<Vec<SweepRow>> {
    let mode = lcu_mode(spec, model);
    let meta = match mode {
        ExpectationMode::Exact => "eval=exact".to_string(),
        ExpectationMode::MonteCarlo { samples, .. } => format!("eval=mc;samples={samples}"),
    };
    let points: Vec<(f64, f64)> = spec
        .capacities
        .iter()
        .flat_map(|&r| spec.cache_sizes.iter().map(move |&c| (r, c)))
        .collect();
    par::map_slice(&points, |&(capacity, cache)| {
        let budgets = vec![cache; model.n()];
        let out = lcu_expected_distortion(lib, model, &budgets, capacity, mode)?;
        Ok(SweepRow {
            scheme: SweepScheme::Lcu,
            capacity,
            cache,
            distortion: out.estimate.mean,
            stderr: out.estimate.stderr,
            meta: meta.clone(),
        })
    })
    .into_iter()
    .collect()
}

fn ccm_row(scheme: SweepScheme, capacity: f64, cache: f64, sol: &CcCmSolution) -> SweepRow {
    let m_tilde = sol.m_tilde.map_or("-".to_string(), |c| c.to_string());
    SweepRow {
        scheme,
        capacity,
        cache,
        distortion: sol.objective,
        stderr: 0.0,
        meta: format!(
            "m_tilde={m_tilde};slack={:.3e};feasible={}",
            sol.constraint_slack, sol.feasible
        ),
    }
}

/// Uniform popularity and one variance, as the fully symmetric program needs.
fn uniform_inputs(spec: &SweepSpec, lib: &SourceLibrary, q: &[f64]) -> Result<f64> {
    let sigma2 = spec
        .instance
        .sigma2
        .constant()
        .ok_or_else(|| Error::config("ccm-uniform needs a constant sigma2"))?;
    let flat = 1.0 / lib.m() as f64;
    if q.iter().any(|p| (p - flat).abs() > PROB_TOL) {
        return Err(Error::config(
            "ccm-uniform needs uniform popularity (alpha = 0)",
        ));
    }
    Ok(sigma2)
}

/// Runs one CC-CM scheme over the grid, capacity-major. Each point is warm
/// started from its neighbours at the previous cache size and the previous
/// capacity, which keeps the curves monotone.
fn ccm_rows(
    spec: &SweepSpec,
    scheme: SweepScheme,
    lib: &SourceLibrary,
    model: &DemandModel,
) -> Result<Vec<SweepRow>> {
    let n = model.n();
    let (q, _) = symmetric_inputs(model, &vec![0.0; n])?;
    let sigma2 = match scheme {
        SweepScheme::CcmUniform => Some(uniform_inputs(spec, lib, &q)?),
        _ => None,
    };
    let (rs, ms) = (&spec.capacities, &spec.cache_sizes);
    let mut grid: Vec<Vec<CcCmSolution>> = Vec::with_capacity(rs.len());
    let mut rows = Vec::with_capacity(rs.len() * ms.len());
    for (a, &capacity) in rs.iter().enumerate() {
        let mut line: Vec<CcCmSolution> = Vec::with_capacity(ms.len());
        for (b, &cache) in ms.iter().enumerate() {
            let warm: Vec<&CcCmSolution> = [
                b.checked_sub(1).map(|p| &line[p]),
                a.checked_sub(1).map(|p| &grid[p][b]),
            ]
            .into_iter()
            .flatten()
            .collect();
            let cfg = &spec.optimizer;
            let sol = match scheme {
                SweepScheme::CcmRlfu => {
                    optimize_rlfu_from(lib, &q, cache, capacity, n, cfg, &warm)?
                }
                SweepScheme::CcmSymmetric => {
                    let plans: Vec<_> = warm.iter().map(|w| &w.plan).collect();
                    optimize_symmetric_from(lib, &q, cache, capacity, n, cfg, &plans)?
                }
                SweepScheme::CcmUniform => {
                    let rates: Vec<f64> = warm.iter().map(|w| w.plan.cached[0][0]).collect();
                    let per_file = cache / lib.m() as f64;
                    let sigma2 = sigma2.expect("uniform inputs checked");
                    optimize_uniform_from(sigma2, per_file, capacity, n, &rates)?
                }
                SweepScheme::Lcu => unreachable!("lcu is not a CC-CM scheme"),
            };
            log::debug!("{scheme} R={capacity} M={cache}: {}", sol.objective);
            rows.push(ccm_row(scheme, capacity, cache, &sol));
            line.push(sol);
        }
        grid.push(line);
    }
    Ok(rows)
}

/// Evaluates every selected scheme at every `(R, M)` of the grid. Schemes
/// and LC-U points run concurrently; rows come back in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let lib = spec.instance.library()?;
    let model = spec.instance.demand_model()?;
    if model.n() != spec.instance.n || model.m() != lib.m() {
        return Err(Error::config("instance dimensions disagree"));
    }
    let parts = par::map_slice(&spec.schemes, |&scheme| match scheme {
        SweepScheme::Lcu => lcu_rows(spec, &lib, &model),
        _ => ccm_rows(spec, scheme, &lib, &model),
    });
    let mut rows = Vec::new();
    for part in parts {
        rows.extend(part?);
    }
    Ok(SweepTable {
        spec: spec.clone(),
        variances: lib.variances().to_vec(),
        rows,
    })
}

/// Solves one CC-CM scheme at a single point. The restricted schemes need a
/// receiver-symmetric instance; `uniform` also needs flat popularity and one
/// variance and takes the per-file share of the budget.
pub fn solve_ccm(
    scheme: Scheme,
    lib: &SourceLibrary,
    model: &DemandModel,
    budgets: &[f64],
    capacity: f64,
    cfg: &OptimizerConfig,
) -> Result<CcCmSolution> {
    if scheme == Scheme::General {
        return optimize_general(lib, model, budgets, capacity, cfg);
    }
    let (q, cache) = symmetric_inputs(model, budgets)?;
    let n = model.n();
    match scheme {
        Scheme::Symmetric => optimize_symmetric(lib, &q, cache, capacity, n, cfg),
        Scheme::Rlfu => optimize_rlfu(lib, &q, cache, capacity, n, cfg),
        _ => {
            let sigma2 = lib.variance(0);
            if lib.variances().iter().any(|v| *v != sigma2) {
                return Err(Error::config(
                    "uniform scheme needs one variance for all files",
                ));
            }
            let flat = 1.0 / lib.m() as f64;
            if q.iter().any(|p| (p - flat).abs() > PROB_TOL) {
                return Err(Error::config(
                    "uniform scheme needs uniform popularity (alpha = 0)",
                ));
            }
            optimize_uniform(sigma2, cache / lib.m() as f64, capacity, n)
        }
    }
}
