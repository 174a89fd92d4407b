use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coded_multicast::MulticastRatePlan;
use crate::{Error, Result};

/// How unicast rates may depend on the demand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnicastMode {
    /// One unicast rate per receiver and requested file; the link capacity
    /// holds on average over demands.
    #[default]
    PerFile,
    /// Unicast chosen per demand; the link capacity holds for every demand.
    /// Needs exact demand enumeration.
    PerDemand,
}

impl FromStr for UnicastMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-file" => Ok(UnicastMode::PerFile),
            "per-demand" => Ok(UnicastMode::PerDemand),
            other => Err(Error::config(format!("unknown unicast mode {other:?}"))),
        }
    }
}

/// Backtracking line search along the normalized negative gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepRule {
    /// First trial step length, in bits per sample.
    pub initial: f64,
    /// Factor applied after a rejected trial.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Armijo constant.
    pub sufficient_decrease: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial: 0.5,
            shrink: 0.5,
            max_backtracks: 30,
            sufficient_decrease: 1e-4,
        }
    }
}

/// Inclusive cutoff range for the truncated-uniform scheme, thinned to at
/// most `max_candidates` evenly spaced values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffScan {
    pub from: usize,
    pub to: usize,
    #[serde(default = "default_candidates")]
    pub max_candidates: usize,
}

fn default_candidates() -> usize {
    50
}

impl CutoffScan {
    /// Default scan `⌈M⌉ ..= m` (at least 1).
    pub fn for_cache(cache: f64, m: usize) -> Self {
        let from = (cache.ceil() as usize).clamp(1, m);
        Self {
            from,
            to: m,
            max_candidates: default_candidates(),
        }
    }

    pub fn candidates(&self) -> Vec<usize> {
        if self.from > self.to || self.max_candidates == 0 {
            return Vec::new();
        }
        let span = self.to - self.from;
        if span < self.max_candidates {
            return (self.from..=self.to).collect();
        }
        let k = self.max_candidates.max(2);
        let mut out: Vec<usize> = (0..k)
            .map(|t| self.from + ((t as f64) * span as f64 / (k - 1) as f64).round() as usize)
            .collect();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub step_rule: StepRule,
    pub tolerance: f64,
    pub seed: u64,
    pub rlfu_cutoff_scan: Option<CutoffScan>,
    pub unicast_mode: UnicastMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iterations: 200,
            step_rule: StepRule::default(),
            tolerance: 1e-9,
            seed: crate::rng::DEFAULT_SEED,
            rlfu_cutoff_scan: None,
            unicast_mode: UnicastMode::PerFile,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::config("restarts must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::config(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        let s = &self.step_rule;
        if !(s.initial.is_finite() && s.initial > 0.0) {
            return Err(Error::config("step_rule.initial must be positive"));
        }
        if !(s.shrink > 0.0 && s.shrink < 1.0) {
            return Err(Error::config("step_rule.shrink must lie in (0, 1)"));
        }
        if !(s.sufficient_decrease >= 0.0 && s.sufficient_decrease < 1.0) {
            return Err(Error::config(
                "step_rule.sufficient_decrease must lie in [0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    General,
    Symmetric,
    Rlfu,
    Uniform,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::General => "general",
            Scheme::Symmetric => "symmetric",
            Scheme::Rlfu => "rlfu",
            Scheme::Uniform => "uniform",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Scheme::General),
            "symmetric" => Ok(Scheme::Symmetric),
            "rlfu" => Ok(Scheme::Rlfu),
            "uniform" => Ok(Scheme::Uniform),
            other => Err(Error::config(format!("unknown scheme {other:?}"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub restart: usize,
    pub iteration: usize,
    pub objective: f64,
    /// Length of the accepted step (zero for the starting point).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcCmSolution {
    pub scheme: Scheme,
    pub plan: MulticastRatePlan,
    /// Expected distortion, evaluated independently of the solver.
    pub objective: f64,
    /// `R` minus the re-evaluated average (or worst-case, per demand) load.
    pub constraint_slack: f64,
    pub multicast_load: f64,
    pub unicast_load: f64,
    pub solver_trace: Vec<TraceEntry>,
    pub feasible: bool,
    pub m_tilde: Option<usize>,
    pub unicast_mode: UnicastMode,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = OptimizerConfig {
            rlfu_cutoff_scan: Some(CutoffScan {
                from: 3,
                to: 9,
                max_candidates: 4,
            }),
            unicast_mode: UnicastMode::PerDemand,
            ..OptimizerConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: OptimizerConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: OptimizerConfig = toml::from_str("restarts = 3").unwrap();
        assert_eq!(partial.restarts, 3);
        assert_eq!(partial.max_iterations, 200);
        assert!(toml::from_str::<OptimizerConfig>("restart = 3").is_err());
    }

    #[test]
    fn validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        assert!(OptimizerConfig {
            restarts: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            tolerance: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let bad_step = StepRule {
            shrink: 1.0,
            ..Default::default()
        };
        assert!(OptimizerConfig {
            step_rule: bad_step,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn cutoff_candidates() {
        assert_eq!(CutoffScan::for_cache(2.5, 6).candidates(), vec![3, 4, 5, 6]);
        assert_eq!(CutoffScan::for_cache(0.0, 3).candidates(), vec![1, 2, 3]);
        let wide = CutoffScan {
            from: 50,
            to: 100,
            max_candidates: 50,
        }
        .candidates();
        assert_eq!(wide.len(), 50);
        assert_eq!((wide[0], *wide.last().unwrap()), (50, 100));
        assert!(CutoffScan {
            from: 5,
            to: 4,
            max_candidates: 50
        }
        .candidates()
        .is_empty());
    }

    #[test]
    fn names_parse() {
        for s in [
            Scheme::General,
            Scheme::Symmetric,
            Scheme::Rlfu,
            Scheme::Uniform,
        ] {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("rlu".parse::<Scheme>().is_err());
        assert_eq!(
            "per-demand".parse::<UnicastMode>().unwrap(),
            UnicastMode::PerDemand
        );
    }
}
