use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::optimizer::OptimizerConfig;
use crate::rng::{DEFAULT_SEED, SEED_ENV};
use crate::source_model::{zipf_demand, DemandModel, ExpectationMode, SourceLibrary};
use crate::{Error, Result};

/// How the file variances are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSigma", into = "RawSigma")]
pub enum SigmaSpec {
    Constant(f64),
    List(Vec<f64>),
    /// One draw from `U[lo, hi]` per file, from a stream seeded by `seed`.
    Uniform {
        lo: f64,
        hi: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawSigma {
    Number(f64),
    List(Vec<f64>),
    Text(String),
}

impl TryFrom<RawSigma> for SigmaSpec {
    type Error = Error;

    fn try_from(raw: RawSigma) -> Result<Self> {
        match raw {
            RawSigma::Number(v) => Ok(SigmaSpec::Constant(v)),
            RawSigma::List(v) => Ok(SigmaSpec::List(v)),
            RawSigma::Text(s) => s.parse(),
        }
    }
}

impl From<SigmaSpec> for RawSigma {
    fn from(spec: SigmaSpec) -> Self {
        match spec {
            SigmaSpec::Constant(v) => RawSigma::Number(v),
            SigmaSpec::List(v) => RawSigma::List(v),
            other => RawSigma::Text(other.to_string()),
        }
    }
}

impl FromStr for SigmaSpec {
    type Err = Error;

    /// Accepts `uniform(lo,hi,seed)`, `constant(v)` or a bare number.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config(format!("cannot parse variance spec {s:?}"));
        if let Ok(v) = s.parse::<f64>() {
            return Ok(SigmaSpec::Constant(v));
        }
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args: Vec<&str> = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split(',')
            .map(str::trim)
            .collect();
        match (name.trim(), args.as_slice()) {
            ("uniform", [lo, hi, seed]) => Ok(SigmaSpec::Uniform {
                lo: lo.parse().map_err(|_| bad())?,
                hi: hi.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            ("constant", [v]) => Ok(SigmaSpec::Constant(v.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigmaSpec::Constant(v) => write!(f, "constant({v})"),
            SigmaSpec::List(v) => write!(f, "list({})", v.len()),
            SigmaSpec::Uniform { lo, hi, seed } => write!(f, "uniform({lo},{hi},{seed})"),
        }
    }
}

impl SigmaSpec {
    pub fn library(&self, m: usize, samples_per_file: u64) -> Result<SourceLibrary> {
        match self {
            SigmaSpec::Constant(v) => SourceLibrary::constant(m, *v, samples_per_file),
            SigmaSpec::List(v) => {
                if v.len() != m {
                    return Err(Error::config(format!(
                        "sigma2 lists {} variances for {m} files",
                        v.len()
                    )));
                }
                SourceLibrary::new(v.clone(), samples_per_file)
            }
            SigmaSpec::Uniform { lo, hi, seed } => {
                SourceLibrary::uniform(m, *lo, *hi, *seed, samples_per_file)
            }
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            SigmaSpec::Constant(v) => Some(*v),
            _ => None,
        }
    }
}

fn default_samples_per_file() -> u64 {
    1000
}

/// Library, demand and cache budgets shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub n: usize,
    pub m: usize,
    /// Samples per file (`F`); only used to report totals in bits.
    #[serde(default = "default_samples_per_file")]
    pub samples_per_file: u64,
    /// Zipf exponent shared by all receivers.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Explicit popularity rows, one per receiver.
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    pub sigma2: SigmaSpec,
    /// Cache budget of every receiver.
    #[serde(default)]
    pub cache: Option<f64>,
    /// Per-receiver budgets; overrides `cache`.
    #[serde(default)]
    pub budgets: Option<Vec<f64>>,
}

impl InstanceConfig {
    pub fn library(&self) -> Result<SourceLibrary> {
        self.sigma2.library(self.m, self.samples_per_file)
    }

    pub fn demand_model(&self) -> Result<DemandModel> {
        match (&self.alpha, &self.q) {
            (Some(a), None) => zipf_demand(self.m, *a, self.n),
            (None, Some(q)) => {
                if q.len() != self.n || q.iter().any(|r| r.len() != self.m) {
                    return Err(Error::config(format!(
                        "q must have {} rows of {} entries",
                        self.n, self.m
                    )));
                }
                DemandModel::new(q.clone())
            }
            (Some(_), Some(_)) => Err(Error::config("give either alpha or q, not both")),
            (None, None) => Err(Error::config("one of alpha or q is required")),
        }
    }

    /// Budgets with `cache` overriding the config when given.
    pub fn budgets(&self, cache: Option<f64>) -> Result<Vec<f64>> {
        if let Some(c) = cache {
            return Ok(vec![c; self.n]);
        }
        match (&self.budgets, self.cache) {
            (Some(b), _) if b.len() != self.n => Err(Error::config(format!(
                "{} budgets for {} receivers",
                b.len(),
                self.n
            ))),
            (Some(b), _) => Ok(b.clone()),
            (None, Some(c)) => Ok(vec![c; self.n]),
            (None, None) => Err(Error::config("no cache budget given")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepScheme {
    Lcu,
    CcmRlfu,
    CcmUniform,
    CcmSymmetric,
}

impl SweepScheme {
    pub const ALL: [SweepScheme; 4] = [
        SweepScheme::Lcu,
        SweepScheme::CcmRlfu,
        SweepScheme::CcmUniform,
        SweepScheme::CcmSymmetric,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepScheme::Lcu => "lcu",
            SweepScheme::CcmRlfu => "ccm-rlfu",
            SweepScheme::CcmUniform => "ccm-uniform",
            SweepScheme::CcmSymmetric => "ccm-symmetric",
        }
    }

    pub fn is_ccm(&self) -> bool {
        *self != SweepScheme::Lcu
    }
}

impl std::fmt::Display for SweepScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepScheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown scheme {s:?}; valid schemes are {}",
                    valid_schemes()
                ))
            })
    }
}

pub(crate) fn valid_schemes() -> String {
    SweepScheme::ALL.map(|s| s.name()).join(", ")
}

/// How LC-U points are averaged over demands.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluation {
    /// Exact when `m^n` is below the enumeration cap, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

fn default_trials() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub capacities: Vec<f64>,
    pub cache_sizes: Vec<f64>,
    pub schemes: Vec<SweepScheme>,
    /// Demand samples per Monte Carlo point.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: Option<u64>,
    pub instance: InstanceConfig,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Seed from the command line, else the environment, else the config,
    /// else [`DEFAULT_SEED`].
    pub fn resolve_seed(&self, cli: Option<u64>) -> Result<u64> {
        resolve_seed(cli, std::env::var(SEED_ENV).ok().as_deref(), self.seed)
    }
}

pub fn resolve_seed(cli: Option<u64>, env: Option<&str>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    if let Some(text) = env {
        return text
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("{SEED_ENV}={text:?} is not a u64")));
    }
    Ok(config.unwrap_or(DEFAULT_SEED))
}

/// Parses `exact` or `mc:<samples>:<seed>`.
pub fn parse_expectation(s: &str) -> Result<ExpectationMode> {
    let bad = || Error::config(format!("expected exact or mc:<samples>:<seed>, got {s:?}"));
    if s == "exact" {
        return Ok(ExpectationMode::Exact);
    }
    match s.split(':').collect::<Vec<_>>().as_slice() {
        ["mc", samples, seed] => Ok(ExpectationMode::MonteCarlo {
            samples: samples.parse().map_err(|_| bad())?,
            seed: seed.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZIPF: &str = r#"
seed = 11

[instance]
n = 20
m = 100
alpha = 0.6
sigma2 = "uniform(0.7,1.6,7)"
cache = 50

[sweep]
capacities = [2, 5, 8]
cache_sizes = [5, 50, 100]
schemes = ["lcu", "ccm-rlfu"]

[optimizer]
restarts = 2
"#;

    #[test]
    fn parses_full_config() {
        let cfg = Config::from_toml(ZIPF).unwrap();
        assert_eq!(cfg.seed, Some(11));
        assert_eq!(
            cfg.instance.sigma2,
            SigmaSpec::Uniform {
                lo: 0.7,
                hi: 1.6,
                seed: 7
            }
        );
        let sweep = cfg.sweep.unwrap();
        assert_eq!(sweep.schemes, vec![SweepScheme::Lcu, SweepScheme::CcmRlfu]);
        assert_eq!(sweep.trials, 2000);
        assert_eq!(cfg.optimizer.restarts, 2);
        assert_eq!(cfg.optimizer.max_iterations, 200);
        assert_eq!(cfg.instance.library().unwrap().m(), 100);
        assert!(cfg.instance.demand_model().unwrap().is_symmetric());
        assert_eq!(cfg.instance.budgets(None).unwrap(), vec![50.0; 20]);
    }

    #[test]
    fn sigma_forms() {
        assert_eq!(
            "1.5".parse::<SigmaSpec>().unwrap(),
            SigmaSpec::Constant(1.5)
        );
        assert_eq!(
            "constant(2)".parse::<SigmaSpec>().unwrap(),
            SigmaSpec::Constant(2.0)
        );
        assert!("uniform(1,2)".parse::<SigmaSpec>().is_err());
        assert!("normal(0,1,2)".parse::<SigmaSpec>().is_err());
        let spec = SigmaSpec::Uniform {
            lo: 0.7,
            hi: 1.6,
            seed: 3,
        };
        assert_eq!(spec.to_string().parse::<SigmaSpec>().unwrap(), spec);
        let list = SigmaSpec::List(vec![1.0, 2.0]);
        assert!(list.library(3, 1).is_err());
    }

    #[test]
    fn unknown_fields_and_schemes_are_rejected() {
        let typo = ZIPF.replace("alpha =", "alfa =");
        assert!(Config::from_toml(&typo).is_err());
        let err = "ccm".parse::<SweepScheme>().unwrap_err().to_string();
        assert!(err.contains("ccm-rlfu") && err.contains("lcu"));
    }

    #[test]
    fn demand_needs_exactly_one_source() {
        let mut inst = Config::from_toml(ZIPF).unwrap().instance;
        inst.q = Some(vec![vec![0.01; 100]; 20]);
        assert!(inst.demand_model().is_err());
        inst.alpha = None;
        assert!(inst.demand_model().is_ok());
        inst.q = None;
        assert!(inst.demand_model().is_err());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2"), Some(3)).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some("2"), Some(3)).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some(3)).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), DEFAULT_SEED);
        assert!(resolve_seed(None, Some("x"), None).is_err());
    }

    #[test]
    fn expectation_modes() {
        assert_eq!(parse_expectation("exact").unwrap(), ExpectationMode::Exact);
        assert_eq!(
            parse_expectation("mc:500:9").unwrap(),
            ExpectationMode::MonteCarlo {
                samples: 500,
                seed: 9
            }
        );
        assert!(parse_expectation("mc:500").is_err());
    }
}
