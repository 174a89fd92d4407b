//! Gaussian source library, demand model and the expected-distortion
//! objective shared by both schemes.
//!
//! File and receiver indices are zero-based throughout the library. Rates and
//! cache sizes are reals in bits per source sample; the per-file sample count
//! only matters when converting to total bits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::par;
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Absolute tolerance for probability sums and cache budget checks.
pub const PROB_TOL: f64 = 1e-9;

/// Largest demand space that [`ExpectationMode::Exact`] will enumerate.
pub const EXACT_CAP: f64 = 1e6;

pub const DEFAULT_MC_SAMPLES: usize = 10_000;

const MC_CHUNK: usize = 512;
const EXACT_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceLibrary {
    variances: Vec<f64>,
    samples_per_file: u64,
}

impl SourceLibrary {
    pub fn new(variances: Vec<f64>, samples_per_file: u64) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::domain("library must hold at least one file"));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::domain(format!(
                "variance {v} is not a positive real"
            )));
        }
        if samples_per_file == 0 {
            return Err(Error::domain("samples_per_file must be positive"));
        }
        Ok(Self {
            variances,
            samples_per_file,
        })
    }

    pub fn constant(m: usize, variance: f64, samples_per_file: u64) -> Result<Self> {
        Self::new(vec![variance; m], samples_per_file)
    }

    /// Draws every variance uniformly from `[lo, hi]` with a seeded stream.
    pub fn uniform(m: usize, lo: f64, hi: f64, seed: u64, samples_per_file: u64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::domain(format!(
                "invalid variance range [{lo}, {hi}]"
            )));
        }
        let mut s = rng::stream(seed);
        let variances = (0..m).map(|_| lo + (hi - lo) * s.random::<f64>()).collect();
        Self::new(variances, samples_per_file)
    }

    pub fn m(&self) -> usize {
        self.variances.len()
    }

    pub fn variance(&self, file: usize) -> f64 {
        self.variances[file]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn samples_per_file(&self) -> u64 {
        self.samples_per_file
    }

    /// Converts a per-sample rate into total bits for one file.
    pub fn total_bits(&self, rate: f64) -> f64 {
        rate * self.samples_per_file as f64
    }
}

/// Per-receiver request probabilities: `n` rows over `m` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    q: Vec<Vec<f64>>,
}

impl DemandModel {
    pub fn new(q: Vec<Vec<f64>>) -> Result<Self> {
        let m = q.first().map(Vec::len).unwrap_or(0);
        if q.is_empty() || m == 0 {
            return Err(Error::dimension("demand matrix must be non-empty"));
        }
        for (i, row) in q.iter().enumerate() {
            if row.len() != m {
                return Err(Error::dimension(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::domain(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::domain(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { q })
    }

    /// `n` identical rows.
    pub fn identical(row: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("need at least one receiver"));
        }
        Self::new(vec![row; n])
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.q[0].len()
    }

    pub fn row(&self, receiver: usize) -> &[f64] {
        &self.q[receiver]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn prob(&self, receiver: usize, file: usize) -> f64 {
        self.q[receiver][file]
    }

    /// True when every row equals the first one exactly.
    pub fn is_symmetric(&self) -> bool {
        self.q.iter().all(|r| r == &self.q[0])
    }

    /// Probability that at least one receiver requests `file`.
    pub fn request_probability(&self, file: usize) -> f64 {
        1.0 - self.q.iter().map(|r| 1.0 - r[file]).product::<f64>()
    }

    /// Number of demand realizations, `m^n`, as a float.
    pub fn demand_space(&self) -> f64 {
        (self.m() as f64).powi(self.n() as i32)
    }

    pub fn sampler(&self) -> DemandSampler {
        DemandSampler::new(self)
    }
}

/// Files requested by each receiver in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemandRealization(Vec<usize>);

impl DemandRealization {
    pub fn new(files: Vec<usize>, m: usize) -> Result<Self> {
        if let Some(&bad) = files.iter().find(|&&f| f >= m) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                limit: m,
            });
        }
        Ok(Self(files))
    }

    pub fn files(&self) -> &[usize] {
        &self.0
    }

    pub fn file(&self, receiver: usize) -> usize {
        self.0[receiver]
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    /// Distinct requested files, ascending.
    pub fn distinct_files(&self) -> Vec<usize> {
        let mut f = self.0.clone();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Stable 64-bit FNV-1a hash of the file vector.
    pub fn stable_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &f in &self.0 {
            for byte in (f as u64).to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Cumulative per-row tables for repeated demand draws.
#[derive(Debug, Clone)]
pub struct DemandSampler {
    cumulative: Vec<Vec<f64>>,
}

impl DemandSampler {
    fn new(model: &DemandModel) -> Self {
        let cumulative = model
            .rows()
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { cumulative }
    }

    pub fn sample_file(&self, receiver: usize, rng: &mut Stream) -> usize {
        let cum = &self.cumulative[receiver];
        let total = *cum.last().expect("non-empty row");
        let u = rng.random::<f64>() * total;
        // first index whose cumulative mass exceeds u; zero-probability files
        // share their predecessor's cumulative value and are never selected
        let idx = cum.partition_point(|&c| c <= u);
        idx.min(cum.len() - 1)
    }

    pub fn sample(&self, rng: &mut Stream) -> DemandRealization {
        DemandRealization(
            (0..self.cumulative.len())
                .map(|i| self.sample_file(i, rng))
                .collect(),
        )
    }
}

/// Per-receiver per-file cached rates and cache budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachePlan {
    rates: Vec<Vec<f64>>,
    budgets: Vec<f64>,
}

impl CachePlan {
    pub fn new(rates: Vec<Vec<f64>>, budgets: Vec<f64>) -> Result<Self> {
        if rates.len() != budgets.len() {
            return Err(Error::dimension(format!(
                "{} cache rows but {} budgets",
                rates.len(),
                budgets.len()
            )));
        }
        for (i, (row, &budget)) in rates.iter().zip(&budgets).enumerate() {
            if !(budget.is_finite() && budget >= 0.0) {
                return Err(Error::domain(format!("budget of receiver {i} is {budget}")));
            }
            if row.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(Error::domain(format!(
                    "receiver {i} has a negative cached rate"
                )));
            }
            let used: f64 = row.iter().sum();
            if used > budget + PROB_TOL.max(budget * 1e-12) {
                return Err(Error::domain(format!(
                    "receiver {i} caches {used} > budget {budget}"
                )));
            }
        }
        Ok(Self { rates, budgets })
    }

    pub fn empty(n: usize, m: usize) -> Self {
        Self {
            rates: vec![vec![0.0; m]; n],
            budgets: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.rates.len()
    }

    pub fn rate(&self, receiver: usize, file: usize) -> f64 {
        self.rates[receiver][file]
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn budget(&self, receiver: usize) -> f64 {
        self.budgets[receiver]
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    /// `p_{i,j} = M_{i,j} / M_i`, or `None` for an empty budget.
    pub fn caching_distribution(&self, receiver: usize) -> Option<Vec<f64>> {
        let b = self.budgets[receiver];
        (b > 0.0).then(|| self.rates[receiver].iter().map(|r| r / b).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExpectationMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

impl ExpectationMode {
    pub fn monte_carlo(seed: u64) -> Self {
        ExpectationMode::MonteCarlo {
            samples: DEFAULT_MC_SAMPLES,
            seed,
        }
    }
}

/// A mean with its standard error (zero for exact evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

pub fn zipf_demand(m: usize, alpha: f64, n: usize) -> Result<DemandModel> {
    if m == 0 || n == 0 {
        return Err(Error::domain("zipf demand needs m >= 1 and n >= 1"));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::domain(format!(
            "zipf exponent {alpha} must be non-negative"
        )));
    }
    let weights: Vec<f64> = (1..=m).map(|j| (j as f64).powf(-alpha)).collect();
    let total: f64 = weights.iter().sum();
    let row: Vec<f64> = weights.iter().map(|w| w / total).collect();
    DemandModel::identical(row, n)
}

/// Gaussian distortion-rate function `σ² 2^(-2r)`.
pub fn distortion(variance: f64, rate: f64) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(Error::domain(format!("rate {rate} is negative")));
    }
    Ok(variance * (-2.0 * rate).exp2())
}

pub(crate) fn distortion_unchecked(variance: f64, rate: f64) -> f64 {
    variance * (-2.0 * rate).exp2()
}

fn check_demand(model: &DemandModel, d: &DemandRealization) -> Result<()> {
    if d.n() != model.n() {
        return Err(Error::dimension(format!(
            "demand has {} entries for {} receivers",
            d.n(),
            model.n()
        )));
    }
    if let Some(&bad) = d.files().iter().find(|&&f| f >= model.m()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            limit: model.m(),
        });
    }
    Ok(())
}

/// `Π_d = ∏_i q_{i,d_i}`.
pub fn demand_probability(model: &DemandModel, d: &DemandRealization) -> Result<f64> {
    check_demand(model, d)?;
    Ok(d.files()
        .iter()
        .enumerate()
        .map(|(i, &f)| model.prob(i, f))
        .product())
}

pub fn sample_demand(model: &DemandModel, rng: &mut Stream) -> DemandRealization {
    model.sampler().sample(rng)
}

/// Decodes the `index`-th demand of the mixed-radix enumeration (receiver 0
/// is the least significant digit).
pub fn demand_from_index(mut index: u64, n: usize, m: usize) -> DemandRealization {
    let files = (0..n)
        .map(|_| {
            let f = (index % m as u64) as usize;
            index /= m as u64;
            f
        })
        .collect();
    DemandRealization(files)
}

/// Calls `f(d, Π_d)` on every demand with positive probability, in
/// enumeration order, and returns the results. Fails above `cap` demands.
pub fn enumerate_demands<T, F>(model: &DemandModel, cap: f64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&DemandRealization, f64) -> T + Sync + Send,
{
    let space = model.demand_space();
    if space > cap {
        return Err(Error::EnumerationCap {
            required: space,
            cap,
        });
    }
    let total = space as usize;
    let (n, m) = (model.n(), model.m());
    let per_chunk = par::map_range(par::chunks(total, EXACT_CHUNK).len(), |k| {
        let range = k * EXACT_CHUNK..((k + 1) * EXACT_CHUNK).min(total);
        range
            .filter_map(|idx| {
                let d = demand_from_index(idx as u64, n, m);
                let p: f64 = d
                    .files()
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| model.prob(i, j))
                    .product();
                (p > 0.0).then(|| f(&d, p))
            })
            .collect::<Vec<_>>()
    });
    Ok(per_chunk.into_iter().flatten().collect())
}

/// Mean per-receiver distortion of one demand given the delivered rates.
pub fn demand_distortion(
    lib: &SourceLibrary,
    cache: &CachePlan,
    d: &DemandRealization,
    rates: &[f64],
) -> f64 {
    let n = d.n();
    d.files()
        .iter()
        .enumerate()
        .map(|(i, &f)| distortion_unchecked(lib.variance(f), cache.rate(i, f) + rates[i]))
        .sum::<f64>()
        / n as f64
}

fn check_dims(lib: &SourceLibrary, model: &DemandModel, cache: &CachePlan) -> Result<()> {
    if model.m() != lib.m() {
        return Err(Error::dimension(format!(
            "demand model has {} files, library {}",
            model.m(),
            lib.m()
        )));
    }
    if cache.n() != model.n() || cache.rates().iter().any(|r| r.len() != lib.m()) {
        return Err(Error::dimension("cache plan does not match n x m"));
    }
    Ok(())
}

/// Expected distortion over the demand distribution.
///
/// `policy` maps a demand to the per-receiver delivered rates `R_{i,d}` (on
/// top of the cached rates). Exact mode enumerates all `m^n` demands and is
/// refused above [`EXACT_CAP`]; Monte Carlo mode draws `samples` demands from
/// chunked streams derived from `seed` and reports the standard error.
pub fn expected_distortion<P>(
    lib: &SourceLibrary,
    model: &DemandModel,
    cache: &CachePlan,
    policy: P,
    mode: ExpectationMode,
) -> Result<Estimate>
where
    P: Fn(&DemandRealization) -> Vec<f64> + Sync + Send,
{
    check_dims(lib, model, cache)?;
    let eval = |d: &DemandRealization| {
        let rates = policy(d);
        debug_assert_eq!(rates.len(), d.n());
        demand_distortion(lib, cache, d, &rates)
    };
    match mode {
        ExpectationMode::Exact => {
            let terms = enumerate_demands(model, EXACT_CAP, |d, p| p * eval(d))?;
            Ok(Estimate {
                mean: terms.iter().sum(),
                stderr: 0.0,
                samples: terms.len(),
            })
        }
        ExpectationMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::domain("Monte Carlo needs at least one sample"));
            }
            let sampler = model.sampler();
            let ranges = par::chunks(samples, MC_CHUNK);
            let partial = par::map_slice(&ranges, |r| {
                let mut s = rng::derived_stream(seed, &[r.start as u64]);
                let mut sum = 0.0;
                let mut sq = 0.0;
                for _ in r.clone() {
                    let x = eval(&sampler.sample(&mut s));
                    sum += x;
                    sq += x * x;
                }
                (sum, sq)
            });
            let (sum, sq) = partial
                .iter()
                .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            let n = samples as f64;
            let mean = sum / n;
            let var = if samples > 1 {
                ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            Ok(Estimate {
                mean,
                stderr: (var / n).sqrt(),
                samples,
            })
        }
    }
}

/// Exact expected distortion when the delivered rate depends only on the
/// receiver and its requested file: `(1/n) Σ_i Σ_j q_{i,j} D_j(M_{i,j} + r_{i,j})`.
pub fn expected_distortion_per_file(
    lib: &SourceLibrary,
    model: &DemandModel,
    cache: &CachePlan,
    rates: &[Vec<f64>],
) -> Result<f64> {
    check_dims(lib, model, cache)?;
    if rates.len() != model.n() || rates.iter().any(|r| r.len() != lib.m()) {
        return Err(Error::dimension(
            "per-file rate matrix does not match n x m",
        ));
    }
    let n = model.n() as f64;
    let total: f64 = (0..model.n())
        .map(|i| {
            (0..lib.m())
                .map(|j| {
                    model.prob(i, j)
                        * distortion_unchecked(lib.variance(j), cache.rate(i, j) + rates[i][j])
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zipf_examples() {
        let q = zipf_demand(2, 0.0, 1).unwrap();
        assert_eq!(q.row(0), &[0.5, 0.5]);
        let q = zipf_demand(2, 1.0, 1).unwrap();
        assert_relative_eq!(q.prob(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(q.prob(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        let q = zipf_demand(100, 0.6, 20).unwrap();
        assert_eq!(q.n(), 20);
        assert!(q.is_symmetric());
        for row in q.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < PROB_TOL);
        }
        assert!(q.prob(0, 0) > q.prob(0, 99));
    }

    #[test]
    fn zipf_rejects_bad_input() {
        assert!(zipf_demand(0, 0.5, 1).is_err());
        assert!(zipf_demand(3, -0.1, 1).is_err());
    }

    #[test]
    fn distortion_examples() {
        assert_eq!(distortion(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(distortion(4.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(distortion(1.5, 2.5).unwrap(), 0.046875, epsilon = 1e-15);
        assert!(matches!(distortion(1.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn demand_probability_examples() {
        let uni = zipf_demand(2, 0.0, 2).unwrap();
        for files in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let d = DemandRealization::new(files.to_vec(), 2).unwrap();
            assert_relative_eq!(demand_probability(&uni, &d).unwrap(), 0.25);
        }
        let det = DemandModel::new(vec![vec![1.0, 0.0]]).unwrap();
        let d = DemandRealization::new(vec![0], 2).unwrap();
        assert_eq!(demand_probability(&det, &d).unwrap(), 1.0);

        let z = zipf_demand(100, 0.6, 20).unwrap();
        let mut s = rng::stream(3);
        let d = sample_demand(&z, &mut s);
        let mut brute = 1.0;
        for i in 0..20 {
            brute *= z.row(i)[d.file(i)];
        }
        assert_relative_eq!(
            demand_probability(&z, &d).unwrap(),
            brute,
            max_relative = 1e-14
        );

        let short = DemandRealization::new(vec![0], 2).unwrap();
        assert!(demand_probability(&uni, &short).is_err());
        assert!(matches!(
            DemandRealization::new(vec![2], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn degenerate_rows_sample_deterministically() {
        let model = DemandModel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let mut s = rng::stream(11);
        for _ in 0..1000 {
            let d = sample_demand(&model, &mut s);
            assert_eq!(d.files(), &[1, 0]);
        }
    }

    #[test]
    fn uniform_sampling_frequencies_within_three_sigma() {
        let m = 5;
        let model = zipf_demand(m, 0.0, 1).unwrap();
        let sampler = model.sampler();
        let mut s = rng::stream(2024);
        let draws = 100_000;
        let mut counts = vec![0usize; m];
        for _ in 0..draws {
            counts[sampler.sample_file(0, &mut s)] += 1;
        }
        let p = 1.0 / m as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - draws as f64 * p).abs() <= 3.0 * sigma,
                "count {c}"
            );
        }
    }

    #[test]
    fn cloned_streams_give_identical_demands() {
        let model = zipf_demand(10, 0.8, 6).unwrap();
        let s = rng::stream(99);
        let (mut a, mut b) = (s.clone(), s);
        assert_eq!(sample_demand(&model, &mut a), sample_demand(&model, &mut b));
    }

    #[test]
    fn cache_plan_validation() {
        assert!(CachePlan::new(vec![vec![1.0, 1.0]], vec![2.0]).is_ok());
        assert!(CachePlan::new(vec![vec![1.0, 1.5]], vec![2.0]).is_err());
        assert!(CachePlan::new(vec![vec![-1.0, 1.0]], vec![2.0]).is_err());
        let plan = CachePlan::new(vec![vec![0.5, 1.5]], vec![2.0]).unwrap();
        assert_eq!(plan.caching_distribution(0).unwrap(), vec![0.25, 0.75]);
        assert!(CachePlan::empty(1, 2).caching_distribution(0).is_none());
    }

    #[test]
    fn expected_distortion_without_caching_is_mean_variance() {
        let lib = SourceLibrary::new(vec![0.8, 1.2, 1.6], 1).unwrap();
        let model = zipf_demand(3, 0.7, 2).unwrap();
        let cache = CachePlan::empty(2, 3);
        let e = expected_distortion(
            &lib,
            &model,
            &cache,
            |d| vec![0.0; d.n()],
            ExpectationMode::Exact,
        )
        .unwrap();
        let expect: f64 = (0..3).map(|j| model.prob(0, j) * lib.variance(j)).sum();
        assert_relative_eq!(e.mean, expect, max_relative = 1e-14);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn single_cell_expected_distortion() {
        let lib = SourceLibrary::new(vec![4.0], 1).unwrap();
        let model = DemandModel::new(vec![vec![1.0]]).unwrap();
        let cache = CachePlan::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let e = expected_distortion(&lib, &model, &cache, |_| vec![0.0], ExpectationMode::Exact)
            .unwrap();
        assert_eq!(e.mean, 1.0);
    }

    fn small_instance() -> (SourceLibrary, DemandModel, CachePlan) {
        let lib = SourceLibrary::new(vec![1.3, 0.9], 1).unwrap();
        let model = DemandModel::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let cache = CachePlan::new(vec![vec![0.5, 0.2], vec![0.1, 0.8]], vec![1.0, 1.0]).unwrap();
        (lib, model, cache)
    }

    fn toy_policy(d: &DemandRealization) -> Vec<f64> {
        d.files()
            .iter()
            .enumerate()
            .map(|(i, &f)| 0.1 * (i + 1) as f64 + 0.3 * f as f64)
            .collect()
    }

    #[test]
    fn exact_mode_matches_hand_enumeration() {
        let (lib, model, cache) = small_instance();
        let exact =
            expected_distortion(&lib, &model, &cache, toy_policy, ExpectationMode::Exact).unwrap();
        let mut brute = 0.0;
        for d0 in 0..2 {
            for d1 in 0..2 {
                let p = model.prob(0, d0) * model.prob(1, d1);
                let r = toy_policy(&DemandRealization(vec![d0, d1]));
                let dist0 = lib.variance(d0) * 2f64.powf(-2.0 * (cache.rate(0, d0) + r[0]));
                let dist1 = lib.variance(d1) * 2f64.powf(-2.0 * (cache.rate(1, d1) + r[1]));
                brute += p * (dist0 + dist1) / 2.0;
            }
        }
        assert_relative_eq!(exact.mean, brute, max_relative = 1e-14);
    }

    #[test]
    fn monte_carlo_converges_to_exact() {
        let (lib, model, cache) = small_instance();
        let exact =
            expected_distortion(&lib, &model, &cache, toy_policy, ExpectationMode::Exact).unwrap();
        let mc = expected_distortion(
            &lib,
            &model,
            &cache,
            toy_policy,
            ExpectationMode::MonteCarlo {
                samples: 100_000,
                seed: 5,
            },
        )
        .unwrap();
        assert!(mc.stderr > 0.0);
        assert!(
            (mc.mean - exact.mean).abs() <= 4.0 * mc.stderr,
            "{mc:?} vs {}",
            exact.mean
        );
    }

    #[test]
    fn exact_mode_refuses_large_spaces() {
        let lib = SourceLibrary::constant(100, 1.0, 1).unwrap();
        let model = zipf_demand(100, 0.6, 20).unwrap();
        let cache = CachePlan::empty(20, 100);
        let r = expected_distortion(
            &lib,
            &model,
            &cache,
            |d| vec![0.0; d.n()],
            ExpectationMode::Exact,
        );
        assert!(matches!(r, Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn per_file_expectation_matches_enumeration() {
        let (lib, model, cache) = small_instance();
        let rates = vec![vec![0.3, 0.1], vec![0.0, 0.4]];
        let closed = expected_distortion_per_file(&lib, &model, &cache, &rates).unwrap();
        let enumerated = expected_distortion(
            &lib,
            &model,
            &cache,
            |d| {
                d.files()
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| rates[i][f])
                    .collect()
            },
            ExpectationMode::Exact,
        )
        .unwrap();
        assert_relative_eq!(closed, enumerated.mean, max_relative = 1e-13);
    }

    proptest! {
        #[test]
        fn demand_probabilities_sum_to_one(n in 1usize..4, m in 1usize..6, alpha in 0.0f64..2.0) {
            let model = zipf_demand(m, alpha, n).unwrap();
            let total: f64 = enumerate_demands(&model, 1e4, |_, p| p).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() < PROB_TOL);
        }

        #[test]
        fn distortion_composes_over_rate_increments(v in 0.1f64..5.0, r1 in 0.0f64..4.0, r2 in 0.0f64..4.0) {
            let joint = distortion(v, r1 + r2).unwrap();
            let staged = distortion(v, r1).unwrap() * (-2.0 * r2).exp2();
            prop_assert!((joint - staged).abs() <= 1e-12 * v);
        }

        #[test]
        fn expected_distortion_monotone_in_cache_and_rate(bump in 0.0f64..1.0, which in 0usize..4) {
            let (lib, model, cache) = small_instance();
            let base = expected_distortion(&lib, &model, &cache, toy_policy, ExpectationMode::Exact).unwrap().mean;
            let (i, j) = (which / 2, which % 2);
            let mut rates = cache.rates().to_vec();
            rates[i][j] += bump;
            let bigger = CachePlan::new(rates, vec![2.5, 2.5]).unwrap();
            let more_cache = expected_distortion(&lib, &model, &bigger, toy_policy, ExpectationMode::Exact).unwrap().mean;
            let more_rate = expected_distortion(
                &lib, &model, &cache,
                |d| toy_policy(d).into_iter().map(|r| r + bump).collect(),
                ExpectationMode::Exact,
            ).unwrap().mean;
            prop_assert!(more_cache <= base + 1e-15);
            prop_assert!(more_rate <= base + 1e-15);
        }
    }
}
