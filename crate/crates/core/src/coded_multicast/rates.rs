//! Asymptotic (infinite packetization) load of random popularity-based
//! caching with greedy constrained coloring, and its reductions for
//! receiver-symmetric, truncated-uniform and fully uniform settings.
//!
//! Receiver subsets are bitmasks (`bit i` set means receiver `i` belongs to
//! the subset), so the general forms are limited to [`RECEIVER_CAP`]
//! receivers.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::plan::{cached_fraction, MulticastRatePlan};
use crate::par;
use crate::rng;
use crate::source_model::{DemandModel, DemandRealization};
use crate::{Error, Result};

/// Hard limit on receivers for the subset-enumerating forms.
pub const RECEIVER_CAP: usize = 20;
/// Above this many receivers the subset forms log a cost warning.
pub const RECEIVER_WARN: usize = 15;

pub const DEFAULT_GAMMA_SAMPLES: usize = 10_000;

const SUBSET_CHUNK: usize = 1024;
const SAMPLE_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaMode {
    /// Argmax probabilities computed exactly from the independent per-receiver
    /// demand laws.
    Exact,
    /// Argmax probabilities estimated from `samples` demand draws.
    MonteCarlo { samples: usize, seed: u64 },
}

/// The two branches of the `min` and the resulting load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadTerms {
    pub coded: f64,
    pub naive: f64,
}

impl LoadTerms {
    pub fn rate(&self) -> f64 {
        self.coded.min(self.naive)
    }
}

fn check_receivers(n: usize) -> Result<()> {
    if n > RECEIVER_CAP {
        return Err(Error::ReceiverCap {
            receivers: n,
            cap: RECEIVER_CAP,
        });
    }
    if n > RECEIVER_WARN {
        log::warn!(
            "enumerating {} receiver subsets; consider the symmetric form",
            1u64 << n
        );
    }
    Ok(())
}

fn p_matrix(plan: &MulticastRatePlan) -> Vec<Vec<f64>> {
    (0..plan.n())
        .map(|i| (0..plan.m()).map(|j| plan.p_cached(i, j)).collect())
        .collect()
}

/// `(1 - p_i) ∏_{u ∈ S\i} p_u ∏_{u ∉ S} (1 - p_u)` for a column of cached
/// fractions.
fn lambda_column(i: usize, subset: u32, p: impl Fn(usize) -> f64, n: usize) -> f64 {
    let mut v = 1.0 - p(i);
    for u in 0..n {
        if u == i {
            continue;
        }
        v *= if subset >> u & 1 == 1 {
            p(u)
        } else {
            1.0 - p(u)
        };
    }
    v
}

/// Probability that a packet of file `file` wanted by receiver `receiver` is
/// cached by exactly the other members of `subset` and by nobody else.
pub fn lambda_prob(
    receiver: usize,
    file: usize,
    subset: u32,
    plan: &MulticastRatePlan,
) -> Result<f64> {
    let n = plan.n();
    if n > 32 {
        return Err(Error::ReceiverCap {
            receivers: n,
            cap: 32,
        });
    }
    if receiver >= n || subset >> receiver & 1 == 0 {
        return Err(Error::contract(format!(
            "receiver {receiver} is not in subset {subset:#b}"
        )));
    }
    if n < 32 && subset >> n != 0 {
        return Err(Error::contract(format!(
            "subset {subset:#b} names receivers beyond {n}"
        )));
    }
    if file >= plan.m() {
        return Err(Error::IndexOutOfRange {
            index: file,
            limit: plan.m(),
        });
    }
    Ok(lambda_column(
        receiver,
        subset,
        |u| plan.p_cached(u, file),
        n,
    ))
}

/// Uncoded multicast load: every requested file's storing range sent once
/// at the largest per-receiver storing rate.
pub fn naive_multicast_rate(plan: &MulticastRatePlan, d: &DemandRealization) -> f64 {
    d.distinct_files()
        .into_iter()
        .map(|f| {
            (0..plan.n())
                .map(|i| plan.storing_rate(i, f))
                .fold(0.0, f64::max)
        })
        .sum()
}

fn check_demand(plan: &MulticastRatePlan, d: &DemandRealization) -> Result<()> {
    if d.n() != plan.n() {
        return Err(Error::dimension(format!(
            "demand has {} receivers, plan {}",
            d.n(),
            plan.n()
        )));
    }
    if let Some(&f) = d.files().iter().find(|&&f| f >= plan.m()) {
        return Err(Error::IndexOutOfRange {
            index: f,
            limit: plan.m(),
        });
    }
    Ok(())
}

/// Coded and naive load for one demand.
pub fn gcc_demand_terms(plan: &MulticastRatePlan, d: &DemandRealization) -> Result<LoadTerms> {
    check_demand(plan, d)?;
    let n = plan.n();
    check_receivers(n)?;
    let p = p_matrix(plan);
    let files = d.files();
    let weight: Vec<f64> = (0..n).map(|i| plan.storing_rate(i, files[i])).collect();
    let subsets = 1usize << n;
    let partial = par::map_range(par::chunks(subsets - 1, SUBSET_CHUNK).len(), |k| {
        let lo = 1 + k * SUBSET_CHUNK;
        let hi = (lo + SUBSET_CHUNK).min(subsets);
        (lo..hi)
            .map(|s| {
                let s = s as u32;
                (0..n)
                    .filter(|&i| s >> i & 1 == 1)
                    .map(|i| lambda_column(i, s, |u| p[u][files[i]], n) * weight[i])
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
    });
    Ok(LoadTerms {
        coded: partial.iter().sum(),
        naive: naive_multicast_rate(plan, d),
    })
}

/// Aggregate coded multicast load needed to deliver the multicast rates of
/// demand `d`: `min{ψ_d, m̄_d}`.
pub fn rate_gcc_demand(plan: &MulticastRatePlan, d: &DemandRealization) -> Result<f64> {
    gcc_demand_terms(plan, d).map(|t| t.rate())
}

/// `Σ_f P(f requested) max_i (M_{i,f} + R̃_{i,f})`.
pub fn average_naive_rate(plan: &MulticastRatePlan, model: &DemandModel) -> f64 {
    (0..plan.m())
        .map(|f| {
            let top = (0..plan.n())
                .map(|i| plan.storing_rate(i, f))
                .fold(0.0, f64::max);
            model.request_probability(f) * top
        })
        .sum()
}

fn check_model(plan: &MulticastRatePlan, model: &DemandModel) -> Result<()> {
    if plan.n() != model.n() || plan.m() != model.m() {
        return Err(Error::dimension(format!(
            "plan is {} x {}, demand model {} x {}",
            plan.n(),
            plan.m(),
            model.n(),
            model.m()
        )));
    }
    Ok(())
}

/// Coded and naive terms of the demand-averaged load, always through the
/// general subset form.
pub fn gcc_average_terms(
    plan: &MulticastRatePlan,
    model: &DemandModel,
    gamma: GammaMode,
) -> Result<LoadTerms> {
    check_model(plan, model)?;
    let n = plan.n();
    check_receivers(n)?;
    let p = p_matrix(plan);
    let coded = match gamma {
        GammaMode::Exact => exact_average_psi(plan, model, &p),
        GammaMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::domain("gamma estimation needs at least one sample"));
            }
            sampled_average_psi(plan, model, &p, samples, seed)
        }
    };
    Ok(LoadTerms {
        coded,
        naive: average_naive_rate(plan, model),
    })
}

/// Order used to break argmax ties: larger value first, then lower file,
/// then lower receiver.
fn rank(a: (f64, usize, usize), b: (f64, usize, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
}

/// For each subset, `Σ_{u,f} γ_{f,u,S} λ(u,f,S)(M_{u,f} + R̃_{u,f})` where
/// `γ_{f,u,S}` is the probability that receiver `u` asking for `f` attains
/// the subset maximum. Because requests are independent across receivers,
/// walking the candidates in rank order gives
/// `γ = q_{u,f} ∏_{v ∈ S, v ≠ u} P(v's candidate ranks lower)`.
fn exact_average_psi(plan: &MulticastRatePlan, model: &DemandModel, p: &[Vec<f64>]) -> f64 {
    let n = plan.n();
    let m = plan.m();
    let subsets = 1usize << n;
    let partial = par::map_range(par::chunks(subsets - 1, SUBSET_CHUNK).len(), |k| {
        let lo = 1 + k * SUBSET_CHUNK;
        let hi = (lo + SUBSET_CHUNK).min(subsets);
        let mut items: Vec<(f64, usize, usize)> = Vec::with_capacity(n * m);
        let mut above = vec![0.0f64; n];
        let mut total = 0.0;
        for s in lo..hi {
            let s = s as u32;
            items.clear();
            for u in (0..n).filter(|&u| s >> u & 1 == 1) {
                for f in 0..m {
                    if model.prob(u, f) > 0.0 {
                        let v = lambda_column(u, s, |x| p[x][f], n) * plan.storing_rate(u, f);
                        items.push((v, f, u));
                    }
                }
            }
            items.sort_by(|a, b| rank(*a, *b));
            above.iter_mut().for_each(|a| *a = 0.0);
            for &(v, f, u) in &items {
                let q = model.prob(u, f);
                if v > 0.0 {
                    let others: f64 = (0..n)
                        .filter(|&w| w != u && s >> w & 1 == 1)
                        .map(|w| (1.0 - above[w]).max(0.0))
                        .product();
                    total += q * others * v;
                }
                above[u] += q;
            }
        }
        total
    });
    partial.iter().sum()
}

/// Same quantity with the argmax probabilities replaced by frequencies over
/// `samples` independent demand draws.
fn sampled_average_psi(
    plan: &MulticastRatePlan,
    model: &DemandModel,
    p: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> f64 {
    let n = plan.n();
    let sampler = model.sampler();
    let ranges = par::chunks(samples, SAMPLE_CHUNK);
    let partial = par::map_slice(&ranges, |r| {
        let mut stream = rng::derived_stream(seed, &[r.start as u64]);
        let mut total = 0.0;
        for _ in r.clone() {
            let d = sampler.sample(&mut stream);
            let files = d.files();
            for s in 1..(1u32 << n) {
                total += (0..n)
                    .filter(|&i| s >> i & 1 == 1)
                    .map(|i| {
                        lambda_column(i, s, |u| p[u][files[i]], n) * plan.storing_rate(i, files[i])
                    })
                    .fold(0.0, f64::max);
            }
        }
        total
    });
    partial.iter().sum::<f64>() / samples as f64
}

/// Demand-averaged aggregate coded multicast load `min{ψ, m̄}`.
///
/// Receiver-symmetric inputs are routed to [`rate_symmetric`]; all other
/// inputs go through the subset form with argmax probabilities estimated from
/// `gamma_samples` seeded demand draws.
pub fn rate_gcc_average(
    plan: &MulticastRatePlan,
    model: &DemandModel,
    gamma_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_model(plan, model)?;
    if plan.is_symmetric() && model.is_symmetric() {
        return rate_symmetric(&plan.cached[0], &plan.multicast[0], model.row(0), plan.n());
    }
    gcc_average_terms(
        plan,
        model,
        GammaMode::MonteCarlo {
            samples: gamma_samples,
            seed,
        },
    )
    .map(|t| t.rate())
}

fn check_symmetric_inputs(cached: &[f64], multicast: &[f64], q: &[f64], n: usize) -> Result<()> {
    let m = q.len();
    if m == 0 || cached.len() != m || multicast.len() != m {
        return Err(Error::dimension(
            "per-file vectors must be non-empty and of equal length",
        ));
    }
    if n == 0 {
        return Err(Error::domain("need at least one receiver"));
    }
    if cached
        .iter()
        .chain(multicast)
        .chain(q)
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::domain(
            "rates and probabilities must be non-negative",
        ));
    }
    Ok(())
}

/// `C(n, ℓ) p^(ℓ-1) (1-p)^(n-ℓ+1)`, computed on a log scale when needed.
fn binomial_weight(n: usize, l: usize, p: f64) -> f64 {
    if p <= 0.0 {
        // only ℓ = 1 survives: n (1-p)^n with p = 0
        return if l == 1 { n as f64 } else { 0.0 };
    }
    if p >= 1.0 {
        return 0.0;
    }
    let ln_c = ln_binomial(n, l);
    (ln_c + (l as f64 - 1.0) * p.ln() + (n as f64 - l as f64 + 1.0) * (1.0 - p).ln()).exp()
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

fn symmetric_value(p: f64, s: f64, n: usize, l: usize) -> f64 {
    p.powi(l as i32 - 1) * (1.0 - p).powi((n - l + 1) as i32) * s
}

/// `γ_{j,ℓ}` for `ℓ = 1..=n` (outer index `ℓ - 1`): probability that file
/// `j` maximizes `p_f^(ℓ-1) (1-p_f)^(n-ℓ+1) (M_f + R̃_f)` over `ℓ` files
/// drawn independently from `q`. Computed exactly as an order statistic:
/// with files ranked by value, `γ_j = (1 - A_j)^ℓ - (1 - A_j - q_j)^ℓ`,
/// where `A_j` is the mass of strictly better-ranked files.
pub fn gamma_symmetric(
    cached: &[f64],
    multicast: &[f64],
    q: &[f64],
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    check_symmetric_inputs(cached, multicast, q, n)?;
    let m = q.len();
    let p: Vec<f64> = (0..m)
        .map(|j| cached_fraction(cached[j], multicast[j]))
        .collect();
    Ok((1..=n)
        .map(|l| {
            let mut order: Vec<(f64, usize, usize)> = (0..m)
                .filter(|&j| q[j] > 0.0)
                .map(|j| (symmetric_value(p[j], cached[j] + multicast[j], n, l), j, 0))
                .collect();
            order.sort_by(|a, b| rank(*a, *b));
            let mut gamma = vec![0.0; m];
            let mut above = 0.0f64;
            for &(_, j, _) in &order {
                let hi = (1.0 - above).max(0.0);
                let lo = (1.0 - above - q[j]).max(0.0);
                gamma[j] = hi.powi(l as i32) - lo.powi(l as i32);
                above += q[j];
            }
            gamma
        })
        .collect())
}

/// Coded and naive terms of the receiver-symmetric load.
pub fn symmetric_terms(
    cached: &[f64],
    multicast: &[f64],
    q: &[f64],
    n: usize,
) -> Result<LoadTerms> {
    let gamma = gamma_symmetric(cached, multicast, q, n)?;
    Ok(symmetric_terms_with(cached, multicast, q, n, &gamma))
}

fn symmetric_terms_with(
    cached: &[f64],
    multicast: &[f64],
    q: &[f64],
    n: usize,
    gamma: &[Vec<f64>],
) -> LoadTerms {
    let m = q.len();
    let mut coded = 0.0;
    for l in 1..=n {
        for j in 0..m {
            let g = gamma[l - 1][j];
            if g > 0.0 {
                let p = cached_fraction(cached[j], multicast[j]);
                coded += g * binomial_weight(n, l, p) * (cached[j] + multicast[j]);
            }
        }
    }
    let naive = (0..m)
        .map(|j| (1.0 - (1.0 - q[j]).powi(n as i32)) * (cached[j] + multicast[j]))
        .sum();
    LoadTerms { coded, naive }
}

/// Demand-averaged load when every receiver shares the same demand law,
/// cache placement and multicast rates.
pub fn rate_symmetric(cached: &[f64], multicast: &[f64], q: &[f64], n: usize) -> Result<f64> {
    symmetric_terms(cached, multicast, q, n).map(|t| t.rate())
}

/// [`rate_symmetric`] with the `γ_{j,ℓ}` table estimated by seeded sampling
/// (`samples` draws of `ℓ` files for every `ℓ`).
pub fn rate_symmetric_sampled(
    cached: &[f64],
    multicast: &[f64],
    q: &[f64],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_symmetric_inputs(cached, multicast, q, n)?;
    if samples == 0 {
        return Err(Error::domain("gamma estimation needs at least one sample"));
    }
    let m = q.len();
    let model = DemandModel::new(vec![q.to_vec()])?;
    let sampler = model.sampler();
    let p: Vec<f64> = (0..m)
        .map(|j| cached_fraction(cached[j], multicast[j]))
        .collect();
    let gamma = par::map_range(n, |idx| {
        let l = idx + 1;
        let mut stream = rng::derived_stream(seed, &[l as u64]);
        let mut counts = vec![0usize; m];
        for _ in 0..samples {
            let mut best: Option<(f64, usize, usize)> = None;
            for _ in 0..l {
                let j = sampler.sample_file(0, &mut stream);
                let cand = (symmetric_value(p[j], cached[j] + multicast[j], n, l), j, 0);
                if best.is_none_or(|b| rank(cand, b) == Ordering::Less) {
                    best = Some(cand);
                }
            }
            counts[best.expect("ℓ ≥ 1").1] += 1;
        }
        counts
            .iter()
            .map(|&c| c as f64 / samples as f64)
            .collect::<Vec<_>>()
    });
    Ok(symmetric_terms_with(cached, multicast, q, n, &gamma).rate())
}

/// Cumulative popularity `G = Σ_{j < cutoff} q_j` of the `cutoff` most
/// popular files (`q` sorted by decreasing popularity).
pub fn popularity_mass(q: &[f64], cutoff: usize) -> Result<f64> {
    if cutoff == 0 || cutoff > q.len() {
        return Err(Error::contract(format!(
            "cutoff {cutoff} outside 1..={}",
            q.len()
        )));
    }
    Ok(q[..cutoff].iter().sum())
}

/// Load of truncated-uniform caching: every receiver caches `cached_per_file`
/// of each of the `cutoff` most popular files and is sent `multicast` on top.
///
/// `(R̃/M̃)(1 - (R̃/(M̃+R̃))^(nG))(M̃+R̃) + n(1-G)R̃`. The first term is the
/// coded load of the cached files and reduces to `R̃` for one receiver;
/// files past the cutoff are uncached and cost `R̃` per requesting receiver.
/// At `M̃ = 0` the first term is its limit `nGR̃`.
pub fn rate_rlfu(
    cached_per_file: f64,
    multicast: f64,
    cutoff: usize,
    q: &[f64],
    n: usize,
) -> Result<f64> {
    let g = popularity_mass(q, cutoff)?;
    check_nonneg(cached_per_file, multicast)?;
    let nf = n as f64;
    if multicast == 0.0 {
        return Ok(0.0);
    }
    let tail = nf * (1.0 - g).max(0.0) * multicast;
    let head = if cached_per_file == 0.0 {
        nf * g * multicast
    } else {
        let miss = multicast / (cached_per_file + multicast);
        (multicast / cached_per_file) * (1.0 - miss.powf(nf * g)) * (cached_per_file + multicast)
    };
    Ok(head + tail)
}

/// The truncated-uniform load with the leading factor written as
/// `R̃/(M̃+R̃)`. Kept for comparison only: it undercuts the single-receiver
/// requirement `R̃` and disagrees with [`rate_uniform`] at full coverage.
pub fn rate_rlfu_miss_factor(
    cached_per_file: f64,
    multicast: f64,
    cutoff: usize,
    q: &[f64],
    n: usize,
) -> Result<f64> {
    let g = popularity_mass(q, cutoff)?;
    check_nonneg(cached_per_file, multicast)?;
    if multicast == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let miss = multicast / (cached_per_file + multicast);
    Ok(
        miss * (1.0 - miss.powf(nf * g)) * (cached_per_file + multicast)
            + nf * (1.0 - g) * multicast,
    )
}

fn check_nonneg(cached: f64, multicast: f64) -> Result<()> {
    if !(cached.is_finite() && cached >= 0.0 && multicast.is_finite() && multicast >= 0.0) {
        return Err(Error::domain(format!(
            "rates ({cached}, {multicast}) must be non-negative"
        )));
    }
    Ok(())
}

/// Load of the fully symmetric setting (uniform popularity, common variance,
/// every file cached at `M̃` and multicast at `R̃`):
/// `(R̃/M̃)(1 - (R̃/(M̃+R̃))^n)(M̃+R̃)`, with the limit `nR̃` at `M̃ = 0`.
pub fn rate_uniform(cached_per_file: f64, multicast: f64, n: usize) -> f64 {
    debug_assert!(cached_per_file >= 0.0 && multicast >= 0.0);
    if multicast <= 0.0 {
        return 0.0;
    }
    if cached_per_file <= 0.0 {
        return n as f64 * multicast;
    }
    let total = cached_per_file + multicast;
    let miss = multicast / total;
    (multicast / cached_per_file) * (1.0 - miss.powi(n as i32)) * total
}
