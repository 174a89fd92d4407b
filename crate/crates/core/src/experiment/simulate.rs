use serde::{Deserialize, Serialize};

use crate::coded_multicast::{packetize, simulate_delivery, MulticastRatePlan, DEFAULT_DENOM_CAP};
use crate::source_model::{DemandModel, SourceLibrary};
use crate::{par, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub trial: usize,
    pub demand_hash: u64,
    pub coded_rate: f64,
    pub naive_rate: f64,
    pub unicast_rate: f64,
    pub mean_distortion: f64,
}

/// Replays `plan` over `trials` random demands. Each trial draws a fresh
/// demand and a fresh random placement with `packets` packets per layer, then
/// delivers over a link of `capacity`.
pub fn simulate_trials(
    lib: &SourceLibrary,
    model: &DemandModel,
    plan: &MulticastRatePlan,
    capacity: f64,
    packets: u32,
    trials: usize,
    seed: u64,
) -> Result<Vec<SimulationRow>> {
    if plan.n() != model.n() || plan.m() != model.m() || model.m() != lib.m() {
        return Err(Error::dimension("plan, demand model and library disagree"));
    }
    let sampler = model.sampler();
    let rows = par::map_range(trials, |t| {
        let mut s = rng::derived_stream(seed, &[t as u64]);
        let d = sampler.sample(&mut s);
        let placement = packetize(plan, packets, DEFAULT_DENOM_CAP, &mut s)?;
        let out = simulate_delivery(lib, &placement, &d, capacity)?;
        let row = SimulationRow {
            trial: t,
            demand_hash: d.stable_hash(),
            coded_rate: out.coded_rate,
            naive_rate: out.naive_rate,
            unicast_rate: out.unicast_rate,
            mean_distortion: out.mean_distortion,
        };
        Ok((row, placement.fractional))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    if rows.iter().any(|r| r.1) {
        log::warn!("plan rates are not whole layers; cached amounts were rounded to packets");
    }
    Ok(rows.into_iter().map(|r| r.0).collect())
}
