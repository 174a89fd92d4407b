//! Random popularity-based placement at packet granularity.
//!
//! Every file is split into layers of a common rate `b` and every layer into
//! `B` packets. Receiver `i` keeps `μ_{i,j}·B` packets of file `j`, drawn
//! uniformly without replacement from the first `ω_{i,j}·B` packets (its
//! storing range). Packet indices are 0-based.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::plan::MulticastRatePlan;
use crate::rng::Stream;
use crate::{Error, Result};

pub const DEFAULT_DENOM_CAP: u32 = 64;

/// Tolerance, in layers, for treating a rate as a whole number of layers.
const LAYER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketizedPlacement {
    pub layer_rate: f64,
    pub packets_per_layer: u32,
    /// `μ_{i,j}`; a fractional value means the last stored layer is only
    /// partially cached.
    pub cached_layers: Vec<Vec<f64>>,
    /// `ω_{i,j}`.
    pub storing_range: Vec<Vec<u32>>,
    /// `ρ̃_{i,j} = ω_{i,j} - μ_{i,j}`.
    pub multicast_layers: Vec<Vec<f64>>,
    /// Sorted cached packet indices, each in `0..ω_{i,j}·B`.
    pub cached_packet_sets: Vec<Vec<Vec<u32>>>,
    /// Set when the rates were not whole multiples of one layer rate and had
    /// to be rounded to packets.
    pub fractional: bool,
}

impl PacketizedPlacement {
    pub fn n(&self) -> usize {
        self.storing_range.len()
    }

    pub fn m(&self) -> usize {
        self.storing_range[0].len()
    }

    /// Rate of one packet, `b / B`, in bits per source sample.
    pub fn packet_rate(&self) -> f64 {
        self.layer_rate / f64::from(self.packets_per_layer)
    }

    /// `ω_{i,j}·B`.
    pub fn range_packets(&self, i: usize, j: usize) -> u32 {
        self.storing_range[i][j] * self.packets_per_layer
    }

    pub fn cached_count(&self, i: usize, j: usize) -> usize {
        self.cached_packet_sets[i][j].len()
    }

    pub fn is_cached(&self, i: usize, j: usize, packet: u32) -> bool {
        self.cached_packet_sets[i][j].binary_search(&packet).is_ok()
    }

    /// Rate held in receiver `i`'s cache for file `j`.
    pub fn cached_rate(&self, i: usize, j: usize) -> f64 {
        self.cached_count(i, j) as f64 * self.packet_rate()
    }
}

/// Chooses the largest layer rate `b = v_max / k`, `k ≤ denom_cap`, for which
/// every cached and multicast rate is a whole number of layers, and places
/// packets at random. If no such `b` exists, one layer spans `1/denom_cap`
/// of the largest storing range, ranges are rounded to whole layers and
/// cached amounts to whole packets; the placement is then flagged
/// `fractional`.
pub fn packetize(
    plan: &MulticastRatePlan,
    packets_per_layer: u32,
    denom_cap: u32,
    rng: &mut Stream,
) -> Result<PacketizedPlacement> {
    if packets_per_layer == 0 {
        return Err(Error::domain("packets per layer must be at least 1"));
    }
    if denom_cap == 0 {
        return Err(Error::domain("denominator cap must be at least 1"));
    }
    let values: Vec<f64> = plan
        .cached
        .iter()
        .chain(&plan.multicast)
        .flatten()
        .copied()
        .filter(|v| *v > 0.0)
        .collect();
    let v_max = values.iter().copied().fold(0.0, f64::max);
    if v_max == 0.0 {
        return place(plan, 1.0, packets_per_layer, false, rng);
    }
    let whole = |b: f64| {
        values
            .iter()
            .all(|v| ((v / b) - (v / b).round()).abs() <= LAYER_TOL)
    };
    if let Some(k) = (1..=denom_cap).find(|&k| whole(v_max / f64::from(k))) {
        return place(plan, v_max / f64::from(k), packets_per_layer, false, rng);
    }
    log::debug!("rates are not whole layers within denominator {denom_cap}; rounding to packets");
    let range_max = (0..plan.n())
        .flat_map(|i| (0..plan.m()).map(move |j| (i, j)))
        .map(|(i, j)| plan.storing_rate(i, j))
        .fold(0.0, f64::max);
    place(
        plan,
        range_max / f64::from(denom_cap),
        packets_per_layer,
        true,
        rng,
    )
}

/// Places packets for a caller-chosen layer rate. Storing ranges are rounded
/// to whole layers and cached amounts to whole packets.
pub fn packetize_with_layer_rate(
    plan: &MulticastRatePlan,
    layer_rate: f64,
    packets_per_layer: u32,
    rng: &mut Stream,
) -> Result<PacketizedPlacement> {
    if !(layer_rate.is_finite() && layer_rate > 0.0) {
        return Err(Error::domain(format!(
            "layer rate {layer_rate} must be positive"
        )));
    }
    if packets_per_layer == 0 {
        return Err(Error::domain("packets per layer must be at least 1"));
    }
    let fractional = plan
        .cached
        .iter()
        .chain(&plan.multicast)
        .flatten()
        .any(|v| ((v / layer_rate) - (v / layer_rate).round()).abs() > LAYER_TOL);
    place(plan, layer_rate, packets_per_layer, fractional, rng)
}

fn place(
    plan: &MulticastRatePlan,
    b: f64,
    packets: u32,
    fractional: bool,
    rng: &mut Stream,
) -> Result<PacketizedPlacement> {
    let (n, m) = (plan.n(), plan.m());
    let per_layer = f64::from(packets);
    let mut storing_range = vec![vec![0u32; m]; n];
    let mut cached_layers = vec![vec![0.0; m]; n];
    let mut multicast_layers = vec![vec![0.0; m]; n];
    let mut sets = vec![vec![Vec::new(); m]; n];
    for i in 0..n {
        for j in 0..m {
            let omega = (plan.storing_rate(i, j) / b).round();
            if omega > f64::from(u32::MAX / packets) {
                return Err(Error::domain(format!(
                    "storing range of {omega} layers is too large to packetize"
                )));
            }
            let omega = omega as u32;
            let range = omega * packets;
            let cached = ((plan.cached[i][j] / b * per_layer).round() as u32).min(range);
            let mut set = index::sample(rng, range as usize, cached as usize)
                .into_iter()
                .map(|p| p as u32)
                .collect::<Vec<_>>();
            set.sort_unstable();
            storing_range[i][j] = omega;
            cached_layers[i][j] = f64::from(cached) / per_layer;
            multicast_layers[i][j] = f64::from(omega) - cached_layers[i][j];
            sets[i][j] = set;
        }
    }
    Ok(PacketizedPlacement {
        layer_rate: b,
        packets_per_layer: packets,
        cached_layers,
        storing_range,
        multicast_layers,
        cached_packet_sets: sets,
        fractional,
    })
}
