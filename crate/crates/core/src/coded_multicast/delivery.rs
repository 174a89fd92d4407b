//! Packet-level delivery of one demand over a link of finite capacity.

use serde::{Deserialize, Serialize};

use super::coloring::{color_with, ColoringRule};
use super::conflict::{build_conflict_graph, ConflictGraph};
use super::packetize::{packetize, PacketizedPlacement};
use super::plan::MulticastRatePlan;
use crate::lc_u::reverse_waterfill;
use crate::par;
use crate::rng;
use crate::source_model::{distortion, DemandRealization, Estimate, SourceLibrary};
use crate::{Error, Result};

/// Slack, in packets, when comparing a load to the capacity.
const CAPACITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryOutcome {
    /// Colors of the conflict graph that was finally served.
    pub colors: usize,
    /// Distinct packets that plain multicast would send.
    pub naive_transmissions: usize,
    /// Packets actually sent, the smaller of the two above.
    pub coded_transmissions: usize,
    pub coded_rate: f64,
    pub naive_rate: f64,
    /// Wanted packets left out to respect the capacity.
    pub dropped_packets: usize,
    /// Per receiver, the rate decodable from cache and multicast.
    pub decoded: Vec<f64>,
    pub unicast: Vec<f64>,
    pub unicast_rate: f64,
    /// `decoded + unicast` per receiver.
    pub delivered: Vec<f64>,
    /// Multicast plus unicast load on the link.
    pub aggregate_load: f64,
    pub distortion: Vec<f64>,
    pub mean_distortion: f64,
}

struct Served {
    colors: usize,
    naive: usize,
}

fn serve(graph: &ConflictGraph, keep: &[bool], rule: ColoringRule) -> Served {
    let sub = graph.induced(keep);
    let mut packets: Vec<(usize, u32)> =
        sub.vertices().iter().map(|v| (v.file, v.packet)).collect();
    packets.sort_unstable();
    packets.dedup();
    Served {
        colors: color_with(&sub, rule).count,
        naive: packets.len(),
    }
}

/// Serves demand `d`: colors the conflict graph and sends the cheaper of
/// coded and plain multicast. If that exceeds `capacity`, wanted packets are
/// withheld from the top of each receiver's storing range, taking receivers
/// in decreasing order of the requested variance (ties by lower file, then
/// lower receiver), until the load fits. Whatever capacity is left is
/// water-filled as unicast.
pub fn simulate_delivery(
    lib: &SourceLibrary,
    placement: &PacketizedPlacement,
    d: &DemandRealization,
    capacity: f64,
) -> Result<DeliveryOutcome> {
    simulate_delivery_with(lib, placement, d, capacity, ColoringRule::default())
}

pub fn simulate_delivery_with(
    lib: &SourceLibrary,
    placement: &PacketizedPlacement,
    d: &DemandRealization,
    capacity: f64,
    rule: ColoringRule,
) -> Result<DeliveryOutcome> {
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::domain(format!(
            "capacity {capacity} must be non-negative"
        )));
    }
    if placement.m() != lib.m() {
        return Err(Error::dimension("placement and library disagree on m"));
    }
    let graph = build_conflict_graph(placement, d)?;
    let n = d.n();
    let packet_rate = placement.packet_rate();
    let budget = capacity / packet_rate + CAPACITY_TOL;

    let mut needed: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, vx) in graph.vertices().iter().enumerate() {
        needed[vx.receiver].push(v);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        lib.variance(d.file(b))
            .total_cmp(&lib.variance(d.file(a)))
            .then(d.file(a).cmp(&d.file(b)))
            .then(a.cmp(&b))
    });
    let drops: Vec<usize> = order
        .iter()
        .flat_map(|&i| needed[i].iter().rev().copied())
        .collect();
    let keep_after = |k: usize| {
        let mut keep = vec![true; graph.len()];
        for &v in &drops[..k] {
            keep[v] = false;
        }
        keep
    };
    let load = |s: &Served| s.colors.min(s.naive) as f64;

    let mut dropped = 0;
    let mut served = serve(&graph, &keep_after(0), rule);
    if load(&served) > budget {
        let (mut lo, mut hi) = (0, drops.len());
        let mut best = serve(&graph, &keep_after(hi), rule);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let s = serve(&graph, &keep_after(mid), rule);
            if load(&s) <= budget {
                hi = mid;
                best = s;
            } else {
                lo = mid;
            }
        }
        dropped = hi;
        served = best;
    }
    let keep = keep_after(dropped);

    let decoded: Vec<f64> = (0..n)
        .map(|i| {
            let f = d.file(i);
            let top = needed[i]
                .iter()
                .find(|&&v| !keep[v])
                .map_or(placement.range_packets(i, f), |&v| {
                    graph.vertices()[v].packet
                });
            f64::from(top) * packet_rate
        })
        .collect();

    let coded_transmissions = served.colors.min(served.naive);
    let coded_rate = coded_transmissions as f64 * packet_rate;
    let leftover = (capacity - coded_rate).max(0.0);
    let weights: Vec<f64> = d.files().iter().map(|&f| lib.variance(f)).collect();
    let unicast = reverse_waterfill(&weights, &decoded, &vec![1.0; n], leftover)?.allocation;
    let delivered: Vec<f64> = decoded.iter().zip(&unicast).map(|(a, b)| a + b).collect();
    let dist = delivered
        .iter()
        .zip(&weights)
        .map(|(r, w)| distortion(*w, *r))
        .collect::<Result<Vec<_>>>()?;
    let unicast_rate: f64 = unicast.iter().sum();
    Ok(DeliveryOutcome {
        colors: served.colors,
        naive_transmissions: served.naive,
        coded_transmissions,
        coded_rate,
        naive_rate: served.naive as f64 * packet_rate,
        dropped_packets: dropped,
        decoded,
        unicast,
        unicast_rate,
        delivered,
        aggregate_load: coded_rate + unicast_rate,
        mean_distortion: dist.iter().sum::<f64>() / n as f64,
        distortion: dist,
    })
}

/// Multicast load of demand `d` without a capacity limit, averaged over
/// `trials` independent placements of `plan`.
pub fn simulated_multicast_rate(
    plan: &MulticastRatePlan,
    d: &DemandRealization,
    packets_per_layer: u32,
    denom_cap: u32,
    trials: usize,
    seed: u64,
    rule: ColoringRule,
) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::domain("at least one trial is needed"));
    }
    let rates = par::map_range(trials, |t| -> Result<f64> {
        let mut s = rng::derived_stream(seed, &[t as u64]);
        let placement = packetize(plan, packets_per_layer, denom_cap, &mut s)?;
        let graph = build_conflict_graph(&placement, d)?;
        let served = serve(&graph, &vec![true; graph.len()], rule);
        Ok(served.colors.min(served.naive) as f64 * placement.packet_rate())
    });
    let rates = rates.into_iter().collect::<Result<Vec<_>>>()?;
    let k = trials as f64;
    let mean = rates.iter().sum::<f64>() / k;
    let var = if trials > 1 {
        rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok(Estimate {
        mean,
        stderr: (var / k).sqrt(),
        samples: trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coded_multicast::packetize::packetize_with_layer_rate;
    use crate::coded_multicast::rates::{naive_multicast_rate, rate_gcc_demand};

    fn two_by_two() -> (SourceLibrary, MulticastRatePlan) {
        let lib = SourceLibrary::new(vec![1.5, 1.0], 1000).unwrap();
        let plan =
            MulticastRatePlan::coded(vec![vec![1.0, 1.0]; 2], vec![vec![1.0, 1.0]; 2]).unwrap();
        (lib, plan)
    }

    #[test]
    fn zero_capacity_falls_back_to_the_cache() {
        let (lib, plan) = two_by_two();
        let pl = packetize_with_layer_rate(&plan, 1.0, 20, &mut rng::stream(1)).unwrap();
        let d = DemandRealization::new(vec![0, 1], 2).unwrap();
        let out = simulate_delivery(&lib, &pl, &d, 0.0).unwrap();
        assert_eq!(out.coded_transmissions, 0);
        assert_eq!(out.aggregate_load, 0.0);
        assert!(out.unicast.iter().all(|&u| u == 0.0));
        for i in 0..2 {
            // a prefix of cached packets at most
            assert!(out.decoded[i] <= pl.cached_rate(i, d.file(i)) + 1e-12);
        }
    }

    #[test]
    fn abundant_capacity_delivers_the_range_and_unicasts_the_rest() {
        let (lib, plan) = two_by_two();
        let pl = packetize_with_layer_rate(&plan, 1.0, 20, &mut rng::stream(2)).unwrap();
        let d = DemandRealization::new(vec![0, 1], 2).unwrap();
        let naive_total = naive_multicast_rate(&plan, &d);
        let capacity = naive_total + 1.0;
        let out = simulate_delivery(&lib, &pl, &d, capacity).unwrap();
        assert_eq!(out.dropped_packets, 0);
        assert_eq!(out.decoded, vec![2.0, 2.0]);
        assert!((out.aggregate_load - capacity).abs() < 1e-9);
        assert!(out.unicast_rate > 0.0);
    }

    #[test]
    fn tight_capacity_is_respected_and_high_variance_gives_way_first() {
        let (lib, plan) = two_by_two();
        let pl = packetize_with_layer_rate(&plan, 1.0, 50, &mut rng::stream(3)).unwrap();
        let d = DemandRealization::new(vec![0, 1], 2).unwrap();
        let full = simulate_delivery(&lib, &pl, &d, 10.0).unwrap();
        let capacity = full.coded_rate * 0.8;
        let out = simulate_delivery(&lib, &pl, &d, capacity).unwrap();
        assert!(out.dropped_packets > 0);
        assert!(out.aggregate_load <= capacity + 1e-9);
        // receiver 0 asks for the higher-variance file and is cut first
        assert!(out.decoded[0] < 2.0);
        assert_eq!(out.decoded[1], 2.0);
    }

    #[test]
    fn single_receiver_sends_every_missing_packet() {
        let lib = SourceLibrary::constant(1, 1.0, 1).unwrap();
        let plan = MulticastRatePlan::coded(vec![vec![1.0]], vec![vec![2.0]]).unwrap();
        let pl = packetize_with_layer_rate(&plan, 1.0, 10, &mut rng::stream(4)).unwrap();
        let d = DemandRealization::new(vec![0], 1).unwrap();
        let out = simulate_delivery(&lib, &pl, &d, 5.0).unwrap();
        assert_eq!(out.colors, 20);
        assert!((out.coded_rate - 2.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_rule_never_needs_more_packets() {
        let (lib, plan) = two_by_two();
        let pl = packetize_with_layer_rate(&plan, 1.0, 30, &mut rng::stream(6)).unwrap();
        let d = DemandRealization::new(vec![1, 1], 2).unwrap();
        let a = simulate_delivery_with(&lib, &pl, &d, 10.0, ColoringRule::Constrained).unwrap();
        let b = simulate_delivery_with(&lib, &pl, &d, 10.0, ColoringRule::Greedy).unwrap();
        assert!(b.coded_transmissions <= a.coded_transmissions);
    }

    #[test]
    fn two_receiver_ensemble_tracks_the_closed_form() {
        let plan = MulticastRatePlan::coded(
            vec![vec![1.0, 0.5], vec![0.5, 1.0]],
            vec![vec![1.0, 1.5], vec![1.5, 1.0]],
        )
        .unwrap();
        for files in [vec![0, 1], vec![1, 0]] {
            let d = DemandRealization::new(files, 2).unwrap();
            let closed = rate_gcc_demand(&plan, &d).unwrap();
            let sim = simulated_multicast_rate(&plan, &d, 500, 16, 8, 5, ColoringRule::Constrained)
                .unwrap();
            assert!(
                (sim.mean - closed).abs() / closed < 0.1,
                "{} vs {closed}",
                sim.mean
            );
        }
    }
}
