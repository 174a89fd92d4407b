//! Coded multicast delivery: closed-form loads and a packet-level simulator.

pub mod coloring;
pub mod conflict;
pub mod delivery;
pub mod packetize;
mod plan;
mod rates;

pub use coloring::{color_with, constrained_color, gcc_color, is_proper, Coloring, ColoringRule};
pub use conflict::{build_conflict_graph, ConflictGraph, Vertex};
pub use delivery::{
    simulate_delivery, simulate_delivery_with, simulated_multicast_rate, DeliveryOutcome,
};
pub use packetize::{packetize, packetize_with_layer_rate, PacketizedPlacement, DEFAULT_DENOM_CAP};
pub use plan::{cached_fraction, MulticastRatePlan};
pub use rates::*;
