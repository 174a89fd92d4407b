//! Caching and delivery schemes for layered (successively refinable) video
//! over a shared broadcast link.
//!
//! Two schemes are provided:
//!
//! * **LC-U** (local caching, unicast delivery): every receiver fills its
//!   cache by reverse water-filling over its own demand distribution, and the
//!   sender water-fills the link capacity across the receivers of each demand.
//! * **CC-CM** (cooperative caching, coded multicast): the sender designs
//!   per-receiver caching and multicast rates jointly, caches are filled with
//!   random packets inside a per-file storing range, and delivery uses greedy
//!   constrained coloring of the index-coding conflict graph.
//!
//! Sources are Gaussian with distortion-rate function `D(r) = σ² 2^(-2r)`.
//! All rates and cache sizes are in bits per source sample.
//!
//! With the default `parallel` feature, Monte Carlo loops, restarts and sweep
//! curves run on rayon; without it every loop runs sequentially and produces
//! bit-identical results.

pub mod coded_multicast;
pub mod error;
pub mod experiment;
pub mod lc_u;
pub mod optimizer;
pub mod oracle;
pub mod rng;
pub mod source_model;
pub mod validate;

mod par;

pub use error::{Error, Result};
