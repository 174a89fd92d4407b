//! CC-CM design: choose cache, coded-multicast and unicast rates to minimize
//! expected distortion under a link capacity.

mod config;
mod general;
mod rlfu;
mod solver;
mod symmetric;
mod uniform;

pub use config::{
    CcCmSolution, CutoffScan, OptimizerConfig, Scheme, StepRule, TraceEntry, UnicastMode,
};
pub use general::{optimize_general, optimize_general_from};
pub use rlfu::{optimize_rlfu, optimize_rlfu_from};
pub use symmetric::{optimize_symmetric, optimize_symmetric_from, symmetric_inputs};
pub use uniform::{optimize_uniform, optimize_uniform_from, uniform_plan, uniform_tightness};
