//! Sweep harness: configs, distortion-memory curves and their output files.

mod config;
mod output;
mod simulate;
mod sweep;

pub use config::{
    parse_expectation, resolve_seed, Config, Evaluation, InstanceConfig, SigmaSpec, SweepScheme,
    SweepSection,
};
pub use output::{csv_bytes, emit_outputs, OutputFormat, SolutionFile};
pub use simulate::{simulate_trials, SimulationRow};
pub use sweep::{run_sweep, solve_ccm, SweepRow, SweepSpec, SweepTable};
