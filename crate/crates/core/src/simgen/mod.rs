//! Deterministic discrete-event simulation of co-located workloads that
//! contend on kernel locks.
//!
//! Time is virtual. Randomness comes from ChaCha8 seeded with
//! [`SimConfig::seed`], so a config fully determines the emitted files.

mod config;
mod emit;
mod engine;
mod truth;

use thiserror::Error;

pub use config::{
    Distribution, LockModel, LockUse, Sharing, SimConfig, WorkloadProfile,
    DEFAULT_TRASHER_INTERVAL_S,
};
pub use emit::{emit_traces, stack_file_name, trace_file_name, write_timeline, TIMELINE_FILE};
pub use engine::{simulate, IntervalRecord, PerfTimeline, SimResult};
pub use truth::{ground_truth_sharing, synthetic_code_facts, PairTruth, SIM_ENTRY_FILE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid simulation config: {0}")]
    Invalid(String),
    #[error("profile `{profile}` references undeclared lock model `{lock}`")]
    DanglingLock { profile: String, lock: String },
}
