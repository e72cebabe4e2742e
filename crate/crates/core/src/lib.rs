//! Lock-sharing analysis for co-located workloads: trace ingestion,
//! shared/private classification, static acquisition-site recovery and a
//! deterministic simulator that produces traces with known ground truth.

pub mod analysis;
pub mod ingest;
pub mod model;
pub mod simgen;
pub mod staticmap;
