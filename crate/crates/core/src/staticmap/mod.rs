//! Static code facts: acquisition-site recovery for truncated stacks and
//! lock-to-object mapping.
//!
//! The code-facts bundle is produced offline by whatever indexer the user
//! runs. Macros that hide acquisitions must already be expanded into
//! explicit `lock_uses` entries by the exporter.

mod facts;
mod keys;
mod mapping;
mod resolve;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use facts::{
    load_code_facts, CallEdge, CodeFacts, CodeFactsDoc, LockDefinition, LockUseSite, SymbolKind,
    SymbolRecord,
};
pub use keys::FactsKeys;
pub use mapping::{
    coverage_breakdown, detect_wrappers, map_lock_to_object, mapping_coverage, Confidence,
    GenericNames, MappingCoverage, ObjectMapping,
};
pub use resolve::{
    normalize_lock_name, resolve_stack, site_matches, Resolution, ResolveError, DEFAULT_MAX_DEPTH,
};

#[derive(Debug, Error)]
pub enum FactsError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("code facts schema error: {0}")]
    Schema(String),
    #[error("{kind} `{name}` does not refer to a known symbol")]
    DanglingReference { kind: &'static str, name: String },
    #[error("no lock mappings to measure")]
    EmptyInput,
}
