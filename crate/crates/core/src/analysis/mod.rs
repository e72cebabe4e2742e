//! Shared/private classification, access rates, subsystem rollups and the
//! isolation score.

mod rates;
mod score;
mod sharing;

pub use rates::{
    cumulative_rate, lock_rates, merge_rates, subsystem_rollup, LockRate, SubsystemMap,
    SubsystemRollup,
};
pub use score::{isolation_score, symmetric_p_shared, IsolationScore};
pub use sharing::{
    average_shared_count, session_index, shared_private, summarize_pair, KeySharing, PairSummary,
    RunSharing, SharingReport,
};

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LockEvent, LockKey, StackId, WorkloadTrace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("traces come from different runs ({a} vs {b})")]
    SessionMismatch { a: u32, b: u32 },
    #[error("{0} needs at least one input")]
    EmptyInput(&'static str),
    #[error("cannot derive a subsystem from path `{0}`")]
    UnmappablePath(String),
    #[error("workload `{0}` has no acquisitions")]
    EmptyTrace(String),
}

/// Derives the stable [`LockKey`] for an event of a given trace.
pub trait KeyOf {
    fn key_of(&self, trace: &WorkloadTrace, event: &LockEvent) -> LockKey;
}

impl<F> KeyOf for F
where
    F: Fn(&WorkloadTrace, &LockEvent) -> LockKey,
{
    fn key_of(&self, trace: &WorkloadTrace, event: &LockEvent) -> LockKey {
        self(trace, event)
    }
}

/// File placeholder for keys whose source location is not known.
pub const UNKNOWN_FILE: &str = "unknown";

/// Keys built from the stack alone: the acquiring function is the first
/// non-primitive frame and the file is unknown.
#[derive(Debug, Clone, Copy, Default)]
pub struct StackKeys;

impl KeyOf for StackKeys {
    fn key_of(&self, trace: &WorkloadTrace, event: &LockEvent) -> LockKey {
        let function = trace
            .stack_of(event)
            .map(|st| st.acquiring_function().unwrap_or(st.innermost()).to_owned())
            .unwrap_or_default();
        LockKey::new(event.lock_name.clone(), function, UNKNOWN_FILE, event.lock_class)
    }
}

/// Caches another [`KeyOf`] per (workload, run, stack, lock name,
/// primitive), which is everything a key may depend on.
pub struct CachedKeys<K> {
    inner: K,
    cache: RefCell<HashMap<CacheId, LockKey>>,
}

type CacheId = (String, u32, StackId, String, String);

impl<K: KeyOf> CachedKeys<K> {
    pub fn new(inner: K) -> Self {
        Self { inner, cache: RefCell::default() }
    }
}

impl<K: KeyOf> KeyOf for CachedKeys<K> {
    fn key_of(&self, trace: &WorkloadTrace, event: &LockEvent) -> LockKey {
        let id = (
            trace.workload_id.clone(),
            trace.run_index,
            event.stack_id,
            event.lock_name.clone(),
            event.primitive.clone(),
        );
        if let Some(key) = self.cache.borrow().get(&id) {
            return key.clone();
        }
        let key = self.inner.key_of(trace, event);
        self.cache.borrow_mut().insert(id, key.clone());
        key
    }
}

/// Which locks count toward a pair's cumulative rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateScope {
    #[default]
    Shared,
    All,
}

impl FromStr for RateScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared" => Ok(RateScope::Shared),
            "all" => Ok(RateScope::All),
            other => Err(format!("unknown rate scope `{other}` (expected shared or all)")),
        }
    }
}

impl fmt::Display for RateScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateScope::Shared => "shared",
            RateScope::All => "all",
        })
    }
}

/// Rounds half away from zero to two decimals, for presentation only.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn format2(x: f64) -> String {
    format!("{:.2}", round2(x))
}
