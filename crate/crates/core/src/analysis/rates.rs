use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AnalysisError, KeyOf};
use crate::model::{LockKey, WorkloadTrace};

/// Acquisitions per second of one lock key.
#[derive(Debug, Clone, PartialEq)]
pub struct LockRate {
    pub key: LockKey,
    pub rate: f64,
    pub acquire_count: u64,
    pub duration_s: f64,
}

/// One rate per distinct key, counts summed over that key's events. Output
/// is ordered by key.
pub fn lock_rates(trace: &WorkloadTrace, key_of: &impl KeyOf) -> Vec<LockRate> {
    let mut counts: BTreeMap<LockKey, u64> = BTreeMap::new();
    for event in &trace.events {
        *counts.entry(key_of.key_of(trace, event)).or_default() += event.acquire_count;
    }
    counts
        .into_iter()
        .map(|(key, acquire_count)| LockRate {
            key,
            rate: acquire_count as f64 / trace.duration_s,
            acquire_count,
            duration_s: trace.duration_s,
        })
        .collect()
}

pub fn cumulative_rate(rates: &[LockRate], restrict_to: Option<&BTreeSet<LockKey>>) -> f64 {
    rates
        .iter()
        .filter(|r| restrict_to.is_none_or(|keys| keys.contains(&r.key)))
        .map(|r| r.rate)
        .sum()
}

/// Sums rates (and counts, and durations) of equal keys, e.g. across runs.
pub fn merge_rates(rates: impl IntoIterator<Item = LockRate>) -> Vec<LockRate> {
    let mut merged: BTreeMap<LockKey, LockRate> = BTreeMap::new();
    for r in rates {
        match merged.get_mut(&r.key) {
            Some(m) => {
                m.rate += r.rate;
                m.acquire_count += r.acquire_count;
                m.duration_s += r.duration_s;
            }
            None => {
                merged.insert(r.key.clone(), r);
            }
        }
    }
    merged.into_values().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemRollup {
    pub subsystem: String,
    pub cumulative_rate: f64,
    pub lock_keys: BTreeSet<LockKey>,
}

/// Maps source paths to kernel subsystems by their top-level directory.
/// Headers under `include/` go through `header_overrides` (keyed by the
/// path below `include/`, e.g. `linux/mmzone.h`) and fall back to
/// `header_default`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsystemMap {
    pub header_overrides: BTreeMap<String, String>,
    pub header_default: String,
}

impl Default for SubsystemMap {
    fn default() -> Self {
        Self { header_overrides: BTreeMap::new(), header_default: "kernel".into() }
    }
}

impl SubsystemMap {
    pub fn subsystem_of(&self, file: &str) -> Result<String, AnalysisError> {
        let mut parts = file.split('/').filter(|c| !c.is_empty() && *c != ".");
        let first = parts.next().ok_or_else(|| AnalysisError::UnmappablePath(file.to_owned()))?;
        if first != "include" {
            return Ok(first.to_owned());
        }
        let below: Vec<&str> = parts.collect();
        Ok(self
            .header_overrides
            .get(&below.join("/"))
            .cloned()
            .unwrap_or_else(|| self.header_default.clone()))
    }
}

/// Sorted by subsystem name.
pub fn subsystem_rollup(
    rates: &[LockRate],
    map: &SubsystemMap,
) -> Result<Vec<SubsystemRollup>, AnalysisError> {
    let mut groups: BTreeMap<String, SubsystemRollup> = BTreeMap::new();
    for r in rates {
        let subsystem = map.subsystem_of(&r.key.file)?;
        let group = groups.entry(subsystem.clone()).or_insert_with(|| SubsystemRollup {
            subsystem,
            cumulative_rate: 0.0,
            lock_keys: BTreeSet::new(),
        });
        group.cumulative_rate += r.rate;
        group.lock_keys.insert(r.key.clone());
    }
    Ok(groups.into_values().collect())
}
