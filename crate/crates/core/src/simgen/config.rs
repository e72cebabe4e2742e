use std::collections::HashMap;

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::model::{classify_primitive, LockKey};

/// Nanosecond duration distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Constant(u64),
    /// Inclusive on both ends.
    Uniform { lo: u64, hi: u64 },
    Exponential { mean: f64 },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Constant(0)
    }
}

impl Distribution {
    /// Uses only 64-bit draws and IEEE arithmetic so sequences are identical
    /// on every platform for a given seed.
    pub fn sample(&self, rng: &mut impl RngCore) -> u64 {
        match *self {
            Distribution::Constant(v) => v,
            Distribution::Uniform { lo, hi } => {
                let span = hi - lo + 1;
                lo + ((unit(rng) * span as f64) as u64).min(span - 1)
            }
            Distribution::Exponential { mean } => (-mean * (1.0 - unit(rng)).ln()).round() as u64,
        }
    }

    fn validate(&self, what: &str) -> Result<(), ConfigError> {
        match *self {
            Distribution::Uniform { lo, hi } if lo > hi => {
                Err(ConfigError::Invalid(format!("{what}: uniform lo {lo} exceeds hi {hi}")))
            }
            Distribution::Exponential { mean } if !(mean.is_finite() && mean >= 0.0) => {
                Err(ConfigError::Invalid(format!("{what}: exponential mean must be finite and non-negative")))
            }
            _ => Ok(()),
        }
    }
}

fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    /// A separate lock per workload.
    Private,
    /// One lock for the whole session.
    SharedGlobal,
    /// One lock per hash bucket; workloads collide when their resources hash together.
    IncidentalHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockModel {
    pub name: String,
    pub sharing: Sharing,
    #[serde(default = "one")]
    pub hash_buckets: u32,
    pub hold_time_ns: Distribution,
    /// Identity the lock reports under; `file` drives subsystem attribution.
    pub key: LockKey,
    /// Acquisition primitive; defaults to the class's representative one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<String>,
    /// Private only: the protected object is allocated per operation from a
    /// session-wide pool, so addresses are reused across workloads and each
    /// allocation emits an init record.
    #[serde(default)]
    pub recycle: bool,
}

fn one() -> u32 {
    1
}

impl LockModel {
    pub fn primitive(&self) -> &str {
        self.primitive.as_deref().unwrap_or(self.key.lock_class.default_primitive())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockUse {
    pub lock: String,
    /// Acquisitions per operation (per resource for incidental locks).
    #[serde(default = "one")]
    pub count: u32,
    /// Resource ids touched each operation; incidental locks only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resources: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub name: String,
    /// Operations per iteration; think time follows each iteration.
    #[serde(default = "one")]
    pub ops_per_iter: u32,
    pub locks_per_op: Vec<LockUse>,
    #[serde(default)]
    pub think_time_ns: Distribution,
}

pub const DEFAULT_TRASHER_INTERVAL_S: f64 = 10.0;

fn default_interval() -> f64 {
    DEFAULT_TRASHER_INTERVAL_S
}

/// A full simulation; the output is a pure function of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Virtual seconds.
    pub duration_s: f64,
    #[serde(default)]
    pub run_index: u32,
    pub worker: WorkloadProfile,
    pub trasher: WorkloadProfile,
    #[serde(default)]
    pub trasher_count: u32,
    /// Trasher `k` (1-based) starts at `k * trasher_start_interval_s`; also
    /// the timeline interval length.
    #[serde(default = "default_interval")]
    pub trasher_start_interval_s: f64,
    pub lock_models: Vec<LockModel>,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn duration_ns(&self) -> u64 {
        (self.duration_s * 1e9).round() as u64
    }

    pub fn interval_ns(&self) -> u64 {
        (self.trasher_start_interval_s * 1e9).round() as u64
    }

    /// Workload ids in simulation order: the worker, then `<trasher>-1..`.
    pub fn workload_ids(&self) -> Vec<String> {
        std::iter::once(self.worker.name.clone())
            .chain((1..=self.trasher_count).map(|k| format!("{}-{k}", self.trasher.name)))
            .collect()
    }

    /// Virtual start time of workload `index` (0 is the worker).
    pub fn start_ns(&self, index: usize) -> u64 {
        index as u64 * self.interval_ns()
    }

    /// Whether workload `index` starts before the session ends.
    pub fn is_present(&self, index: usize) -> bool {
        self.start_ns(index) < self.duration_ns()
    }

    pub fn profile(&self, index: usize) -> &WorkloadProfile {
        if index == 0 {
            &self.worker
        } else {
            &self.trasher
        }
    }

    pub(crate) fn model_index(&self) -> HashMap<&str, usize> {
        self.lock_models.iter().enumerate().map(|(i, m)| (m.name.as_str(), i)).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) || self.duration_ns() == 0 {
            return invalid(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(self.trasher_start_interval_s.is_finite() && self.trasher_start_interval_s > 0.0)
            || self.interval_ns() == 0
        {
            return invalid(format!(
                "trasher_start_interval_s must be positive, got {}",
                self.trasher_start_interval_s
            ));
        }
        if self.lock_models.len() >= 1000 {
            return invalid("at most 999 lock models are supported".into());
        }
        let models = self.model_index();
        if models.len() != self.lock_models.len() {
            return invalid("lock model names must be unique".into());
        }
        for m in &self.lock_models {
            m.hold_time_ns.validate(&m.name)?;
            if m.hash_buckets == 0 {
                return invalid(format!("lock model `{}` needs at least one hash bucket", m.name));
            }
            if m.recycle && m.sharing != Sharing::Private {
                return invalid(format!("lock model `{}`: only private locks can be recycled", m.name));
            }
            match classify_primitive(m.primitive()) {
                Ok(class) if class == m.key.lock_class => {}
                Ok(class) => {
                    return invalid(format!(
                        "lock model `{}`: primitive {} is a {class}, key says {}",
                        m.name,
                        m.primitive(),
                        m.key.lock_class
                    ))
                }
                Err(e) => return invalid(format!("lock model `{}`: {e}", m.name)),
            }
        }
        for profile in [&self.worker, &self.trasher] {
            if profile.locks_per_op.is_empty() {
                return invalid(format!("profile `{}` acquires no locks", profile.name));
            }
            if profile.ops_per_iter == 0 {
                return invalid(format!("profile `{}` needs ops_per_iter >= 1", profile.name));
            }
            profile.think_time_ns.validate(&profile.name)?;
            for u in &profile.locks_per_op {
                let Some(&mi) = models.get(u.lock.as_str()) else {
                    return Err(ConfigError::DanglingLock {
                        profile: profile.name.clone(),
                        lock: u.lock.clone(),
                    });
                };
                if u.count == 0 {
                    return invalid(format!("profile `{}`: lock `{}` count must be >= 1", profile.name, u.lock));
                }
                let incidental = self.lock_models[mi].sharing == Sharing::IncidentalHash;
                if incidental && u.resources.is_empty() {
                    return invalid(format!(
                        "profile `{}`: incidental lock `{}` needs resource ids",
                        profile.name, u.lock
                    ));
                }
                if !incidental && !u.resources.is_empty() {
                    return invalid(format!(
                        "profile `{}`: resources only apply to incidental locks (`{}`)",
                        profile.name, u.lock
                    ));
                }
            }
        }
        Ok(())
    }
}
