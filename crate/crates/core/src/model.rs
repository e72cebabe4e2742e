//! Domain types shared by ingestion, analysis, static mapping and simulation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lock family a probed primitive belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LockClass {
    Spinlock,
    Rwlock,
    Mutex,
    Semaphore,
}

pub const SPINLOCK_PRIMITIVES: &[&str] = &[
    "_raw_spin_lock",
    "_raw_spin_lock_irqsave",
    "_raw_spin_lock_irq",
    "_raw_spin_lock_bh",
    "_raw_spin_trylock",
    "_raw_spin_trylock_bh",
    "_raw_spin_lock_nested",
    "_raw_spin_lock_irqsave_nested",
];

pub const RWLOCK_PRIMITIVES: &[&str] = &[
    "_raw_read_lock",
    "_raw_write_lock",
    "_raw_read_lock_bh",
    "_raw_write_lock_bh",
    "_raw_read_lock_irq",
    "_raw_write_lock_irq",
    "_raw_read_lock_irqsave",
    "_raw_write_lock_irqsave",
    "_raw_read_trylock",
    "_raw_write_trylock",
    "_raw_write_lock_nested",
];

pub const MUTEX_PRIMITIVES: &[&str] = &[
    "mutex_lock_nested",
    "mutex_lock",
    "rt_mutex_lock_nested",
    "rt_mutex_lock",
    "mutex_trylock",
    "rt_mutex_trylock",
    "mutex_lock_interruptible_nested",
];

pub const SEMAPHORE_PRIMITIVES: &[&str] = &[
    "down_read",
    "down_write",
    "down_read_trylock",
    "down_write_trylock",
    "down_read_nested",
    "down_write_nested",
    "down_read_killable",
    "down_write_killable",
    "down_read_killable_nested",
    "down_write_killable_nested",
    "down_read_interruptible",
];

impl LockClass {
    pub const ALL: [LockClass; 4] = [
        LockClass::Spinlock,
        LockClass::Rwlock,
        LockClass::Mutex,
        LockClass::Semaphore,
    ];

    /// Every probed primitive name for this class.
    pub fn primitives(self) -> &'static [&'static str] {
        match self {
            LockClass::Spinlock => SPINLOCK_PRIMITIVES,
            LockClass::Rwlock => RWLOCK_PRIMITIVES,
            LockClass::Mutex => MUTEX_PRIMITIVES,
            LockClass::Semaphore => SEMAPHORE_PRIMITIVES,
        }
    }

    /// Primitive used when a caller needs a representative acquisition function.
    pub fn default_primitive(self) -> &'static str {
        match self {
            LockClass::Spinlock => "_raw_spin_lock",
            LockClass::Rwlock => "_raw_write_lock",
            LockClass::Mutex => "mutex_lock",
            LockClass::Semaphore => "down_write",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LockClass::Spinlock => "spinlock",
            LockClass::Rwlock => "rwlock",
            LockClass::Mutex => "mutex",
            LockClass::Semaphore => "semaphore",
        }
    }
}

impl fmt::Display for LockClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown lock primitive `{0}`")]
pub struct UnknownPrimitive(pub String);

impl FromStr for LockClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spinlock" => Ok(LockClass::Spinlock),
            "rwlock" => Ok(LockClass::Rwlock),
            "mutex" => Ok(LockClass::Mutex),
            "semaphore" => Ok(LockClass::Semaphore),
            other => Err(format!("unknown lock class `{other}`")),
        }
    }
}

/// Maps a probed acquisition function to its lock class.
pub fn classify_primitive(name: &str) -> Result<LockClass, UnknownPrimitive> {
    LockClass::ALL
        .into_iter()
        .find(|class| class.primitives().contains(&name))
        .ok_or_else(|| UnknownPrimitive(name.to_owned()))
}

pub fn is_primitive(name: &str) -> bool {
    classify_primitive(name).is_ok()
}

/// Opaque id joining a trace record to its kernel stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StackId(pub u64);

impl fmt::Display for StackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One aggregated acquisition record: a (process, lock, stack) triple with
/// its total count and hold time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockEvent {
    pub pid: u32,
    pub tid: u32,
    pub lock_addr: u64,
    pub lock_name: String,
    pub lock_class: LockClass,
    pub primitive: String,
    pub stack_id: StackId,
    pub acquire_count: u64,
    pub total_hold_ns: u64,
    pub first_seen_ns: u64,
    pub process_name: String,
}

/// Kernel stack, innermost (acquisition point) first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackTrace {
    pub stack_id: StackId,
    pub frames: Vec<String>,
}

impl StackTrace {
    pub fn innermost(&self) -> &str {
        &self.frames[0]
    }

    pub fn outermost(&self) -> &str {
        self.frames.last().expect("stack traces are non-empty")
    }

    /// First frame that is not a lock primitive, i.e. the function that
    /// called into the locking code.
    pub fn acquiring_function(&self) -> Option<&str> {
        self.frames
            .iter()
            .map(String::as_str)
            .find(|frame| !is_primitive(frame))
    }
}

/// Runtime lock identity: an address plus how many times that address has
/// been re-initialized before the acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LockInstance {
    pub lock_addr: u64,
    pub generation: u32,
}

impl fmt::Display for LockInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}#{}", self.lock_addr, self.generation)
    }
}

/// Stable cross-run identity of a lock.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LockKey {
    pub lock_name: String,
    pub function: String,
    pub file: String,
    pub lock_class: LockClass,
}

impl LockKey {
    pub fn new(
        lock_name: impl Into<String>,
        function: impl Into<String>,
        file: impl Into<String>,
        lock_class: LockClass,
    ) -> Self {
        Self {
            lock_name: lock_name.into(),
            function: function.into(),
            file: file.into(),
            lock_class,
        }
    }
}

impl fmt::Display for LockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}, {}, {})",
            self.lock_name, self.function, self.file, self.lock_class
        )
    }
}

/// Lock initialization observed at `lock_addr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InitRecord {
    pub lock_addr: u64,
    pub t_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Host,
    Runc,
    Runsc,
    Fc,
    Synthetic,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Host => "host",
            Platform::Runc => "runc",
            Platform::Runsc => "runsc",
            Platform::Fc => "fc",
            Platform::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything recorded for one workload instance in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    pub workload_id: String,
    pub platform: Platform,
    pub run_index: u32,
    pub duration_s: f64,
    pub events: Vec<LockEvent>,
    pub stacks: BTreeMap<StackId, StackTrace>,
    /// Sorted by timestamp.
    pub init_records: Vec<InitRecord>,
}

impl WorkloadTrace {
    pub fn stack_of(&self, event: &LockEvent) -> Option<&StackTrace> {
        self.stacks.get(&event.stack_id)
    }

    pub fn total_acquisitions(&self) -> u64 {
        self.events.iter().map(|e| e.acquire_count).sum()
    }
}

/// Generation of the lock an event touched. `init_records` must be sorted by
/// timestamp.
pub fn instance_of(event: &LockEvent, init_records: &[InitRecord]) -> LockInstance {
    let generation = init_records
        .iter()
        .take_while(|r| r.t_ns <= event.first_seen_ns)
        .filter(|r| r.lock_addr == event.lock_addr)
        .count();
    LockInstance {
        lock_addr: event.lock_addr,
        generation: generation as u32,
    }
}

/// Per-address init timestamps for repeated generation lookups.
#[derive(Debug, Clone, Default)]
pub struct InitIndex {
    by_addr: HashMap<u64, Vec<u64>>,
}

impl InitIndex {
    pub fn new<'a>(records: impl IntoIterator<Item = &'a InitRecord>) -> Self {
        let mut by_addr: HashMap<u64, Vec<u64>> = HashMap::new();
        for r in records {
            by_addr.entry(r.lock_addr).or_default().push(r.t_ns);
        }
        for times in by_addr.values_mut() {
            times.sort_unstable();
            times.dedup();
        }
        Self { by_addr }
    }

    pub fn generation(&self, lock_addr: u64, t_ns: u64) -> u32 {
        self.by_addr
            .get(&lock_addr)
            .map_or(0, |times| times.partition_point(|&t| t <= t_ns) as u32)
    }

    pub fn instance_of(&self, event: &LockEvent) -> LockInstance {
        LockInstance {
            lock_addr: event.lock_addr,
            generation: self.generation(event.lock_addr, event.first_seen_ns),
        }
    }
}

#[cfg(test)]
pub(crate) fn test_event(addr: u64, t: u64) -> LockEvent {
    LockEvent {
        pid: 1,
        tid: 1,
        lock_addr: addr,
        lock_name: "l".into(),
        lock_class: LockClass::Spinlock,
        primitive: "_raw_spin_lock".into(),
        stack_id: StackId(1),
        acquire_count: 1,
        total_hold_ns: 0,
        first_seen_ns: t,
        process_name: "p".into(),
    }
}
