//! Trace and stack file parsing, workload filtering, and assembly of
//! [`WorkloadTrace`] values.
//!
//! Trace files are JSON Lines. Each line is either a lock record
//!
//! ```text
//! {"kind":"lock","pid":38296,"tid":38296,"addr":"0xffff888003a1c0d8","name":"&pipe->mutex","class":"mutex","primitive":"mutex_lock","count":1,"hold_ns":420,"t_ns":1200,"process":"mmap04","stack":324596}
//! ```
//!
//! or a lock initialization record `{"kind":"init","addr":"0x...","t_ns":...}`.
//! Stack files hold one `<stack_id>\t<frame0>;<frame1>;...` line per stack,
//! innermost frame first.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    classify_primitive, InitIndex, InitRecord, LockClass, LockEvent, Platform, StackId,
    StackTrace, WorkloadTrace,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate stack id {stack_id}")]
    DuplicateStackId { line: usize, stack_id: StackId },
    #[error("event references stack {0} which is not in the stack table")]
    MissingStack(StackId),
    #[error("invalid workload metadata: {0}")]
    InvalidMeta(String),
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io { path: path.to_owned(), source }
    }

    /// Attaches a file name to line-level errors.
    pub fn in_file(self, path: &Path) -> FileError {
        FileError { path: path.to_owned(), source: self }
    }
}

#[derive(Debug, Error)]
#[error("{}: {source}", path.display())]
pub struct FileError {
    pub path: PathBuf,
    #[source]
    pub source: IngestError,
}

mod hex_addr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(addr: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{addr:#x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        let digits = text
            .strip_prefix("0x")
            .or_else(|| text.strip_prefix("0X"))
            .ok_or_else(|| de::Error::custom(format!("address `{text}` lacks 0x prefix")))?;
        u64::from_str_radix(digits, 16)
            .map_err(|e| de::Error::custom(format!("address `{text}`: {e}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Lock {
        pid: u32,
        tid: u32,
        #[serde(with = "hex_addr")]
        addr: u64,
        name: String,
        class: LockClass,
        primitive: String,
        count: u64,
        hold_ns: u64,
        t_ns: u64,
        process: String,
        stack: StackId,
    },
    Init {
        #[serde(with = "hex_addr")]
        addr: u64,
        t_ns: u64,
    },
}

/// Contents of one trace file, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTrace {
    pub events: Vec<LockEvent>,
    pub init_records: Vec<InitRecord>,
}

pub fn parse_trace(path: &Path) -> Result<ParsedTrace, IngestError> {
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_trace(BufReader::new(file)).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::io(path, source),
        other => other,
    })
}

pub fn read_trace(reader: impl BufRead) -> Result<ParsedTrace, IngestError> {
    let mut out = ParsedTrace::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::Io { path: PathBuf::new(), source: e })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IngestError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        let kind = value.get("kind").and_then(|k| k.as_str()).ok_or_else(|| IngestError::Parse {
            line: line_no,
            reason: "missing string field `kind`".into(),
        })?;
        if kind != "lock" && kind != "init" {
            log::warn!("line {line_no}: skipping record of unknown kind `{kind}`");
            continue;
        }
        let record: Record = serde_json::from_value(value).map_err(|e| IngestError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        match record {
            Record::Init { addr, t_ns } => out.init_records.push(InitRecord { lock_addr: addr, t_ns }),
            Record::Lock {
                pid,
                tid,
                addr,
                name,
                class,
                primitive,
                count,
                hold_ns,
                t_ns,
                process,
                stack,
            } => {
                if count == 0 {
                    return Err(IngestError::Parse {
                        line: line_no,
                        reason: "count must be at least 1".into(),
                    });
                }
                match classify_primitive(&primitive) {
                    Ok(c) if c == class => {}
                    Ok(c) => {
                        return Err(IngestError::Parse {
                            line: line_no,
                            reason: format!("primitive `{primitive}` is a {c}, record says {class}"),
                        })
                    }
                    Err(e) => {
                        return Err(IngestError::Parse { line: line_no, reason: e.to_string() })
                    }
                }
                out.events.push(LockEvent {
                    pid,
                    tid,
                    lock_addr: addr,
                    lock_name: name,
                    lock_class: class,
                    primitive,
                    stack_id: stack,
                    acquire_count: count,
                    total_hold_ns: hold_ns,
                    first_seen_ns: t_ns,
                    process_name: process,
                });
            }
        }
    }
    Ok(out)
}

/// Writes init records (in the given order) followed by lock records.
pub fn write_trace(
    mut w: impl Write,
    events: &[LockEvent],
    init_records: &[InitRecord],
) -> io::Result<()> {
    for r in init_records {
        let rec = Record::Init { addr: r.lock_addr, t_ns: r.t_ns };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    for e in events {
        let rec = Record::Lock {
            pid: e.pid,
            tid: e.tid,
            addr: e.lock_addr,
            name: e.lock_name.clone(),
            class: e.lock_class,
            primitive: e.primitive.clone(),
            count: e.acquire_count,
            hold_ns: e.total_hold_ns,
            t_ns: e.first_seen_ns,
            process: e.process_name.clone(),
            stack: e.stack_id,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_stacks(path: &Path) -> Result<BTreeMap<StackId, StackTrace>, IngestError> {
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_stacks(BufReader::new(file)).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::io(path, source),
        other => other,
    })
}

pub fn read_stacks(reader: impl BufRead) -> Result<BTreeMap<StackId, StackTrace>, IngestError> {
    let mut stacks = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::Io { path: PathBuf::new(), source: e })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| IngestError::Parse { line: line_no, reason };
        let (id, frames) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected `<stack_id>\\t<frames>`".into()))?;
        let stack_id = StackId(
            id.trim()
                .parse()
                .map_err(|e| parse_err(format!("stack id `{id}`: {e}")))?,
        );
        let frames: Vec<String> = frames.split(';').map(str::to_owned).collect();
        if frames.iter().any(|f| f.is_empty()) {
            return Err(parse_err(format!("stack {stack_id} has an empty frame")));
        }
        if stacks.contains_key(&stack_id) {
            return Err(IngestError::DuplicateStackId { line: line_no, stack_id });
        }
        stacks.insert(stack_id, StackTrace { stack_id, frames });
    }
    Ok(stacks)
}

pub fn write_stacks<'a>(
    mut w: impl Write,
    stacks: impl IntoIterator<Item = &'a StackTrace>,
) -> io::Result<()> {
    for st in stacks {
        writeln!(w, "{}\t{}", st.stack_id, st.frames.join(";"))?;
    }
    Ok(())
}

/// Which events belong to the workload under study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub pid_allowlist: Option<BTreeSet<u32>>,
    pub process_name_allowlist: Option<BTreeSet<String>>,
    /// Frame substrings marking interrupt context.
    pub interrupt_frame_denylist: Vec<String>,
}

pub const DEFAULT_INTERRUPT_FRAMES: &[&str] = &[
    "__softirqentry_text_start",
    "hrtimer_interrupt",
    "__do_softirq",
    "sysvec_apic_timer_interrupt",
];

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            pid_allowlist: None,
            process_name_allowlist: None,
            interrupt_frame_denylist: DEFAULT_INTERRUPT_FRAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FilterSpec {
    /// Keeps everything.
    pub fn permissive() -> Self {
        Self {
            pid_allowlist: None,
            process_name_allowlist: None,
            interrupt_frame_denylist: Vec::new(),
        }
    }

    fn admits_workload(&self, event: &LockEvent) -> bool {
        self.pid_allowlist.as_ref().is_none_or(|pids| pids.contains(&event.pid))
            && self
                .process_name_allowlist
                .as_ref()
                .is_none_or(|names| names.contains(&event.process_name))
    }

    fn is_interrupt_stack(&self, stack: &StackTrace) -> bool {
        stack
            .frames
            .iter()
            .any(|frame| self.interrupt_frame_denylist.iter().any(|deny| frame.contains(deny.as_str())))
    }
}

pub fn filter_events(
    events: &[LockEvent],
    stacks: &BTreeMap<StackId, StackTrace>,
    spec: &FilterSpec,
) -> Result<Vec<LockEvent>, IngestError> {
    let mut kept = Vec::with_capacity(events.len());
    for event in events {
        let stack = stacks.get(&event.stack_id).ok_or(IngestError::MissingStack(event.stack_id))?;
        if spec.admits_workload(event) && !spec.is_interrupt_stack(stack) {
            kept.push(event.clone());
        }
    }
    Ok(kept)
}

/// Run-level metadata supplied alongside the trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMeta {
    pub workload_id: String,
    pub platform: Platform,
    pub run_index: u32,
    pub duration_s: f64,
}

/// Sums rows sharing (pid, address, stack, generation), keeping the first
/// row's position and identity fields and the earliest timestamp.
pub fn aggregate_events(events: Vec<LockEvent>, index: &InitIndex) -> Vec<LockEvent> {
    let mut out: Vec<LockEvent> = Vec::with_capacity(events.len());
    let mut slot: HashMap<(u32, u64, StackId, u32), usize> = HashMap::new();
    for event in events {
        let generation = index.generation(event.lock_addr, event.first_seen_ns);
        let key = (event.pid, event.lock_addr, event.stack_id, generation);
        match slot.get(&key) {
            Some(&i) => {
                let agg = &mut out[i];
                agg.acquire_count += event.acquire_count;
                agg.total_hold_ns += event.total_hold_ns;
                agg.first_seen_ns = agg.first_seen_ns.min(event.first_seen_ns);
            }
            None => {
                slot.insert(key, out.len());
                out.push(event);
            }
        }
    }
    out
}

pub fn load_workload(
    trace_path: &Path,
    stack_path: &Path,
    meta: WorkloadMeta,
    spec: &FilterSpec,
) -> Result<WorkloadTrace, FileError> {
    let parsed = parse_trace(trace_path).map_err(|e| e.in_file(trace_path))?;
    let stacks = parse_stacks(stack_path).map_err(|e| e.in_file(stack_path))?;
    assemble_workload(parsed, stacks, meta, spec).map_err(|e| e.in_file(trace_path))
}

/// In-memory half of [`load_workload`].
pub fn assemble_workload(
    parsed: ParsedTrace,
    stacks: BTreeMap<StackId, StackTrace>,
    meta: WorkloadMeta,
    spec: &FilterSpec,
) -> Result<WorkloadTrace, IngestError> {
    if !(meta.duration_s.is_finite() && meta.duration_s > 0.0) {
        return Err(IngestError::InvalidMeta(format!(
            "duration_s must be positive, got {}",
            meta.duration_s
        )));
    }
    let mut init_records = parsed.init_records;
    init_records.sort_by_key(|r| (r.t_ns, r.lock_addr));
    let filtered = filter_events(&parsed.events, &stacks, spec)?;
    let index = InitIndex::new(&init_records);
    let events = aggregate_events(filtered, &index);
    Ok(WorkloadTrace {
        workload_id: meta.workload_id,
        platform: meta.platform,
        run_index: meta.run_index,
        duration_s: meta.duration_s,
        events,
        stacks,
        init_records,
    })
}
