use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::engine::{PerfTimeline, SimResult};
use crate::ingest::{write_stacks, write_trace};

pub const TIMELINE_FILE: &str = "timeline.csv";

pub fn trace_file_name(workload_id: &str) -> String {
    format!("{workload_id}.trace.jsonl")
}

pub fn stack_file_name(workload_id: &str) -> String {
    format!("{workload_id}.stacks.txt")
}

/// Writes `<id>.trace.jsonl` and `<id>.stacks.txt` per workload, then
/// `timeline.csv`. Returns the paths in that order.
pub fn emit_traces(result: &SimResult, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(2 * result.traces.len() + 1);
    for trace in &result.traces {
        let path = out_dir.join(trace_file_name(&trace.workload_id));
        let mut w = BufWriter::new(File::create(&path)?);
        write_trace(&mut w, &trace.events, &trace.init_records)?;
        w.flush()?;
        paths.push(path);

        let path = out_dir.join(stack_file_name(&trace.workload_id));
        let mut w = BufWriter::new(File::create(&path)?);
        write_stacks(&mut w, trace.stacks.values())?;
        w.flush()?;
        paths.push(path);
    }
    let path = out_dir.join(TIMELINE_FILE);
    write_timeline(File::create(&path)?, &result.timeline)?;
    paths.push(path);
    Ok(paths)
}

pub fn write_timeline(w: impl Write, timeline: &PerfTimeline) -> io::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for rec in &timeline.intervals {
        csv.serialize(rec)?;
    }
    csv.flush()
}
