use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lockiso::analysis::{
    format2, isolation_score, lock_rates, merge_rates, subsystem_rollup, summarize_pair, symmetric_p_shared,
    CachedKeys, KeyOf, LockRate, RateScope, StackKeys, SubsystemMap,
};
use lockiso::model::{LockKey, Platform, WorkloadTrace};
use lockiso::simgen::{
    emit_traces, simulate, stack_file_name, synthetic_code_facts, trace_file_name, SimConfig,
};
use lockiso::staticmap::{
    coverage_breakdown, load_code_facts, map_lock_to_object, CodeFacts, FactsKeys, GenericNames,
    LockUseSite, MappingCoverage,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::manifest::{load_manifest, load_session, LoadedManifest, RunEntry, Session, SessionManifest, TraceFiles, WorkloadEntry};
use crate::report::*;
use crate::InternalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Options {
    pub restrict: RateScope,
    pub max_depth: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self { restrict: RateScope::Shared, max_depth: lockiso::staticmap::DEFAULT_MAX_DEPTH }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    manifest: String,
    manifest_sha256: String,
    code_facts: Option<String>,
    options: &'a Options,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_meta(out: &Path, command: &'static str, m: &LoadedManifest, facts: Option<&Path>, options: &Options) -> Result<PathBuf> {
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        manifest: m.path.display().to_string(),
        manifest_sha256: sha256_hex(&m.bytes),
        code_facts: facts.map(|p| p.display().to_string()),
        options,
    };
    let path = out.join(META_JSON);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn pairs(m: &SessionManifest) -> Vec<(&str, &str)> {
    let ids: Vec<&str> = m.workloads.iter().map(|w| w.id.as_str()).collect();
    let mut out = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            out.push((*a, *b));
        }
    }
    out
}

fn common_runs<'s>(session: &'s Session, a: &str, b: &str) -> Vec<(&'s WorkloadTrace, &'s WorkloadTrace)> {
    session
        .values()
        .filter_map(|run| Some((run.get(a)?, run.get(b)?)))
        .collect()
}

/// Per-lock rates summed over workloads and averaged over runs.
pub fn session_rates(session: &Session, keys: &impl KeyOf) -> Vec<LockRate> {
    let runs = session.len().max(1) as f64;
    let all = session.values().flat_map(|run| run.values()).flat_map(|t| lock_rates(t, keys));
    let mut merged = merge_rates(all);
    for r in &mut merged {
        r.rate /= runs;
    }
    merged
}

fn rate_rows(rates: &[LockRate]) -> Vec<RateRow> {
    rates
        .iter()
        .map(|r| RateRow {
            lock_name: r.key.lock_name.clone(),
            function: r.key.function.clone(),
            file: r.key.file.clone(),
            class: r.key.lock_class.to_string(),
            rate: format2(r.rate),
        })
        .collect()
}

struct Tables {
    sharing: Vec<SharingRow>,
    scores: Vec<ScoreRow>,
    rates: Vec<LockRate>,
}

fn build_tables(m: &SessionManifest, session: &Session, keys: &impl KeyOf, options: &Options) -> Result<Tables> {
    let mut sharing = Vec::new();
    let mut scores = Vec::new();
    for (a, b) in pairs(m) {
        let runs = common_runs(session, a, b);
        if runs.is_empty() {
            log::warn!("workloads {a} and {b} never ran together; skipping the pair");
            continue;
        }
        let summary = summarize_pair(&runs, keys, options.restrict)?;
        for run in &summary.runs {
            sharing.push(SharingRow {
                workload_a: a.to_owned(),
                workload_b: b.to_owned(),
                run: run.run_index,
                shared_count: run.shared_count,
                avg_shared_count: format2(summary.avg_shared_count),
                cumulative_shared_rate: format2(summary.cumulative_shared_rate),
            });
        }

        let (mut ab, mut ba, mut sym) = (Vec::new(), Vec::new(), Vec::new());
        for (ta, tb) in &runs {
            match (isolation_score(ta, tb, keys, &m.subsystems), isolation_score(tb, ta, keys, &m.subsystems)) {
                (Ok(x), Ok(y)) => {
                    sym.push(symmetric_p_shared(&x, &y));
                    ab.push(x.p_shared);
                    ba.push(y.p_shared);
                }
                (Err(e), _) | (_, Err(e)) => log::warn!("run {}: no isolation score for {a}/{b}: {e}", ta.run_index),
            }
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        if !ab.is_empty() {
            for (pair, value) in [(format!("{a}->{b}"), mean(&ab)), (format!("{b}->{a}"), mean(&ba)), (format!("{a}<->{b}"), mean(&sym))] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(InternalError(format!("p_shared {value} for {pair} outside [0, 1]")).into());
                }
                scores.push(ScoreRow { pair, p_shared: format!("{value:.4}") });
            }
        }
    }
    Ok(Tables { sharing, scores, rates: session_rates(session, keys) })
}

fn write_rates(out: &Path, rates: &[LockRate], subsystems: &SubsystemMap) -> Result<Vec<PathBuf>> {
    let rates_path = out.join(RATES_CSV);
    write_csv(&rates_path, &rate_rows(rates))?;
    let rollup: Vec<SubsystemRow> = subsystem_rollup(rates, subsystems)?
        .into_iter()
        .map(|s| SubsystemRow { subsystem: s.subsystem, cumulative_rate: format2(s.cumulative_rate) })
        .collect();
    let sub_path = out.join(SUBSYSTEMS_CSV);
    write_csv(&sub_path, &rollup)?;
    Ok(vec![rates_path, sub_path])
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

/// Writes sharing, rates, subsystem and score tables plus the metadata
/// sidecar. Keys come from the manifest's code facts when it names any.
pub fn cmd_analyze(manifest_path: &Path, out: &Path, options: &Options) -> Result<Vec<PathBuf>> {
    let loaded = load_manifest(manifest_path)?;
    let m = &loaded.manifest;
    let session = load_session(m)?;
    let facts = m.code_facts.as_deref().map(load_code_facts).transpose()?;
    let tables = match &facts {
        Some(f) => build_tables(m, &session, &CachedKeys::new(FactsKeys::new(f).with_max_depth(options.max_depth)), options)?,
        None => build_tables(m, &session, &CachedKeys::new(StackKeys), options)?,
    };
    create_out(out)?;
    let mut written = Vec::new();
    let path = out.join(SHARING_CSV);
    write_csv(&path, &tables.sharing)?;
    written.push(path);
    written.extend(write_rates(out, &tables.rates, &m.subsystems)?);
    let path = out.join(SCORE_CSV);
    write_csv(&path, &tables.scores)?;
    written.push(path);
    written.push(write_meta(out, "analyze", &loaded, m.code_facts.as_deref(), options)?);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolveOutput {
    pub written: Vec<PathBuf>,
    pub coverage: MappingCoverage,
}

/// One entry per lock key seen in the session, with the site its
/// acquisitions resolved to, if any did.
pub fn session_sites(session: &Session, facts: &CodeFacts, max_depth: usize) -> BTreeMap<LockKey, Option<LockUseSite>> {
    let keys = FactsKeys::new(facts).with_max_depth(max_depth);
    let mut seen = std::collections::HashSet::new();
    let mut sites: BTreeMap<LockKey, Option<LockUseSite>> = BTreeMap::new();
    for trace in session.values().flat_map(|run| run.values()) {
        for event in &trace.events {
            if !seen.insert((trace.workload_id.as_str(), trace.run_index, event.stack_id, event.lock_name.as_str(), event.primitive.as_str())) {
                continue;
            }
            let site = keys.resolve(trace, event).ok().map(|r| r.site);
            let key = keys.key_with_site(trace, event, site.as_ref());
            let slot = sites.entry(key).or_default();
            if slot.is_none() {
                *slot = site;
            }
        }
    }
    sites
}

pub fn cmd_resolve(manifest_path: &Path, facts_path: Option<&Path>, out: &Path, options: &Options) -> Result<ResolveOutput> {
    let loaded = load_manifest(manifest_path)?;
    let m = &loaded.manifest;
    let facts_path = facts_path
        .map(Path::to_owned)
        .or_else(|| m.code_facts.clone())
        .ok_or_else(|| anyhow!("no code facts: pass --facts or set code_facts in the manifest"))?;
    let facts = load_code_facts(&facts_path)?;
    let session = load_session(m)?;

    let generic = GenericNames::default();
    let mappings: Vec<_> = session_sites(&session, &facts, options.max_depth)
        .iter()
        .map(|(key, site)| map_lock_to_object(key, site.as_ref(), &facts, &generic))
        .collect();
    let coverage = coverage_breakdown(&mappings)?;
    let rows: Vec<MappingRow> = mappings
        .iter()
        .map(|mp| MappingRow {
            lock_name: mp.key.lock_name.clone(),
            function: mp.key.function.clone(),
            file: mp.key.file.clone(),
            object_name: mp.object_name.clone().unwrap_or_default(),
            confidence: mp.confidence.to_string(),
        })
        .collect();

    create_out(out)?;
    let path = out.join(MAPPING_CSV);
    write_csv(&path, &rows)?;
    let mut written = vec![path];
    let keys = CachedKeys::new(FactsKeys::new(&facts).with_max_depth(options.max_depth));
    written.extend(write_rates(out, &session_rates(&session, &keys), &m.subsystems)?);
    written.push(write_meta(out, "resolve", &loaded, Some(&facts_path), options)?);
    Ok(ResolveOutput { written, coverage })
}

pub const SIM_MANIFEST: &str = "manifest.json";
pub const SIM_FACTS: &str = "code_facts.json";

/// Runs the simulator and writes its traces, the timeline, a manifest
/// covering the traces and the matching synthetic code facts.
pub fn cmd_simulate(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let mut config = SimConfig::from_json(&text).with_context(|| format!("in {}", config_path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let result = simulate(&config).with_context(|| format!("in {}", config_path.display()))?;
    let traced: u64 = result.traces.iter().map(WorkloadTrace::total_acquisitions).sum();
    if traced != result.total_acquisitions {
        return Err(InternalError(format!(
            "traces hold {traced} acquisitions, simulator made {}",
            result.total_acquisitions
        ))
        .into());
    }
    let mut written = emit_traces(&result, out).with_context(|| format!("writing to {}", out.display()))?;

    let facts_path = out.join(SIM_FACTS);
    fs::write(&facts_path, synthetic_code_facts(&config).to_json() + "\n")?;
    written.push(facts_path);

    let manifest = SessionManifest {
        workloads: result
            .traces
            .iter()
            .map(|t| WorkloadEntry { id: t.workload_id.clone(), platform: Platform::Synthetic })
            .collect(),
        runs: vec![RunEntry {
            index: config.run_index,
            duration_s: config.duration_s,
            files: result
                .traces
                .iter()
                .filter(|t| !t.events.is_empty())
                .map(|t| {
                    let files = TraceFiles {
                        trace: trace_file_name(&t.workload_id).into(),
                        stacks: stack_file_name(&t.workload_id).into(),
                    };
                    (t.workload_id.clone(), files)
                })
                .collect(),
        }],
        filter: Default::default(),
        code_facts: Some(SIM_FACTS.into()),
        subsystems: SubsystemMap::default(),
    };
    let mut manifest = manifest;
    manifest.workloads.retain(|w| manifest.runs[0].files.contains_key(&w.id));
    let manifest_path = out.join(SIM_MANIFEST);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    written.push(manifest_path);
    Ok(written)
}

fn print_table<T: Serialize + serde::de::DeserializeOwned + Columns>(dir: &Path, name: &str, w: &mut impl std::io::Write) -> Result<bool> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(false);
    }
    let rows: Vec<T> = read_csv(&path)?;
    writeln!(w, "# {name} ({} rows)", rows.len())?;
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(&mut *w);
    csv.write_record(T::COLUMNS)?;
    for row in &rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    drop(csv);
    writeln!(w)?;
    Ok(true)
}

/// Reads back every report table present in `dir` and prints it.
pub fn cmd_report(dir: &Path, w: &mut impl std::io::Write) -> Result<usize> {
    let mut found = 0;
    found += print_table::<SharingRow>(dir, SHARING_CSV, w)? as usize;
    found += print_table::<RateRow>(dir, RATES_CSV, w)? as usize;
    found += print_table::<SubsystemRow>(dir, SUBSYSTEMS_CSV, w)? as usize;
    found += print_table::<ScoreRow>(dir, SCORE_CSV, w)? as usize;
    found += print_table::<MappingRow>(dir, MAPPING_CSV, w)? as usize;
    if found == 0 {
        bail!("no report tables in {}", dir.display());
    }
    Ok(found)
}
