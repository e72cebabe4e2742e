//! Session manifests: which trace files make up each run of each workload.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lockiso::analysis::SubsystemMap;
use lockiso::ingest::{load_workload, FilterSpec, WorkloadMeta};
use lockiso::model::{Platform, WorkloadTrace};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadEntry {
    pub id: String,
    pub platform: Platform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFiles {
    pub trace: PathBuf,
    pub stacks: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub index: u32,
    pub duration_s: f64,
    /// Workload id to its files for this run.
    pub files: BTreeMap<String, TraceFiles>,
}

/// Paths are relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub workloads: Vec<WorkloadEntry>,
    pub runs: Vec<RunEntry>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_facts: Option<PathBuf>,
    #[serde(default)]
    pub subsystems: SubsystemMap,
}

/// A manifest with its paths resolved and checked.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
    pub manifest: SessionManifest,
}

impl SessionManifest {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for w in &self.workloads {
            if !ids.insert(w.id.as_str()) {
                bail!("workload `{}` is listed twice", w.id);
            }
        }
        if ids.is_empty() {
            bail!("manifest lists no workloads");
        }
        let mut runs = BTreeSet::new();
        for r in &self.runs {
            if !runs.insert(r.index) {
                bail!("run {} is listed twice", r.index);
            }
            if !(r.duration_s.is_finite() && r.duration_s > 0.0) {
                bail!("run {}: duration_s must be positive, got {}", r.index, r.duration_s);
            }
            if let Some(id) = r.files.keys().find(|id| !ids.contains(id.as_str())) {
                bail!("run {} has files for undeclared workload `{id}`", r.index);
            }
        }
        for id in &ids {
            if !self.runs.iter().any(|r| r.files.contains_key(*id)) {
                bail!("workload `{id}` has no runs");
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                bail!("referenced file {} does not exist", p.display());
            }
            Ok(())
        };
        for r in &mut self.runs {
            for files in r.files.values_mut() {
                fix(&mut files.trace)?;
                fix(&mut files.stacks)?;
            }
        }
        if let Some(p) = &mut self.code_facts {
            fix(p)?;
        }
        Ok(())
    }

    pub fn platform_of(&self, id: &str) -> Platform {
        self.workloads.iter().find(|w| w.id == id).map_or(Platform::Host, |w| w.platform)
    }
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let bytes = fs::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let mut manifest: SessionManifest = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing manifest {}", path.display()))?;
    manifest.validate().with_context(|| format!("invalid manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    manifest.resolve_paths(base)?;
    Ok(LoadedManifest { path: path.to_owned(), bytes, manifest })
}

/// All traces of a session, keyed by run index then workload id.
pub type Session = BTreeMap<u32, BTreeMap<String, WorkloadTrace>>;

pub fn load_session(m: &SessionManifest) -> Result<Session> {
    let mut session = Session::new();
    for run in &m.runs {
        let traces = session.entry(run.index).or_default();
        for (id, files) in &run.files {
            let meta = WorkloadMeta {
                workload_id: id.clone(),
                platform: m.platform_of(id),
                run_index: run.index,
                duration_s: run.duration_s,
            };
            let trace = load_workload(&files.trace, &files.stacks, meta, &m.filter)?;
            log::info!("run {} {id}: {} events after filtering", run.index, trace.events.len());
            traces.insert(id.clone(), trace);
        }
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(json: &str) -> SessionManifest {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn validation_rules() {
        let ok = r#"{"workloads": [{"id": "a", "platform": "runsc"}],
            "runs": [{"index": 0, "duration_s": 2.0, "files": {"a": {"trace": "t", "stacks": "s"}}}]}"#;
        let m = manifest(ok);
        assert!(m.validate().is_ok());
        assert_eq!(m.platform_of("a"), Platform::Runsc);
        assert_eq!(m.filter, FilterSpec::default());

        let no_runs = r#"{"workloads": [{"id": "a", "platform": "host"}, {"id": "b", "platform": "host"}],
            "runs": [{"index": 0, "duration_s": 2.0, "files": {"a": {"trace": "t", "stacks": "s"}}}]}"#;
        assert!(manifest(no_runs).validate().unwrap_err().to_string().contains("`b` has no runs"));

        let bad_duration = ok.replace("2.0", "0.0");
        assert!(manifest(&bad_duration).validate().is_err());
        let undeclared = ok.replace("{\"a\": {", "{\"z\": {");
        assert!(manifest(&undeclared).validate().is_err());
        assert!(serde_json::from_str::<SessionManifest>(&ok.replace("\"runs\"", "\"extra\": 1, \"runs\"")).is_err());
    }
}
