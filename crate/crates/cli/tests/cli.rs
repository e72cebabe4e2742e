use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lockiso_cli::report::{read_csv, RateRow, ScoreRow, SharingRow};
use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lockiso"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn analyze(manifest: &Path, out: &Path, restrict: &str) -> Output {
    bin()
        .arg("analyze")
        .arg("--manifest")
        .arg(manifest)
        .arg("--out")
        .arg(out)
        .args(["--restrict", restrict])
        .output()
        .unwrap()
}

const STRESS: &str = r#"{
  "seed": 11, "duration_s": 0.004, "trasher_count": 3, "trasher_start_interval_s": 0.001,
  "worker": {"name": "worker", "locks_per_op": [{"lock": "journal"}]},
  "trasher": {"name": "trasher", "locks_per_op": [{"lock": "journal"}]},
  "lock_models": [{"name": "journal", "sharing": "shared_global", "hold_time_ns": {"constant": 1000},
    "key": {"lock_name": "&journal->j_state_lock", "function": "jbd2_journal_start",
            "file": "fs/jbd2/transaction.c", "lock_class": "spinlock"}}]
}"#;

#[test]
fn analyze_writes_all_tables() {
    let out = tempfile::tempdir().unwrap();
    let o = analyze(&fixture("pair_low/manifest.json"), out.path(), "shared");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sharing: Vec<SharingRow> = read_csv(&out.path().join("sharing.csv")).unwrap();
    assert_eq!(sharing.iter().map(|r| r.shared_count).collect::<Vec<_>>(), [0, 0, 1]);
    assert!(sharing.iter().all(|r| r.avg_shared_count == "0.33" && r.cumulative_shared_rate == "226.00"));
    let rates: Vec<RateRow> = read_csv(&out.path().join("rates.csv")).unwrap();
    assert!(rates.iter().any(|r| r.file == "mm/page_alloc.c" && r.function == "rmqueue_bulk"));
    let scores: Vec<ScoreRow> = read_csv(&out.path().join("score.csv")).unwrap();
    assert_eq!(scores.iter().map(|s| s.pair.as_str()).collect::<Vec<_>>(), ["a->b", "b->a", "a<->b"]);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.path().join("meta.json")).unwrap()).unwrap();
    let manifest_hash = hex::encode(Sha256::digest(fs::read(fixture("pair_low/manifest.json")).unwrap()));
    assert_eq!(meta["manifest_sha256"], manifest_hash.as_str());
    assert_eq!(meta["options"]["restrict"], "shared");
}

#[test]
fn restrict_changes_cumulative_rate() {
    let out = tempfile::tempdir().unwrap();
    let manifest = fixture("pair_low/manifest.json");
    assert!(analyze(&manifest, &out.path().join("s"), "shared").status.success());
    assert!(analyze(&manifest, &out.path().join("a"), "all").status.success());
    let s: Vec<SharingRow> = read_csv(&out.path().join("s/sharing.csv")).unwrap();
    let a: Vec<SharingRow> = read_csv(&out.path().join("a/sharing.csv")).unwrap();
    // All scope adds the private pipe mutexes: (40 + 50) / 10 per run over three runs.
    assert_eq!(s[0].cumulative_shared_rate, "226.00");
    assert_eq!(a[0].cumulative_shared_rate, "253.00");
}

#[test]
fn missing_trace_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("ext4_mapping/manifest.json")).unwrap();
    fs::write(dir.path().join("manifest.json"), text).unwrap();
    let o = analyze(&dir.path().join("manifest.json"), &dir.path().join("out"), "shared");
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("fio.run0.trace.jsonl"), "{stderr}");
}

#[test]
fn malformed_manifest_is_user_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.json"), "{\"workloads\": 3}").unwrap();
    let o = analyze(&dir.path().join("m.json"), dir.path(), "shared");
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["analyze"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn resolve_prints_coverage_and_maps_ext4_inode() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["resolve", "--manifest"], &[&fixture("ext4_mapping/manifest.json"), Path::new("--out"), out.path()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("mapping coverage: 1.000 (1/1"));
    let mapping = fs::read_to_string(out.path().join("mapping.csv")).unwrap();
    assert!(mapping.contains("ext4_map_blocks,fs/ext4/inode.c,ext4_inode_info,direct"), "{mapping}");
}

#[test]
fn resolve_with_no_locks_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.jsonl"), "").unwrap();
    fs::write(dir.path().join("s.txt"), "").unwrap();
    fs::copy(fixture("ext4_mapping/facts.json"), dir.path().join("facts.json")).unwrap();
    fs::write(
        dir.path().join("m.json"),
        r#"{"workloads": [{"id": "w", "platform": "host"}],
            "runs": [{"index": 0, "duration_s": 1.0, "files": {"w": {"trace": "t.jsonl", "stacks": "s.txt"}}}],
            "code_facts": "facts.json"}"#,
    )
    .unwrap();
    let o = run(&["resolve", "--manifest"], &[&dir.path().join("m.json"), Path::new("--out"), &dir.path().join("o")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no lock mappings"));
}

fn digest_dir(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), hex::encode(Sha256::digest(fs::read(&p).unwrap())))
        })
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_is_deterministic_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stress.json");
    fs::write(&cfg, STRESS).unwrap();
    for name in ["one", "two"] {
        let o = run(&["simulate"], &[&cfg, Path::new("--out"), &dir.path().join(name)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let one = digest_dir(&dir.path().join("one"));
    assert_eq!(one.len(), 4 * 2 + 3);
    assert_eq!(one, digest_dir(&dir.path().join("two")));

    let timeline = fs::read_to_string(dir.path().join("one/timeline.csv")).unwrap();
    let lat: Vec<f64> = timeline.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(lat.windows(2).all(|w| w[1] >= w[0]), "{lat:?}");

    // A constant-hold config does not consume randomness, so use one that does.
    let noisy = STRESS.replace(r#"{"constant": 1000}"#, r#"{"uniform": {"lo": 500, "hi": 1500}}"#);
    fs::write(&cfg, noisy).unwrap();
    run(&["simulate"], &[&cfg, Path::new("--out"), &dir.path().join("a")]);
    run(&["simulate", "--seed", "99"], &[&cfg, Path::new("--out"), &dir.path().join("b")]);
    assert_ne!(digest_dir(&dir.path().join("a")), digest_dir(&dir.path().join("b")));

    let out = dir.path().join("report");
    assert!(analyze(&dir.path().join("one/manifest.json"), &out, "shared").status.success());
    let report = run(&["report", "--out"], &[&out]);
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("# sharing.csv (6 rows)") && text.contains("worker,trasher-1,0,1,1.00"), "{text}");
}

#[test]
fn zero_duration_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.json");
    fs::write(&cfg, STRESS.replace("\"duration_s\": 0.004", "\"duration_s\": 0")).unwrap();
    let o = run(&["simulate"], &[&cfg, Path::new("--out"), &dir.path().join("o")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duration_s"));
}

#[test]
fn report_without_tables_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["report", "--out"], &[dir.path()]).status.code(), Some(1));
}
