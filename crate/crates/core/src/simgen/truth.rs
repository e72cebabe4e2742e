//! Analytic expectations derived from a [`SimConfig`] without running it.

use std::collections::{BTreeMap, BTreeSet};

use super::config::{Sharing, SimConfig};
use super::engine::op_entry_function;
use crate::model::LockKey;
use crate::staticmap::{CallEdge, CodeFacts, CodeFactsDoc, LockUseSite, SymbolKind, SymbolRecord};

/// Expected key-level classification for one workload pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTruth {
    pub workload_a: String,
    pub workload_b: String,
    pub shared: BTreeSet<LockKey>,
    pub private_a: BTreeSet<LockKey>,
    pub private_b: BTreeSet<LockKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Token {
    Private(usize),
    /// Recycled objects never outlive one operation, so they are never shared.
    Pooled(usize),
    Global,
    Bucket(u64),
}

/// Lock identities each workload touches, grouped by model index.
fn tokens(config: &SimConfig, workload: usize) -> BTreeMap<usize, BTreeSet<Token>> {
    let models = config.model_index();
    let mut out: BTreeMap<usize, BTreeSet<Token>> = BTreeMap::new();
    for u in &config.profile(workload).locks_per_op {
        let mi = models[u.lock.as_str()];
        let model = &config.lock_models[mi];
        let set = out.entry(mi).or_default();
        match model.sharing {
            Sharing::Private if model.recycle => {
                set.insert(Token::Pooled(workload));
            }
            Sharing::Private => {
                set.insert(Token::Private(workload));
            }
            Sharing::SharedGlobal => {
                set.insert(Token::Global);
            }
            Sharing::IncidentalHash => {
                let buckets = u64::from(model.hash_buckets);
                set.extend(u.resources.iter().map(|r| Token::Bucket(r % buckets)));
            }
        }
    }
    out
}

/// Expected shared/private key sets for every pair of workloads that start
/// before the session ends, in `(i, j)` order with `i < j`.
pub fn ground_truth_sharing(config: &SimConfig) -> Vec<PairTruth> {
    let ids = config.workload_ids();
    let present: Vec<usize> = (0..ids.len()).filter(|&i| config.is_present(i)).collect();
    let per: Vec<_> = present.iter().map(|&w| tokens(config, w)).collect();
    let mut out = Vec::new();
    for (x, &i) in present.iter().enumerate() {
        for (y, &j) in present.iter().enumerate().skip(x + 1) {
            let (ta, tb) = (&per[x], &per[y]);
            let mut truth = PairTruth {
                workload_a: ids[i].clone(),
                workload_b: ids[j].clone(),
                shared: BTreeSet::new(),
                private_a: BTreeSet::new(),
                private_b: BTreeSet::new(),
            };
            for (mine, theirs, private) in [(ta, tb, &mut truth.private_a), (tb, ta, &mut truth.private_b)] {
                for (&mi, set) in mine {
                    let key = &config.lock_models[mi].key;
                    let other = theirs.get(&mi);
                    for token in set {
                        if other.is_some_and(|o| o.contains(token)) {
                            truth.shared.insert(key.clone());
                        } else {
                            private.insert(key.clone());
                        }
                    }
                }
            }
            out.push(truth);
        }
    }
    out
}

pub(crate) fn site_line(model: usize) -> u32 {
    10 * (model as u32 + 1)
}

/// File holding the synthetic per-profile operation entry points.
pub const SIM_ENTRY_FILE: &str = "sim/workload.c";

/// Code facts matching the synthetic stacks: each acquiring function holds
/// one lock use per model, and each operation entry calls the functions its
/// profile uses.
pub fn synthetic_code_facts(config: &SimConfig) -> CodeFacts {
    let models = config.model_index();
    let mut doc = CodeFactsDoc::default();
    let mut functions: BTreeMap<&str, (&str, u32, u32)> = BTreeMap::new();
    for (mi, m) in config.lock_models.iter().enumerate() {
        let line = site_line(mi);
        let entry = functions.entry(m.key.function.as_str()).or_insert((m.key.file.as_str(), line, line));
        entry.1 = entry.1.min(line);
        entry.2 = entry.2.max(line);
        doc.lock_uses.push(LockUseSite {
            function: m.key.function.clone(),
            file: m.key.file.clone(),
            line,
            lock_expr: m.key.lock_name.clone(),
            primitive: m.primitive().to_owned(),
            param_like: false,
        });
    }
    for (name, (file, lo, hi)) in functions {
        doc.symbols.push(SymbolRecord {
            name: name.to_owned(),
            kind: SymbolKind::Function,
            file: file.to_owned(),
            start_line: lo - 1,
            end_line: hi + 1,
            type_name: None,
        });
    }
    let mut profiles = vec![&config.worker];
    if config.trasher.name != config.worker.name {
        profiles.push(&config.trasher);
    }
    for (pi, p) in profiles.into_iter().enumerate() {
        let entry = op_entry_function(&p.name);
        doc.symbols.push(SymbolRecord {
            name: entry.clone(),
            kind: SymbolKind::Function,
            file: SIM_ENTRY_FILE.to_owned(),
            start_line: 100 * (pi as u32 + 1),
            end_line: 100 * (pi as u32 + 1) + 50,
            type_name: None,
        });
        for (k, u) in p.locks_per_op.iter().enumerate() {
            let m = &config.lock_models[models[u.lock.as_str()]];
            doc.calls.push(CallEdge {
                caller: entry.clone(),
                callee: m.key.function.clone(),
                site_file: SIM_ENTRY_FILE.to_owned(),
                site_line: 100 * (pi as u32 + 1) + 1 + k as u32,
            });
        }
    }
    CodeFacts::try_from(doc).expect("synthetic facts are consistent by construction")
}
