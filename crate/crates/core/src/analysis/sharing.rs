use std::collections::BTreeSet;

use serde::Serialize;

use super::rates::{cumulative_rate, lock_rates};
use super::{AnalysisError, KeyOf, RateScope};
use crate::model::{InitIndex, LockInstance, LockKey, WorkloadTrace};

/// Lock instances two co-running workloads acquired in one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingReport {
    pub workload_a: String,
    pub workload_b: String,
    pub run_index: u32,
    pub shared_instances: BTreeSet<LockInstance>,
    pub private_a: BTreeSet<LockInstance>,
    pub private_b: BTreeSet<LockInstance>,
}

impl SharingReport {
    pub fn shared_count(&self) -> usize {
        self.shared_instances.len()
    }

    /// Lifts the instance-level classification to lock keys. A key lands in
    /// `shared` if any of its events touched a shared instance and in a
    /// private set if any touched a private one, so it may be in both.
    pub fn keys(&self, a: &WorkloadTrace, b: &WorkloadTrace, key_of: &impl KeyOf) -> KeySharing {
        let index = session_index(a, b);
        let mut out = KeySharing::default();
        for (trace, private, private_keys) in [
            (a, &self.private_a, &mut out.private_a),
            (b, &self.private_b, &mut out.private_b),
        ] {
            for event in &trace.events {
                let inst = index.instance_of(event);
                if self.shared_instances.contains(&inst) {
                    out.shared.insert(key_of.key_of(trace, event));
                } else {
                    debug_assert!(private.contains(&inst));
                    private_keys.insert(key_of.key_of(trace, event));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeySharing {
    pub shared: BTreeSet<LockKey>,
    pub private_a: BTreeSet<LockKey>,
    pub private_b: BTreeSet<LockKey>,
}

/// Generation index over the init records of both traces. Tracers see lock
/// initialization system-wide, so the union is the session's view.
pub fn session_index(a: &WorkloadTrace, b: &WorkloadTrace) -> InitIndex {
    InitIndex::new(a.init_records.iter().chain(&b.init_records))
}

fn instances(trace: &WorkloadTrace, index: &InitIndex) -> BTreeSet<LockInstance> {
    trace.events.iter().map(|e| index.instance_of(e)).collect()
}

pub fn shared_private(a: &WorkloadTrace, b: &WorkloadTrace) -> Result<SharingReport, AnalysisError> {
    if a.run_index != b.run_index {
        return Err(AnalysisError::SessionMismatch { a: a.run_index, b: b.run_index });
    }
    let index = session_index(a, b);
    let in_a = instances(a, &index);
    let in_b = instances(b, &index);
    let shared: BTreeSet<_> = in_a.intersection(&in_b).copied().collect();
    Ok(SharingReport {
        workload_a: a.workload_id.clone(),
        workload_b: b.workload_id.clone(),
        run_index: a.run_index,
        private_a: in_a.difference(&shared).copied().collect(),
        private_b: in_b.difference(&shared).copied().collect(),
        shared_instances: shared,
    })
}

/// Mean shared-set size over runs, at full precision.
pub fn average_shared_count(reports: &[SharingReport]) -> Result<f64, AnalysisError> {
    if reports.is_empty() {
        return Err(AnalysisError::EmptyInput("average_shared_count"));
    }
    let total: usize = reports.iter().map(SharingReport::shared_count).sum();
    Ok(total as f64 / reports.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSharing {
    pub run_index: u32,
    pub shared_count: usize,
    pub cumulative_rate: f64,
}

/// Per-pair figures across runs: average shared count and the cumulative
/// access rate summed over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub workload_a: String,
    pub workload_b: String,
    pub scope: RateScope,
    pub runs: Vec<RunSharing>,
    pub avg_shared_count: f64,
    pub cumulative_shared_rate: f64,
}

/// `runs` pairs the two workloads' traces run by run. Per-lock rates are
/// taken over both workloads' acquisitions; with [`RateScope::Shared`] only
/// keys with a shared instance in that run contribute.
pub fn summarize_pair(
    runs: &[(&WorkloadTrace, &WorkloadTrace)],
    key_of: &impl KeyOf,
    scope: RateScope,
) -> Result<PairSummary, AnalysisError> {
    let (first_a, first_b) = runs.first().ok_or(AnalysisError::EmptyInput("summarize_pair"))?;
    let mut reports = Vec::with_capacity(runs.len());
    let mut per_run = Vec::with_capacity(runs.len());
    for (a, b) in runs {
        let report = shared_private(a, b)?;
        let mut rates = lock_rates(a, key_of);
        rates.extend(lock_rates(b, key_of));
        let restrict = match scope {
            RateScope::Shared => Some(report.keys(a, b, key_of).shared),
            RateScope::All => None,
        };
        per_run.push(RunSharing {
            run_index: report.run_index,
            shared_count: report.shared_count(),
            cumulative_rate: cumulative_rate(&rates, restrict.as_ref()),
        });
        reports.push(report);
    }
    Ok(PairSummary {
        workload_a: first_a.workload_id.clone(),
        workload_b: first_b.workload_id.clone(),
        scope,
        avg_shared_count: average_shared_count(&reports)?,
        cumulative_shared_rate: per_run.iter().map(|r| r.cumulative_rate).sum(),
        runs: per_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{format2, StackKeys};
    use crate::model::{test_event, InitRecord, Platform, StackId, StackTrace};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn trace(id: &str, run: u32, addrs: &[(u64, u64)], inits: &[(u64, u64)]) -> WorkloadTrace {
        let stacks: BTreeMap<_, _> = [(
            StackId(1),
            StackTrace { stack_id: StackId(1), frames: vec!["_raw_spin_lock".into(), "f".into()] },
        )]
        .into();
        WorkloadTrace {
            workload_id: id.into(),
            platform: Platform::Host,
            run_index: run,
            duration_s: 1.0,
            events: addrs.iter().map(|&(a, t)| test_event(a, t)).collect(),
            stacks,
            init_records: inits.iter().map(|&(a, t)| InitRecord { lock_addr: a, t_ns: t }).collect(),
        }
    }

    fn inst(addr: u64) -> LockInstance {
        LockInstance { lock_addr: addr, generation: 0 }
    }

    #[test]
    fn overlapping_addresses() {
        let a = trace("a", 0, &[(0xA, 0), (0xB, 0)], &[]);
        let b = trace("b", 0, &[(0xB, 0), (0xC, 0)], &[]);
        let r = shared_private(&a, &b).unwrap();
        assert_eq!(r.shared_instances, [inst(0xB)].into());
        assert_eq!(r.private_a, [inst(0xA)].into());
        assert_eq!(r.private_b, [inst(0xC)].into());
    }

    #[test]
    fn disjoint_addresses_share_nothing() {
        let a = trace("a", 0, &[(0xA, 0)], &[]);
        let b = trace("b", 0, &[(0xC, 0)], &[]);
        assert!(shared_private(&a, &b).unwrap().shared_instances.is_empty());
    }

    #[test]
    fn reinitialized_address_is_not_shared() {
        // b's trace carries the init; the union still splits a's instance off.
        let a = trace("a", 0, &[(0xA, 10)], &[]);
        let b = trace("b", 0, &[(0xA, 30)], &[(0xA, 20)]);
        let r = shared_private(&a, &b).unwrap();
        assert!(r.shared_instances.is_empty());
        assert_eq!(r.private_a, [inst(0xA)].into());
        assert_eq!(r.private_b, [LockInstance { lock_addr: 0xA, generation: 1 }].into());
    }

    #[test]
    fn run_mismatch_is_rejected() {
        let a = trace("a", 0, &[], &[]);
        let b = trace("b", 1, &[], &[]);
        assert_eq!(shared_private(&a, &b), Err(AnalysisError::SessionMismatch { a: 0, b: 1 }));
    }

    fn report_with(n: usize) -> SharingReport {
        SharingReport {
            workload_a: "a".into(),
            workload_b: "b".into(),
            run_index: 0,
            shared_instances: (0..n as u64).map(inst).collect(),
            private_a: BTreeSet::new(),
            private_b: BTreeSet::new(),
        }
    }

    #[test]
    fn averages_match_reporting_convention() {
        let avg = |sizes: &[usize]| {
            average_shared_count(&sizes.iter().map(|&n| report_with(n)).collect::<Vec<_>>()).unwrap()
        };
        assert_eq!(format2(avg(&[0, 0, 1])), "0.33");
        assert_eq!(avg(&[4, 4, 4]), 4.0);
        assert_eq!(format2(avg(&[15, 16, 16])), "15.67");
        assert_eq!(average_shared_count(&[]), Err(AnalysisError::EmptyInput("average_shared_count")));
    }

    #[test]
    fn summary_restricts_rate_to_shared_keys() {
        let mut a = trace("a", 0, &[(0xA, 0), (0xB, 0)], &[]);
        let mut b = trace("b", 0, &[(0xB, 0)], &[]);
        a.events[0].lock_name = "private_lock".into();
        a.events[0].acquire_count = 5;
        a.events[1].acquire_count = 3;
        b.events[0].acquire_count = 4;
        let shared = summarize_pair(&[(&a, &b)], &StackKeys, RateScope::Shared).unwrap();
        assert_eq!(shared.cumulative_shared_rate, 7.0);
        let all = summarize_pair(&[(&a, &b)], &StackKeys, RateScope::All).unwrap();
        assert_eq!(all.cumulative_shared_rate, 12.0);
        assert_eq!(all.avg_shared_count, 1.0);
    }

    fn brute_force(a: &WorkloadTrace, b: &WorkloadTrace) -> BTreeSet<(u64, u32)> {
        let inits: Vec<_> = a.init_records.iter().chain(&b.init_records).collect();
        let gen = |addr: u64, t: u64| {
            let mut times: Vec<u64> = inits.iter().filter(|r| r.lock_addr == addr).map(|r| r.t_ns).collect();
            times.sort();
            times.dedup();
            times.iter().filter(|&&x| x <= t).count() as u32
        };
        let mut out = BTreeSet::new();
        for ea in &a.events {
            for eb in &b.events {
                let ka = (ea.lock_addr, gen(ea.lock_addr, ea.first_seen_ns));
                let kb = (eb.lock_addr, gen(eb.lock_addr, eb.first_seen_ns));
                if ka == kb {
                    out.insert(ka);
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_partitions(
            ea in proptest::collection::vec((0u64..6, 0u64..100), 0..15),
            eb in proptest::collection::vec((0u64..6, 0u64..100), 0..15),
            ia in proptest::collection::vec((0u64..6, 0u64..100), 0..4),
            ib in proptest::collection::vec((0u64..6, 0u64..100), 0..4),
        ) {
            let mut ia = ia; ia.sort_by_key(|x| x.1);
            let mut ib = ib; ib.sort_by_key(|x| x.1);
            let a = trace("a", 0, &ea, &ia);
            let b = trace("b", 0, &eb, &ib);
            let r = shared_private(&a, &b).unwrap();
            let got: BTreeSet<_> = r.shared_instances.iter().map(|i| (i.lock_addr, i.generation)).collect();
            prop_assert_eq!(got, brute_force(&a, &b));
            let rev = shared_private(&b, &a).unwrap();
            prop_assert_eq!(&rev.shared_instances, &r.shared_instances);
            prop_assert!(r.shared_instances.is_disjoint(&r.private_a));
            prop_assert!(r.shared_instances.is_disjoint(&r.private_b));
            let index = session_index(&a, &b);
            for e in &a.events {
                let i = index.instance_of(e);
                prop_assert!(r.shared_instances.contains(&i) ^ r.private_a.contains(&i));
            }
        }
    }
}
