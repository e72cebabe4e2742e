use std::collections::BTreeMap;

use super::rates::SubsystemMap;
use super::sharing::{session_index, shared_private};
use super::{AnalysisError, KeyOf};
use crate::model::WorkloadTrace;

/// How exposed workload `a` is to workload `b`: the fraction of `a`'s
/// acquisitions that land on instances `b` also acquired.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationScore {
    pub from: String,
    pub to: String,
    pub p_shared: f64,
    /// Shared acquisitions per subsystem over `a`'s total; sums to `p_shared`.
    pub per_subsystem: BTreeMap<String, f64>,
}

pub fn isolation_score(
    a: &WorkloadTrace,
    b: &WorkloadTrace,
    key_of: &impl KeyOf,
    subsystems: &SubsystemMap,
) -> Result<IsolationScore, AnalysisError> {
    let report = shared_private(a, b)?;
    let total = a.total_acquisitions();
    if total == 0 {
        return Err(AnalysisError::EmptyTrace(a.workload_id.clone()));
    }
    let index = session_index(a, b);
    let mut shared = 0u64;
    let mut by_subsystem: BTreeMap<String, u64> = BTreeMap::new();
    for event in &a.events {
        if report.shared_instances.contains(&index.instance_of(event)) {
            shared += event.acquire_count;
            let key = key_of.key_of(a, event);
            *by_subsystem.entry(subsystems.subsystem_of(&key.file)?).or_default() += event.acquire_count;
        }
    }
    Ok(IsolationScore {
        from: a.workload_id.clone(),
        to: b.workload_id.clone(),
        p_shared: shared as f64 / total as f64,
        per_subsystem: by_subsystem
            .into_iter()
            .map(|(s, n)| (s, n as f64 / total as f64))
            .collect(),
    })
}

/// Mean of the two directional exposures.
pub fn symmetric_p_shared(ab: &IsolationScore, ba: &IsolationScore) -> f64 {
    (ab.p_shared + ba.p_shared) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::StackKeys;
    use crate::model::{test_event, Platform, StackId, StackTrace};
    use proptest::prelude::*;

    fn trace(id: &str, events: &[(u64, u64)]) -> WorkloadTrace {
        WorkloadTrace {
            workload_id: id.into(),
            platform: Platform::Runc,
            run_index: 0,
            duration_s: 2.0,
            events: events
                .iter()
                .map(|&(addr, count)| {
                    let mut e = test_event(addr, 0);
                    e.acquire_count = count;
                    e
                })
                .collect(),
            stacks: [(StackId(1), StackTrace { stack_id: StackId(1), frames: vec!["f".into()] })].into(),
            init_records: vec![],
        }
    }

    fn p(a: &WorkloadTrace, b: &WorkloadTrace) -> f64 {
        isolation_score(a, b, &StackKeys, &SubsystemMap::default()).unwrap().p_shared
    }

    #[test]
    fn bounds_and_fractions() {
        let a = trace("a", &[(1, 2), (2, 3)]);
        assert_eq!(p(&a, &trace("b", &[(9, 1)])), 0.0);
        assert_eq!(p(&a, &trace("b", &[(1, 1), (2, 1)])), 1.0);
        assert_eq!(p(&a, &trace("b", &[(1, 1)])), 0.4);
    }

    #[test]
    fn per_subsystem_partitions_numerator() {
        let a = trace("a", &[(1, 2), (2, 3)]);
        let s = isolation_score(&a, &trace("b", &[(1, 1)]), &StackKeys, &SubsystemMap::default()).unwrap();
        assert_eq!(s.per_subsystem, [("unknown".to_string(), 0.4)].into());
    }

    #[test]
    fn empty_trace_errors() {
        let a = trace("a", &[]);
        assert_eq!(
            isolation_score(&a, &trace("b", &[(1, 1)]), &StackKeys, &SubsystemMap::default()),
            Err(AnalysisError::EmptyTrace("a".into()))
        );
    }

    #[test]
    fn exposure_is_directional() {
        let small = trace("small", &[(1, 1)]);
        let big = trace("big", &[(1, 1), (2, 9)]);
        let ab = isolation_score(&small, &big, &StackKeys, &SubsystemMap::default()).unwrap();
        let ba = isolation_score(&big, &small, &StackKeys, &SubsystemMap::default()).unwrap();
        assert_eq!(ab.p_shared, 1.0);
        assert_eq!(ba.p_shared, 0.1);
        assert_eq!(symmetric_p_shared(&ab, &ba), 0.55);
    }

    proptest! {
        #[test]
        fn scaling_counts_keeps_p_shared(
            ea in proptest::collection::vec((0u64..6, 1u64..1000), 1..12),
            eb in proptest::collection::vec((0u64..6, 1u64..1000), 0..12),
            k in 2u64..50,
        ) {
            let a = trace("a", &ea);
            let b = trace("b", &eb);
            let scaled: Vec<_> = ea.iter().map(|&(x, c)| (x, c * k)).collect();
            let p1 = p(&a, &b);
            let p2 = p(&trace("a", &scaled), &b);
            prop_assert!((0.0..=1.0).contains(&p1));
            prop_assert!((p1 - p2).abs() < 1e-12);
        }
    }
}
