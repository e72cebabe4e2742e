//! Recovery of the exact acquisition site for a (possibly truncated) stack.

use std::collections::HashSet;

use thiserror::Error;

use super::facts::{CodeFacts, LockUseSite};
use crate::model::StackTrace;

pub const DEFAULT_MAX_DEPTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("no site acquiring `{lock_name}` via {primitive} within {max_depth} calls of `{start}`")]
    NotResolved {
        lock_name: String,
        primitive: String,
        start: String,
        max_depth: usize,
    },
    #[error("sites {0:?} and {1:?} tie at the same file and line")]
    AmbiguousSite(Box<LockUseSite>, Box<LockUseSite>),
    #[error("max_depth must be at least 1")]
    InvalidDepth,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub site: LockUseSite,
    /// Call distance from the search start; 0 when a recorded frame holds the site.
    pub depth: usize,
}

/// Reduces a lock expression or traced lock name to its final member name:
/// `&journal->j_state_lock` and `j_state_lock` both become `j_state_lock`.
pub fn normalize_lock_name(expr: &str) -> String {
    let cleaned: String = expr
        .chars()
        .filter(|c| !c.is_whitespace() && !matches!(c, '&' | '*' | '(' | ')'))
        .collect();
    let tail = cleaned.rsplit("->").next().unwrap_or(&cleaned);
    tail.rsplit('.').next().unwrap_or(tail).to_owned()
}

/// Whether `site` acquires the traced lock through the traced primitive.
pub fn site_matches(site: &LockUseSite, normalized_name: &str, primitive: &str) -> bool {
    site.primitive == primitive && normalize_lock_name(&site.lock_expr) == normalized_name
}

fn pick(mut candidates: Vec<&LockUseSite>) -> Result<Option<LockUseSite>, ResolveError> {
    candidates.sort_by(|a, b| (&a.file, a.line).cmp(&(&b.file, b.line)).then_with(|| a.cmp(b)));
    candidates.dedup();
    match candidates.as_slice() {
        [] => Ok(None),
        [first, second, ..] if first.file == second.file && first.line == second.line => Err(
            ResolveError::AmbiguousSite(Box::new((*first).clone()), Box::new((*second).clone())),
        ),
        [first, ..] => Ok(Some((*first).clone())),
    }
}

/// Finds the site that acquired `lock_name` with `primitive`.
///
/// Recorded frames are checked innermost first; if none of them holds a
/// matching site, a breadth-first search runs over outgoing calls from the
/// outermost recorded frame. Wrapper functions are visited but never
/// expanded. Among matches at the shallowest depth the lowest
/// `(file, line)` wins.
pub fn resolve_stack(
    stack: &StackTrace,
    lock_name: &str,
    primitive: &str,
    facts: &CodeFacts,
    max_depth: usize,
) -> Result<Resolution, ResolveError> {
    if max_depth == 0 {
        return Err(ResolveError::InvalidDepth);
    }
    let target = normalize_lock_name(lock_name);
    let matching_in = |function: &str| -> Vec<&LockUseSite> {
        facts
            .uses_in(function)
            .filter(|s| site_matches(s, &target, primitive))
            .collect()
    };

    for frame in &stack.frames {
        if let Some(site) = pick(matching_in(frame))? {
            return Ok(Resolution { site, depth: 0 });
        }
    }

    let start = stack.outermost();
    let mut visited: HashSet<&str> = HashSet::from([start]);
    let mut frontier: Vec<&str> = vec![start];
    for depth in 1..=max_depth {
        let mut next = Vec::new();
        for &function in &frontier {
            if facts.is_wrapper(function) {
                continue;
            }
            for callee in facts.callees(function) {
                if visited.insert(callee.as_str()) {
                    next.push(callee.as_str());
                }
            }
        }
        if next.is_empty() {
            break;
        }
        let candidates: Vec<&LockUseSite> = next.iter().flat_map(|f| matching_in(f)).collect();
        if let Some(site) = pick(candidates)? {
            return Ok(Resolution { site, depth });
        }
        frontier = next;
    }

    Err(ResolveError::NotResolved {
        lock_name: lock_name.to_owned(),
        primitive: primitive.to_owned(),
        start: start.to_owned(),
        max_depth,
    })
}
