//! Lock-to-object mapping and wrapper detection.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::facts::{CodeFacts, LockDefinition, LockUseSite};
use super::resolve::normalize_lock_name;
use super::FactsError;
use crate::model::LockKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    /// The lock name has a single definition inside a record.
    Direct,
    /// A generic name, located through the definition of the site's lock expression.
    ViaDefinition,
    /// A system-wide lock defined outside any record.
    Global,
    Unresolved,
}

impl Confidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::Direct => "direct",
            Confidence::ViaDefinition => "via_definition",
            Confidence::Global => "global",
            Confidence::Unresolved => "unresolved",
        }
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectMapping {
    pub key: LockKey,
    /// Containing record; present for `Direct` and `ViaDefinition`.
    pub object_name: Option<String>,
    pub confidence: Confidence,
}

/// Names treated as generic even when the bundle defines them only once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericNames(pub BTreeSet<String>);

impl Default for GenericNames {
    fn default() -> Self {
        Self(["lock", "s_lock", "i_lock"].into_iter().map(String::from).collect())
    }
}

impl GenericNames {
    pub fn is_generic(&self, normalized: &str, facts: &CodeFacts) -> bool {
        self.0.contains(normalized) || facts.definitions(normalized).nth(1).is_some()
    }
}

fn single<'a>(mut defs: impl Iterator<Item = &'a LockDefinition>) -> Option<&'a LockDefinition> {
    let first = defs.next()?;
    defs.next().is_none().then_some(first)
}

/// Definitions recorded for the site's own lock expression, first verbatim
/// (`&fs->lock`) and then without address-of and whitespace (`fs->lock`).
fn expression_definition<'a>(site: &LockUseSite, facts: &'a CodeFacts) -> Option<&'a LockDefinition> {
    let stripped: String = site
        .lock_expr
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '&')
        .collect();
    single(facts.definitions(&site.lock_expr)).or_else(|| single(facts.definitions(&stripped)))
}

pub fn map_lock_to_object(
    key: &LockKey,
    site: Option<&LockUseSite>,
    facts: &CodeFacts,
    generic: &GenericNames,
) -> ObjectMapping {
    let name = normalize_lock_name(&key.lock_name);
    let mapped = |object: Option<&str>, confidence| ObjectMapping {
        key: key.clone(),
        object_name: object.map(str::to_owned),
        confidence,
    };
    let unresolved = mapped(None, Confidence::Unresolved);

    if !generic.is_generic(&name, facts) {
        let Some(def) = single(facts.definitions(&name)) else {
            return unresolved;
        };
        return match facts.containing_record(&def.file, def.line) {
            Some(rec) => mapped(Some(&rec.name), Confidence::Direct),
            None if facts.globals().contains(&name) => mapped(None, Confidence::Global),
            None => unresolved,
        };
    }

    site.and_then(|s| expression_definition(s, facts))
        .and_then(|def| facts.containing_record(&def.file, def.line))
        .map_or(unresolved.clone(), |rec| mapped(Some(&rec.name), Confidence::ViaDefinition))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MappingCoverage {
    pub total: usize,
    /// Everything but `Unresolved`, globals included.
    pub mapped: usize,
    /// Only mappings that name a containing object.
    pub with_object: usize,
}

impl MappingCoverage {
    pub fn fraction(&self) -> f64 {
        self.mapped as f64 / self.total as f64
    }

    pub fn object_fraction(&self) -> f64 {
        self.with_object as f64 / self.total as f64
    }
}

pub fn coverage_breakdown(mappings: &[ObjectMapping]) -> Result<MappingCoverage, FactsError> {
    if mappings.is_empty() {
        return Err(FactsError::EmptyInput);
    }
    Ok(MappingCoverage {
        total: mappings.len(),
        mapped: mappings.iter().filter(|m| m.confidence != Confidence::Unresolved).count(),
        with_object: mappings.iter().filter(|m| m.object_name.is_some()).count(),
    })
}

/// Fraction of mappings that are not unresolved.
pub fn mapping_coverage(mappings: &[ObjectMapping]) -> Result<f64, FactsError> {
    coverage_breakdown(mappings).map(|c| c.fraction())
}

/// Functions that acquire a lock handed to them as a parameter, plus any the
/// bundle lists explicitly.
pub fn detect_wrappers(facts: &CodeFacts) -> BTreeSet<String> {
    facts
        .lock_uses()
        .iter()
        .filter(|u| u.param_like)
        .map(|u| u.function.clone())
        .chain(facts.wrappers().iter().cloned())
        .collect()
}
