use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FactsError;
use crate::model::is_primitive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Function,
    Record,
    GlobalVariable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub name: String,
    pub kind: SymbolKind,
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub type_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: String,
    pub callee: String,
    #[serde(rename = "file")]
    pub site_file: String,
    #[serde(rename = "line")]
    pub site_line: u32,
}

/// A place in the source where a lock primitive is called.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LockUseSite {
    pub function: String,
    pub file: String,
    pub line: u32,
    pub lock_expr: String,
    pub primitive: String,
    /// The lock expression is a formal parameter of `function`.
    #[serde(default)]
    pub param_like: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockDefinition {
    pub name: String,
    pub file: String,
    pub line: u32,
}

/// The serialized bundle, exactly as exchanged on disk.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeFactsDoc {
    #[serde(default)]
    pub symbols: Vec<SymbolRecord>,
    #[serde(default)]
    pub calls: Vec<CallEdge>,
    #[serde(default)]
    pub lock_uses: Vec<LockUseSite>,
    #[serde(default)]
    pub wrappers: Vec<String>,
    #[serde(default)]
    pub globals: Vec<String>,
    #[serde(default)]
    pub lock_definitions: Vec<LockDefinition>,
}

/// Validated, indexed code facts. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct CodeFacts {
    doc: CodeFactsDoc,
    wrappers: BTreeSet<String>,
    globals: BTreeSet<String>,
    function_files: HashMap<String, String>,
    callees: HashMap<String, Vec<String>>,
    uses_by_function: HashMap<String, Vec<usize>>,
    defs_by_name: HashMap<String, Vec<usize>>,
    records_by_file: HashMap<String, Vec<usize>>,
}

pub fn load_code_facts(path: &Path) -> Result<CodeFacts, FactsError> {
    let text = fs::read_to_string(path).map_err(|e| FactsError::Io {
        path: path.to_owned(),
        source: e,
    })?;
    CodeFacts::from_json(&text)
}

impl CodeFacts {
    pub fn from_json(text: &str) -> Result<Self, FactsError> {
        let doc: CodeFactsDoc =
            serde_json::from_str(text).map_err(|e| FactsError::Schema(e.to_string()))?;
        Self::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("code facts serialize")
    }

    pub fn doc(&self) -> &CodeFactsDoc {
        &self.doc
    }

    pub fn symbols(&self) -> &[SymbolRecord] {
        &self.doc.symbols
    }

    pub fn calls(&self) -> &[CallEdge] {
        &self.doc.calls
    }

    pub fn lock_uses(&self) -> &[LockUseSite] {
        &self.doc.lock_uses
    }

    pub fn lock_definitions(&self) -> &[LockDefinition] {
        &self.doc.lock_definitions
    }

    pub fn wrappers(&self) -> &BTreeSet<String> {
        &self.wrappers
    }

    pub fn globals(&self) -> &BTreeSet<String> {
        &self.globals
    }

    pub fn is_wrapper(&self, function: &str) -> bool {
        self.wrappers.contains(function)
    }

    /// Source file of a function symbol.
    pub fn function_file(&self, function: &str) -> Option<&str> {
        self.function_files.get(function).map(String::as_str)
    }

    /// Distinct callees in bundle order.
    pub fn callees(&self, function: &str) -> &[String] {
        self.callees.get(function).map_or(&[], Vec::as_slice)
    }

    pub fn uses_in(&self, function: &str) -> impl Iterator<Item = &LockUseSite> {
        self.uses_by_function
            .get(function)
            .into_iter()
            .flatten()
            .map(|&i| &self.doc.lock_uses[i])
    }

    pub fn definitions(&self, name: &str) -> impl Iterator<Item = &LockDefinition> {
        self.defs_by_name
            .get(name)
            .into_iter()
            .flatten()
            .map(|&i| &self.doc.lock_definitions[i])
    }

    /// Innermost record symbol in `file` whose line range contains `line`.
    pub fn containing_record(&self, file: &str, line: u32) -> Option<&SymbolRecord> {
        self.records_by_file
            .get(file)
            .into_iter()
            .flatten()
            .map(|&i| &self.doc.symbols[i])
            .filter(|s| s.start_line <= line && line <= s.end_line)
            .min_by_key(|s| (s.end_line - s.start_line, s.start_line, s.name.as_str()))
    }
}

impl TryFrom<CodeFactsDoc> for CodeFacts {
    type Error = FactsError;

    fn try_from(doc: CodeFactsDoc) -> Result<Self, Self::Error> {
        let dangling = |kind: &'static str, name: &str| FactsError::DanglingReference {
            kind,
            name: name.to_owned(),
        };

        let mut seen = HashSet::new();
        let mut function_files = HashMap::new();
        let mut records_by_file: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, s) in doc.symbols.iter().enumerate() {
            if s.start_line > s.end_line {
                return Err(FactsError::Schema(format!(
                    "symbol `{}` in {} has start_line {} after end_line {}",
                    s.name, s.file, s.start_line, s.end_line
                )));
            }
            if !seen.insert((s.name.as_str(), s.file.as_str(), s.start_line)) {
                return Err(FactsError::Schema(format!(
                    "duplicate symbol `{}` at {}:{}",
                    s.name, s.file, s.start_line
                )));
            }
            match s.kind {
                SymbolKind::Function => {
                    function_files.entry(s.name.clone()).or_insert_with(|| s.file.clone());
                }
                SymbolKind::Record => records_by_file.entry(s.file.clone()).or_default().push(i),
                SymbolKind::GlobalVariable => {}
            }
        }

        let mut callees: HashMap<String, Vec<String>> = HashMap::new();
        for c in &doc.calls {
            if !function_files.contains_key(&c.caller) {
                return Err(dangling("call caller", &c.caller));
            }
            let list = callees.entry(c.caller.clone()).or_default();
            if !list.contains(&c.callee) {
                list.push(c.callee.clone());
            }
        }

        let mut uses_by_function: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, u) in doc.lock_uses.iter().enumerate() {
            if !is_primitive(&u.primitive) {
                return Err(FactsError::Schema(format!(
                    "lock use at {}:{} has unknown primitive `{}`",
                    u.file, u.line, u.primitive
                )));
            }
            if !function_files.contains_key(&u.function) {
                return Err(dangling("lock use function", &u.function));
            }
            uses_by_function.entry(u.function.clone()).or_default().push(i);
        }

        let mut defs_by_name: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, d) in doc.lock_definitions.iter().enumerate() {
            defs_by_name.entry(d.name.clone()).or_default().push(i);
        }

        let wrappers: BTreeSet<String> = doc.wrappers.iter().cloned().collect();
        if let Some(w) = wrappers.iter().find(|w| !function_files.contains_key(*w)) {
            return Err(dangling("wrapper", w));
        }
        let globals: BTreeSet<String> = doc.globals.iter().cloned().collect();
        if let Some(g) = globals.iter().find(|g| !defs_by_name.contains_key(*g)) {
            return Err(dangling("global", g));
        }

        Ok(CodeFacts {
            doc,
            wrappers,
            globals,
            function_files,
            callees,
            uses_by_function,
            defs_by_name,
            records_by_file,
        })
    }
}

#[cfg(test)]
pub(crate) fn function(name: &str, file: &str, start: u32, end: u32) -> SymbolRecord {
    SymbolRecord {
        name: name.into(),
        kind: SymbolKind::Function,
        file: file.into(),
        start_line: start,
        end_line: end,
        type_name: None,
    }
}

#[cfg(test)]
pub(crate) fn record(name: &str, file: &str, start: u32, end: u32) -> SymbolRecord {
    SymbolRecord { kind: SymbolKind::Record, ..function(name, file, start, end) }
}
