use super::facts::{CodeFacts, LockUseSite};
use super::resolve::{resolve_stack, Resolution, ResolveError, DEFAULT_MAX_DEPTH};
use crate::analysis::{KeyOf, UNKNOWN_FILE};
use crate::model::{LockEvent, LockKey, WorkloadTrace};

/// Lock keys backed by a code-facts bundle. Events whose stack resolves to
/// a site take that site's function and file; others fall back to the
/// acquiring frame and the file the bundle records for it.
#[derive(Debug, Clone, Copy)]
pub struct FactsKeys<'a> {
    pub facts: &'a CodeFacts,
    pub max_depth: usize,
}

impl<'a> FactsKeys<'a> {
    pub fn new(facts: &'a CodeFacts) -> Self {
        Self { facts, max_depth: DEFAULT_MAX_DEPTH }
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn resolve(&self, trace: &WorkloadTrace, event: &LockEvent) -> Result<Resolution, ResolveError> {
        let stack = trace.stack_of(event).ok_or_else(|| ResolveError::NotResolved {
            lock_name: event.lock_name.clone(),
            primitive: event.primitive.clone(),
            start: format!("<missing stack {}>", event.stack_id),
            max_depth: self.max_depth,
        })?;
        resolve_stack(stack, &event.lock_name, &event.primitive, self.facts, self.max_depth)
    }

    /// Key for an event given its (optional) resolved site.
    pub fn key_with_site(&self, trace: &WorkloadTrace, event: &LockEvent, site: Option<&LockUseSite>) -> LockKey {
        let (function, file) = match site {
            Some(s) => (s.function.clone(), s.file.clone()),
            None => {
                let function = trace
                    .stack_of(event)
                    .map(|st| st.acquiring_function().unwrap_or(st.innermost()).to_owned())
                    .unwrap_or_default();
                let file = self.facts.function_file(&function).unwrap_or(UNKNOWN_FILE).to_owned();
                (function, file)
            }
        };
        LockKey::new(event.lock_name.clone(), function, file, event.lock_class)
    }
}

impl KeyOf for FactsKeys<'_> {
    fn key_of(&self, trace: &WorkloadTrace, event: &LockEvent) -> LockKey {
        let resolved = self.resolve(trace, event).ok();
        self.key_with_site(trace, event, resolved.as_ref().map(|r| &r.site))
    }
}
