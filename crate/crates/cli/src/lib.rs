//! Command implementations behind the `lockiso` binary.

pub mod commands;
pub mod manifest;
pub mod report;

use std::fmt;

/// A broken internal invariant, as opposed to bad input. Maps to exit code 2.
#[derive(Debug)]
pub struct InternalError(pub String);

impl fmt::Display for InternalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal error: {}", self.0)
    }
}

impl std::error::Error for InternalError {}

/// Exit code for a failed command: 2 for internal errors, 1 otherwise.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<InternalError>()) {
        2
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn internal_errors_exit_with_two() {
        let err = Err::<(), _>(InternalError("count mismatch".into())).context("simulate").unwrap_err();
        assert_eq!(exit_code_for(&err), 2);
        assert_eq!(exit_code_for(&anyhow::anyhow!("bad input")), 1);
    }
}
