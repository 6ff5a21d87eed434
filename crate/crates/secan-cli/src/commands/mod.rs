//! Subcommand implementations. Each returns a [`CommandOutcome`] on
//! success; errors bubbling out as `anyhow::Error` are input errors.
//!
//! Exit-code contract: 0 success, 1 input error (files, config, data
//! validation), 2 when every input was fine but some requested fit did not
//! converge.

pub mod fit;
pub mod simulate;
pub mod summarize;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

/// How a successfully dispatched command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandOutcome {
    Success,
    /// At least one requested fit failed or did not converge; the report
    /// still describes every method.
    NonConvergence,
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub(crate) fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing output file `{}`", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
