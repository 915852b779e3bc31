//! Experiment runner: TOML configs, presets, deterministic orchestration
//! of the other modules, and result files with a checksummed manifest.

mod config;
mod presets;
mod report;
mod run;

pub use config::*;
pub use presets::{describe, preset, PRESETS};
pub use report::render_report;
pub use run::{run, FileRecord, FirstBreakdown, FoldDiagnostic, FoldRow, RunManifest, MANIFEST_FILE};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_FAIL: i32 = 3;

/// Process exit code for an error: configuration problems are 1,
/// everything else is a runtime failure.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Exit code for a finished run: 3 when its verdict failed.
pub fn manifest_exit_code(m: &RunManifest) -> i32 {
    if m.pass == Some(false) {
        EXIT_FAIL
    } else {
        EXIT_OK
    }
}
