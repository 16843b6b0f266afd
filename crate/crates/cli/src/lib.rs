//! Batch front end for the `critfield` library: strict TOML configs, one
//! subcommand per pipeline, run directories with JSON records, CSVs and a
//! plain-text summary.

pub mod config;
pub mod dump;
pub mod output;
pub mod plot;
pub mod run;

use config::ConfigError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// Exit code for an error: 2 config, 3 budget, 4 numerical failure, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<critfield::Error>() {
            use critfield::Error::*;
            return match e {
                InvalidArgument(_) | InvalidDensity(_) => EXIT_CONFIG,
                Budget(_) | MemoryBudget { .. } => EXIT_BUDGET,
                _ => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_OTHER
}
