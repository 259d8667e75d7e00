//! Run configuration, CSV interchange, market replay and report files.

mod config;
mod forecast;
mod replay;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::market::{LedgerError, MarketError};
use crate::scenario::ScenarioError;

pub use config::{
    apply_override, parse_config, parse_config_table, Mode, ReplaySection, RunConfig,
    ScenarioSection, SimulateSection,
};
pub use forecast::{
    load_forecast_csv, load_realizations_csv, write_forecast_csv, write_realizations_csv,
    ForecastRow, ForecastTable, Realizations, RowError,
};
pub use replay::{run_replay, ReplayOutput};
pub use report::{
    emit_report, loss_summary, reward_summary, write_stats, write_trajectories, LossRow,
    LossSummary, RewardSummary, LEDGER_FILE,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}:{line}: conflicting row: {message}", path.display())]
    Conflict {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl IoError {
    /// Whether the error stems from user input rather than the environment
    /// or the run itself.
    pub fn is_validation(&self) -> bool {
        match self {
            IoError::Config { .. }
            | IoError::Csv { .. }
            | IoError::Conflict { .. }
            | IoError::Invalid(_) => true,
            IoError::Ledger(e) => !matches!(e, LedgerError::Io(_)),
            IoError::Scenario(ScenarioError::InvalidConfig(_)) => true,
            IoError::Io { .. } | IoError::Market(_) | IoError::Scenario(_) => false,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        IoError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| IoError::Invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes).map_err(|e| IoError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        IoError::io(path, e)
    })
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn unwritable_directory_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = atomic_write(&dir.path().join("missing/a.txt"), b"x").unwrap_err();
        assert!(matches!(err, IoError::Io { .. }));
        assert!(!err.is_validation());
    }

    proptest! {
        #[test]
        fn float_rendering_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back: f64 = fmt_f64(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
