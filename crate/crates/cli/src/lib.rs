//! Experiment runner around the `pconcave` library: TOML configs, CSV and SVG
//! artifacts, and a JSON record per experiment.

use std::path::Path;

use thiserror::Error;

pub mod config;
pub mod experiment;
pub mod output;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig, TransformChoice};
pub use experiment::{run_experiment, ExperimentRecord};
pub use svg::emit_svg_contour;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Self::io(path, source),
            other => Self::Input(format!("{}: {other:?}", path.display())),
        }
    }

    /// 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) => 3,
            _ => 2,
        }
    }
}
