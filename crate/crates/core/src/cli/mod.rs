//! Batch experiment runner: JSON config in, CSV table and JSON summary out.

mod config;
mod output;
mod run;

pub use config::{
    parse_config, ArrangementJson, ComplexPair, ExperimentConfig, ExperimentKind, InitialState, MatrixJson,
    ModeJson, ModelConfig, MonteCarloSection, OutputSection, ProtocolSection, ResolvedModel, StepperJson,
};
pub use output::{emit_outputs, format_float, write_csv, write_json, Cell, Table};
pub use run::{run_experiment, RunReport};

use std::path::PathBuf;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error {0}")]
    Config(String),
    #[error("{experiment}: {source}")]
    Engine {
        experiment: &'static str,
        #[source]
        source: crate::Error,
    },
    #[error("I/O error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Engine { .. } => 2,
            Self::Io { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Engine { .. } => "engine",
            Self::Io { .. } => "io",
        }
    }

    /// Machine-readable form for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
    }
}
