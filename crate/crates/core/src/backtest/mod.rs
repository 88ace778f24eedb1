//! Train/test orchestration, baselines, reports and the command line.

pub mod audit;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod engine;
pub mod indicators;
pub mod report;

use thiserror::Error;

pub use audit::{audit_log, AuditFinding, AuditSummary};
pub use baselines::{run_baseline, BaselineKind};
pub use config::{AgentConfig, DataPaths, DateRange, RiskConfig, RunConfig, SizingEquity};
pub use engine::{load_data, run_test, run_train, BacktestResult, LoadedData, TrainOutput};
pub use indicators::{macd, macd_lines, rsi, rsi_signals, IndicatorError};
pub use report::{emit_report, render_report_json, ReportFiles};

use crate::agents::AgentError;
use crate::env::EnvError;
use crate::market_data::{DataError, FetchError};
use crate::memory::MemoryError;
use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error("{path}: {source}")]
    Output {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("audit failed: {0}")]
    Audit(String),
}

impl BacktestError {
    /// 1 usage/config, 2 data, 3 provider.
    pub fn exit_code(&self) -> i32 {
        match self {
            BacktestError::Config(_) => 1,
            BacktestError::Agent(e) if e.is_provider() => 3,
            BacktestError::Fetch(_) => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BacktestError::Config(_) => "config",
            BacktestError::Data(_) => "data",
            BacktestError::Fetch(_) => "fetch",
            BacktestError::Agent(e) if e.is_provider() => "provider",
            BacktestError::Agent(_) => "agent",
            BacktestError::Memory(_) => "memory",
            BacktestError::Env(_) => "env",
            BacktestError::Metric(_) => "metric",
            BacktestError::Indicator(_) => "indicator",
            BacktestError::Output { .. } => "output",
            BacktestError::Audit(_) => "audit",
        }
    }
}
