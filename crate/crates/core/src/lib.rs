//! Position-aware daily backtesting for language-model trading agents.
//!
//! The crate is split along the data flow of a single backtest:
//!
//! - [`market_data`]: CSV/JSONL ingestion, validation and the per-day replay stream.
//! - [`env`]: position accounting, per-step log returns and the equity curve.
//! - [`metrics`]: trend scores, rewards, CR/Sharpe/MDD/CVaR/Calmar and order-size limits.
//! - [`memory`]: the layered memory store feeding the decision prompts.
//! - [`agents`]: prompt registry, completion providers and the analysis/decision agents.
//! - [`backtest`]: train/test orchestration, baselines, reports and the CLI.
//!
//! The numerical kernels in [`metrics`] and [`env`] are generic over [`Scalar`]; the
//! engine itself runs on `f64` through the aliases below.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod backtest;
pub mod env;
pub mod market_data;
pub mod memory;
pub mod metrics;
mod scalar;

pub use scalar::Scalar;

/// Scalar type used by the backtest engine.
pub type Real = f64;

pub type AccountState = env::AccountState<Real>;
pub type EquityCurve = env::EquityCurve<Real>;
pub type TrendScore = metrics::TrendScore<Real>;
pub type RewardRecord = metrics::RewardRecord<Real>;
pub type RiskEstimate = metrics::RiskEstimate<Real>;
pub type MetricReport = metrics::MetricReport<Real>;
