//! Scalar analytics: multi-timescale trend score and reward, cumulative return,
//! Sharpe, maximum drawdown, historical CVaR, Calmar and the CVaR-derived
//! order-size limit.
//!
//! Everything here is a pure function over slices and is generic over
//! [`Scalar`](crate::Scalar).

mod performance;
mod report;
mod risk;
mod trend;

pub use performance::{
    annualized_return, calmar, cumulative_return_pct, max_drawdown_pct,
    max_drawdown_pct_from_log_returns, sharpe, sharpe_annualized, TRADING_DAYS_PER_YEAR,
};
pub use report::{compute_metric_report, fixed6, MetricOptions, MetricReport};
pub use risk::{cvar, max_order_size, tail_count, trailing_cvar, OrderLimit, RiskEstimate};
pub use trend::{reward, reward_normalized, trend_score, Horizons, RewardRecord, TrendScore};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("index {t} is at or beyond the last price index {last}")]
    IndexOutOfRange { t: usize, last: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("sharpe ratio undefined: return series has zero standard deviation")]
    UndefinedSharpe,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("empty equity curve")]
    EmptyCurve,
    #[error("non-positive account value {value} at index {index}")]
    NonPositiveEquity { index: usize, value: f64 },
    #[error("calmar ratio undefined: maximum drawdown is zero")]
    UndefinedCalmar,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("risk budget fraction must lie in (0, 1], got {0}")]
    InvalidRiskBudget(f64),
    #[error("equity value must be positive, got {0}")]
    InvalidEquity(f64),
}
