//! Trading environment: position accounting, per-step returns and the equity curve.
//!
//! Two task definitions are supported. In the single-step task every action is
//! liquidated on the next day, so `R = sum_t a_t * ln(p[t+1] / p[t])`. In the
//! position-aware task the position carries over (`position_t = position_{t-1} +
//! d_t * q_t`) and each day earns `position_t * ln(p[t+1] / p[t])`, where
//! `position_t` is the holding *after* the decision taken at the close of day `t`.

use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::MemoryCitations;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("order of {quantity} shares exceeds the day's limit of {limit}")]
    LimitViolation { quantity: u64, limit: u64 },
    #[error("hold decision must carry zero quantity, got {0}")]
    HoldWithQuantity(u64),
    #[error("non-positive price {0}")]
    NonPositivePrice(f64),
    #[error("expected {expected} actions, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("action {0} is not one of -1, 0, 1")]
    InvalidAction(i8),
    #[error("decision log line {line}: {message}")]
    Log { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Buy,
    Hold,
    Sell,
}

impl Direction {
    pub fn sign(self) -> i64 {
        match self {
            Direction::Buy => 1,
            Direction::Hold => 0,
            Direction::Sell => -1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Buy => "buy",
            Direction::Hold => "hold",
            Direction::Sell => "sell",
        }
    }

    pub fn from_sign(sign: i64) -> Self {
        match sign.signum() {
            1 => Direction::Buy,
            -1 => Direction::Sell,
            _ => Direction::Hold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategicIntent {
    LongTermPosition,
    #[default]
    ShortTermTactical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeDecision {
    pub direction: Direction,
    pub quantity: u64,
    pub rationale: String,
    pub strategic_intent: StrategicIntent,
    pub memory_indices: MemoryCitations,
}

impl TradeDecision {
    pub fn hold(rationale: impl Into<String>) -> Self {
        Self {
            direction: Direction::Hold,
            quantity: 0,
            rationale: rationale.into(),
            strategic_intent: StrategicIntent::default(),
            memory_indices: MemoryCitations::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccountState<S> {
    pub position: i64,
    pub cumulative_log_return: S,
    pub day_index: usize,
}

impl<S: Scalar> AccountState<S> {
    pub fn new() -> Self {
        Self { position: 0, cumulative_log_return: S::zero(), day_index: 0 }
    }

    /// Books the day's return and moves to the next trading day.
    pub fn advance(self, step_return: S) -> Self {
        Self {
            cumulative_log_return: self.cumulative_log_return + step_return,
            day_index: self.day_index + 1,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied<S> {
    pub state: AccountState<S>,
    pub executed_quantity: u64,
    /// Requested sell size when it was clamped to the current holding.
    pub clamped_from: Option<u64>,
}

/// Applies `position += sign(direction) * quantity`.
///
/// Orders above `limit` are rejected, never truncated. With shorting disabled a
/// sell larger than the holding is clamped to the holding.
pub fn apply_decision<S: Scalar>(
    state: AccountState<S>,
    decision: &TradeDecision,
    limit: u64,
    allow_short: bool,
) -> Result<Applied<S>, EnvError> {
    if decision.direction == Direction::Hold && decision.quantity != 0 {
        return Err(EnvError::HoldWithQuantity(decision.quantity));
    }
    if decision.quantity > limit {
        return Err(EnvError::LimitViolation { quantity: decision.quantity, limit });
    }
    let mut executed = decision.quantity;
    let mut clamped_from = None;
    if decision.direction == Direction::Sell && !allow_short {
        let held = state.position.max(0) as u64;
        if executed > held {
            tracing::info!(requested = executed, held, "sell clamped to current position");
            clamped_from = Some(executed);
            executed = held;
        }
    }
    let position = state.position + decision.direction.sign() * executed as i64;
    Ok(Applied { state: AccountState { position, ..state }, executed_quantity: executed, clamped_from })
}

/// `position_after * ln(price_next / price_now)`.
pub fn step_return<S: Scalar>(position_after: i64, price_now: S, price_next: S) -> Result<S, EnvError> {
    for p in [price_now, price_next] {
        if !(p > S::zero()) {
            return Err(EnvError::NonPositivePrice(p.to_f64_lossy()));
        }
    }
    Ok(S::from_shares(position_after) * (price_next / price_now).ln())
}

/// Single-step task: each action in {-1, 0, 1} is liquidated the next day.
pub fn run_single_step<S: Scalar>(actions: &[i8], prices: &[S]) -> Result<S, EnvError> {
    if actions.len() + 1 != prices.len() {
        return Err(EnvError::LengthMismatch {
            expected: prices.len().saturating_sub(1),
            actual: actions.len(),
        });
    }
    let mut total = S::zero();
    for (&a, w) in actions.iter().zip(prices.windows(2)) {
        if !(-1..=1).contains(&a) {
            return Err(EnvError::InvalidAction(a));
        }
        total = total + step_return(a as i64, w[0], w[1])?;
    }
    Ok(total)
}

/// Position-aware task with an explicit position path: `sum_t positions[t] * ln(p[t+1]/p[t])`.
pub fn run_position_aware<S: Scalar>(positions: &[i64], prices: &[S]) -> Result<S, EnvError> {
    if positions.len() + 1 != prices.len() {
        return Err(EnvError::LengthMismatch {
            expected: prices.len().saturating_sub(1),
            actual: positions.len(),
        });
    }
    let mut total = S::zero();
    for (&p, w) in positions.iter().zip(prices.windows(2)) {
        total = total + step_return(p, w[0], w[1])?;
    }
    Ok(total)
}

/// Account value path `P_t = P_0 * exp(sum_{tau < t} r_tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve<S> {
    pub values: Vec<S>,
    /// Either empty or one date per value.
    pub dates: Vec<NaiveDate>,
}

impl<S: Scalar> EquityCurve<S> {
    pub fn with_dates(mut self, dates: Vec<NaiveDate>) -> Self {
        debug_assert!(dates.is_empty() || dates.len() == self.values.len());
        self.dates = dates;
        self
    }

    pub fn initial(&self) -> S {
        self.values[0]
    }
}

pub fn build_equity_curve<S: Scalar>(returns: &[S], initial_value: S) -> EquityCurve<S> {
    let mut values = Vec::with_capacity(returns.len() + 1);
    values.push(initial_value);
    let mut cumulative = S::zero();
    for r in returns {
        cumulative = cumulative + *r;
        values.push(initial_value * cumulative.exp());
    }
    EquityCurve { values, dates: Vec::new() }
}

/// One line of `decisions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub date: NaiveDate,
    pub direction: Direction,
    pub quantity: u64,
    pub position_after: i64,
    pub r_t: f64,
    pub rationale: String,
    pub strategic_intent: StrategicIntent,
    pub memory_indices: MemoryCitations,
    pub price: f64,
    pub next_price: f64,
    pub maxcvar: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamped_from: Option<u64>,
}

pub fn write_decision_log<W: Write>(mut out: W, records: &[DecisionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_decision_log<R: BufRead>(input: R) -> Result<Vec<DecisionRecord>, EnvError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| EnvError::Log { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| EnvError::Log { line: i + 1, message: e.to_string() })?;
        records.push(rec);
    }
    Ok(records)
}

/// Re-derives the final account state from a decision log, recomputing every
/// step return from the logged prices and positions.
pub fn replay_log(records: &[DecisionRecord]) -> Result<AccountState<f64>, EnvError> {
    let mut state = AccountState::<f64>::new();
    for rec in records {
        let delta = rec.direction.sign() * rec.quantity as i64;
        state.position += delta;
        let r = step_return(state.position, rec.price, rec.next_price)?;
        state = state.advance(r);
    }
    Ok(state)
}
