//! Market and rule-based comparison strategies.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::engine::{order_limit, phase, BacktestResult, Book, LoadedData};
use super::indicators::{macd, rsi, rsi_signals};
use super::{BacktestError, RunConfig};
use crate::env::{Direction, StrategicIntent, TradeDecision};
use crate::memory::MemoryCitations;

pub const MACD_PERIODS: (usize, usize, usize) = (12, 26, 9);
pub const RSI_PERIOD: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    BuyHold,
    Random,
    Macd,
    Rsi,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [BaselineKind::BuyHold, BaselineKind::Random, BaselineKind::Macd, BaselineKind::Rsi];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::BuyHold => "buy-hold",
            BaselineKind::Random => "random",
            BaselineKind::Macd => "macd",
            BaselineKind::Rsi => "rsi",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = BacktestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| BacktestError::Config(format!("unknown baseline `{s}` (expected buy-hold, random, macd or rsi)")))
    }
}

fn order(direction: Direction, quantity: u64, rationale: String) -> TradeDecision {
    if direction == Direction::Hold || quantity == 0 {
        return TradeDecision::hold(rationale);
    }
    TradeDecision {
        direction,
        quantity,
        rationale,
        strategic_intent: StrategicIntent::ShortTermTactical,
        memory_indices: MemoryCitations::default(),
    }
}

/// Runs one baseline over the test range under the same accounting and
/// order-size caps as the agent.
pub fn run_baseline(kind: BaselineKind, cfg: &RunConfig, data: &LoadedData) -> Result<BacktestResult, BacktestError> {
    let phase = phase(cfg, data, cfg.test)?;
    let end = phase.start + phase.days.len();
    // indicators are causal, so computing them over the whole prefix is safe
    let history: Vec<f64> = data.bars[..end].iter().map(|b| b.close).collect();
    let signals: Option<Vec<i8>> = match kind {
        BaselineKind::Macd => {
            let (f, s, g) = MACD_PERIODS;
            Some(macd(&history, f, s, g)?)
        }
        BaselineKind::Rsi => Some(rsi_signals(&rsi(&history, RSI_PERIOD)?)),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut book = Book::new(cfg, kind.as_str());
    for i in 0..phase.days.len().saturating_sub(1) {
        let g = phase.start + i;
        let limit = order_limit(cfg, &history, g, book.sizing_equity())?;
        let decision = match kind {
            BaselineKind::BuyHold if i == 0 => order(Direction::Buy, limit, "initial purchase".into()),
            BaselineKind::BuyHold => TradeDecision::hold("hold"),
            BaselineKind::Random => {
                let draw: i64 = rng.random_range(-1..=1);
                order(Direction::from_sign(draw), limit.min(1), format!("random draw {draw}"))
            }
            BaselineKind::Macd | BaselineKind::Rsi => {
                let s = signals.as_ref().expect("indicator signals")[g];
                order(Direction::from_sign(s.into()), limit.min(1), format!("{kind} signal {s}"))
            }
        };
        book.execute(phase.days[i].date, &decision, limit, phase.days[i].bar.close, phase.days[i + 1].bar.close)?;
    }
    Ok(book.finish(phase.days.last().map(|d| d.date), Vec::new()))
}
