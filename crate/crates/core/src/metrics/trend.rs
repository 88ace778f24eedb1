use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::Scalar;

/// Forward horizons, in trading days, of the short/mid/long trend components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizons {
    pub short: usize,
    pub mid: usize,
    pub long: usize,
}

impl Default for Horizons {
    fn default() -> Self {
        Self { short: 1, mid: 7, long: 30 }
    }
}

/// Forward price deltas over the three horizons and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendScore<S> {
    pub m_short: S,
    pub m_mid: S,
    pub m_long: S,
    pub total: S,
}

impl<S: Scalar> TrendScore<S> {
    fn from_components(m_short: S, m_mid: S, m_long: S) -> Self {
        Self { m_short, m_mid, m_long, total: m_short + m_mid + m_long }
    }
}

/// Multi-timescale trend at day `t`.
///
/// Each component is `price[min(t + h, last)] - price[t]`: horizons running past the
/// end of the series are clamped to the last available close.
pub fn trend_score<S: Scalar>(
    prices: &[S],
    t: usize,
    horizons: Horizons,
) -> Result<TrendScore<S>, MetricError> {
    let last = prices.len().saturating_sub(1);
    if prices.is_empty() || t >= last {
        return Err(MetricError::IndexOutOfRange { t, last });
    }
    let delta = |h: usize| prices[(t + h).min(last)] - prices[t];
    Ok(TrendScore::from_components(
        delta(horizons.short),
        delta(horizons.mid),
        delta(horizons.long),
    ))
}

/// Per-step reward: `-(M_t)^2` when the position did not change, otherwise
/// `position_now * M_t`.
pub fn reward<S: Scalar>(position_now: i64, position_prev: i64, trend_total: S) -> S {
    if position_now == position_prev {
        -(trend_total * trend_total)
    } else {
        S::from_shares(position_now) * trend_total
    }
}

/// Price-normalized reward. Both branches are expressed in units of `price_t`
/// (the penalty divides by `price_t^2`, the linear branch by `price_t`).
pub fn reward_normalized<S: Scalar>(
    position_now: i64,
    position_prev: i64,
    trend_total: S,
    price_t: S,
) -> S {
    if position_now == position_prev {
        let m = trend_total / price_t;
        -(m * m)
    } else {
        S::from_shares(position_now) * trend_total / price_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord<S> {
    pub day_index: usize,
    pub reward: S,
    pub position_now: i64,
    pub position_prev: i64,
    pub trend: S,
}
