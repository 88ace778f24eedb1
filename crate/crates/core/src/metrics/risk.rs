use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::Scalar;

/// Historical-simulation VaR/CVaR over a set of PnL samples.
///
/// Losses are negative PnL values, so `cvar <= var` for any sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate<S> {
    pub var: S,
    pub cvar: S,
    pub alpha: S,
    pub window: usize,
    pub pnl_samples_used: usize,
}

// Snaps n * (1 - alpha) onto the nearest integer when it is within float noise of one,
// so that e.g. 100 * (1 - 0.95) counts as exactly 5.
fn snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Number of lowest-ranked samples that make up the lower tail: the nearest rank
/// `k = floor(n * (1 - alpha)) + 1`, i.e. the smallest `k` with `k / n > 1 - alpha`.
pub fn tail_count(n: usize, alpha: f64) -> usize {
    let below = snapped(n as f64 * (1.0 - alpha)).floor() as usize;
    (below + 1).min(n)
}

fn min_samples(alpha: f64) -> usize {
    snapped(1.0 / (1.0 - alpha)).ceil() as usize
}

fn check_alpha<S: Scalar>(alpha: S) -> Result<f64, MetricError> {
    let a = alpha.to_f64_lossy();
    if !(a > 0.0 && a < 1.0) {
        return Err(MetricError::InvalidAlpha(a));
    }
    Ok(a)
}

/// VaR is the sample at rank [`tail_count`] in ascending order (lower tail,
/// inclusive); CVaR is the mean of every sample at or below it.
pub fn cvar<S: Scalar>(samples: &[S], alpha: S) -> Result<RiskEstimate<S>, MetricError> {
    let a = check_alpha(alpha)?;
    let needed = min_samples(a);
    if samples.len() < needed {
        return Err(MetricError::TooFewSamples { needed, got: samples.len() });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("PnL samples must not be NaN"));
    let k = tail_count(sorted.len(), a);
    let var = sorted[k - 1];
    // ties with the VaR sample sit directly after rank k
    let tail_len = k + sorted[k..].iter().take_while(|x| **x <= var).count();
    let sum = sorted[..tail_len].iter().fold(S::zero(), |acc, x| acc + *x);
    Ok(RiskEstimate {
        var,
        cvar: sum / S::from_count(tail_len),
        alpha,
        window: samples.len(),
        pnl_samples_used: samples.len(),
    })
}

/// [`cvar`] over the last `window` samples of `series`.
pub fn trailing_cvar<S: Scalar>(
    series: &[S],
    window: usize,
    alpha: S,
) -> Result<RiskEstimate<S>, MetricError> {
    let start = series.len().saturating_sub(window);
    let mut est = cvar(&series[start..], alpha)?;
    est.window = window;
    Ok(est)
}

/// Per-trade share limit derived from CVaR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderLimit {
    pub shares: u64,
    /// The estimate carried no loss signal and the configured floor was used.
    pub fallback: bool,
}

/// `floor(budget * equity / (|cvar| * price))`, where `cvar` is expressed as a
/// per-share daily log-return loss. A non-loss CVaR yields `floor_shares`.
pub fn max_order_size<S: Scalar>(
    equity: S,
    price: S,
    risk: &RiskEstimate<S>,
    risk_budget_fraction: S,
    floor_shares: u64,
) -> Result<OrderLimit, MetricError> {
    if !(price > S::zero()) {
        return Err(MetricError::NonPositivePrice { index: 0, value: price.to_f64_lossy() });
    }
    if !(risk_budget_fraction > S::zero() && risk_budget_fraction <= S::one()) {
        return Err(MetricError::InvalidRiskBudget(risk_budget_fraction.to_f64_lossy()));
    }
    if !(equity > S::zero()) {
        return Err(MetricError::InvalidEquity(equity.to_f64_lossy()));
    }
    if !(risk.cvar < S::zero()) {
        tracing::warn!(cvar = %risk.cvar, "CVaR carries no loss; using order-size floor");
        return Ok(OrderLimit { shares: floor_shares, fallback: true });
    }
    let raw = (risk_budget_fraction * equity / (risk.cvar.abs() * price)).floor();
    let shares = raw.to_u64().unwrap_or(u64::MAX);
    Ok(OrderLimit { shares, fallback: false })
}
