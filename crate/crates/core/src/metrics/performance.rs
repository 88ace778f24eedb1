use super::MetricError;
use crate::Scalar;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

fn check_prices<S: Scalar>(prices: &[S]) -> Result<(), MetricError> {
    match prices.iter().position(|p| !(*p > S::zero())) {
        Some(index) => Err(MetricError::NonPositivePrice {
            index,
            value: prices[index].to_f64_lossy(),
        }),
        None => Ok(()),
    }
}

/// Cumulative position-weighted log return, in percent:
/// `100 * sum_t position_t * ln(price[t+1] / price[t])`.
///
/// This is a log-return percentage, not a simple-return one; the two diverge for
/// large moves.
pub fn cumulative_return_pct<S: Scalar>(positions: &[i64], prices: &[S]) -> Result<S, MetricError> {
    if positions.len() + 1 != prices.len() {
        return Err(MetricError::LengthMismatch {
            expected: prices.len().saturating_sub(1),
            actual: positions.len(),
        });
    }
    check_prices(prices)?;
    let total = positions
        .iter()
        .zip(prices.windows(2))
        .fold(S::zero(), |acc, (&p, w)| acc + S::from_shares(p) * (w[1] / w[0]).ln());
    Ok(S::lit(100.0) * total)
}

/// Unannualized Sharpe ratio with sample (n - 1) standard deviation.
pub fn sharpe<S: Scalar>(returns: &[S], risk_free: S) -> Result<S, MetricError> {
    let n = returns.len();
    if n < 2 {
        return Err(MetricError::TooFewSamples { needed: 2, got: n });
    }
    let first = returns[0];
    if returns.iter().all(|r| *r == first) {
        return Err(MetricError::UndefinedSharpe);
    }
    let mean = returns.iter().fold(S::zero(), |a, r| a + *r) / S::from_count(n);
    let var = returns
        .iter()
        .fold(S::zero(), |a, r| a + (*r - mean) * (*r - mean))
        / S::from_count(n - 1);
    let sd = var.sqrt();
    if !(sd > S::zero()) {
        return Err(MetricError::UndefinedSharpe);
    }
    Ok((mean - risk_free) / sd)
}

/// Sharpe scaled by `sqrt(periods_per_year)`.
pub fn sharpe_annualized<S: Scalar>(
    returns: &[S],
    risk_free: S,
    periods_per_year: S,
) -> Result<S, MetricError> {
    Ok(sharpe(returns, risk_free)? * periods_per_year.sqrt())
}

/// Maximum drawdown in percent: `100 * max_t (P_t - min_{s >= t} P_s) / P_t`.
///
/// Single backward pass keeping the running minimum of the future values.
pub fn max_drawdown_pct<S: Scalar>(values: &[S]) -> Result<S, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyCurve);
    }
    if let Some(index) = values.iter().position(|v| !(*v > S::zero())) {
        return Err(MetricError::NonPositiveEquity {
            index,
            value: values[index].to_f64_lossy(),
        });
    }
    let mut trough = S::infinity();
    let mut worst = S::zero();
    for &v in values.iter().rev() {
        trough = trough.min(v);
        let dd = (v - trough) / v;
        if dd > worst {
            worst = dd;
        }
    }
    Ok(S::lit(100.0) * worst)
}

/// Same quantity as [`max_drawdown_pct`] evaluated on `ln(P_t / P_0)`, i.e. on the
/// cumulative log return. Stays finite when the account value itself would overflow.
pub fn max_drawdown_pct_from_log_returns<S: Scalar>(returns: &[S]) -> S {
    let mut cumulative = Vec::with_capacity(returns.len() + 1);
    let mut acc = S::zero();
    cumulative.push(acc);
    for r in returns {
        acc = acc + *r;
        cumulative.push(acc);
    }
    let mut trough = S::infinity();
    let mut worst = S::zero();
    for &c in cumulative.iter().rev() {
        trough = trough.min(c);
        let dd = S::one() - (trough - c).exp();
        if dd > worst {
            worst = dd;
        }
    }
    S::lit(100.0) * worst
}

/// `252 / trading_days * cumulative_log_return`.
pub fn annualized_return<S: Scalar>(cumulative_log_return: S, trading_days: usize) -> S {
    if trading_days == 0 {
        return S::zero();
    }
    S::lit(TRADING_DAYS_PER_YEAR) / S::from_count(trading_days) * cumulative_log_return
}

pub fn calmar<S: Scalar>(annualized: S, mdd_fraction: S) -> Result<S, MetricError> {
    if !(mdd_fraction.abs() > S::zero()) {
        return Err(MetricError::UndefinedCalmar);
    }
    Ok(annualized / mdd_fraction.abs())
}
