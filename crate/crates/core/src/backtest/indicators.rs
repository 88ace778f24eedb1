//! MACD and RSI signals for the rule-based baselines.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndicatorError {
    #[error("series of {got} prices is too short; need more than {need}")]
    TooShort { need: usize, got: usize },
    #[error("indicator periods must be positive and fast < slow")]
    BadPeriods,
}

/// EMA with smoothing 2/(period+1), seeded by the simple mean of the first
/// `period` values. Entries before the seed are `None`.
pub fn ema(values: &[f64], period: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if period == 0 || values.len() < period {
        return out;
    }
    let k = 2.0 / (period as f64 + 1.0);
    let mut prev = values[..period].iter().sum::<f64>() / period as f64;
    out[period - 1] = Some(prev);
    for i in period..values.len() {
        prev = k * values[i] + (1.0 - k) * prev;
        out[i] = Some(prev);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacdLines {
    pub macd: Vec<Option<f64>>,
    pub signal: Vec<Option<f64>>,
}

pub fn macd_lines(prices: &[f64], fast: usize, slow: usize, signal: usize) -> Result<MacdLines, IndicatorError> {
    if fast == 0 || signal == 0 || fast >= slow {
        return Err(IndicatorError::BadPeriods);
    }
    if prices.len() <= slow + signal {
        return Err(IndicatorError::TooShort { need: slow + signal, got: prices.len() });
    }
    let f = ema(prices, fast);
    let s = ema(prices, slow);
    let macd: Vec<Option<f64>> = f.iter().zip(&s).map(|(a, b)| Some((*a)? - (*b)?)).collect();
    let start = slow - 1;
    let defined: Vec<f64> = macd[start..].iter().map(|v| v.expect("defined from slow-1")).collect();
    let mut sig = vec![None; start];
    sig.extend(ema(&defined, signal));
    Ok(MacdLines { macd, signal: sig })
}

/// +1 where the MACD line crosses above its signal line, -1 where it crosses
/// below, 0 elsewhere.
pub fn macd(prices: &[f64], fast: usize, slow: usize, signal: usize) -> Result<Vec<i8>, IndicatorError> {
    let lines = macd_lines(prices, fast, slow, signal)?;
    let diff: Vec<Option<f64>> = lines.macd.iter().zip(&lines.signal).map(|(m, s)| Some((*m)? - (*s)?)).collect();
    let mut out = vec![0i8; prices.len()];
    for i in 1..prices.len() {
        if let (Some(prev), Some(now)) = (diff[i - 1], diff[i]) {
            if prev <= 0.0 && now > 0.0 {
                out[i] = 1;
            } else if prev >= 0.0 && now < 0.0 {
                out[i] = -1;
            }
        }
    }
    Ok(out)
}

pub const RSI_BUY_BELOW: f64 = 30.0;
pub const RSI_SELL_ABOVE: f64 = 70.0;

/// Wilder RSI; entries before index `period` are `None`.
pub fn rsi(prices: &[f64], period: usize) -> Result<Vec<Option<f64>>, IndicatorError> {
    if period == 0 {
        return Err(IndicatorError::BadPeriods);
    }
    if prices.len() <= period {
        return Err(IndicatorError::TooShort { need: period, got: prices.len() });
    }
    let change = |i: usize| prices[i] - prices[i - 1];
    let value = |g: f64, l: f64| {
        if l == 0.0 {
            if g == 0.0 {
                50.0
            } else {
                100.0
            }
        } else {
            100.0 - 100.0 / (1.0 + g / l)
        }
    };
    let p = period as f64;
    let mut gain = (1..=period).map(|i| change(i).max(0.0)).sum::<f64>() / p;
    let mut loss = (1..=period).map(|i| (-change(i)).max(0.0)).sum::<f64>() / p;
    let mut out = vec![None; prices.len()];
    out[period] = Some(value(gain, loss));
    for i in period + 1..prices.len() {
        gain = (gain * (p - 1.0) + change(i).max(0.0)) / p;
        loss = (loss * (p - 1.0) + (-change(i)).max(0.0)) / p;
        out[i] = Some(value(gain, loss));
    }
    Ok(out)
}

/// +1 below 30, -1 above 70, else 0.
pub fn rsi_signals(values: &[Option<f64>]) -> Vec<i8> {
    values
        .iter()
        .map(|v| match v {
            Some(x) if *x < RSI_BUY_BELOW => 1,
            Some(x) if *x > RSI_SELL_ABOVE => -1,
            _ => 0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series_never_crosses() {
        assert!(macd(&[5.0; 60], 12, 26, 9).unwrap().iter().all(|s| *s == 0));
    }

    #[test]
    fn step_up_gives_one_buy_near_the_step() {
        let prices: Vec<f64> = (0..80).map(|i| if i < 40 { 10.0 } else { 12.0 }).collect();
        let s = macd(&prices, 12, 26, 9).unwrap();
        let buys: Vec<usize> = (0..s.len()).filter(|i| s[*i] == 1).collect();
        assert_eq!(buys, vec![40]);
    }

    #[test]
    fn small_periods_match_hand_computation() {
        let p = [1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 4.0, 3.0, 5.0, 4.0];
        let l = macd_lines(&p, 2, 4, 2).unwrap();
        // EMA2 seed = 1.5, k = 2/3; EMA4 seed = 2.0 at index 3, k = 0.4.
        let mut e2 = vec![f64::NAN, 1.5];
        for x in &p[2..] {
            let prev = *e2.last().unwrap();
            e2.push(2.0 / 3.0 * x + prev / 3.0);
        }
        let mut e4 = vec![f64::NAN, f64::NAN, f64::NAN, 2.0];
        for x in &p[4..] {
            let prev = *e4.last().unwrap();
            e4.push(0.4 * x + 0.6 * prev);
        }
        for i in 3..10 {
            assert!((l.macd[i].unwrap() - (e2[i] - e4[i])).abs() < 1e-9);
        }
        let m: Vec<f64> = (3..10).map(|i| e2[i] - e4[i]).collect();
        let mut sig = (m[0] + m[1]) / 2.0;
        assert!((l.signal[4].unwrap() - sig).abs() < 1e-9);
        for (j, i) in (5..10).enumerate() {
            sig = 2.0 / 3.0 * m[j + 2] + sig / 3.0;
            assert!((l.signal[i].unwrap() - sig).abs() < 1e-9);
        }
        assert!(l.signal[3].is_none());
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(macd(&[1.0; 35], 12, 26, 9), Err(IndicatorError::TooShort { .. })));
        assert!(matches!(rsi(&[1.0; 14], 14), Err(IndicatorError::TooShort { .. })));
    }

    #[test]
    fn monotone_rsi_extremes() {
        let up: Vec<f64> = (0..30).map(|i| 10.0 + i as f64).collect();
        assert!(rsi(&up, 14).unwrap()[14..].iter().all(|v| *v == Some(100.0)));
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert!(rsi(&down, 14).unwrap()[14..].iter().all(|v| *v == Some(0.0)));
        assert_eq!(rsi_signals(&rsi(&down, 14).unwrap())[20], 1);
    }

    /// Recursion-free Wilder oracle: each average is expanded as a weighted sum
    /// of the raw changes.
    fn wilder_oracle(prices: &[f64], period: usize, t: usize) -> f64 {
        let p = period as f64;
        let w = (p - 1.0) / p;
        let (mut g, mut l) = (0.0, 0.0);
        let steps = t - period;
        for i in 1..=period {
            let c = prices[i] - prices[i - 1];
            g += c.max(0.0) / p * w.powi(steps as i32);
            l += (-c).max(0.0) / p * w.powi(steps as i32);
        }
        for i in period + 1..=t {
            let c = prices[i] - prices[i - 1];
            let weight = w.powi((t - i) as i32) / p;
            g += c.max(0.0) * weight;
            l += (-c).max(0.0) * weight;
        }
        if l == 0.0 {
            return if g == 0.0 { 50.0 } else { 100.0 };
        }
        100.0 - 100.0 / (1.0 + g / l)
    }

    #[test]
    fn mixed_fixture_matches_oracle() {
        let p = [44.0, 44.3, 44.1, 44.2, 43.6, 44.3, 44.8, 45.1, 45.4, 45.8, 46.1, 45.9, 46.0, 45.6, 46.3, 46.3, 46.0, 46.4, 46.2, 45.6];
        let r = rsi(&p, 14).unwrap();
        for t in 14..20 {
            assert!((r[t].unwrap() - wilder_oracle(&p, 14, t)).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn rsi_bounded(p in proptest::collection::vec(1.0f64..100.0, 16..60)) {
            for v in rsi(&p, 14).unwrap().into_iter().flatten() {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }
    }
}
