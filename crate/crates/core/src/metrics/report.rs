use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::performance::{
    annualized_return, calmar, max_drawdown_pct, max_drawdown_pct_from_log_returns, sharpe,
};
use super::risk::{trailing_cvar, RiskEstimate};
use crate::env::build_equity_curve;
use crate::Scalar;

/// Knobs that affect how a return series is turned into a [`MetricReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricOptions {
    pub risk_free_daily: f64,
    /// When set, Sharpe is multiplied by `sqrt(periods)`.
    pub sharpe_annualization: Option<f64>,
    pub cvar_alpha: f64,
    pub cvar_window: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { risk_free_daily: 0.0, sharpe_annualization: None, cvar_alpha: 0.95, cvar_window: 60 }
    }
}

/// CR/SR/MDD/Calmar bundle for one strategy run.
///
/// `sharpe`, `calmar` and `cvar_at_end` are `None` when undefined (flat returns,
/// zero drawdown, too few samples).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport<S> {
    pub cr_pct: S,
    pub sharpe: Option<S>,
    pub mdd_pct: S,
    pub calmar: Option<S>,
    pub annualized_return: S,
    pub cvar_at_end: Option<RiskEstimate<S>>,
    pub trading_days: usize,
}

/// Builds the report from per-step log returns `r_t` and the starting account value.
pub fn compute_metric_report<S: Scalar>(
    returns: &[S],
    initial_equity: S,
    options: &MetricOptions,
) -> MetricReport<S> {
    let cumulative = returns.iter().fold(S::zero(), |a, r| a + *r);
    let curve = build_equity_curve(returns, initial_equity);
    let mdd_pct = match max_drawdown_pct(&curve.values) {
        Ok(v) if curve.values.iter().all(|x| x.is_finite()) => v,
        _ => max_drawdown_pct_from_log_returns(returns),
    };
    let annualized = annualized_return(cumulative, returns.len());
    let sr = sharpe(returns, S::lit(options.risk_free_daily)).ok().map(|s| match options
        .sharpe_annualization
    {
        Some(p) => s * S::lit(p).sqrt(),
        None => s,
    });
    MetricReport {
        cr_pct: S::lit(100.0) * cumulative,
        sharpe: sr,
        mdd_pct,
        calmar: calmar(annualized, mdd_pct / S::lit(100.0)).ok(),
        annualized_return: annualized,
        cvar_at_end: trailing_cvar(returns, options.cvar_window, S::lit(options.cvar_alpha)).ok(),
        trading_days: returns.len(),
    }
}

/// Fixed 6-decimal rendering used by every persisted metric. Non-finite values
/// render as `null` and negative zero as `0.000000`.
pub fn fixed6(v: f64) -> String {
    if !v.is_finite() {
        return "null".to_string();
    }
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

struct Fixed(Option<f64>);

impl Serialize for Fixed {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> Result<Z::Ok, Z::Error> {
        let text = self.0.map(fixed6).unwrap_or_else(|| "null".to_string());
        RawValue::from_string(text).map_err(serde::ser::Error::custom)?.serialize(serializer)
    }
}

struct RiskWire<'a, S>(&'a RiskEstimate<S>);

impl<S: Scalar> Serialize for RiskWire<'_, S> {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> Result<Z::Ok, Z::Error> {
        let r = self.0;
        let mut st = serializer.serialize_struct("RiskEstimate", 5)?;
        st.serialize_field("alpha", &Fixed(Some(r.alpha.to_f64_lossy())))?;
        st.serialize_field("window", &r.window)?;
        st.serialize_field("pnl_samples_used", &r.pnl_samples_used)?;
        st.serialize_field("var", &Fixed(Some(r.var.to_f64_lossy())))?;
        st.serialize_field("cvar", &Fixed(Some(r.cvar.to_f64_lossy())))?;
        st.end()
    }
}

impl<S: Scalar> Serialize for MetricReport<S> {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> Result<Z::Ok, Z::Error> {
        let f = |v: S| Fixed(Some(v.to_f64_lossy()));
        let mut st = serializer.serialize_struct("MetricReport", 7)?;
        st.serialize_field("cr_pct", &f(self.cr_pct))?;
        st.serialize_field("sharpe", &Fixed(self.sharpe.map(|v| v.to_f64_lossy())))?;
        st.serialize_field("mdd_pct", &f(self.mdd_pct))?;
        st.serialize_field("calmar", &Fixed(self.calmar.map(|v| v.to_f64_lossy())))?;
        st.serialize_field("annualized_return", &f(self.annualized_return))?;
        st.serialize_field("trading_days", &self.trading_days)?;
        st.serialize_field("cvar_at_end", &self.cvar_at_end.as_ref().map(RiskWire))?;
        st.end()
    }
}
