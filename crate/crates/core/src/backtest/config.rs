//! Run configuration: one TOML file, defaults for everything optional.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::BacktestError;
use crate::agents::{ProviderConfig, QuantityFallback};
use crate::memory::MemoryConfig;
use crate::metrics::{Horizons, MetricOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    #[serde(deserialize_with = "date")]
    pub from: NaiveDate,
    #[serde(deserialize_with = "date")]
    pub to: NaiveDate,
}

/// Accepts both quoted dates and bare TOML dates.
fn date<'de, D: serde::Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Toml(toml::value::Datetime),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Text(s) => s,
        Raw::Toml(t) => t.to_string(),
    };
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").map_err(serde::de::Error::custom)
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.from && d <= self.to
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub prices: PathBuf,
    pub company_news: Option<PathBuf>,
    pub macro_news: Option<PathBuf>,
    pub filings: Option<PathBuf>,
    /// `date,label` rows drawn as vertical markers on the charts.
    pub events: Option<PathBuf>,
    /// Fail on the first invalid news/filing line instead of skipping it.
    pub strict: bool,
    pub max_gap_days: i64,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            prices: PathBuf::from("prices.csv"),
            company_news: None,
            macro_news: None,
            filings: None,
            events: None,
            strict: true,
            max_gap_days: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub alpha: f64,
    pub window: usize,
    /// Fraction of sizing equity that one day's CVaR loss may consume.
    pub budget_fraction: f64,
    /// Order-size limit used while CVaR is undefined or shows no loss.
    pub floor_shares: u64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self { alpha: 0.95, window: 60, budget_fraction: 0.02, floor_shares: 1 }
    }
}

/// Equity used in the order-size limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizingEquity {
    /// The starting account value, for every day.
    #[default]
    Initial,
    /// The current point of the equity curve.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub quantity_fallback: QuantityFallback,
    pub filing_batch_size: usize,
    pub macro_batch_size: usize,
    pub company_batch_size: usize,
    pub parallel_analysis: bool,
    /// Divide the reward by the day's close.
    pub normalized_reward: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            quantity_fallback: QuantityFallback::MinLot,
            filing_batch_size: 1,
            macro_batch_size: 1,
            company_batch_size: 5,
            parallel_analysis: true,
            normalized_reward: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub symbol: String,
    pub seed: u64,
    pub initial_equity: f64,
    pub allow_short: bool,
    pub sizing_equity: SizingEquity,
    pub output_dir: PathBuf,
    pub train: Option<DateRange>,
    pub test: DateRange,
    pub data: DataPaths,
    pub horizons: Horizons,
    pub risk: RiskConfig,
    pub metrics: MetricOptions,
    pub memory: MemoryConfig,
    pub agent: AgentConfig,
    pub provider: ProviderConfig,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            symbol: "TSLA".into(),
            seed: 0,
            initial_equity: 100_000.0,
            allow_short: false,
            sizing_equity: SizingEquity::Initial,
            output_dir: PathBuf::from("out"),
            train: Some(DateRange { from: ymd(2024, 1, 1), to: ymd(2025, 2, 28) }),
            test: DateRange { from: ymd(2025, 3, 1), to: ymd(2025, 4, 30) },
            data: DataPaths::default(),
            horizons: Horizons::default(),
            risk: RiskConfig::default(),
            metrics: MetricOptions::default(),
            memory: MemoryConfig::default(),
            agent: AgentConfig::default(),
            provider: ProviderConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, BacktestError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| BacktestError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, BacktestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BacktestError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase_paths(base);
        Ok(cfg)
    }

    pub fn rebase_paths(&mut self, base: &Path) {
        rebase(base, &mut self.data.prices);
        for p in [&mut self.data.company_news, &mut self.data.macro_news, &mut self.data.filings, &mut self.data.events]
            .into_iter()
            .flatten()
        {
            rebase(base, p);
        }
        rebase(base, &mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), BacktestError> {
        let bad = |m: String| Err(BacktestError::Config(m));
        if self.symbol.trim().is_empty() {
            return bad("symbol must not be empty".into());
        }
        if self.test.from > self.test.to {
            return bad(format!("test range {}..{} is empty", self.test.from, self.test.to));
        }
        if let Some(train) = &self.train {
            if train.from > train.to {
                return bad(format!("train range {}..{} is empty", train.from, train.to));
            }
            if train.to >= self.test.from {
                return bad("train range must end before the test range starts".into());
            }
        }
        if !(self.initial_equity > 0.0 && self.initial_equity.is_finite()) {
            return bad("initial_equity must be positive".into());
        }
        if !(self.risk.alpha > 0.0 && self.risk.alpha < 1.0) {
            return bad("risk.alpha must be in (0, 1)".into());
        }
        if !(self.risk.budget_fraction > 0.0 && self.risk.budget_fraction <= 1.0) {
            return bad("risk.budget_fraction must be in (0, 1]".into());
        }
        if self.risk.window == 0 {
            return bad("risk.window must be positive".into());
        }
        if self.data.max_gap_days < 1 {
            return bad("data.max_gap_days must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.test.from, ymd(2025, 3, 1));
        assert_eq!(c.horizons, Horizons { short: 1, mid: 7, long: 30 });
        assert_eq!(c.risk.alpha, 0.95);
        assert_eq!(c.provider.temperature, 0.7);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn minimal_toml_fills_defaults() {
        let c = RunConfig::from_toml_str(
            "symbol = \"AAPL\"\n[test]\nfrom = 2025-03-03\nto = 2025-03-31\n[data]\nprices = \"p.csv\"\n",
        )
        .unwrap();
        assert_eq!(c.symbol, "AAPL");
        assert_eq!(c.agent.company_batch_size, 5);
        assert_eq!(c.data.prices, PathBuf::from("p.csv"));
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let text = "[train]\nfrom = 2025-01-01\nto = 2025-03-10\n[test]\nfrom = 2025-03-03\nto = 2025-03-31\n";
        assert!(matches!(RunConfig::from_toml_str(text), Err(BacktestError::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("symbl = \"x\"").is_err());
    }
}
