//! Price, news and filing ingestion into a per-trading-day replay stream.
//!
//! Files are the only input to a backtest. [`fetch_remote`] fills them from an
//! HTTP source; everything else is pure and deterministic.

mod prices;
mod remote;
mod replay;
mod text;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prices::{load_price_csv, parse_price_csv, write_price_csv};
pub use remote::{fetch_remote, FetchError, FetchSummary, RemoteDataConfig};
pub use replay::{build_replay, check_gaps, filter_bars, Replay};
pub use text::{load_filings_jsonl, load_news_jsonl, load_text_jsonl, write_jsonl, Loaded, TextKind, TextRecords};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header must be `date,open,high,low,close,volume`, found `{0}`")]
    BadHeader(String),
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("row {row}: non-monotone dates ({date} after {previous})")]
    NonMonotone { row: usize, date: NaiveDate, previous: NaiveDate },
    #[error("row {row}: duplicate date {date}")]
    DuplicateDate { row: usize, date: NaiveDate },
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("no price bars in {from}..={to}")]
    EmptyRange { from: NaiveDate, to: NaiveDate },
    #[error("price data has gaps longer than {max_gap_days} calendar days; missing trading dates: {}", fmt_dates(.missing))]
    Gaps { max_gap_days: i64, missing: Vec<NaiveDate> },
}

fn fmt_dates(d: &[NaiveDate]) -> String {
    d.iter().map(NaiveDate::to_string).collect::<Vec<_>>().join(", ")
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

/// One day of OHLCV. `close` is the price used by every return formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
}

impl PriceBar {
    pub fn validate(&self) -> Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite()) {
            return Err("prices must be finite".into());
        }
        if self.close <= 0.0 {
            return Err(format!("non-positive close {}", self.close));
        }
        if prices.iter().any(|p| *p <= 0.0) {
            return Err("prices must be positive".into());
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NewsScope {
    Company,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub date: NaiveDate,
    pub headline: String,
    pub summary: String,
    pub scope: NewsScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
}

impl NewsItem {
    pub fn text(&self) -> String {
        if self.summary.trim().is_empty() {
            self.headline.clone()
        } else {
            format!("{}: {}", self.headline, self.summary)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilingKind {
    #[serde(rename = "annual-10K")]
    Annual10K,
    #[serde(rename = "quarterly-10Q")]
    Quarterly10Q,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilingDoc {
    pub symbol: String,
    pub date: NaiveDate,
    pub kind: FilingKind,
    pub body: String,
}

impl FilingDoc {
    /// Filings carry no id of their own.
    pub fn id(&self) -> String {
        let k = match self.kind {
            FilingKind::Annual10K => "10K",
            FilingKind::Quarterly10Q => "10Q",
        };
        format!("{k}-{}-{}", self.symbol, self.date)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDay {
    pub date: NaiveDate,
    pub bar: PriceBar,
    pub company_news: Vec<NewsItem>,
    pub macro_news: Vec<NewsItem>,
    pub filings: Vec<FilingDoc>,
}

/// Writes `contents` next to `path` and renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
