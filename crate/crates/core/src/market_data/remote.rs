//! Optional online ingestion from a candle/news HTTP API.
//!
//! Payload shapes follow the common `stock/candle` (`{t,o,h,l,c,v,s}`) and
//! news-array conventions. Everything is fetched before anything is written,
//! and each file is written atomically.

use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveTime};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::prices::price_csv_string;
use super::{write_atomic, NewsItem, NewsScope, PriceBar};

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("fetch configuration: {0}")]
    Config(String),
    #[error("HTTP {status} from {url}")]
    Http { status: u16, url: String },
    #[error("rate limited (retry-after: {})", .retry_after.as_deref().unwrap_or("unspecified"))]
    RateLimited { retry_after: Option<String> },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected payload from {endpoint}: {message}")]
    Schema { endpoint: &'static str, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Connection settings, read from the environment so keys never land in config files.
#[derive(Debug, Clone)]
pub struct RemoteDataConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub const BASE_URL_ENV: &str = "POSAWARE_DATA_URL";
pub const API_KEY_ENV: &str = "POSAWARE_DATA_KEY";

impl RemoteDataConfig {
    pub fn from_env() -> Result<Self, FetchError> {
        let base_url = std::env::var(BASE_URL_ENV)
            .map_err(|_| FetchError::Config(format!("set {BASE_URL_ENV} to enable network ingestion")))?;
        Ok(Self {
            base_url,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(30),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchSummary {
    pub bars: usize,
    pub company_news: usize,
    pub macro_news: usize,
    pub files: Vec<PathBuf>,
}

struct Client {
    agent: ureq::Agent,
    cfg: RemoteDataConfig,
}

impl Client {
    fn get(&self, path: &str, query: &[(&str, String)]) -> Result<Value, FetchError> {
        let url = format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path);
        let mut req = self.agent.get(&url);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        if let Some(key) = &self.cfg.api_key {
            req = req.query("token", key);
        }
        let mut resp = req.call().map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after =
                resp.headers().get("retry-after").and_then(|v| v.to_str().ok()).map(str::to_string);
            return Err(FetchError::RateLimited { retry_after });
        }
        if !(200..300).contains(&status) {
            return Err(FetchError::Http { status, url });
        }
        let body = resp.body_mut().read_to_string().map_err(|e| FetchError::Transport(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| FetchError::Schema { endpoint: "json", message: e.to_string() })
    }
}

#[derive(Deserialize)]
struct Candles {
    s: String,
    #[serde(default)]
    t: Vec<i64>,
    #[serde(default)]
    o: Vec<f64>,
    #[serde(default)]
    h: Vec<f64>,
    #[serde(default)]
    l: Vec<f64>,
    #[serde(default)]
    c: Vec<f64>,
    #[serde(default)]
    v: Vec<f64>,
}

fn date_of(ts: i64) -> Option<NaiveDate> {
    DateTime::from_timestamp(ts, 0).map(|d| d.date_naive())
}

fn schema(endpoint: &'static str, message: impl Into<String>) -> FetchError {
    FetchError::Schema { endpoint, message: message.into() }
}

/// Converts a candle payload into validated bars.
pub fn bars_from_candles(payload: &Value) -> Result<Vec<PriceBar>, FetchError> {
    let c: Candles = serde_json::from_value(payload.clone()).map_err(|e| schema("candle", e.to_string()))?;
    if c.s == "no_data" {
        return Ok(Vec::new());
    }
    if c.s != "ok" {
        return Err(schema("candle", format!("status `{}`", c.s)));
    }
    let n = c.t.len();
    if [c.o.len(), c.h.len(), c.l.len(), c.c.len(), c.v.len()].iter().any(|&len| len != n) {
        return Err(schema("candle", "arrays differ in length"));
    }
    let mut bars = Vec::with_capacity(n);
    for i in 0..n {
        let date = date_of(c.t[i]).ok_or_else(|| schema("candle", format!("bad timestamp {}", c.t[i])))?;
        let bar = PriceBar { date, open: c.o[i], high: c.h[i], low: c.l[i], close: c.c[i], volume: c.v[i].max(0.0).round() as u64 };
        bar.validate().map_err(|m| schema("candle", format!("{date}: {m}")))?;
        if bars.last().is_some_and(|p: &PriceBar| p.date >= date) {
            return Err(schema("candle", format!("{date}: dates not increasing")));
        }
        bars.push(bar);
    }
    Ok(bars)
}

#[derive(Deserialize)]
struct Article {
    id: Value,
    datetime: i64,
    headline: String,
    #[serde(default)]
    summary: String,
}

/// Converts a news-array payload, keeping articles dated inside `[from, to]`.
pub fn news_from_payload(
    payload: &Value,
    scope: NewsScope,
    symbol: Option<&str>,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<Vec<NewsItem>, FetchError> {
    let endpoint = match scope {
        NewsScope::Company => "company-news",
        NewsScope::Macro => "news",
    };
    let articles: Vec<Article> =
        serde_json::from_value(payload.clone()).map_err(|e| schema(endpoint, e.to_string()))?;
    let mut out = Vec::new();
    for a in articles {
        let date = date_of(a.datetime).ok_or_else(|| schema(endpoint, format!("bad timestamp {}", a.datetime)))?;
        if date < from || date > to || a.headline.trim().is_empty() {
            continue;
        }
        let id = match a.id {
            Value::String(s) => s,
            other => other.to_string(),
        };
        out.push(NewsItem {
            id,
            date,
            headline: a.headline,
            summary: a.summary,
            scope,
            symbol: symbol.map(str::to_string),
        });
    }
    out.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}

fn jsonl(items: &[NewsItem]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

/// Downloads daily bars, company news and macro news for `symbol` over
/// `[from, to]` into `out_dir` as `prices.csv`, `company_news.jsonl` and
/// `macro_news.jsonl`.
pub fn fetch_remote(
    cfg: &RemoteDataConfig,
    symbol: &str,
    from: NaiveDate,
    to: NaiveDate,
    out_dir: &Path,
) -> Result<FetchSummary, FetchError> {
    if from > to {
        return Err(FetchError::Config(format!("empty range {from}..{to}")));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let client = Client { agent, cfg: cfg.clone() };
    let start = from.and_time(NaiveTime::MIN).and_utc().timestamp();
    let end = to.and_time(NaiveTime::from_hms_opt(23, 59, 59).expect("valid time")).and_utc().timestamp();

    let candles = client.get(
        "stock/candle",
        &[("symbol", symbol.into()), ("resolution", "D".into()), ("from", start.to_string()), ("to", end.to_string())],
    )?;
    let bars = bars_from_candles(&candles)?;
    let company = client.get(
        "company-news",
        &[("symbol", symbol.into()), ("from", from.to_string()), ("to", to.to_string())],
    )?;
    let company = news_from_payload(&company, NewsScope::Company, Some(symbol), from, to)?;
    let macro_news = client.get("news", &[("category", "general".into())])?;
    let macro_news = news_from_payload(&macro_news, NewsScope::Macro, None, from, to)?;

    let files = [
        (out_dir.join("prices.csv"), price_csv_string(&bars)),
        (out_dir.join("company_news.jsonl"), jsonl(&company)),
        (out_dir.join("macro_news.jsonl"), jsonl(&macro_news)),
    ];
    for (path, contents) in &files {
        write_atomic(path, contents.as_bytes()).map_err(|source| FetchError::Io { path: path.clone(), source })?;
    }
    Ok(FetchSummary {
        bars: bars.len(),
        company_news: company.len(),
        macro_news: macro_news.len(),
        files: files.into_iter().map(|(p, _)| p).collect(),
    })
}
