//! JSONL news and filings.

use std::io::BufRead;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{write_atomic, DataError, FilingDoc, FilingKind, NewsItem, NewsScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextKind {
    News,
    Filing,
}

/// Records that validated, plus how many lines were skipped in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextRecords {
    News(Loaded<NewsItem>),
    Filings(Loaded<FilingDoc>),
}

#[derive(Deserialize)]
struct RawNews {
    id: Option<serde_json::Value>,
    date: Option<NaiveDate>,
    headline: Option<String>,
    #[serde(default)]
    summary: Option<String>,
    scope: Option<NewsScope>,
    #[serde(default)]
    symbol: Option<String>,
}

#[derive(Deserialize)]
struct RawFiling {
    symbol: Option<String>,
    date: Option<NaiveDate>,
    kind: Option<FilingKind>,
    body: Option<String>,
}

fn require<T>(v: Option<T>, line: usize, field: &'static str) -> Result<T, DataError> {
    v.ok_or(DataError::MissingField { line, field })
}

fn news_from_line(text: &str, line: usize) -> Result<NewsItem, DataError> {
    let raw: RawNews =
        serde_json::from_str(text).map_err(|e| DataError::BadRecord { line, message: e.to_string() })?;
    let id = match require(raw.id, line, "id")? {
        serde_json::Value::String(s) => s,
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(DataError::BadRecord { line, message: format!("id must be a string, got {other}") }),
    };
    let headline = require(raw.headline, line, "headline")?;
    if headline.trim().is_empty() {
        return Err(DataError::BadRecord { line, message: "empty headline".into() });
    }
    let scope = require(raw.scope, line, "scope")?;
    let symbol = raw.symbol.filter(|s| !s.trim().is_empty());
    if scope == NewsScope::Company && symbol.is_none() {
        return Err(DataError::MissingField { line, field: "symbol" });
    }
    Ok(NewsItem {
        id,
        date: require(raw.date, line, "date")?,
        headline,
        summary: raw.summary.unwrap_or_default(),
        scope,
        symbol,
    })
}

fn filing_from_line(text: &str, line: usize) -> Result<FilingDoc, DataError> {
    let raw: RawFiling =
        serde_json::from_str(text).map_err(|e| DataError::BadRecord { line, message: e.to_string() })?;
    let body = require(raw.body, line, "body")?;
    if body.trim().is_empty() {
        return Err(DataError::BadRecord { line, message: "empty body".into() });
    }
    Ok(FilingDoc {
        symbol: require(raw.symbol, line, "symbol")?,
        date: require(raw.date, line, "date")?,
        kind: require(raw.kind, line, "kind")?,
        body,
    })
}

fn load_lines<T>(
    input: impl BufRead,
    strict: bool,
    parse: impl Fn(&str, usize) -> Result<T, DataError>,
) -> Result<Loaded<T>, DataError> {
    let mut records = Vec::new();
    let mut warnings = 0;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| DataError::BadRecord { line: line_no, message: e.to_string() })?;
        if text.trim().is_empty() {
            continue;
        }
        match parse(&text, line_no) {
            Ok(r) => records.push(r),
            Err(e) if strict => return Err(e),
            Err(e) => {
                tracing::warn!(error = %e, "skipping invalid record");
                warnings += 1;
            }
        }
    }
    Ok(Loaded { records, warnings })
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, DataError> {
    Ok(std::io::BufReader::new(std::fs::File::open(path).map_err(|e| DataError::io(path, e))?))
}

pub fn load_news_jsonl(path: &Path, strict: bool) -> Result<Loaded<NewsItem>, DataError> {
    load_lines(open(path)?, strict, news_from_line)
}

pub fn load_filings_jsonl(path: &Path, strict: bool) -> Result<Loaded<FilingDoc>, DataError> {
    load_lines(open(path)?, strict, filing_from_line)
}

pub fn load_text_jsonl(path: &Path, kind: TextKind, strict: bool) -> Result<TextRecords, DataError> {
    Ok(match kind {
        TextKind::News => TextRecords::News(load_news_jsonl(path, strict)?),
        TextKind::Filing => TextRecords::Filings(load_filings_jsonl(path, strict)?),
    })
}

/// One compact JSON object per line, written atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DataError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(|e| DataError::io(path, e))
}
