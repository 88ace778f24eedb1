//! Assigning dated items to trading days.

use chrono::{Datelike, NaiveDate, Weekday};
use serde::Serialize;

use super::{DataError, FilingDoc, MarketDay, NewsItem, NewsScope, PriceBar};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replay {
    pub days: Vec<MarketDay>,
    /// Items dated after the last bar.
    pub dropped_after_last: usize,
}

impl Replay {
    pub fn attached(&self) -> usize {
        self.days.iter().map(|d| d.company_news.len() + d.macro_news.len() + d.filings.len()).sum()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.bar.close).collect()
    }
}

/// Index of the first bar on or after `date`.
fn slot(bars: &[PriceBar], date: NaiveDate) -> Option<usize> {
    let i = bars.partition_point(|b| b.date < date);
    (i < bars.len()).then_some(i)
}

/// Attaches every item to the first trading day on or after its date, keeping
/// input order within a day. Items after the last bar are dropped and counted.
pub fn build_replay(bars: &[PriceBar], news: &[NewsItem], filings: &[FilingDoc]) -> Result<Replay, DataError> {
    for (i, pair) in bars.windows(2).enumerate() {
        if pair[1].date <= pair[0].date {
            return Err(DataError::NonMonotone { row: i + 2, date: pair[1].date, previous: pair[0].date });
        }
    }
    for (i, b) in bars.iter().enumerate() {
        b.validate().map_err(|message| DataError::MalformedRow { row: i + 1, message })?;
    }
    let mut days: Vec<MarketDay> = bars
        .iter()
        .map(|b| MarketDay {
            date: b.date,
            bar: *b,
            company_news: Vec::new(),
            macro_news: Vec::new(),
            filings: Vec::new(),
        })
        .collect();
    let mut dropped = 0;
    for n in news {
        match slot(bars, n.date) {
            Some(i) => match n.scope {
                NewsScope::Company => days[i].company_news.push(n.clone()),
                NewsScope::Macro => days[i].macro_news.push(n.clone()),
            },
            None => dropped += 1,
        }
    }
    for f in filings {
        match slot(bars, f.date) {
            Some(i) => days[i].filings.push(f.clone()),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        tracing::warn!(dropped, "items dated after the last trading day were dropped");
    }
    let replay = Replay { days, dropped_after_last: dropped };
    assert_eq!(news.len() + filings.len(), replay.attached() + dropped, "replay must conserve items");
    Ok(replay)
}

pub fn filter_bars(bars: &[PriceBar], from: NaiveDate, to: NaiveDate) -> Vec<PriceBar> {
    bars.iter().filter(|b| b.date >= from && b.date <= to).copied().collect()
}

/// Errors when `[from, to]` has no bars, or when consecutive bars inside it are
/// more than `max_gap_days` calendar days apart. The error lists the weekdays
/// missing inside each such gap.
pub fn check_gaps(bars: &[PriceBar], from: NaiveDate, to: NaiveDate, max_gap_days: i64) -> Result<(), DataError> {
    let inside = filter_bars(bars, from, to);
    if inside.is_empty() {
        return Err(DataError::EmptyRange { from, to });
    }
    let mut missing = Vec::new();
    for pair in inside.windows(2) {
        if (pair[1].date - pair[0].date).num_days() > max_gap_days {
            let mut d = pair[0].date.succ_opt().expect("date in range");
            while d < pair[1].date {
                if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                    missing.push(d);
                }
                d = d.succ_opt().expect("date in range");
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(DataError::Gaps { max_gap_days, missing })
    }
}
