//! report.json, decisions.jsonl and the two SVG charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use super::engine::BacktestResult;
use super::{BacktestError, DateRange, RunConfig};
use crate::env::write_decision_log;
use crate::market_data::write_atomic;
use crate::metrics::{MetricOptions, MetricReport};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const RETURNS_SVG: &str = "returns.svg";
pub const EXPOSURE_SVG: &str = "exposure.svg";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub decisions: PathBuf,
    pub returns_svg: PathBuf,
    pub exposure_svg: PathBuf,
}

impl ReportFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            report: dir.join(REPORT_FILE),
            decisions: dir.join(DECISIONS_FILE),
            returns_svg: dir.join(RETURNS_SVG),
            exposure_svg: dir.join(EXPOSURE_SVG),
        }
    }
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    schema_version: u32,
    symbol: &'a str,
    test_range: DateRange,
    initial_equity: f64,
    metric_options: &'a MetricOptions,
    results: Vec<ResultEntry<'a>>,
}

#[derive(Serialize)]
pub(crate) struct ResultEntry<'a> {
    pub label: &'a str,
    pub decisions: usize,
    pub final_position: i64,
    pub metrics: &'a MetricReport<f64>,
}

/// Pretty-printed report.json. Metrics use fixed 6-decimal formatting so equal
/// inputs give byte-identical output.
pub fn render_report_json(cfg: &RunConfig, results: &[BacktestResult]) -> String {
    let doc = ReportDoc {
        schema_version: REPORT_SCHEMA_VERSION,
        symbol: &cfg.symbol,
        test_range: cfg.test,
        initial_equity: cfg.initial_equity,
        metric_options: &cfg.metrics,
        results: results
            .iter()
            .map(|r| ResultEntry {
                label: &r.label,
                decisions: r.records.len(),
                final_position: r.final_position,
                metrics: &r.report,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), BacktestError> {
    write_atomic(path, bytes).map_err(|source| BacktestError::Output { path: path.to_path_buf(), source })
}

/// Writes the four report artifacts into `dir`.
pub fn emit_report(
    dir: &Path,
    cfg: &RunConfig,
    results: &[BacktestResult],
    events: &[(NaiveDate, String)],
) -> Result<ReportFiles, BacktestError> {
    if results.is_empty() {
        return Err(BacktestError::Config("no results to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|source| BacktestError::Output { path: dir.to_path_buf(), source })?;
    let files = ReportFiles::in_dir(dir);
    write(&files.report, render_report_json(cfg, results).as_bytes())?;
    let mut log = Vec::new();
    for r in results {
        write_decision_log(&mut log, &r.records).expect("writing to a Vec");
    }
    write(&files.decisions, &log)?;

    let returns: Vec<Series> = results
        .iter()
        .map(|r| {
            let mut acc = 0.0;
            let mut points = vec![0.0];
            points.extend(r.returns.iter().map(|x| {
                acc += x;
                100.0 * acc
            }));
            Series { label: &r.label, dates: r.equity.dates.clone(), values: points }
        })
        .collect();
    write(&files.returns_svg, line_chart("Cumulative return (%)", &returns, events).as_bytes())?;

    let exposure: Vec<Series> = results
        .iter()
        .map(|r| Series {
            label: &r.label,
            dates: r.records.iter().map(|d| d.date).collect(),
            values: r.exposure.clone(),
        })
        .collect();
    write(&files.exposure_svg, line_chart("Exposure (|position| x price / equity)", &exposure, events).as_bytes())?;
    Ok(files)
}

struct Series<'a> {
    label: &'a str,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Minimal SVG line chart; every series shares one date axis.
fn line_chart(title: &str, series: &[Series<'_>], events: &[(NaiveDate, String)]) -> String {
    let mut dates: Vec<NaiveDate> = series.iter().flat_map(|s| s.dates.iter().copied()).collect();
    dates.sort();
    dates.dedup();
    let finite = || series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite().fold((0.0_f64, 0.0_f64), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |d: NaiveDate| {
        let i = dates.partition_point(|x| *x < d) as f64;
        let span = (dates.len().max(2) - 1) as f64;
        LEFT + plot_w * i / span
    };
    let y_of = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="22" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for v in [lo, (lo + hi) / 2.0, hi] {
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    if lo < 0.0 && hi > 0.0 {
        let y = y_of(0.0);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#999"/>"##, LEFT + plot_w);
    }
    if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
        let y = TOP + plot_h + 18.0;
        let _ = writeln!(svg, r#"<text x="{LEFT}" y="{y}">{first}</text>"#);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{y}" text-anchor="end">{last}</text>"#, LEFT + plot_w);
        for (date, label) in events.iter().filter(|(d, _)| d >= first && d <= last) {
            let x = x_of(*date);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.2}" fill="#555">{}</text>"##,
                TOP + plot_h,
                x + 3.0,
                TOP + 12.0,
                escape(label)
            );
        }
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .dates
            .iter()
            .zip(&s.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(d, v)| format!("{:.2},{:.2}", x_of(*d), y_of(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            lx + 24.0,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn chart_contains_one_polyline_per_series_and_markers() {
        let a = Series { label: "agent", dates: vec![d("2025-03-03"), d("2025-03-04")], values: vec![0.0, 1.5] };
        let b = Series { label: "buy-hold", dates: vec![d("2025-03-03"), d("2025-03-04")], values: vec![0.0, -1.0] };
        let svg = line_chart("t", &[a, b], &[(d("2025-03-04"), "tariffs <x>".into())]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("tariffs &lt;x&gt;"));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn flat_series_still_renders() {
        let a = Series { label: "x", dates: vec![d("2025-03-03")], values: vec![0.0] };
        let svg = line_chart("t", &[a], &[]);
        assert!(!svg.contains("NaN"));
    }
}
