//! Independent re-derivation of a report from its decision log.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::Value;

use super::BacktestError;
use crate::env::{read_decision_log, step_return, DecisionRecord, Direction};
use crate::metrics::{compute_metric_report, MetricOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditFinding {
    pub label: String,
    pub date: Option<NaiveDate>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AuditSummary {
    pub labels: usize,
    pub decisions: usize,
    pub cap_violations: usize,
    pub negative_positions: usize,
    pub findings: Vec<AuditFinding>,
}

impl AuditSummary {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

fn bad(msg: impl Into<String>) -> BacktestError {
    BacktestError::Audit(msg.into())
}

/// Replays every labelled log, checks the per-day cap, the sign of the
/// position when shorting is off and the booked returns, then recomputes the
/// metrics and compares them with the report at its formatted precision.
pub fn audit_log(report_json: &str, decisions_jsonl: &str, allow_short: bool) -> Result<AuditSummary, BacktestError> {
    let report: Value = serde_json::from_str(report_json).map_err(|e| bad(format!("report.json: {e}")))?;
    let initial_equity = report["initial_equity"].as_f64().ok_or_else(|| bad("report.json: missing initial_equity"))?;
    let options: MetricOptions = serde_json::from_value(report["metric_options"].clone())
        .map_err(|e| bad(format!("report.json metric_options: {e}")))?;
    let entries = report["results"].as_array().ok_or_else(|| bad("report.json: missing results"))?;
    let records = read_decision_log(decisions_jsonl.as_bytes())?;

    let mut by_label: BTreeMap<String, Vec<DecisionRecord>> = BTreeMap::new();
    for r in records {
        by_label.entry(r.label.clone().unwrap_or_default()).or_default().push(r);
    }

    let mut summary = AuditSummary { labels: entries.len(), ..Default::default() };
    for entry in entries {
        let label = entry["label"].as_str().ok_or_else(|| bad("result without label"))?.to_string();
        let log = by_label.remove(&label).unwrap_or_default();
        let mut finding = |date: Option<NaiveDate>, message: String| {
            summary.findings.push(AuditFinding { label: label.clone(), date, message })
        };
        if entry["decisions"].as_u64() != Some(log.len() as u64) {
            finding(None, format!("report counts {} decisions, log has {}", entry["decisions"], log.len()));
        }
        let mut position = 0i64;
        let mut returns = Vec::with_capacity(log.len());
        for rec in &log {
            if rec.direction != Direction::Hold && rec.quantity > rec.maxcvar {
                summary.cap_violations += 1;
                finding(Some(rec.date), format!("quantity {} exceeds cap {}", rec.quantity, rec.maxcvar));
            }
            position += rec.direction.sign() * rec.quantity as i64;
            if position != rec.position_after {
                finding(Some(rec.date), format!("logged position {} but replay gives {position}", rec.position_after));
            }
            if !allow_short && position < 0 {
                summary.negative_positions += 1;
                finding(Some(rec.date), format!("negative position {position} with shorting off"));
            }
            let r = step_return(position, rec.price, rec.next_price)?;
            if r != rec.r_t {
                finding(Some(rec.date), format!("logged r_t {} but recomputed {r}", rec.r_t));
            }
            returns.push(r);
        }
        summary.decisions += log.len();
        if entry["final_position"].as_i64() != Some(position) {
            finding(None, format!("report final position {} but replay gives {position}", entry["final_position"]));
        }
        let recomputed = compute_metric_report(&returns, initial_equity, &options);
        let recomputed = serde_json::to_value(&recomputed).expect("metrics serialize");
        if recomputed != entry["metrics"] {
            finding(None, format!("metrics differ: report {} vs recomputed {recomputed}", entry["metrics"]));
        }
    }
    for (label, log) in by_label {
        summary.findings.push(AuditFinding {
            label,
            date: None,
            message: format!("{} logged decisions have no report entry", log.len()),
        });
    }
    Ok(summary)
}
