//! Filtering and analysis agents.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::prompts::bindings;
use super::{AgentContext, AgentError, AnalysisInsight, HorizonLabel, RelationType, Relevance, SourceKind};

/// One raw text item entering the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalItem {
    pub id: String,
    pub source_kind: SourceKind,
    pub date: NaiveDate,
    pub text: String,
}

/// A batch that survived filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSignal {
    pub item_ids: Vec<String>,
    pub source_kind: SourceKind,
    pub key_points: String,
    pub reason: String,
    pub relation_type: Option<RelationType>,
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `[id] text` per item, one per line.
fn item_block(items: &[SignalItem]) -> String {
    items.iter().map(|i| format!("[{}] {}", i.id, one_line(&i.text))).collect::<Vec<_>>().join("\n")
}

fn slot_for(template_id: &str) -> Result<&'static str, AgentError> {
    match template_id {
        "filter-10K" | "filter-10Q" => Ok("filtered_key_points"),
        "filter-company-news" => Ok("news_batch"),
        "filter-macro" => Ok("agent_scratch"),
        other => Err(AgentError::Invalid(format!("`{other}` is not a filter template"))),
    }
}

fn with_ids<T>(ids: &[SignalItem], r: Result<T, AgentError>) -> Result<T, AgentError> {
    r.map_err(|e| AgentError::Items { ids: ids.iter().map(|i| i.id.clone()).collect(), source: Box::new(e) })
}

/// Filters `items` in batches of at most `batch_size`. Macro batches judged
/// unrelated are dropped.
pub fn filter_signal(
    items: &[SignalItem],
    template_id: &str,
    ctx: &AgentContext<'_>,
    batch_size: usize,
) -> Result<Vec<FilteredSignal>, AgentError> {
    let slot = slot_for(template_id)?;
    let Some(first) = items.first() else { return Ok(Vec::new()) };
    if let Some(odd) = items.iter().find(|i| i.source_kind != first.source_kind) {
        return Err(AgentError::Invalid(format!(
            "item {} is {:?}, batch is {:?}",
            odd.id, odd.source_kind, first.source_kind
        )));
    }
    let mut out = Vec::new();
    for batch in items.chunks(batch_size.max(1)) {
        let block = item_block(batch);
        let b = bindings([("symbol", ctx.symbol.to_string()), (slot, block.clone())]);
        let parsed = with_ids(batch, ctx.call(template_id, &b))?;
        let reason = parsed.text("reason").unwrap_or_default().to_string();
        let relation_type = match parsed.text("relation_type") {
            Some("direct") => Some(RelationType::Direct),
            Some("indirect") => Some(RelationType::Indirect),
            Some(_) => Some(RelationType::None),
            None => None,
        };
        if relation_type == Some(RelationType::None) {
            tracing::debug!(ids = ?batch.iter().map(|i| &i.id).collect::<Vec<_>>(), "macro batch unrelated, dropped");
            continue;
        }
        // Macro filtering classifies rather than summarises, so the article itself is analysed.
        let key_points = match parsed.text("key_points") {
            Some(k) => k.to_string(),
            None => batch.iter().map(|i| one_line(&i.text)).collect::<Vec<_>>().join(" "),
        };
        out.push(FilteredSignal {
            item_ids: batch.iter().map(|i| i.id.clone()).collect(),
            source_kind: first.source_kind,
            key_points,
            reason,
            relation_type,
        });
    }
    Ok(out)
}

/// Short-term and mid/long-term labels read from an insight sentence, in order
/// of mention. Macro insights only speak to the longer horizon.
pub fn horizon_labels(insight: &str, source: SourceKind) -> (HorizonLabel, HorizonLabel) {
    let lower = insight.to_lowercase();
    let labels: Vec<HorizonLabel> = lower
        .split(|c: char| !c.is_alphabetic())
        .filter_map(|w| match w {
            "positive" | "bullish" => Some(HorizonLabel::Positive),
            "negative" | "bearish" => Some(HorizonLabel::Negative),
            "neutral" => Some(HorizonLabel::Neutral),
            _ => None,
        })
        .collect();
    match (source, labels.as_slice()) {
        (SourceKind::MacroNews, [first, ..]) => (HorizonLabel::Neutral, *first),
        (_, [short, long, ..]) => (*short, *long),
        (_, [only]) => (*only, *only),
        _ => (HorizonLabel::Neutral, HorizonLabel::Neutral),
    }
}

fn analyze_template(source: SourceKind) -> Result<&'static str, AgentError> {
    match source {
        SourceKind::Filing10K => Ok("analyze-10K"),
        SourceKind::Filing10Q => Ok("analyze-10Q"),
        SourceKind::MacroNews => Ok("analyze-macro"),
        SourceKind::CompanyNews => Ok("analyze-company-news"),
        SourceKind::Reflection => Err(AgentError::Invalid("reflections are not analysed".into())),
    }
}

pub fn analyze(item: &FilteredSignal, ctx: &AgentContext<'_>) -> Result<AnalysisInsight, AgentError> {
    let template_id = analyze_template(item.source_kind)?;
    let scratch = format!("[{}] {}", item.item_ids.join(","), one_line(&item.key_points));
    let b = bindings([("symbol", ctx.symbol.to_string()), ("agent_scratch", scratch)]);
    let wrap = |e: AgentError| AgentError::Items { ids: item.item_ids.clone(), source: Box::new(e) };
    let parsed = ctx.call(template_id, &b).map_err(wrap)?;
    let insight = parsed.text("insight").unwrap_or_default().to_string();
    let reason = parsed.text("reason").unwrap_or_default().to_string();
    if reason.trim().is_empty() {
        return Err(wrap(AgentError::Invalid("analysis reason is empty".into())));
    }
    let (short_term_label, mid_long_label) = horizon_labels(&insight, item.source_kind);
    Ok(AnalysisInsight {
        source_kind: item.source_kind,
        insight,
        short_term_label,
        mid_long_label,
        relevance: parsed.text("relevance").and_then(Relevance::parse).unwrap_or(Relevance::Medium),
        reason,
        relation_type: item.relation_type,
        sentiment: parsed.sentiment("sentiment"),
    })
}

/// Analyses every item, concurrently when `parallel`; output order follows input.
pub fn analyze_all(
    items: &[FilteredSignal],
    ctx: &AgentContext<'_>,
    parallel: bool,
) -> Vec<Result<AnalysisInsight, AgentError>> {
    if !parallel || items.len() < 2 {
        return items.iter().map(|i| analyze(i, ctx)).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|i| s.spawn(move || analyze(i, ctx))).collect();
        handles.into_iter().map(|h| h.join().expect("analysis thread panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::provider::{DecodeParams, RecordingProvider, ScriptedProvider, StubProvider};
    use crate::agents::PromptRegistry;

    fn item(id: &str, kind: SourceKind, text: &str) -> SignalItem {
        SignalItem { id: id.into(), source_kind: kind, date: NaiveDate::from_ymd_opt(2025, 3, 3).unwrap(), text: text.into() }
    }

    fn ctx<'a>(reg: &'a PromptRegistry, p: &'a dyn crate::agents::CompletionProvider) -> AgentContext<'a> {
        AgentContext { registry: reg, provider: p, params: DecodeParams::default(), symbol: "TSLA" }
    }

    #[test]
    fn empty_input_makes_no_calls() {
        let reg = PromptRegistry::builtin();
        let p = RecordingProvider::new(StubProvider::new(0));
        assert!(filter_signal(&[], "filter-company-news", &ctx(&reg, &p), 4).unwrap().is_empty());
        assert!(p.exchanges().is_empty());
    }

    #[test]
    fn ten_items_in_batches_of_four_is_three_calls() {
        let reg = PromptRegistry::builtin();
        let p = RecordingProvider::new(StubProvider::new(0));
        let items: Vec<_> =
            (0..10).map(|i| item(&format!("n{i}"), SourceKind::CompanyNews, "Deliveries rose")).collect();
        let out = filter_signal(&items, "filter-company-news", &ctx(&reg, &p), 4).unwrap();
        assert_eq!(p.count("filter-company-news"), 3);
        assert_eq!(out.iter().map(|f| f.item_ids.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
    }

    #[test]
    fn gossip_macro_item_is_dropped() {
        let reg = PromptRegistry::builtin();
        let p = StubProvider::new(0);
        let items = [
            item("m1", SourceKind::MacroNews, "Celebrity gossip dominates the awards weekend"),
            item("m2", SourceKind::MacroNews, "Federal Reserve holds interest rates steady"),
        ];
        let out = filter_signal(&items, "filter-macro", &ctx(&reg, &p), 1).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].item_ids, vec!["m2"]);
        assert_eq!(out[0].relation_type, Some(RelationType::Indirect));
    }

    #[test]
    fn provider_errors_carry_item_ids() {
        let reg = PromptRegistry::builtin();
        let p = ScriptedProvider::new();
        let items = [item("a1", SourceKind::CompanyNews, "x"), item("a2", SourceKind::CompanyNews, "y")];
        match filter_signal(&items, "filter-company-news", &ctx(&reg, &p), 5) {
            Err(AgentError::Items { ids, source }) => {
                assert_eq!(ids, vec!["a1", "a2"]);
                assert!(source.is_provider());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stub_filing_analysis_has_labels_and_reason() {
        let reg = PromptRegistry::builtin();
        let p = StubProvider::new(0);
        let c = ctx(&reg, &p);
        let kept =
            filter_signal(&[item("k1", SourceKind::Filing10K, "Revenue grew 20%.")], "filter-10K", &c, 1).unwrap();
        let insight = analyze(&kept[0], &c).unwrap();
        assert_eq!(insight.short_term_label, HorizonLabel::Neutral);
        assert_eq!(insight.mid_long_label, HorizonLabel::Neutral);
        assert!(!insight.reason.is_empty());
        assert!(insight.insight.contains("Revenue grew"));
    }

    #[test]
    fn missing_reason_is_a_schema_error() {
        let reg = PromptRegistry::builtin();
        let p = ScriptedProvider::new();
        p.push("analyze-company-news", r#"{"insight": "positive short term, negative long term"}"#);
        let f = FilteredSignal {
            item_ids: vec!["c1".into()],
            source_kind: SourceKind::CompanyNews,
            key_points: "k".into(),
            reason: String::new(),
            relation_type: None,
        };
        let err = analyze(&f, &ctx(&reg, &p)).unwrap_err();
        assert!(err.to_string().contains("reason"), "{err}");
    }

    #[test]
    fn labels_follow_mention_order() {
        let s = "This news has a positive impact on TSLA in the short term, and a negative impact in the medium to long term.";
        assert_eq!(
            horizon_labels(s, SourceKind::CompanyNews),
            (HorizonLabel::Positive, HorizonLabel::Negative)
        );
        assert_eq!(horizon_labels("bearish for months", SourceKind::MacroNews), (HorizonLabel::Neutral, HorizonLabel::Negative));
    }

    #[test]
    fn parallel_analysis_keeps_order() {
        let reg = PromptRegistry::builtin();
        let p = StubProvider::new(0);
        let c = ctx(&reg, &p);
        let items: Vec<_> = (0..6)
            .map(|i| FilteredSignal {
                item_ids: vec![format!("c{i}")],
                source_kind: SourceKind::CompanyNews,
                key_points: format!("point {i}"),
                reason: String::new(),
                relation_type: None,
            })
            .collect();
        let seq: Vec<_> = analyze_all(&items, &c, false).into_iter().map(Result::unwrap).collect();
        let par: Vec<_> = analyze_all(&items, &c, true).into_iter().map(Result::unwrap).collect();
        assert_eq!(seq, par);
    }
}
