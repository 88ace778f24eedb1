//! Direction, quantity and reflection agents.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::parse::ParseError;
use super::prompts::{bindings, Bindings, RenderedPrompt};
use super::{AgentContext, AgentError};
use crate::env::{Direction, StrategicIntent};
use crate::memory::{Layer, MemoryCitations, WorkingSet};

/// Substrings that only appear when future price deltas are bound.
pub const LOOKAHEAD_MARKERS: &[&str] = &[
    "cur_record_t",
    "price difference between the next and current trading day",
    "7-day difference",
    "30-day difference",
];

pub const MOMENTUM_LOOKBACKS: [usize; 3] = [5, 10, 20];
const Z_CLAMP: f64 = 3.0;
const VOL_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentumEntry {
    pub lookback: usize,
    pub delta: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MomentumSummary {
    pub entries: Vec<MomentumEntry>,
}

impl MomentumSummary {
    pub fn z(&self, lookback: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.lookback == lookback).map(|e| e.z)
    }

    pub fn lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("Momentum ({}-day): change {:+.4}, z-score {:+.4}", e.lookback, e.delta, e.z))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Close deltas over the last 5/10/20 trading days up to and including `t`,
/// each scaled by the sample stdev of the last 20 daily deltas times sqrt(k).
///
/// Lookbacks longer than the available history shrink to it. A flat history
/// gives z = 3 * sign(delta); z is clamped to [-3, 3].
pub fn momentum_summary(closes: &[f64], t: usize) -> MomentumSummary {
    if closes.is_empty() {
        return MomentumSummary::default();
    }
    let t = t.min(closes.len() - 1);
    let from = t.saturating_sub(VOL_WINDOW);
    let daily: Vec<f64> = (from + 1..=t).map(|i| closes[i] - closes[i - 1]).collect();
    let sigma = if daily.len() >= 2 {
        let mean = daily.iter().sum::<f64>() / daily.len() as f64;
        (daily.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (daily.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let entries = MOMENTUM_LOOKBACKS
        .iter()
        .map(|&lookback| {
            let k = lookback.min(t);
            let delta = closes[t] - closes[t - k];
            let z = if k == 0 || delta == 0.0 {
                0.0
            } else if sigma > 0.0 {
                delta / (sigma * (k as f64).sqrt())
            } else {
                Z_CLAMP * delta.signum()
            };
            MomentumEntry { lookback, delta, z: z.clamp(-Z_CLAMP, Z_CLAMP) }
        })
        .collect();
    MomentumSummary { entries }
}

/// Future facts bound only in training: t+1/t+7/t+30 close differences and
/// the previous decision's reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainFacts {
    pub t1: f64,
    pub t7: f64,
    pub t30: f64,
    pub prev_reward: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DecisionInput<'a> {
    pub date: NaiveDate,
    pub working_set: &'a WorkingSet,
    pub momentum: &'a MomentumSummary,
    pub position: i64,
    /// `Some` in training, `None` in testing.
    pub train: Option<TrainFacts>,
}

fn layer_label(layer: Layer) -> &'static str {
    match layer {
        Layer::Short => "short-term",
        Layer::Mid => "mid-term",
        Layer::Long => "long-term",
        Layer::Reflection => "reflection",
    }
}

fn fragment(ctx: &AgentContext<'_>, id: &str, b: &Bindings) -> Result<String, AgentError> {
    Ok(ctx.registry.render(id, b)?.text.trim_end().to_string())
}

enum Stage<'a> {
    Direction,
    Quantity { direction: Direction, intent: StrategicIntent, rationale: &'a str },
}

fn investment_info(ctx: &AgentContext<'_>, input: &DecisionInput<'_>, stage: &Stage<'_>) -> Result<String, AgentError> {
    let none = Bindings::new();
    let date = input.date.to_string();
    let mut parts = Vec::new();
    let suffix = if input.train.is_some() { "train" } else { "test" };
    parts.push(match &input.train {
        Some(f) => fragment(
            ctx,
            "info-prefix-train",
            &bindings([
                ("cur_date", date),
                ("symbol", ctx.symbol.to_string()),
                ("cur_record_t1", format!("{:.4}", f.t1)),
                ("cur_record_t7", format!("{:.4}", f.t7)),
                ("cur_record_t30", format!("{:.4}", f.t30)),
                ("reward", format!("{:.6}", f.prev_reward)),
            ]),
        )?,
        None => fragment(ctx, "info-prefix-test", &bindings([("symbol", ctx.symbol.to_string()), ("cur_date", date)]))?,
    });
    parts.push(format!("Current position: {} shares.", input.position));
    if let Stage::Quantity { direction, intent, rationale } = stage {
        let intent = serde_json::to_value(intent).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        parts.push(format!("Direction decision: {} ({intent}). {rationale}", direction.as_str()));
    }
    for layer in Layer::ALL {
        let records = input.working_set.layer(layer);
        let mut block =
            fragment(ctx, &format!("memory-extract-{suffix}"), &bindings([("memory_layer", layer_label(layer).into())]))?;
        for m in records {
            block.push_str(&format!("\n[{}] {}", m.id, m.content.split_whitespace().collect::<Vec<_>>().join(" ")));
        }
        if records.is_empty() {
            block.push_str("\n(none)");
        }
        parts.push(block);
    }
    parts.push(fragment(ctx, "momentum-explanation", &none)?);
    parts.push(input.momentum.lines());
    parts.push(fragment(
        ctx,
        match stage {
            Stage::Direction => "sentiment-direction",
            Stage::Quantity { .. } => "sentiment-quantity",
        },
        &none,
    )?);
    if input.train.is_some() {
        parts.push(fragment(ctx, "reward-explanation", &none)?);
    }
    parts.push(fragment(ctx, &format!("trade-summary-{suffix}"), &none)?);
    Ok(parts.join("\n"))
}

/// Fails if a test-mode prompt carries any future-price binding.
pub fn guard_lookahead(prompt: &RenderedPrompt) -> Result<(), AgentError> {
    if !prompt.template_id.ends_with("-test") {
        return Ok(());
    }
    match LOOKAHEAD_MARKERS.iter().find(|m| prompt.text.contains(*m)) {
        Some(m) => Err(AgentError::Lookahead { template_id: prompt.template_id.clone(), marker: m.to_string() }),
        None => Ok(()),
    }
}

fn render_decision(
    ctx: &AgentContext<'_>,
    kind: &str,
    input: &DecisionInput<'_>,
    mut b: Bindings,
    stage: &Stage<'_>,
) -> Result<(RenderedPrompt, Bindings), AgentError> {
    let suffix = if input.train.is_some() { "train" } else { "test" };
    b.insert("investment_info".into(), investment_info(ctx, input, stage)?);
    let prompt = ctx.registry.render(&format!("{kind}-{suffix}"), &b)?;
    guard_lookahead(&prompt)?;
    Ok((prompt, b))
}

/// Keeps cited ids that were actually shown in the working set.
fn resolve_citations(parsed: &super::ParsedResponse, ws: &WorkingSet) -> (MemoryCitations, Vec<u64>) {
    let mut kept = MemoryCitations::default();
    let mut dropped = Vec::new();
    for (layer, field) in [
        (Layer::Short, "short_memory_index"),
        (Layer::Mid, "middle_memory_index"),
        (Layer::Long, "long_memory_index"),
        (Layer::Reflection, "reflection_memory_index"),
    ] {
        for &id in parsed.ids(field) {
            if ws.contains(layer, id) {
                if !kept.layer(layer).contains(&id) {
                    kept.layer_mut(layer).push(id);
                }
            } else {
                dropped.push(id);
            }
        }
    }
    if !dropped.is_empty() {
        tracing::warn!(?dropped, "decision cited memories outside the working set; ignored");
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionOutcome {
    pub direction: Direction,
    pub rationale: String,
    pub strategic_intent: StrategicIntent,
    pub citations: MemoryCitations,
    pub dropped_citations: Vec<u64>,
    pub reflection_analysis: Option<String>,
}

pub fn decide_direction(input: &DecisionInput<'_>, ctx: &AgentContext<'_>) -> Result<DirectionOutcome, AgentError> {
    let (prompt, b) = render_decision(ctx, "decide-direction", input, Bindings::new(), &Stage::Direction)?;
    let parsed = ctx.complete_parsed(&prompt, &b)?;
    let direction = match parsed.text("investment_decision") {
        Some("buy") => Direction::Buy,
        Some("sell") => Direction::Sell,
        _ => Direction::Hold,
    };
    let strategic_intent = match parsed.text("strategic_intent") {
        Some("long-term-position") => StrategicIntent::LongTermPosition,
        Some(_) => StrategicIntent::ShortTermTactical,
        // Not stated: a trade with the longer trend counts as positioning.
        None => {
            let trend = input.momentum.z(20).unwrap_or(0.0);
            if direction != Direction::Hold && trend.signum() == direction.sign() as f64 {
                StrategicIntent::LongTermPosition
            } else {
                StrategicIntent::ShortTermTactical
            }
        }
    };
    let (citations, dropped_citations) = resolve_citations(&parsed, input.working_set);
    Ok(DirectionOutcome {
        direction,
        rationale: parsed.text("summary_reason").unwrap_or_default().to_string(),
        strategic_intent,
        citations,
        dropped_citations,
        reflection_analysis: parsed.text("reflection_analysis").map(str::to_string),
    })
}

/// What to trade when the quantity response breaks its schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantityFallback {
    #[default]
    MinLot,
    ClampToCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantityOutcome {
    pub quantity: u64,
    pub rationale: String,
    pub citations: MemoryCitations,
    pub dropped_citations: Vec<u64>,
    pub reflection_analysis: Option<String>,
    /// Out-of-range size the provider asked for, when the fallback applied.
    pub requested: Option<i64>,
    pub violation: Option<String>,
    pub provider_called: bool,
}

impl QuantityOutcome {
    fn without_call(rationale: &str) -> Self {
        Self {
            quantity: 0,
            rationale: rationale.into(),
            citations: MemoryCitations::default(),
            dropped_citations: Vec::new(),
            reflection_analysis: None,
            requested: None,
            violation: None,
            provider_called: false,
        }
    }
}

/// Order size in `[1, maxcvar]` for a buy or sell. Hold, or a zero cap, returns
/// 0 without calling the provider.
pub fn decide_quantity(
    direction: &DirectionOutcome,
    input: &DecisionInput<'_>,
    maxcvar: u64,
    fallback: QuantityFallback,
    ctx: &AgentContext<'_>,
) -> Result<QuantityOutcome, AgentError> {
    if direction.direction == Direction::Hold {
        return Ok(QuantityOutcome::without_call("hold"));
    }
    if maxcvar == 0 {
        return Ok(QuantityOutcome::without_call("risk cap is zero"));
    }
    let stage = Stage::Quantity {
        direction: direction.direction,
        intent: direction.strategic_intent,
        rationale: &direction.rationale,
    };
    let (prompt, b) =
        render_decision(ctx, "decide-quantity", input, bindings([("maxcvar", maxcvar.to_string())]), &stage)?;
    match ctx.complete_parsed(&prompt, &b) {
        Ok(parsed) => {
            let size = parsed.integer("order_size").unwrap_or(1).clamp(1, maxcvar as i64) as u64;
            let (citations, dropped_citations) = resolve_citations(&parsed, input.working_set);
            Ok(QuantityOutcome {
                quantity: size,
                rationale: parsed.text("summary_reason").unwrap_or_default().to_string(),
                citations,
                dropped_citations,
                reflection_analysis: parsed.text("reflection_analysis").map(str::to_string),
                requested: None,
                violation: None,
                provider_called: true,
            })
        }
        Err(AgentError::Parse(e)) => {
            let requested = match &e {
                ParseError::OutOfRange { value, .. } => Some(*value),
                _ => None,
            };
            let quantity = match (fallback, requested) {
                (QuantityFallback::ClampToCap, Some(v)) if v > maxcvar as i64 => maxcvar,
                _ => 1,
            };
            tracing::warn!(error = %e, quantity, "quantity response rejected; using fallback");
            Ok(QuantityOutcome {
                quantity,
                rationale: format!("fallback after invalid quantity response: {e}"),
                citations: MemoryCitations::default(),
                dropped_citations: Vec::new(),
                reflection_analysis: None,
                requested,
                violation: Some(e.to_string()),
                provider_called: true,
            })
        }
        Err(other) => Err(other),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub text: String,
    /// Ids to credit; the caller passes them to the memory store with `reward_sign`.
    pub promote_ids: Vec<u64>,
    pub reward_sign: f64,
}

/// Reviews a finished training decision against its reward.
#[allow(clippy::too_many_arguments)]
pub fn reflect(
    date: NaiveDate,
    direction: Direction,
    quantity: u64,
    position_after: i64,
    rationale: &str,
    reward: f64,
    cited: &MemoryCitations,
    working_set: &WorkingSet,
    ctx: &AgentContext<'_>,
) -> Result<Reflection, AgentError> {
    let mut scratch = format!(
        "Decision: {}, quantity {quantity}\nPosition after: {position_after}\nRationale: {rationale}",
        direction.as_str()
    );
    for layer in Layer::ALL {
        for m in working_set.layer(layer).iter().filter(|m| cited.layer(layer).contains(&m.id)) {
            scratch.push_str(&format!("\nCited [{}] {}", m.id, m.content.split_whitespace().collect::<Vec<_>>().join(" ")));
        }
    }
    let b = bindings([
        ("symbol", ctx.symbol.to_string()),
        ("cur_date", date.to_string()),
        ("agent_scratch", scratch),
        ("reward", format!("{reward:.6}")),
    ]);
    let parsed = ctx.call("reflect", &b)?;
    Ok(Reflection {
        text: parsed.text("reflection_analysis").unwrap_or_default().to_string(),
        promote_ids: cited.all_ids(),
        reward_sign: if reward > 0.0 {
            1.0
        } else if reward < 0.0 {
            -1.0
        } else {
            0.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::provider::{DecodeParams, RecordingProvider, ScriptedProvider, StubProvider};
    use crate::agents::{CompletionProvider, PromptRegistry};
    use crate::memory::ScoredMemory;

    fn ctx<'a>(reg: &'a PromptRegistry, p: &'a dyn CompletionProvider) -> AgentContext<'a> {
        AgentContext { registry: reg, provider: p, params: DecodeParams::default(), symbol: "TSLA" }
    }

    fn ws() -> WorkingSet {
        let m = |id: u64, c: &str| ScoredMemory {
            id,
            content: c.into(),
            score: 0.5,
            recency: 1.0,
            importance: 0.6,
            relevance: 0.0,
        };
        WorkingSet { short: vec![m(1, "deliveries beat"), m(2, "price cut")], reflection: vec![m(7, "good call")], ..Default::default() }
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 3, 10).unwrap()
    }

    fn rising() -> Vec<f64> {
        // Alternating +2/+1 steps: positive drift with non-zero dispersion.
        let mut p = vec![100.0];
        for i in 0..30 {
            let last = *p.last().unwrap();
            p.push(last + if i % 2 == 0 { 2.0 } else { 1.0 });
        }
        p
    }

    #[test]
    fn momentum_matches_hand_computation() {
        let closes = rising();
        let m = momentum_summary(&closes, 30);
        // Last 20 daily deltas: ten 2s and ten 1s, sample stdev = sqrt(5/19).
        let sigma = (20.0f64 * 0.25 / 19.0).sqrt();
        let d5 = closes[30] - closes[25];
        assert_eq!(m.entries[0].delta, d5);
        assert!((m.entries[0].z - (d5 / (sigma * 5f64.sqrt())).min(3.0)).abs() < 1e-12);
        assert!(m.entries.iter().all(|e| e.z <= 3.0 && e.z > 0.0));
    }

    #[test]
    fn flat_history_has_zero_momentum() {
        let m = momentum_summary(&[50.0; 40], 39);
        assert!(m.entries.iter().all(|e| e.delta == 0.0 && e.z == 0.0));
        assert!(momentum_summary(&[50.0], 0).entries.iter().all(|e| e.z == 0.0));
    }

    #[test]
    fn constant_slope_saturates_z() {
        let closes: Vec<f64> = (0..30).map(|i| 10.0 + i as f64).collect();
        assert!(momentum_summary(&closes, 29).entries.iter().all(|e| e.z == 3.0));
    }

    fn input<'a>(ws: &'a WorkingSet, m: &'a MomentumSummary, train: Option<TrainFacts>) -> DecisionInput<'a> {
        DecisionInput { date: date(), working_set: ws, momentum: m, position: 0, train }
    }

    #[test]
    fn stub_rising_momentum_buys_and_cites() {
        let reg = PromptRegistry::builtin();
        let p = StubProvider::new(3);
        let (w, m) = (ws(), momentum_summary(&rising(), 30));
        let d = decide_direction(&input(&w, &m, None), &ctx(&reg, &p)).unwrap();
        assert_eq!(d.direction, Direction::Buy);
        assert_eq!(d.citations.short, vec![1, 2]);
        assert_eq!(d.citations.reflection, vec![7]);
        assert!(d.dropped_citations.is_empty());
    }

    #[test]
    fn stub_flat_momentum_holds_with_empty_citations_and_no_quantity_call() {
        let reg = PromptRegistry::builtin();
        let p = RecordingProvider::new(StubProvider::new(3));
        let (w, m) = (ws(), momentum_summary(&[20.0; 30], 29));
        let c = ctx(&reg, &p);
        let d = decide_direction(&input(&w, &m, None), &c).unwrap();
        assert_eq!(d.direction, Direction::Hold);
        assert!(d.citations.is_empty());
        let q = decide_quantity(&d, &input(&w, &m, None), 200, QuantityFallback::MinLot, &c).unwrap();
        assert_eq!(q.quantity, 0);
        assert_eq!(p.count("decide-quantity-test"), 0);
    }

    #[test]
    fn strong_signal_quantity_is_capped() {
        let reg = PromptRegistry::builtin();
        let p = StubProvider::new(3);
        let closes: Vec<f64> = (0..40).map(|i| 100.0 + 3.0 * i as f64).collect();
        let (w, m) = (ws(), momentum_summary(&closes, 39));
        let c = ctx(&reg, &p);
        let d = decide_direction(&input(&w, &m, None), &c).unwrap();
        let q = decide_quantity(&d, &input(&w, &m, None), 200, QuantityFallback::MinLot, &c).unwrap();
        assert_eq!(q.quantity, 200);
    }

    fn over_cap_provider() -> ScriptedProvider {
        let p = ScriptedProvider::new();
        p.push(
            "decide-quantity-test",
            r#"{"order_size": 250, "summary_reason": "all in", "short_memory_index": [],
               "middle_memory_index": [], "long_memory_index": [], "reflection_memory_index": []}"#,
        );
        p
    }

    fn buy() -> DirectionOutcome {
        DirectionOutcome {
            direction: Direction::Buy,
            rationale: "r".into(),
            strategic_intent: StrategicIntent::ShortTermTactical,
            citations: MemoryCitations::default(),
            dropped_citations: vec![],
            reflection_analysis: None,
        }
    }

    #[test]
    fn over_cap_response_falls_back_to_min_lot() {
        let reg = PromptRegistry::builtin();
        let p = over_cap_provider();
        let (w, m) = (ws(), MomentumSummary::default());
        let q = decide_quantity(&buy(), &input(&w, &m, None), 200, QuantityFallback::MinLot, &ctx(&reg, &p)).unwrap();
        assert_eq!(q.quantity, 1);
        assert_eq!(q.requested, Some(250));
        assert!(q.violation.unwrap().contains("order_size"));
    }

    #[test]
    fn clamp_to_cap_fallback_is_configurable() {
        let reg = PromptRegistry::builtin();
        let p = over_cap_provider();
        let (w, m) = (ws(), MomentumSummary::default());
        let q =
            decide_quantity(&buy(), &input(&w, &m, None), 200, QuantityFallback::ClampToCap, &ctx(&reg, &p)).unwrap();
        assert_eq!(q.quantity, 200);
    }

    #[test]
    fn train_prompt_binds_previous_reward_and_future_deltas() {
        let reg = PromptRegistry::builtin();
        let p = RecordingProvider::new(StubProvider::new(0));
        let (w, m) = (ws(), momentum_summary(&rising(), 30));
        let facts = TrainFacts { t1: 1.5, t7: -2.25, t30: 4.0, prev_reward: -0.125 };
        decide_direction(&input(&w, &m, Some(facts)), &ctx(&reg, &p)).unwrap();
        let text = &p.exchanges()[0].prompt;
        assert!(text.contains("Your decision return is -0.125000"));
        assert!(text.contains("the 7-day difference is -2.2500"));
    }

    #[test]
    fn test_prompts_never_carry_future_fields() {
        let reg = PromptRegistry::builtin();
        let p = RecordingProvider::new(StubProvider::new(0));
        let (w, m) = (ws(), momentum_summary(&rising(), 30));
        let c = ctx(&reg, &p);
        let d = decide_direction(&input(&w, &m, None), &c).unwrap();
        decide_quantity(&d, &input(&w, &m, None), 50, QuantityFallback::MinLot, &c).unwrap();
        for ex in p.exchanges() {
            for marker in LOOKAHEAD_MARKERS {
                assert!(!ex.prompt.contains(marker), "{} leaks {marker}", ex.template_id);
            }
        }
    }

    #[test]
    fn guard_rejects_leaky_test_prompt() {
        let prompt = RenderedPrompt {
            template_id: "decide-direction-test".into(),
            text: "the 30-day difference is 4".into(),
        };
        assert!(matches!(guard_lookahead(&prompt), Err(AgentError::Lookahead { .. })));
    }

    #[test]
    fn unknown_citations_are_dropped_but_decision_stands() {
        let reg = PromptRegistry::builtin();
        let p = ScriptedProvider::new();
        p.push(
            "decide-direction-test",
            r#"{"investment_decision": "sell", "summary_reason": "s", "short_memory_index": [1, 99],
               "middle_memory_index": [], "long_memory_index": [], "reflection_memory_index": [7]}"#,
        );
        let (w, m) = (ws(), MomentumSummary::default());
        let d = decide_direction(&input(&w, &m, None), &ctx(&reg, &p)).unwrap();
        assert_eq!(d.direction, Direction::Sell);
        assert_eq!(d.citations.short, vec![1]);
        assert_eq!(d.dropped_citations, vec![99]);
    }

    #[test]
    fn reflection_carries_reward_sign_and_cited_ids() {
        let reg = PromptRegistry::builtin();
        let p = StubProvider::new(0);
        let cited = MemoryCitations { short: vec![2], reflection: vec![7], ..Default::default() };
        let r = reflect(date(), Direction::Buy, 3, 3, "r", 0.4, &cited, &ws(), &ctx(&reg, &p)).unwrap();
        assert_eq!(r.reward_sign, 1.0);
        assert_eq!(r.promote_ids, vec![2, 7]);
        assert_eq!(r.text, "The buy decision earned a positive reward; the momentum reading matched the market.");
        let r = reflect(date(), Direction::Sell, 3, -3, "r", -0.4, &cited, &ws(), &ctx(&reg, &p)).unwrap();
        assert_eq!(r.reward_sign, -1.0);
    }
}
