//! Deterministic offline provider.
//!
//! Responses depend only on the prompt text and the seed. The decision rules
//! read the momentum lines and memory blocks that the decision agents embed in
//! `investment_info`; the seed only picks between equivalent phrasings.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::json;

use super::{CompletionProvider, DecodeParams, ProviderError};
use crate::agents::prompts::RenderedPrompt;

/// |z| below this is treated as no signal.
pub const HOLD_BAND: f64 = 0.1;

const GOSSIP_MARKERS: &[&str] =
    &["gossip", "celebrity", "entertainment", "red carpet", "reality show", "award show", "tabloid"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubProvider {
    seed: u64,
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid regex"))
}

fn momentum_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"Momentum \((\d+)-day\): change ([+-]?[0-9.]+), z-score ([+-]?[0-9.]+)")
}

fn cap_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"maximum order quantity (\d+)|range 1 to (\d+)")
}

fn layer_header_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"\b(short-term|mid-term|long-term|reflection) memory\b")
}

fn memory_line_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"^\s*\[(\d+)\]")
}

fn item_line_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r#"^"?\[([^\]]+)\]\s*(.*?)"?$"#)
}

fn symbol_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?:Target company|The target company is):? (\S+)")
}

/// z-scores keyed by lookback, as embedded by the decision agents.
pub fn parse_momentum(text: &str) -> BTreeMap<u32, f64> {
    momentum_re()
        .captures_iter(text)
        .filter_map(|c| Some((c[1].parse().ok()?, c[3].parse().ok()?)))
        .collect()
}

/// Memory ids listed under each layer header, keyed by JSON field name.
fn parse_citations(text: &str) -> BTreeMap<&'static str, Vec<u64>> {
    let mut out: BTreeMap<&'static str, Vec<u64>> = [
        ("short_memory_index", vec![]),
        ("middle_memory_index", vec![]),
        ("long_memory_index", vec![]),
        ("reflection_memory_index", vec![]),
    ]
    .into_iter()
    .collect();
    let mut current = None;
    for line in text.lines() {
        if let Some(c) = layer_header_re().captures(line) {
            current = Some(match &c[1] {
                "short-term" => "short_memory_index",
                "mid-term" => "middle_memory_index",
                "long-term" => "long_memory_index",
                _ => "reflection_memory_index",
            });
        } else if let (Some(layer), Some(c)) = (current, memory_line_re().captures(line)) {
            if let Ok(id) = c[1].parse() {
                out.get_mut(layer).expect("known layer").push(id);
            }
        }
    }
    out
}

fn items(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| item_line_re().captures(l.trim()))
        .map(|c| (c[1].to_string(), c[2].to_string()))
        .collect()
}

fn excerpt(items: &[(String, String)]) -> String {
    let joined: Vec<String> = items.iter().map(|(_, t)| t.chars().take(240).collect()).collect();
    joined.join(" ")
}

impl StubProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn pick<'a>(&self, text: &str, options: &[&'a str]) -> &'a str {
        options[(fnv1a(text.as_bytes(), self.seed) % options.len() as u64) as usize]
    }

    fn direction(&self, text: &str, train: bool) -> String {
        let momentum = parse_momentum(text);
        let z5 = momentum.get(&5).copied().unwrap_or(0.0);
        let z20 = momentum.get(&20).copied().unwrap_or(0.0);
        let decision = if z5 >= HOLD_BAND {
            "buy"
        } else if z5 <= -HOLD_BAND {
            "sell"
        } else {
            "hold"
        };
        let intent = if z5 * z20 > 0.0 { "long-term-position" } else { "short-term-tactical" };
        let mut cites = parse_citations(text);
        if decision == "hold" {
            cites.values_mut().for_each(Vec::clear);
        }
        let lead = self.pick(
            text,
            &["Recent momentum drives the call", "The call follows recent momentum", "Momentum sets the direction"],
        );
        let mut out = json!({
            "investment_decision": decision,
            "summary_reason": format!("{lead}: 5-day z-score {z5:+.2}, 20-day z-score {z20:+.2}."),
            "strategic_intent": intent,
        });
        for (k, v) in cites {
            out[k] = json!(v);
        }
        if train {
            out["reflection_analysis"] = json!(format!("Direction {decision} taken on momentum z {z5:+.2}."));
        }
        out.to_string()
    }

    fn quantity(&self, text: &str, train: bool) -> String {
        let z5 = parse_momentum(text).get(&5).copied().unwrap_or(0.0);
        let cap: i64 = cap_re()
            .captures(text)
            .and_then(|c| c.get(1).or_else(|| c.get(2)))
            .and_then(|m| m.as_str().parse().ok())
            .unwrap_or(1)
            .max(1);
        let size = ((cap as f64 * z5.abs()).round() as i64).clamp(1, cap);
        let lead = self.pick(text, &["Size scales with signal strength", "Order sized by momentum strength"]);
        let mut out = json!({
            "order_size": size,
            "summary_reason": format!("{lead}: |z| {:.2} of cap {cap}.", z5.abs()),
        });
        for (k, v) in parse_citations(text) {
            out[k] = json!(v);
        }
        if train {
            out["reflection_analysis"] = json!(format!("Sized {size} of {cap} on |z| {:.2}.", z5.abs()));
        }
        out.to_string()
    }

    fn filter(&self, text: &str) -> String {
        let found = items(text);
        let key_points = if found.is_empty() { "No material items.".to_string() } else { excerpt(&found) };
        let reason = self.pick(text, &["Items retained in source order.", "All items kept; no ranking signal."]);
        json!({ "key_points": key_points, "reason": reason }).to_string()
    }

    fn filter_macro(&self, text: &str) -> String {
        let article = text.split("News article:").nth(1).unwrap_or(text);
        let lower = article.to_lowercase();
        let symbol = symbol_re().captures(text).map(|c| c[1].to_string()).unwrap_or_default();
        let (relation, reason) = if GOSSIP_MARKERS.iter().any(|m| lower.contains(m)) {
            ("none", "Entertainment or gossip content unrelated to the business.")
        } else if !symbol.is_empty() && article.contains(&symbol) {
            ("direct", "The article names the company.")
        } else {
            ("indirect", "Market-wide or sector news that can move the stock.")
        };
        json!({ "relation_type": relation, "reason": reason }).to_string()
    }

    fn analyze(&self, text: &str, kind: &str) -> String {
        let symbol = symbol_re().captures(text).map(|c| c[1].to_string()).unwrap_or_default();
        let body = excerpt(&items(text));
        let insight = format!(
            "This {kind} is neutral for {symbol} in the short term, and neutral in the medium to long term. {body}"
        );
        let reason = self.pick(text, &["No directional evidence in the text.", "Content lacks a clear price catalyst."]);
        json!({ "insight": insight.trim_end(), "reason": reason, "relevance": "medium" }).to_string()
    }

    fn reflect(&self, text: &str) -> String {
        static DIR: OnceLock<Regex> = OnceLock::new();
        static REWARD: OnceLock<Regex> = OnceLock::new();
        let dir = re(&DIR, r"Decision: (buy|sell|hold)")
            .captures(text)
            .map(|c| c[1].to_string())
            .unwrap_or_else(|| "hold".into());
        let reward: f64 = re(&REWARD, r"Reward: ([+-]?[0-9.eE+-]+)")
            .captures(text)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(0.0);
        let sign = if reward > 0.0 {
            "positive"
        } else if reward < 0.0 {
            "negative"
        } else {
            "zero"
        };
        let tail = match sign {
            "positive" => "the momentum reading matched the market.",
            "negative" => "the momentum reading was overemphasized.",
            _ => "the position did not move with the market.",
        };
        json!({ "reflection_analysis": format!("The {dir} decision earned a {sign} reward; {tail}") }).to_string()
    }
}

impl CompletionProvider for StubProvider {
    fn complete(&self, prompt: &RenderedPrompt, _: &DecodeParams) -> Result<String, ProviderError> {
        let text = &prompt.text;
        Ok(match prompt.template_id.as_str() {
            "decide-direction-train" => self.direction(text, true),
            "decide-direction-test" => self.direction(text, false),
            "decide-quantity-train" => self.quantity(text, true),
            "decide-quantity-test" => self.quantity(text, false),
            "filter-macro" => self.filter_macro(text),
            "filter-10K" | "filter-10Q" | "filter-company-news" => self.filter(text),
            "analyze-10K" => self.analyze(text, "10-K report"),
            "analyze-10Q" => self.analyze(text, "10-Q report"),
            "analyze-company-news" => self.analyze(text, "news"),
            "analyze-macro" => self.analyze(text, "macro news"),
            "reflect" => self.reflect(text),
            other => return Err(ProviderError::Config(format!("stub has no rule for template `{other}`"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn run(id: &str, text: &str) -> Value {
        let p = StubProvider::new(1);
        let raw = p
            .complete(&RenderedPrompt { template_id: id.into(), text: text.into() }, &DecodeParams::default())
            .unwrap();
        serde_json::from_str(&raw).unwrap()
    }

    const INFO: &str = "Retrieve the most relevant information from the short-term memory for the current investment decision.\n\
        [3] delivery beat\n[4] new plant\n\
        Retrieve the most relevant information from the reflection memory for the current investment decision.\n\
        [9] earlier buy worked\n\
        Momentum (5-day): change +4.0000, z-score +0.8500\n\
        Momentum (10-day): change +6.0000, z-score +0.9000\n\
        Momentum (20-day): change +8.0000, z-score +0.6000\n";

    #[test]
    fn positive_momentum_buys_and_cites_working_set() {
        let v = run("decide-direction-test", INFO);
        assert_eq!(v["investment_decision"], "buy");
        assert_eq!(v["strategic_intent"], "long-term-position");
        assert_eq!(v["short_memory_index"], json!([3, 4]));
        assert_eq!(v["reflection_memory_index"], json!([9]));
        assert!(v.get("reflection_analysis").is_none());
    }

    #[test]
    fn flat_momentum_holds_without_citations() {
        let v = run("decide-direction-train", &INFO.replace("+0.8500", "+0.0500"));
        assert_eq!(v["investment_decision"], "hold");
        assert_eq!(v["short_memory_index"], json!([]));
        assert!(v["reflection_analysis"].is_string());
    }

    #[test]
    fn negative_momentum_sells() {
        let v = run("decide-direction-test", &INFO.replace("+0.8500", "-0.8500"));
        assert_eq!(v["investment_decision"], "sell");
        assert_eq!(v["strategic_intent"], "short-term-tactical");
    }

    #[test]
    fn quantity_is_clamped_scaled_momentum() {
        // round(200 * 0.85) = 170
        let v = run("decide-quantity-test", &format!("maximum order quantity 200\n{INFO}"));
        assert_eq!(v["order_size"], 170);
        let strong = INFO.replace("+0.8500", "+2.5000");
        let v = run("decide-quantity-train", &format!("range 1 to 200\n{strong}"));
        assert_eq!(v["order_size"], 200);
        let weak = INFO.replace("+0.8500", "+0.0010");
        assert_eq!(run("decide-quantity-test", &format!("maximum order quantity 200\n{weak}"))["order_size"], 1);
    }

    #[test]
    fn macro_gossip_is_unrelated() {
        let text = "Target company: TSLA\nNews article:\n[m1] Celebrity gossip from the red carpet";
        assert_eq!(run("filter-macro", text)["relation_type"], "none");
        let text = "Target company: TSLA\nNews article:\n[m2] Fed holds rates";
        assert_eq!(run("filter-macro", text)["relation_type"], "indirect");
        let text = "Target company: TSLA\nNews article:\n[m3] TSLA recalls vehicles";
        assert_eq!(run("filter-macro", text)["relation_type"], "direct");
    }

    #[test]
    fn reflection_text_tracks_direction_and_reward_sign() {
        let v = run("reflect", "Decision: buy, quantity 3\nReward: -0.25");
        assert_eq!(v["reflection_analysis"], "The buy decision earned a negative reward; the momentum reading was overemphasized.");
    }

    #[test]
    fn same_prompt_same_seed_same_text() {
        let p = StubProvider::new(42);
        let prompt = RenderedPrompt { template_id: "decide-direction-test".into(), text: INFO.into() };
        let d = DecodeParams::default();
        assert_eq!(p.complete(&prompt, &d).unwrap(), p.complete(&prompt, &d).unwrap());
    }
}
