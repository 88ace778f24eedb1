//! Language-model facing layer.
//!
//! - [`prompts`]: template registry and rendering.
//! - [`parse`]: JSON extraction, one repair round and schema validation.
//! - [`provider`]: the completion-provider trait plus stub, scripted, recording
//!   and remote HTTP implementations.
//! - [`signal`]: filtering and analysis agents turning raw text into insights.
//! - [`decision`]: direction and quantity agents and the reflection step.

pub mod decision;
pub mod parse;
pub mod prompts;
pub mod provider;
pub mod signal;

pub use decision::{
    decide_direction, decide_quantity, momentum_summary, reflect, DecisionInput, DirectionOutcome,
    MomentumSummary, QuantityFallback, QuantityOutcome, Reflection, TrainFacts,
};
pub use parse::{parse_response, ParseError, ParsedResponse};
pub use prompts::{Bindings, PromptError, PromptRegistry, PromptTemplate, RenderedPrompt, ResponseSchema};
pub use provider::{
    complete, CompletionProvider, DecodeParams, ProviderConfig, ProviderError, ProviderMode,
    RecordingProvider, RemoteProvider, ScriptedProvider, StubProvider,
};
pub use signal::{analyze, analyze_all, filter_signal, FilteredSignal, SignalItem};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// What every agent call needs: templates, a provider and decode settings.
#[derive(Clone, Copy)]
pub struct AgentContext<'a> {
    pub registry: &'a PromptRegistry,
    pub provider: &'a dyn CompletionProvider,
    pub params: DecodeParams,
    pub symbol: &'a str,
}

impl AgentContext<'_> {
    /// Render, complete and parse against the template's schema.
    pub fn call(&self, template_id: &str, bindings: &Bindings) -> Result<ParsedResponse, AgentError> {
        let prompt = self.registry.render(template_id, bindings)?;
        self.complete_parsed(&prompt, bindings)
    }

    pub fn complete_parsed(&self, prompt: &RenderedPrompt, bindings: &Bindings) -> Result<ParsedResponse, AgentError> {
        let template_id = prompt.template_id.as_str();
        let raw = self.provider.complete(prompt, &self.params)?;
        let parsed = parse_response(&raw, self.registry.schema(template_id)?, bindings)?;
        if parsed.repaired {
            tracing::debug!(template = template_id, "response needed JSON repair");
        }
        Ok(parsed)
    }
}

/// Where an insight came from; decides the memory layer it is allocated to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    #[serde(rename = "company-news")]
    CompanyNews,
    #[serde(rename = "macro-news")]
    MacroNews,
    #[serde(rename = "10-K")]
    Filing10K,
    #[serde(rename = "10-Q")]
    Filing10Q,
    #[serde(rename = "reflection")]
    Reflection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonLabel {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relevance {
    High,
    Medium,
    Low,
}

impl Relevance {
    pub fn importance(self) -> f64 {
        match self {
            Relevance::High => 0.9,
            Relevance::Medium => 0.6,
            Relevance::Low => 0.3,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "high" => Some(Relevance::High),
            "medium" => Some(Relevance::Medium),
            "low" => Some(Relevance::Low),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationType {
    Direct,
    Indirect,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sentiment {
    pub positive: f64,
    pub neutral: f64,
    pub negative: f64,
}

impl Sentiment {
    pub fn is_distribution(&self) -> bool {
        let parts = [self.positive, self.neutral, self.negative];
        parts.iter().all(|p| (0.0..=1.0).contains(p)) && (parts.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }
}

/// Structured output of an analysis agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisInsight {
    pub source_kind: SourceKind,
    pub insight: String,
    pub short_term_label: HorizonLabel,
    pub mid_long_label: HorizonLabel,
    pub relevance: Relevance,
    pub reason: String,
    pub relation_type: Option<RelationType>,
    pub sentiment: Option<Sentiment>,
}

impl AnalysisInsight {
    pub fn reflection(text: impl Into<String>) -> Self {
        Self {
            source_kind: SourceKind::Reflection,
            insight: text.into(),
            short_term_label: HorizonLabel::Neutral,
            mid_long_label: HorizonLabel::Neutral,
            relevance: Relevance::Medium,
            reason: String::new(),
            relation_type: None,
            sentiment: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("items {ids:?}: {source}")]
    Items {
        ids: Vec<String>,
        #[source]
        source: Box<AgentError>,
    },
    #[error("test-mode prompt {template_id} exposes future price data ({marker})")]
    Lookahead { template_id: String, marker: String },
    #[error("{0}")]
    Invalid(String),
}

impl AgentError {
    /// Provider failures are surfaced separately from data/parse failures by the CLI.
    pub fn is_provider(&self) -> bool {
        match self {
            AgentError::Provider(_) => true,
            AgentError::Items { source, .. } => source.is_provider(),
            _ => false,
        }
    }
}
