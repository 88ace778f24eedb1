//! Prompt template registry.
//!
//! Templates are plain-text files with `{name}` placeholders, listed in a
//! `manifest.toml` together with their response schema. The built-in set is
//! compiled into the binary; [`PromptRegistry::from_dir`] loads an edited copy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}`: placeholder `{name}` is not bound")]
    Unbound { template: String, name: String },
    #[error("template `{template}`: body uses `{name}` which the manifest does not declare")]
    Undeclared { template: String, name: String },
    #[error("template registry: {0}")]
    Load(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum IntBound {
    Literal(i64),
    /// Resolved from the render bindings at parse time, e.g. `"maxcvar"`.
    Binding(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// A string, or a list of strings joined with newlines.
    Text {
        #[serde(default)]
        non_empty: bool,
    },
    Enum { values: Vec<String> },
    Integer { min: IntBound, max: IntBound },
    IntList,
    /// `{"positive": p, "neutral": n, "negative": q}` summing to 1.
    Sentiment,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ResponseSchema {
    pub fields: Vec<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
    pub placeholders: Vec<String>,
    pub schema: Option<ResponseSchema>,
}

/// Rendered prompt text plus the template it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub template_id: String,
    pub text: String,
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").expect("valid regex"))
}

/// `{identifier}` markers in a body, in order of first appearance.
pub fn placeholder_markers(body: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    marker_regex()
        .captures_iter(body)
        .map(|c| c[1].to_string())
        .filter(|n| seen.insert(n.clone()))
        .collect()
}

impl PromptTemplate {
    pub fn render(&self, bindings: &Bindings) -> Result<RenderedPrompt, PromptError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut last = 0;
        for cap in marker_regex().captures_iter(&self.body) {
            let whole = cap.get(0).expect("match");
            let name = &cap[1];
            let value = bindings.get(name).ok_or_else(|| PromptError::Unbound {
                template: self.id.clone(),
                name: name.to_string(),
            })?;
            out.push_str(&self.body[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&self.body[last..]);
        Ok(RenderedPrompt { template_id: self.id.clone(), text: out })
    }
}

#[derive(Deserialize)]
struct Manifest {
    template: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
    placeholders: Vec<String>,
    schema: Option<String>,
}

macro_rules! builtin_files {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../../templates/", $path)))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_files![
    "manifest.toml",
    "filter-10K.txt",
    "filter-10Q.txt",
    "analyze-10K.txt",
    "analyze-10Q.txt",
    "filter-macro.txt",
    "analyze-macro.txt",
    "filter-company-news.txt",
    "analyze-company-news.txt",
    "decide-direction-train.txt",
    "decide-direction-test.txt",
    "decide-quantity-train.txt",
    "decide-quantity-test.txt",
    "reflect.txt",
    "fragments/info-prefix-train.txt",
    "fragments/info-prefix-test.txt",
    "fragments/reward-explanation.txt",
    "fragments/memory-extract-train.txt",
    "fragments/memory-extract-test.txt",
    "fragments/trade-summary-train.txt",
    "fragments/trade-summary-test.txt",
    "fragments/sentiment-direction.txt",
    "fragments/sentiment-quantity.txt",
    "fragments/momentum-explanation.txt",
    "schemas/filter.json",
    "schemas/filter-macro.json",
    "schemas/analyze.json",
    "schemas/analyze-macro.json",
    "schemas/direction-train.json",
    "schemas/direction-test.json",
    "schemas/quantity-train.json",
    "schemas/quantity-test.json",
    "schemas/reflect.json",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl PromptRegistry {
    /// Templates compiled into the crate.
    pub fn builtin() -> Self {
        Self::load(|path| {
            BUILTIN
                .iter()
                .find(|(p, _)| *p == path)
                .map(|(_, body)| body.to_string())
                .ok_or_else(|| format!("missing built-in file {path}"))
        })
        .expect("built-in templates are consistent")
    }

    /// Loads `manifest.toml` and the files it names from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::load(|path| std::fs::read_to_string(dir.join(path)).map_err(|e| format!("{path}: {e}")))
    }

    fn load(read: impl Fn(&str) -> Result<String, String>) -> Result<Self, PromptError> {
        let manifest: Manifest =
            toml::from_str(&read("manifest.toml").map_err(PromptError::Load)?)
                .map_err(|e| PromptError::Load(format!("manifest.toml: {e}")))?;
        let mut templates = BTreeMap::new();
        for entry in manifest.template {
            let body = read(&entry.file).map_err(PromptError::Load)?;
            for name in placeholder_markers(&body) {
                if !entry.placeholders.contains(&name) {
                    return Err(PromptError::Undeclared { template: entry.id.clone(), name });
                }
            }
            let schema = match &entry.schema {
                Some(path) => Some(
                    serde_json::from_str(&read(path).map_err(PromptError::Load)?)
                        .map_err(|e| PromptError::Load(format!("{path}: {e}")))?,
                ),
                None => None,
            };
            templates.insert(
                entry.id.clone(),
                PromptTemplate { id: entry.id, body, placeholders: entry.placeholders, schema },
            );
        }
        Ok(Self { templates })
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates.get(id).ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, id: &str, bindings: &Bindings) -> Result<RenderedPrompt, PromptError> {
        self.get(id)?.render(bindings)
    }

    pub fn schema(&self, id: &str) -> Result<&ResponseSchema, PromptError> {
        self.get(id)?
            .schema
            .as_ref()
            .ok_or_else(|| PromptError::Load(format!("template `{id}` has no response schema")))
    }
}

/// Convenience for building [`Bindings`] from string pairs.
pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
