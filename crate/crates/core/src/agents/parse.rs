//! Response parsing: strict JSON first, one repair round, then schema checks.

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

use super::prompts::{Bindings, FieldKind, IntBound, ResponseSchema};
use super::Sentiment;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("response is not a JSON object even after repair: {excerpt:?}")]
    Unparseable { excerpt: String },
    #[error("field `{field}` is required but missing")]
    Missing { field: String },
    #[error("field `{field}` must be {expected}")]
    WrongType { field: String, expected: &'static str },
    #[error("field `{field}` must not be empty")]
    Empty { field: String },
    #[error("field `{field}` = {value:?} is not one of {allowed:?}")]
    NotAllowed { field: String, value: String, allowed: Vec<String> },
    #[error("field `{field}` = {value} is outside [{min}, {max}]")]
    OutOfRange { field: String, value: i64, min: i64, max: i64 },
    #[error("field `{field}`: sentiment must sum to 1")]
    NotDistribution { field: String },
    #[error("schema bound `{0}` is not bound to an integer")]
    UnboundLimit(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Text(String),
    Enum(String),
    Integer(i64),
    IntList(Vec<u64>),
    Sentiment(Sentiment),
}

/// A schema-valid response. Optional fields that were absent are not present.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub fields: BTreeMap<String, FieldValue>,
    /// True when the strict parse failed and the repair round succeeded.
    pub repaired: bool,
}

impl ParsedResponse {
    pub fn text(&self, name: &str) -> Option<&str> {
        match self.fields.get(name)? {
            FieldValue::Text(s) | FieldValue::Enum(s) => Some(s),
            _ => None,
        }
    }

    pub fn integer(&self, name: &str) -> Option<i64> {
        match self.fields.get(name)? {
            FieldValue::Integer(v) => Some(*v),
            _ => None,
        }
    }

    pub fn ids(&self, name: &str) -> &[u64] {
        match self.fields.get(name) {
            Some(FieldValue::IntList(v)) => v,
            _ => &[],
        }
    }

    pub fn sentiment(&self, name: &str) -> Option<Sentiment> {
        match self.fields.get(name)? {
            FieldValue::Sentiment(s) => Some(*s),
            _ => None,
        }
    }
}

fn strip_fences(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The first `{...}` span with balanced braces, skipping braces inside strings.
pub fn first_balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_object(raw: &str) -> Result<(serde_json::Map<String, Value>, bool), ParseError> {
    if let Ok(Value::Object(map)) = serde_json::from_str(raw.trim()) {
        return Ok((map, false));
    }
    let stripped = strip_fences(raw);
    if let Some(obj) = first_balanced_object(&stripped) {
        if let Ok(Value::Object(map)) = serde_json::from_str(obj) {
            return Ok((map, true));
        }
    }
    let excerpt: String = raw.chars().take(120).collect();
    Err(ParseError::Unparseable { excerpt })
}

fn resolve(bound: &IntBound, bindings: &Bindings) -> Result<i64, ParseError> {
    match bound {
        IntBound::Literal(v) => Ok(*v),
        IntBound::Binding(name) => bindings
            .get(name)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| ParseError::UnboundLimit(name.clone())),
    }
}

fn as_text(field: &str, v: &Value) -> Result<String, ParseError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => Ok(s.clone()),
                _ => Err(ParseError::WrongType { field: field.into(), expected: "a string or list of strings" }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.join("\n")),
        _ => Err(ParseError::WrongType { field: field.into(), expected: "a string or list of strings" }),
    }
}

fn as_integer(field: &str, v: &Value) -> Result<i64, ParseError> {
    let wrong = || ParseError::WrongType { field: field.into(), expected: "an integer" };
    match v {
        Value::Number(n) => n.as_i64().or_else(|| {
            n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15).map(|f| f as i64)
        }),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(wrong)
}

fn validate_field(
    name: &str,
    kind: &FieldKind,
    v: &Value,
    bindings: &Bindings,
) -> Result<FieldValue, ParseError> {
    match kind {
        FieldKind::Text { non_empty } => {
            let s = as_text(name, v)?;
            if *non_empty && s.trim().is_empty() {
                return Err(ParseError::Empty { field: name.into() });
            }
            Ok(FieldValue::Text(s))
        }
        FieldKind::Enum { values } => {
            let s = match v {
                Value::String(s) => s.trim().to_lowercase(),
                _ => return Err(ParseError::WrongType { field: name.into(), expected: "a string" }),
            };
            if values.contains(&s) {
                Ok(FieldValue::Enum(s))
            } else {
                Err(ParseError::NotAllowed { field: name.into(), value: s, allowed: values.clone() })
            }
        }
        FieldKind::Integer { min, max } => {
            let value = as_integer(name, v)?;
            let (min, max) = (resolve(min, bindings)?, resolve(max, bindings)?);
            if value < min || value > max {
                return Err(ParseError::OutOfRange { field: name.into(), value, min, max });
            }
            Ok(FieldValue::Integer(value))
        }
        FieldKind::IntList => match v {
            Value::Null => Ok(FieldValue::IntList(Vec::new())),
            Value::Array(items) => items
                .iter()
                .map(|i| {
                    as_integer(name, i).and_then(|x| {
                        u64::try_from(x).map_err(|_| ParseError::WrongType {
                            field: name.into(),
                            expected: "a list of non-negative integers",
                        })
                    })
                })
                .collect::<Result<_, _>>()
                .map(FieldValue::IntList),
            _ => Err(ParseError::WrongType { field: name.into(), expected: "a list of integers" }),
        },
        FieldKind::Sentiment => {
            let s: Sentiment = serde_json::from_value(v.clone()).map_err(|_| ParseError::WrongType {
                field: name.into(),
                expected: "an object with positive/neutral/negative",
            })?;
            if !s.is_distribution() {
                return Err(ParseError::NotDistribution { field: name.into() });
            }
            Ok(FieldValue::Sentiment(s))
        }
    }
}

/// Parses `raw` and validates it against `schema`. Integer bounds naming a
/// binding (e.g. `maxcvar`) are looked up in `bindings`.
pub fn parse_response(
    raw: &str,
    schema: &ResponseSchema,
    bindings: &Bindings,
) -> Result<ParsedResponse, ParseError> {
    let (map, repaired) = parse_object(raw)?;
    let mut fields = BTreeMap::new();
    for spec in &schema.fields {
        match map.get(&spec.name) {
            None | Some(Value::Null) if spec.required => {
                return Err(ParseError::Missing { field: spec.name.clone() })
            }
            None | Some(Value::Null) => {}
            Some(v) => {
                fields.insert(spec.name.clone(), validate_field(&spec.name, &spec.kind, v, bindings)?);
            }
        }
    }
    Ok(ParsedResponse { fields, repaired })
}
