//! Layered memory store.
//!
//! Analysed insights are allocated to a layer by source (annual filings go deep,
//! news stays shallow), retrieved into a per-layer working set by a composite
//! recency/importance/relevance score, and promoted one layer deeper each time a
//! record accumulates `promotion_threshold` citations in positively rewarded
//! decisions.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AnalysisInsight, SourceKind};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("unknown memory id {0}")]
    UnknownId(u64),
    #[error("snapshot schema version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Short,
    Mid,
    Long,
    Reflection,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Short, Layer::Mid, Layer::Long, Layer::Reflection];

    /// Depth used by the monotonicity invariant. Reflection sits outside the
    /// short/mid/long chain and never moves.
    pub fn depth(self) -> u8 {
        match self {
            Layer::Short => 0,
            Layer::Mid => 1,
            Layer::Long => 2,
            Layer::Reflection => 3,
        }
    }

    fn deeper(self) -> Layer {
        match self {
            Layer::Short => Layer::Mid,
            Layer::Mid | Layer::Long => Layer::Long,
            Layer::Reflection => Layer::Reflection,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Short => "short",
            Layer::Mid => "mid",
            Layer::Long => "long",
            Layer::Reflection => "reflection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: u64,
    pub layer: Layer,
    pub content: String,
    pub importance: f64,
    pub created_date: NaiveDate,
    /// Trading-day ordinal of `created_date` in the replay stream.
    pub created_index: usize,
    pub last_access_date: NaiveDate,
    pub validity_count: u32,
    pub source_kind: SourceKind,
}

/// Memory ids cited by a decision, one list per layer.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryCitations {
    pub short: Vec<u64>,
    pub mid: Vec<u64>,
    pub long: Vec<u64>,
    pub reflection: Vec<u64>,
}

impl MemoryCitations {
    pub fn layer(&self, layer: Layer) -> &[u64] {
        match layer {
            Layer::Short => &self.short,
            Layer::Mid => &self.mid,
            Layer::Long => &self.long,
            Layer::Reflection => &self.reflection,
        }
    }

    pub fn layer_mut(&mut self, layer: Layer) -> &mut Vec<u64> {
        match layer {
            Layer::Short => &mut self.short,
            Layer::Mid => &mut self.mid,
            Layer::Long => &mut self.long,
            Layer::Reflection => &mut self.reflection,
        }
    }

    /// Distinct ids in ascending order.
    pub fn all_ids(&self) -> Vec<u64> {
        let set: BTreeSet<u64> = Layer::ALL.iter().flat_map(|l| self.layer(*l).iter().copied()).collect();
        set.into_iter().collect()
    }

    pub fn is_empty(&self) -> bool {
        Layer::ALL.iter().all(|l| self.layer(*l).is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub recency: f64,
    pub importance: f64,
    pub relevance: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { recency: 0.4, importance: 0.3, relevance: 0.3 }
    }
}

/// Recency half-lives in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfLives {
    pub short: f64,
    pub mid: f64,
    pub long: f64,
    pub reflection: f64,
}

impl Default for HalfLives {
    fn default() -> Self {
        Self { short: 7.0, mid: 45.0, long: 365.0, reflection: 90.0 }
    }
}

impl HalfLives {
    pub fn of(&self, layer: Layer) -> f64 {
        match layer {
            Layer::Short => self.short,
            Layer::Mid => self.mid,
            Layer::Long => self.long,
            Layer::Reflection => self.reflection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub weights: ScoreWeights,
    pub half_lives: HalfLives,
    pub promotion_threshold: u32,
    pub k_per_layer: usize,
    pub capacity_per_layer: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            weights: ScoreWeights::default(),
            half_lives: HalfLives::default(),
            promotion_threshold: 3,
            k_per_layer: 5,
            capacity_per_layer: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredMemory {
    pub id: u64,
    pub content: String,
    pub score: f64,
    pub recency: f64,
    pub importance: f64,
    pub relevance: f64,
}

/// Per-layer top-k records handed to the decision prompts.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct WorkingSet {
    pub short: Vec<ScoredMemory>,
    pub mid: Vec<ScoredMemory>,
    pub long: Vec<ScoredMemory>,
    pub reflection: Vec<ScoredMemory>,
}

impl WorkingSet {
    pub fn layer(&self, layer: Layer) -> &[ScoredMemory] {
        match layer {
            Layer::Short => &self.short,
            Layer::Mid => &self.mid,
            Layer::Long => &self.long,
            Layer::Reflection => &self.reflection,
        }
    }

    fn layer_mut(&mut self, layer: Layer) -> &mut Vec<ScoredMemory> {
        match layer {
            Layer::Short => &mut self.short,
            Layer::Mid => &mut self.mid,
            Layer::Long => &mut self.long,
            Layer::Reflection => &mut self.reflection,
        }
    }

    pub fn is_empty(&self) -> bool {
        Layer::ALL.iter().all(|l| self.layer(*l).is_empty())
    }

    pub fn contains(&self, layer: Layer, id: u64) -> bool {
        self.layer(layer).iter().any(|m| m.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Promotion {
    pub id: u64,
    pub from: Layer,
    pub to: Layer,
}

/// Lower-cased alphanumeric tokens of length >= 2.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 2)
        .map(|w| w.to_lowercase())
        .collect()
}

/// Fraction of distinct query terms present in `content`.
pub fn term_overlap(query: &BTreeSet<String>, content: &str) -> f64 {
    if query.is_empty() {
        return 0.0;
    }
    let tokens = tokenize(content);
    query.iter().filter(|q| tokens.contains(*q)).count() as f64 / query.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    config: MemoryConfig,
    next_id: u64,
    records: BTreeMap<u64, MemoryRecord>,
    /// Evicted ids and the layer they were evicted from.
    tombstones: BTreeMap<u64, Layer>,
}

impl Default for MemoryStore {
    fn default() -> Self {
        Self::new(MemoryConfig::default())
    }
}

impl MemoryStore {
    pub fn new(config: MemoryConfig) -> Self {
        Self { config, next_id: 1, records: BTreeMap::new(), tombstones: BTreeMap::new() }
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&MemoryRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.values()
    }

    pub fn is_tombstoned(&self, id: u64) -> bool {
        self.tombstones.contains_key(&id)
    }

    pub fn layer_of(&self, id: u64) -> Option<Layer> {
        self.records.get(&id).map(|r| r.layer).or_else(|| self.tombstones.get(&id).copied())
    }

    /// Layer a freshly analysed insight lands in.
    pub fn layer_for(source: SourceKind) -> Layer {
        match source {
            SourceKind::Filing10K => Layer::Long,
            SourceKind::Filing10Q => Layer::Mid,
            SourceKind::CompanyNews | SourceKind::MacroNews => Layer::Short,
            SourceKind::Reflection => Layer::Reflection,
        }
    }

    pub fn allocate(&mut self, insight: &AnalysisInsight, date: NaiveDate, day_index: usize) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let layer = Self::layer_for(insight.source_kind);
        let content = if insight.reason.is_empty() {
            insight.insight.clone()
        } else {
            format!("{} Reason: {}", insight.insight, insight.reason)
        };
        self.records.insert(
            id,
            MemoryRecord {
                id,
                layer,
                content,
                importance: insight.relevance.importance(),
                created_date: date,
                created_index: day_index,
                last_access_date: date,
                validity_count: 0,
                source_kind: insight.source_kind,
            },
        );
        self.enforce_capacity(layer, day_index);
        id
    }

    fn recency(&self, record: &MemoryRecord, day_index: usize) -> f64 {
        let age = day_index.saturating_sub(record.created_index) as f64;
        (-age / self.config.half_lives.of(record.layer)).exp()
    }

    fn score(&self, record: &MemoryRecord, query: &BTreeSet<String>, day_index: usize) -> ScoredMemory {
        let w = self.config.weights;
        let total = w.recency + w.importance + w.relevance;
        let recency = self.recency(record, day_index);
        let relevance = term_overlap(query, &record.content);
        let importance = record.importance.clamp(0.0, 1.0);
        let score = if total > 0.0 {
            (w.recency * recency + w.importance * importance + w.relevance * relevance) / total
        } else {
            0.0
        };
        ScoredMemory { id: record.id, content: record.content.clone(), score, recency, importance, relevance }
    }

    /// Top `k_per_layer` records of each layer by composite score; ties go to the
    /// lower id.
    pub fn retrieve(&self, query_terms: &[String], day_index: usize, k_per_layer: usize) -> WorkingSet {
        let query: BTreeSet<String> = query_terms.iter().flat_map(|t| tokenize(t)).collect();
        let mut ws = WorkingSet::default();
        for layer in Layer::ALL {
            let mut scored: Vec<ScoredMemory> = self
                .records
                .values()
                .filter(|r| r.layer == layer)
                .map(|r| self.score(r, &query, day_index))
                .collect();
            scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
            scored.truncate(k_per_layer);
            *ws.layer_mut(layer) = scored;
        }
        ws
    }

    pub fn mark_accessed(&mut self, ids: &[u64], date: NaiveDate) {
        for id in ids {
            if let Some(r) = self.records.get_mut(id) {
                if date > r.last_access_date {
                    r.last_access_date = date;
                }
            }
        }
    }

    /// Credits cited records after a decision. Only a positive reward counts; each
    /// `promotion_threshold`-th credit moves the record one layer deeper.
    ///
    /// Unknown ids fail the whole call before anything changes. Tombstoned ids are
    /// skipped.
    pub fn promote(&mut self, cited_ids: &[u64], reward_sign: f64) -> Result<Vec<Promotion>, MemoryError> {
        if let Some(id) = cited_ids
            .iter()
            .find(|id| !self.records.contains_key(id) && !self.tombstones.contains_key(id))
        {
            return Err(MemoryError::UnknownId(*id));
        }
        let mut promotions = Vec::new();
        if !(reward_sign > 0.0) {
            return Ok(promotions);
        }
        let threshold = self.config.promotion_threshold.max(1);
        let unique: BTreeSet<u64> = cited_ids.iter().copied().collect();
        let mut touched = BTreeSet::new();
        for id in unique {
            let Some(rec) = self.records.get_mut(&id) else {
                tracing::debug!(id, "skipping promotion of evicted memory");
                continue;
            };
            rec.validity_count += 1;
            if rec.validity_count % threshold == 0 {
                let to = rec.layer.deeper();
                if to != rec.layer {
                    promotions.push(Promotion { id, from: rec.layer, to });
                    rec.layer = to;
                    touched.insert(to);
                }
            }
        }
        for layer in touched {
            let newest = self.records.values().map(|r| r.created_index).max().unwrap_or(0);
            self.enforce_capacity(layer, newest);
        }
        Ok(promotions)
    }

    fn enforce_capacity(&mut self, layer: Layer, day_index: usize) {
        let cap = self.config.capacity_per_layer;
        loop {
            let in_layer: Vec<&MemoryRecord> = self.records.values().filter(|r| r.layer == layer).collect();
            if in_layer.len() <= cap {
                return;
            }
            let empty = BTreeSet::new();
            let victim = in_layer
                .iter()
                .map(|r| self.score(r, &empty, day_index))
                .min_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)))
                .map(|s| s.id)
                .expect("layer is non-empty");
            self.records.remove(&victim);
            self.tombstones.insert(victim, layer);
        }
    }

    pub fn snapshot(&self) -> String {
        let snap = SnapshotWire {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            next_id: self.next_id,
            config: self.config.clone(),
            records: self.records.values().cloned().collect(),
            tombstones: self.tombstones.iter().map(|(id, layer)| Tombstone { id: *id, layer: *layer }).collect(),
        };
        serde_json::to_string_pretty(&snap).expect("snapshot serializes")
    }

    pub fn restore(blob: &str) -> Result<Self, MemoryError> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(blob).map_err(|e| MemoryError::Malformed(e.to_string()))?;
        if v.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(MemoryError::VersionMismatch { found: v.schema_version, expected: SNAPSHOT_SCHEMA_VERSION });
        }
        let snap: SnapshotWire = serde_json::from_str(blob).map_err(|e| MemoryError::Malformed(e.to_string()))?;
        let records = snap.records.into_iter().map(|r| (r.id, r)).collect();
        let tombstones = snap.tombstones.into_iter().map(|t| (t.id, t.layer)).collect();
        Ok(Self { config: snap.config, next_id: snap.next_id, records, tombstones })
    }
}

#[derive(Serialize, Deserialize)]
struct Tombstone {
    id: u64,
    layer: Layer,
}

#[derive(Serialize, Deserialize)]
struct SnapshotWire {
    schema_version: u32,
    next_id: u64,
    config: MemoryConfig,
    records: Vec<MemoryRecord>,
    tombstones: Vec<Tombstone>,
}
