//! Daily train and test loops.

use chrono::NaiveDate;
use serde::Serialize;
use tracing::{info, warn};

use super::config::{DateRange, RunConfig, SizingEquity};
use super::BacktestError;
use crate::agents::decision::{decide_direction, decide_quantity, momentum_summary, reflect, DecisionInput, DirectionOutcome, TrainFacts};
use crate::agents::{
    analyze_all, filter_signal, AgentContext, AgentError, AnalysisInsight, CompletionProvider, PromptRegistry,
    SignalItem, SourceKind,
};
use crate::env::{apply_decision, build_equity_curve, step_return, AccountState, DecisionRecord, Direction, EquityCurve, StrategicIntent, TradeDecision};
use crate::market_data::{
    build_replay, check_gaps, load_filings_jsonl, load_news_jsonl, load_price_csv, FilingDoc, FilingKind, MarketDay,
    NewsItem, NewsScope, PriceBar,
};
use crate::memory::{Layer, MemoryCitations, MemoryStore};
use crate::metrics::{
    compute_metric_report, max_order_size, reward, reward_normalized, trailing_cvar, trend_score, MetricError,
    MetricReport, RewardRecord,
};

/// Everything read from disk for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub bars: Vec<PriceBar>,
    pub news: Vec<NewsItem>,
    pub filings: Vec<FilingDoc>,
    pub events: Vec<(NaiveDate, String)>,
    /// Lines skipped by lenient text loading.
    pub warnings: usize,
}

impl LoadedData {
    pub fn from_bars(bars: Vec<PriceBar>) -> Self {
        Self { bars, news: Vec::new(), filings: Vec::new(), events: Vec::new(), warnings: 0 }
    }
}

fn load_events(path: &std::path::Path) -> Result<Vec<(NaiveDate, String)>, BacktestError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        crate::market_data::DataError::BadRecord { line: 0, message: format!("{}: {e}", path.display()) }
    })?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let bad = |m: String| crate::market_data::DataError::BadRecord { line: i + 2, message: m };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let date = rec
            .get(0)
            .and_then(|d| NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").ok())
            .ok_or_else(|| bad("bad event date".into()))?;
        out.push((date, rec.get(1).unwrap_or("").trim().to_string()));
    }
    Ok(out)
}

/// Loads prices, news, filings and event markers named in the config. Company
/// news and filings for other symbols are ignored.
pub fn load_data(cfg: &RunConfig) -> Result<LoadedData, BacktestError> {
    let bars = load_price_csv(&cfg.data.prices)?;
    let mut warnings = 0;
    let mut news = Vec::new();
    for path in [&cfg.data.company_news, &cfg.data.macro_news].into_iter().flatten() {
        let loaded = load_news_jsonl(path, cfg.data.strict)?;
        warnings += loaded.warnings;
        news.extend(loaded.records);
    }
    news.retain(|n| n.scope == NewsScope::Macro || n.symbol.as_deref() == Some(cfg.symbol.as_str()));
    let filings = match &cfg.data.filings {
        Some(path) => {
            let loaded = load_filings_jsonl(path, cfg.data.strict)?;
            warnings += loaded.warnings;
            loaded.records.into_iter().filter(|f| f.symbol == cfg.symbol).collect()
        }
        None => Vec::new(),
    };
    let events = match &cfg.data.events {
        Some(p) => load_events(p)?,
        None => Vec::new(),
    };
    Ok(LoadedData { bars, news, filings, events, warnings })
}

/// A contiguous slice of the price history plus the items dated inside it.
pub(crate) struct Phase {
    /// Index of the first phase day in the full history.
    pub start: usize,
    pub days: Vec<MarketDay>,
}

impl Phase {
    pub fn closes(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.bar.close).collect()
    }
}

pub(crate) fn phase(cfg: &RunConfig, data: &LoadedData, range: DateRange) -> Result<Phase, BacktestError> {
    check_gaps(&data.bars, range.from, range.to, cfg.data.max_gap_days)?;
    let start = data.bars.partition_point(|b| b.date < range.from);
    let end = data.bars.partition_point(|b| b.date <= range.to);
    let news: Vec<NewsItem> = data.news.iter().filter(|n| range.contains(n.date)).cloned().collect();
    let filings: Vec<FilingDoc> = data.filings.iter().filter(|f| range.contains(f.date)).cloned().collect();
    let replay = build_replay(&data.bars[start..end], &news, &filings)?;
    Ok(Phase { start, days: replay.days })
}

/// Daily log returns of `closes[..=g]`.
fn log_returns(closes: &[f64]) -> Vec<f64> {
    closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

/// Order-size cap for day `g`: CVaR of the trailing per-share log returns,
/// scaled by the risk budget. Falls back to the configured floor while the
/// window holds too few samples.
pub(crate) fn order_limit(cfg: &RunConfig, history: &[f64], g: usize, equity: f64) -> Result<u64, BacktestError> {
    let rets = log_returns(&history[..=g]);
    let risk = match trailing_cvar(&rets, cfg.risk.window, cfg.risk.alpha) {
        Ok(r) => r,
        Err(MetricError::TooFewSamples { needed, got }) => {
            tracing::debug!(needed, got, "CVaR window not yet filled; using order-size floor");
            return Ok(cfg.risk.floor_shares);
        }
        Err(e) => return Err(e.into()),
    };
    Ok(max_order_size(equity, history[g], &risk, cfg.risk.budget_fraction, cfg.risk.floor_shares)?.shares)
}

/// Position accounting shared by the agent and the baselines.
pub(crate) struct Book<'a> {
    cfg: &'a RunConfig,
    label: String,
    state: AccountState<f64>,
    records: Vec<DecisionRecord>,
    returns: Vec<f64>,
    exposure: Vec<f64>,
    dates: Vec<NaiveDate>,
}

impl<'a> Book<'a> {
    pub fn new(cfg: &'a RunConfig, label: &str) -> Self {
        Self {
            cfg,
            label: label.into(),
            state: AccountState::new(),
            records: Vec::new(),
            returns: Vec::new(),
            exposure: Vec::new(),
            dates: Vec::new(),
        }
    }

    pub fn position(&self) -> i64 {
        self.state.position
    }

    pub fn equity(&self) -> f64 {
        self.cfg.initial_equity * self.state.cumulative_log_return.exp()
    }

    pub fn sizing_equity(&self) -> f64 {
        match self.cfg.sizing_equity {
            SizingEquity::Initial => self.cfg.initial_equity,
            SizingEquity::Current => self.equity(),
        }
    }

    /// Applies `decision` at `price`, books the step return to `next_price`.
    pub fn execute(
        &mut self,
        date: NaiveDate,
        decision: &TradeDecision,
        limit: u64,
        price: f64,
        next_price: f64,
    ) -> Result<&DecisionRecord, BacktestError> {
        let cumulative = self.state.cumulative_log_return;
        let applied = apply_decision(self.state, decision, limit, self.cfg.allow_short)?;
        let position_after = applied.state.position;
        let r_t = step_return(position_after, price, next_price)?;
        self.state = applied.state.advance(r_t);
        self.returns.push(r_t);
        // |q| * price / (P0 * exp(cum)), kept in this form so an underflowing
        // account value gives +inf rather than NaN
        self.exposure.push(if position_after == 0 {
            0.0
        } else {
            position_after.unsigned_abs() as f64 * price / self.cfg.initial_equity * (-cumulative).exp()
        });
        self.dates.push(date);
        self.records.push(DecisionRecord {
            label: Some(self.label.clone()),
            date,
            direction: decision.direction,
            quantity: applied.executed_quantity,
            position_after,
            r_t,
            rationale: decision.rationale.clone(),
            strategic_intent: decision.strategic_intent,
            memory_indices: decision.memory_indices.clone(),
            price,
            next_price,
            maxcvar: limit,
            clamped_from: applied.clamped_from,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn finish(self, last_date: Option<NaiveDate>, rewards: Vec<RewardRecord<f64>>) -> BacktestResult {
        let report = compute_metric_report(&self.returns, self.cfg.initial_equity, &self.cfg.metrics);
        let mut curve_dates = self.dates.clone();
        curve_dates.extend(last_date);
        let equity = build_equity_curve(&self.returns, self.cfg.initial_equity);
        let equity = if curve_dates.len() == equity.values.len() { equity.with_dates(curve_dates) } else { equity };
        BacktestResult {
            label: self.label,
            final_position: self.state.position,
            records: self.records,
            rewards,
            returns: self.returns,
            exposure: self.exposure,
            equity,
            report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestResult {
    pub label: String,
    pub records: Vec<DecisionRecord>,
    pub rewards: Vec<RewardRecord<f64>>,
    pub returns: Vec<f64>,
    /// `|position| * price / equity` after each decision.
    pub exposure: Vec<f64>,
    #[serde(skip)]
    pub equity: EquityCurve<f64>,
    #[serde(skip)]
    pub report: MetricReport<f64>,
    pub final_position: i64,
}

pub struct TrainOutput {
    pub store: MemoryStore,
    pub rewards: Vec<RewardRecord<f64>>,
    pub records: Vec<DecisionRecord>,
}

struct Agent<'a> {
    cfg: &'a RunConfig,
    ctx: AgentContext<'a>,
    history: Vec<f64>,
}

fn signal_items(day: &MarketDay) -> Vec<(String, Vec<SignalItem>)> {
    let item = |id: String, kind: SourceKind, text: String| SignalItem { id, source_kind: kind, date: day.date, text };
    let mut groups = Vec::new();
    for (kind, template, source) in [
        (FilingKind::Annual10K, "filter-10K", SourceKind::Filing10K),
        (FilingKind::Quarterly10Q, "filter-10Q", SourceKind::Filing10Q),
    ] {
        let items: Vec<_> =
            day.filings.iter().filter(|f| f.kind == kind).map(|f| item(f.id(), source, f.body.clone())).collect();
        groups.push((template.to_string(), items));
    }
    groups.push((
        "filter-macro".into(),
        day.macro_news.iter().map(|n| item(n.id.clone(), SourceKind::MacroNews, n.text())).collect(),
    ));
    groups.push((
        "filter-company-news".into(),
        day.company_news.iter().map(|n| item(n.id.clone(), SourceKind::CompanyNews, n.text())).collect(),
    ));
    groups
}

/// Provider failures and lookahead violations abort the run; anything else is
/// logged and the step degrades.
fn fatal(e: &AgentError) -> bool {
    e.is_provider() || matches!(e, AgentError::Lookahead { .. } | AgentError::Prompt(_))
}

impl<'a> Agent<'a> {
    fn batch_size(&self, template: &str) -> usize {
        match template {
            "filter-macro" => self.cfg.agent.macro_batch_size,
            "filter-company-news" => self.cfg.agent.company_batch_size,
            _ => self.cfg.agent.filing_batch_size,
        }
    }

    /// Filings, then macro news, then company news, so memory ids are reproducible.
    fn analyze_day(&self, day: &MarketDay, g: usize, store: &mut MemoryStore) -> Result<usize, BacktestError> {
        let mut allocated = 0;
        for (template, items) in signal_items(day) {
            let size = self.batch_size(&template).max(1);
            let mut kept = Vec::new();
            for batch in items.chunks(size) {
                match filter_signal(batch, &template, &self.ctx, size) {
                    Ok(k) => kept.extend(k),
                    Err(e) if fatal(&e) => return Err(e.into()),
                    Err(e) => warn!(error = %e, "filtering failed; batch skipped"),
                }
            }
            for result in analyze_all(&kept, &self.ctx, self.cfg.agent.parallel_analysis) {
                match result {
                    Ok(insight) => {
                        store.allocate(&insight, day.date, g);
                        allocated += 1;
                    }
                    Err(e) if fatal(&e) => return Err(e.into()),
                    Err(e) => warn!(error = %e, "analysis failed; item skipped"),
                }
            }
        }
        Ok(allocated)
    }

    fn query(&self, day: &MarketDay) -> Vec<String> {
        let mut q = vec![self.cfg.symbol.clone()];
        q.extend(day.company_news.iter().chain(&day.macro_news).map(|n| n.headline.clone()));
        q
    }

    fn direction(&self, input: &DecisionInput<'_>) -> Result<DirectionOutcome, BacktestError> {
        match decide_direction(input, &self.ctx) {
            Ok(d) => Ok(d),
            Err(e) if fatal(&e) => Err(e.into()),
            Err(e) => {
                warn!(date = %input.date, error = %e, "direction response rejected; holding");
                Ok(DirectionOutcome {
                    direction: Direction::Hold,
                    rationale: format!("hold after invalid direction response: {e}"),
                    strategic_intent: StrategicIntent::ShortTermTactical,
                    citations: MemoryCitations::default(),
                    dropped_citations: Vec::new(),
                    reflection_analysis: None,
                })
            }
        }
    }

    /// One trading day: analyse, retrieve, decide, execute. Returns the
    /// position before the trade and the cited ids.
    fn step(
        &self,
        book: &mut Book<'_>,
        store: &mut MemoryStore,
        phase: &Phase,
        i: usize,
        train: Option<TrainFacts>,
    ) -> Result<(i64, MemoryCitations, DirectionOutcome), BacktestError> {
        let day = &phase.days[i];
        let g = phase.start + i;
        self.analyze_day(day, g, store)?;
        let ws = store.retrieve(&self.query(day), g, self.cfg.memory.k_per_layer);
        let momentum = momentum_summary(&self.history, g);
        let input = DecisionInput { date: day.date, working_set: &ws, momentum: &momentum, position: book.position(), train };
        let direction = self.direction(&input)?;
        let limit = order_limit(self.cfg, &self.history, g, book.sizing_equity())?;
        let quantity = decide_quantity(&direction, &input, limit, self.cfg.agent.quantity_fallback, &self.ctx)
            .map_err(BacktestError::from)?;
        let mut cited = direction.citations.clone();
        for layer in Layer::ALL {
            for id in quantity.citations.layer(layer) {
                if !cited.layer(layer).contains(id) {
                    cited.layer_mut(layer).push(*id);
                }
            }
        }
        let rationale = if quantity.provider_called && !quantity.rationale.is_empty() {
            format!("{} | {}", direction.rationale, quantity.rationale)
        } else {
            direction.rationale.clone()
        };
        let decision = TradeDecision {
            direction: if quantity.quantity == 0 { Direction::Hold } else { direction.direction },
            quantity: quantity.quantity,
            rationale,
            strategic_intent: direction.strategic_intent,
            memory_indices: cited.clone(),
        };
        store.mark_accessed(&cited.all_ids(), day.date);
        let before = book.position();
        book.execute(day.date, &decision, limit, day.bar.close, phase.days[i + 1].bar.close)?;
        Ok((before, cited, direction))
    }
}

fn agent<'a>(
    cfg: &'a RunConfig,
    data: &LoadedData,
    registry: &'a PromptRegistry,
    provider: &'a dyn CompletionProvider,
) -> Agent<'a> {
    Agent {
        cfg,
        ctx: AgentContext { registry, provider, params: cfg.provider.decode_params(), symbol: &cfg.symbol },
        history: data.bars.iter().map(|b| b.close).collect(),
    }
}

/// Training pass: decisions see future deltas and the previous reward; each
/// step is rewarded, reflected on and used to promote cited memories.
pub fn run_train(
    cfg: &RunConfig,
    data: &LoadedData,
    registry: &PromptRegistry,
    provider: &dyn CompletionProvider,
    store: MemoryStore,
) -> Result<TrainOutput, BacktestError> {
    let range = cfg.train.ok_or_else(|| BacktestError::Config("no train range configured".into()))?;
    let phase = phase(cfg, data, range)?;
    let agent = agent(cfg, data, registry, provider);
    let closes = phase.closes();
    let mut store = store;
    let mut book = Book::new(cfg, "train");
    let mut rewards = Vec::new();
    let mut prev_reward = 0.0;
    for i in 0..phase.days.len().saturating_sub(1) {
        let trend = trend_score(&closes, i, cfg.horizons)?;
        let facts = TrainFacts { t1: trend.m_short, t7: trend.m_mid, t30: trend.m_long, prev_reward };
        let (before, cited, direction) = agent.step(&mut book, &mut store, &phase, i, Some(facts))?;
        let rec = book.records.last().expect("step records").clone();
        let r = if cfg.agent.normalized_reward {
            reward_normalized(rec.position_after, before, trend.total, rec.price)
        } else {
            reward(rec.position_after, before, trend.total)
        };
        rewards.push(RewardRecord { day_index: phase.start + i, reward: r, position_now: rec.position_after, position_prev: before, trend: trend.total });
        prev_reward = r;
        let ws = store.retrieve(&agent.query(&phase.days[i]), phase.start + i, cfg.memory.k_per_layer);
        let reflection = reflect(
            rec.date,
            direction.direction,
            rec.quantity,
            rec.position_after,
            &rec.rationale,
            r,
            &cited,
            &ws,
            &agent.ctx,
        );
        match reflection {
            Ok(refl) => {
                if !refl.text.trim().is_empty() {
                    store.allocate(&AnalysisInsight::reflection(refl.text), rec.date, phase.start + i);
                }
                store.promote(&refl.promote_ids, refl.reward_sign)?;
            }
            Err(e) => warn!(date = %rec.date, error = %e, "reflection skipped"),
        }
    }
    info!(days = rewards.len(), memories = store.len(), "training finished");
    let records = book.records;
    Ok(TrainOutput { store, rewards, records })
}

/// Test pass: no future bindings, no reflection.
pub fn run_test(
    cfg: &RunConfig,
    data: &LoadedData,
    registry: &PromptRegistry,
    provider: &dyn CompletionProvider,
    store: MemoryStore,
    label: &str,
) -> Result<BacktestResult, BacktestError> {
    let phase = phase(cfg, data, cfg.test)?;
    let agent = agent(cfg, data, registry, provider);
    let mut store = store;
    let mut book = Book::new(cfg, label);
    for i in 0..phase.days.len().saturating_sub(1) {
        agent.step(&mut book, &mut store, &phase, i, None)?;
    }
    Ok(book.finish(phase.days.last().map(|d| d.date), Vec::new()))
}
