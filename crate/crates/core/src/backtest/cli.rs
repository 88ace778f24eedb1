//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use tracing::info;

use super::engine::{load_data, run_test, run_train, BacktestResult, LoadedData};
use super::report::{emit_report, ReportFiles, DECISIONS_FILE, REPORT_FILE};
use super::{audit_log, run_baseline, BacktestError, BaselineKind, DateRange, RunConfig};
use crate::agents::{AgentError, CompletionProvider, PromptRegistry, ProviderMode};
use crate::env::write_decision_log;
use crate::market_data::{
    fetch_remote, load_filings_jsonl, load_news_jsonl, load_price_csv, write_atomic, write_jsonl, write_price_csv,
    RemoteDataConfig,
};
use crate::memory::MemoryStore;

pub const SNAPSHOT_FILE: &str = "memory_snapshot.json";
pub const TRAIN_REWARDS_FILE: &str = "train_rewards.jsonl";

#[derive(Debug, Parser)]
#[command(name = "posaware", version, about = "Position-aware daily backtester for language-model trading agents")]
struct Cli {
    /// Print errors to stderr as a JSON object.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch remote data, or normalize local files, into canonical CSV/JSONL.
    Ingest(IngestArgs),
    /// Train the agent, then run it over the test range.
    Backtest(RunArgs),
    /// Run a single baseline over the test range.
    Baseline {
        #[arg(long)]
        kind: BaselineKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the agent and the named baselines into one joint report.
    Compare {
        #[arg(long, value_delimiter = ',', default_value = "buy-hold,random,macd,rsi")]
        baselines: Vec<BaselineKind>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Audit an emitted report against its decision log.
    Report {
        /// Directory holding report.json and decisions.jsonl.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        allow_short: bool,
    },
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    out: PathBuf,
    /// Re-validate local files instead of fetching.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    symbol: Option<String>,
    #[arg(long)]
    from: Option<NaiveDate>,
    #[arg(long)]
    to: Option<NaiveDate>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    company_news: Option<PathBuf>,
    #[arg(long)]
    macro_news: Option<PathBuf>,
    #[arg(long)]
    filings: Option<PathBuf>,
    /// Skip malformed text records instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    provider: Option<ProviderMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    symbol: Option<String>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    train_from: Option<NaiveDate>,
    #[arg(long)]
    train_to: Option<NaiveDate>,
    #[arg(long)]
    test_from: Option<NaiveDate>,
    #[arg(long)]
    test_to: Option<NaiveDate>,
    /// Skip training and start the test phase from this memory snapshot.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Skip training and start the test phase with empty memory.
    #[arg(long, conflicts_with = "snapshot")]
    no_train: bool,
    #[arg(long)]
    allow_short: bool,
}

fn parse_mode(s: &str) -> Result<ProviderMode, String> {
    match s {
        "stub" => Ok(ProviderMode::Stub),
        "remote" => Ok(ProviderMode::Remote),
        other => Err(format!("unknown provider `{other}` (expected stub or remote)")),
    }
}

impl RunArgs {
    /// Flags override the file, which overrides the defaults.
    fn config(&self) -> Result<RunConfig, BacktestError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.provider {
            cfg.provider.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.provider.seed = cfg.seed;
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = &self.symbol {
            cfg.symbol = s.clone();
        }
        if let Some(p) = &self.prices {
            cfg.data.prices = p.clone();
        }
        if self.allow_short {
            cfg.allow_short = true;
        }
        if self.train_from.is_some() || self.train_to.is_some() {
            let base = cfg.train.unwrap_or(DateRange { from: NaiveDate::MIN, to: NaiveDate::MIN });
            cfg.train = Some(DateRange {
                from: self.train_from.unwrap_or(base.from),
                to: self.train_to.unwrap_or(base.to),
            });
        }
        if let Some(d) = self.test_from {
            cfg.test.from = d;
        }
        if let Some(d) = self.test_to {
            cfg.test.to = d;
        }
        if self.no_train || self.snapshot.is_some() {
            cfg.train = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Session {
    cfg: RunConfig,
    data: LoadedData,
    registry: PromptRegistry,
}

impl Session {
    fn open(args: &RunArgs) -> Result<Self, BacktestError> {
        let cfg = args.config()?;
        let data = load_data(&cfg)?;
        if data.warnings > 0 {
            tracing::warn!(skipped = data.warnings, "malformed text records skipped");
        }
        let registry = PromptRegistry::builtin();
        Ok(Self { cfg, data, registry })
    }

    fn provider(&self) -> Result<std::sync::Arc<dyn CompletionProvider>, BacktestError> {
        self.cfg.provider.build().map_err(|e| BacktestError::Agent(AgentError::Provider(e)))
    }

    fn agent(&self, snapshot: Option<&Path>) -> Result<BacktestResult, BacktestError> {
        let provider = self.provider()?;
        let out = &self.cfg.output_dir;
        let store = match snapshot {
            Some(p) => {
                let blob = std::fs::read_to_string(p)
                    .map_err(|source| BacktestError::Output { path: p.to_path_buf(), source })?;
                MemoryStore::restore(&blob)?
            }
            None => MemoryStore::new(self.cfg.memory.clone()),
        };
        let store = if self.cfg.train.is_some() {
            let trained = run_train(&self.cfg, &self.data, &self.registry, provider.as_ref(), store)?;
            write_out(&out.join(SNAPSHOT_FILE), trained.store.snapshot().as_bytes())?;
            let mut lines = Vec::new();
            for r in &trained.rewards {
                serde_json::to_writer(&mut lines, r).expect("reward serializes");
                lines.push(b'\n');
            }
            write_out(&out.join(TRAIN_REWARDS_FILE), &lines)?;
            let mut log = Vec::new();
            write_decision_log(&mut log, &trained.records).expect("writing to a Vec");
            write_out(&out.join("train_decisions.jsonl"), &log)?;
            trained.store
        } else {
            store
        };
        run_test(&self.cfg, &self.data, &self.registry, provider.as_ref(), store, "agent")
    }

    fn emit(&self, results: &[BacktestResult]) -> Result<ReportFiles, BacktestError> {
        let files = emit_report(&self.cfg.output_dir, &self.cfg, results, &self.data.events)?;
        for r in results {
            println!(
                "{:<10} CR% {:>10}  SR {:>9}  MDD% {:>9}  final position {}",
                r.label,
                crate::metrics::fixed6(r.report.cr_pct),
                r.report.sharpe.map(crate::metrics::fixed6).unwrap_or_else(|| "n/a".into()),
                crate::metrics::fixed6(r.report.mdd_pct),
                r.final_position
            );
        }
        println!("report written to {}", files.report.display());
        Ok(files)
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), BacktestError> {
    write_atomic(path, bytes).map_err(|source| BacktestError::Output { path: path.to_path_buf(), source })
}

fn ingest(args: &IngestArgs) -> Result<(), BacktestError> {
    if !args.normalize {
        let (Some(symbol), Some(from), Some(to)) = (&args.symbol, args.from, args.to) else {
            return Err(BacktestError::Config("ingest needs --symbol, --from and --to (or --normalize)".into()));
        };
        let remote = RemoteDataConfig::from_env()?;
        let summary = fetch_remote(&remote, symbol, from, to, &args.out)?;
        println!(
            "fetched {} bars, {} company news, {} macro news into {}",
            summary.bars,
            summary.company_news,
            summary.macro_news,
            args.out.display()
        );
        return Ok(());
    }
    let prices = args.prices.as_ref().ok_or_else(|| BacktestError::Config("--normalize needs --prices".into()))?;
    let bars = load_price_csv(prices)?;
    write_price_csv(&args.out.join("prices.csv"), &bars)?;
    let strict = !args.lenient;
    let mut skipped = 0;
    for (src, name) in [(&args.company_news, "company_news.jsonl"), (&args.macro_news, "macro_news.jsonl")] {
        if let Some(p) = src {
            let loaded = load_news_jsonl(p, strict)?;
            skipped += loaded.warnings;
            write_jsonl(&args.out.join(name), &loaded.records)?;
        }
    }
    if let Some(p) = &args.filings {
        let loaded = load_filings_jsonl(p, strict)?;
        skipped += loaded.warnings;
        write_jsonl(&args.out.join("filings.jsonl"), &loaded.records)?;
    }
    println!("normalized {} bars into {} ({skipped} text records skipped)", bars.len(), args.out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), BacktestError> {
    match cli.command {
        Command::Ingest(args) => ingest(&args),
        Command::Backtest(args) => {
            let s = Session::open(&args)?;
            let result = s.agent(args.snapshot.as_deref())?;
            s.emit(&[result]).map(|_| ())
        }
        Command::Baseline { kind, run } => {
            let s = Session::open(&run)?;
            let result = run_baseline(kind, &s.cfg, &s.data)?;
            s.emit(&[result]).map(|_| ())
        }
        Command::Compare { baselines, run } => {
            let s = Session::open(&run)?;
            let mut results = vec![s.agent(run.snapshot.as_deref())?];
            for kind in baselines {
                info!(%kind, "running baseline");
                results.push(run_baseline(kind, &s.cfg, &s.data)?);
            }
            s.emit(&results).map(|_| ())
        }
        Command::Report { dir, allow_short } => {
            let read = |name: &str| {
                let p = dir.join(name);
                std::fs::read_to_string(&p).map_err(|source| BacktestError::Output { path: p, source })
            };
            let summary = audit_log(&read(REPORT_FILE)?, &read(DECISIONS_FILE)?, allow_short)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            if summary.is_clean() {
                Ok(())
            } else {
                Err(BacktestError::Audit(format!("{} finding(s)", summary.findings.len())))
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 ok, 1 usage or config, 2 data, 3 provider.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let json_errors = argv.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 1 && json_errors {
                print_json_error("usage", &e.to_string(), 1);
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    init_logging(cli.verbose);
    let json = cli.json_errors;
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            if json {
                print_json_error(e.kind(), &e.to_string(), code);
            } else {
                eprintln!("error: {e}");
            }
            code
        }
    }
}

fn print_json_error(kind: &str, message: &str, code: i32) {
    let v = serde_json::json!({ "error": { "kind": kind, "message": message.trim(), "exit_code": code } });
    eprintln!("{v}");
}
