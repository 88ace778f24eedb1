mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn posaware(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posaware"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text_fixture() -> Fixture {
    fixture(&random_walk(17, 70, 100.0, 0.02), 40, true)
}

#[test]
fn backtest_with_stub_emits_a_report() {
    let f = text_fixture();
    let cfg = f.config_path();
    let o = posaware(&["backtest", "--config", cfg.to_str().unwrap(), "--provider", "stub"], f.dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["report.json", "decisions.jsonl", "returns.svg", "exposure.svg", "memory_snapshot.json"] {
        assert!(f.out().join(name).exists(), "{name}");
    }
    let audit = posaware(&["report", "--dir", f.out().to_str().unwrap()], f.dir.path());
    assert_eq!(code(&audit), 0, "{}", String::from_utf8_lossy(&audit.stdout));
}

#[test]
fn compare_reports_agent_plus_named_baselines() {
    let f = text_fixture();
    let cfg = f.config_path();
    let o = posaware(&["compare", "--config", cfg.to_str().unwrap(), "--baselines", "buy-hold,macd"], f.dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&f.out().join("report.json"))).unwrap();
    let labels: Vec<_> = report["results"].as_array().unwrap().iter().map(|r| r["label"].as_str().unwrap().to_string()).collect();
    assert_eq!(labels, ["agent", "buy-hold", "macd"]);
}

#[test]
fn flags_override_the_file() {
    let f = text_fixture();
    let cfg = f.config_path();
    let out = f.path("elsewhere");
    let o = posaware(
        &["baseline", "--kind", "random", "--config", cfg.to_str().unwrap(), "--seed", "99", "--out", out.to_str().unwrap()],
        f.dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").exists());
    assert!(!f.out().exists());
}

#[test]
fn missing_price_file_is_a_data_error() {
    let f = text_fixture();
    std::fs::remove_file(f.path("prices.csv")).unwrap();
    let cfg = f.config_path();
    let o = posaware(&["backtest", "--config", cfg.to_str().unwrap()], f.dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("prices.csv"));
}

#[test]
fn json_errors_are_machine_readable() {
    let f = text_fixture();
    std::fs::remove_file(f.path("prices.csv")).unwrap();
    let cfg = f.config_path();
    let o = posaware(&["--json-errors", "baseline", "--kind", "rsi", "--config", cfg.to_str().unwrap()], f.dir.path());
    assert_eq!(code(&o), 2);
    let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["exit_code"], 2);
    assert_eq!(err["error"]["kind"], "data");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&posaware(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&posaware(&["baseline", "--kind", "momentum"], dir.path())), 1);
    assert_eq!(code(&posaware(&["--help"], dir.path())), 0);
    assert_eq!(code(&posaware(&["backtest", "--config", "nope.toml"], dir.path())), 1);
}

#[test]
fn remote_provider_failure_exits_three() {
    let f = text_fixture();
    let server = MockServer::start(vec![Canned::status(500, "down")]);
    let toml = read(&f.config_path())
        + &format!("[provider]\nmode = \"remote\"\nendpoint = \"{}\"\nmodel = \"m\"\nmax_retries = 0\n", server.url);
    std::fs::write(f.config_path(), toml).unwrap();
    let cfg = f.config_path();
    let o = posaware(&["backtest", "--config", cfg.to_str().unwrap()], f.dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ingest_normalize_rewrites_canonical_files() {
    let f = text_fixture();
    let out = f.path("norm");
    let o = posaware(
        &[
            "ingest",
            "--normalize",
            "--prices",
            "prices.csv",
            "--company-news",
            "company_news.jsonl",
            "--out",
            out.to_str().unwrap(),
        ],
        f.dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("prices.csv")), read(&f.path("prices.csv")));
    assert_eq!(read(&out.join("company_news.jsonl")), read(&f.path("company_news.jsonl")));
}

#[test]
fn ingest_fetches_from_the_configured_endpoint() {
    let server = MockServer::route(|req, _| {
        if req.target.starts_with("/stock/candle") {
            Canned::ok(r#"{"s":"ok","t":[1741132800],"o":[1.0],"h":[2.0],"l":[0.5],"c":[1.5],"v":[10]}"#)
        } else {
            Canned::ok("[]")
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_posaware"))
        .args(["ingest", "--symbol", "TSLA", "--from", "2025-03-01", "--to", "2025-03-31", "--out", "data"])
        .current_dir(dir.path())
        .env("POSAWARE_DATA_URL", &server.url)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&dir.path().join("data/prices.csv")).lines().count(), 2);
}
