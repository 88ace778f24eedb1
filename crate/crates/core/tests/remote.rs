mod common;

use std::time::{Duration, Instant};

use common::*;
use posaware::agents::{CompletionProvider, DecodeParams, ProviderConfig, ProviderError, ProviderMode, RemoteProvider, RenderedPrompt};
use posaware::market_data::{fetch_remote, FetchError, RemoteDataConfig};

fn provider(url: &str, retries: u32) -> RemoteProvider {
    let cfg = ProviderConfig {
        mode: ProviderMode::Remote,
        endpoint: Some(format!("{url}/v1/chat/completions")),
        model: Some("test-model".into()),
        max_retries: retries,
        backoff_ms: 10,
        timeout_secs: 5.0,
        api_key_env: "POSAWARE_TEST_REMOTE_KEY".into(),
        ..ProviderConfig::default()
    };
    RemoteProvider::from_config(&cfg).unwrap()
}

fn prompt(text: &str) -> RenderedPrompt {
    RenderedPrompt { template_id: "decide-direction-test".into(), text: text.into() }
}

fn chat_body(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn returns_the_completion_verbatim() {
    let text = "```json\n{\"investment_decision\": \"buy\"}\n```  ";
    let server = MockServer::start(vec![Canned::ok(chat_body(text))]);
    let out = provider(&server.url, 0).complete(&prompt("hello"), &DecodeParams { temperature: 0.3, max_tokens: None }).unwrap();
    assert_eq!(out, text);
    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].method, "POST");
    assert_eq!(reqs[0].target, "/v1/chat/completions");
    let body: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.3);
    assert_eq!(body["messages"][0]["content"], "hello");
}

#[test]
fn transient_errors_are_retried() {
    let server = MockServer::start(vec![Canned::status(503, "busy"), Canned::ok(chat_body("fine"))]);
    let out = provider(&server.url, 2).complete(&prompt("x"), &DecodeParams::default()).unwrap();
    assert_eq!(out, "fine");
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![Canned::status(400, "bad request")]);
    let err = provider(&server.url, 3).complete(&prompt("x"), &DecodeParams::default()).unwrap_err();
    assert!(matches!(err, ProviderError::Http { status: 400, .. }), "{err:?}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn exhausted_rate_limit_surfaces_the_last_cause() {
    let server = MockServer::start(vec![Canned::status(429, "slow down").header("Retry-After", "0")]);
    let err = provider(&server.url, 1).complete(&prompt("x"), &DecodeParams::default()).unwrap_err();
    assert_eq!(err, ProviderError::RateLimited { retry_after: Some("0".into()) });
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn slow_server_times_out() {
    let server = MockServer::start(vec![Canned::ok(chat_body("late")).delayed(Duration::from_secs(3))]);
    let cfg = ProviderConfig {
        mode: ProviderMode::Remote,
        endpoint: Some(server.url.clone()),
        model: Some("m".into()),
        timeout_secs: 0.3,
        max_retries: 0,
        ..ProviderConfig::default()
    };
    let started = Instant::now();
    let err = RemoteProvider::from_config(&cfg).unwrap().complete(&prompt("x"), &DecodeParams::default()).unwrap_err();
    assert!(matches!(err, ProviderError::Timeout { attempts: 1 }), "{err:?}");
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[test]
fn malformed_body_names_the_pointer() {
    let server = MockServer::start(vec![Canned::ok("{\"choices\": []}")]);
    let err = provider(&server.url, 0).complete(&prompt("x"), &DecodeParams::default()).unwrap_err();
    assert_eq!(err, ProviderError::MalformedBody { pointer: "/choices/0/message/content".into() });
}

#[test]
fn rate_cap_spaces_requests() {
    let server = MockServer::start(vec![Canned::ok(chat_body("ok"))]);
    let cfg = ProviderConfig {
        mode: ProviderMode::Remote,
        endpoint: Some(server.url.clone()),
        model: Some("m".into()),
        max_requests_per_sec: Some(20.0),
        ..ProviderConfig::default()
    };
    let p = RemoteProvider::from_config(&cfg).unwrap();
    let started = Instant::now();
    for _ in 0..4 {
        p.complete(&prompt("x"), &DecodeParams::default()).unwrap();
    }
    // four calls at 20/s need at least three 50 ms gaps
    assert!(started.elapsed() >= Duration::from_millis(150));
}

#[test]
fn remote_mode_requires_an_endpoint() {
    let cfg = ProviderConfig { mode: ProviderMode::Remote, ..ProviderConfig::default() };
    assert!(matches!(RemoteProvider::from_config(&cfg), Err(ProviderError::Config(_))));
}

fn data_server() -> MockServer {
    let candles = read(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/candles.json"));
    MockServer::route(move |req, _| {
        if req.target.starts_with("/stock/candle") {
            Canned::ok(candles.clone())
        } else if req.target.starts_with("/company-news") {
            Canned::ok(
                r#"[{"id": 11, "datetime": 1741132800, "headline": "TSLA deliveries", "summary": "a"},
                    {"id": 12, "datetime": 1741219200, "headline": "TSLA recall", "summary": "b"}]"#,
            )
        } else {
            Canned::ok(r#"[{"id": "g1", "datetime": 1741305600, "headline": "Fed holds", "summary": ""}]"#)
        }
    })
}

fn data_config(url: &str) -> RemoteDataConfig {
    RemoteDataConfig { base_url: url.into(), api_key: Some("k123".into()), timeout: Duration::from_secs(5) }
}

#[test]
fn fetch_writes_canonical_files() {
    let server = data_server();
    let dir = tempfile::tempdir().unwrap();
    let summary = fetch_remote(&data_config(&server.url), "TSLA", ymd(2025, 3, 1), ymd(2025, 3, 10), dir.path()).unwrap();
    assert_eq!((summary.bars, summary.company_news, summary.macro_news), (3, 2, 1));
    let golden = read(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prices_golden.csv"));
    assert_eq!(read(&dir.path().join("prices.csv")), golden);
    assert_eq!(read(&dir.path().join("company_news.jsonl")).lines().count(), 2);
    assert!(server.requests().iter().all(|r| r.target.contains("token=k123")));
}

#[test]
fn fetch_rate_limit_echoes_retry_after_and_writes_nothing() {
    let server = MockServer::start(vec![Canned::status(429, "").header("Retry-After", "17")]);
    let dir = tempfile::tempdir().unwrap();
    let err = fetch_remote(&data_config(&server.url), "TSLA", ymd(2025, 3, 1), ymd(2025, 3, 10), dir.path()).unwrap_err();
    match err {
        FetchError::RateLimited { retry_after } => assert_eq!(retry_after.as_deref(), Some("17")),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}
