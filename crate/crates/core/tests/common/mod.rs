#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use chrono::{Datelike, NaiveDate, Weekday};
use posaware::backtest::RunConfig;
use posaware::market_data::{write_jsonl, write_price_csv, FilingDoc, FilingKind, NewsItem, NewsScope, PriceBar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// mock HTTP server

#[derive(Debug, Clone)]
pub struct Canned {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
    pub delay: Duration,
}

impl Canned {
    pub fn ok(body: impl Into<String>) -> Self {
        Self { status: 200, headers: Vec::new(), body: body.into(), delay: Duration::ZERO }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Self { status, ..Self::ok(body) }
    }

    pub fn header(mut self, k: &str, v: &str) -> Self {
        self.headers.push((k.into(), v.into()));
        self
    }

    pub fn delayed(mut self, d: Duration) -> Self {
        self.delay = d;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Serves canned responses in order, one per connection; the last one repeats.
pub struct MockServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Request>>>,
}

impl MockServer {
    pub fn start(responses: Vec<Canned>) -> Self {
        Self::route(move |_, i| responses[i.min(responses.len() - 1)].clone())
    }

    /// `pick(request, index)` chooses the response.
    pub fn route<F>(pick: F) -> Self
    where
        F: Fn(&Request, usize) -> Canned + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(stream) = stream else { continue };
                let Some(req) = read_request(&stream) else { continue };
                log.lock().unwrap().push(req.clone());
                let canned = pick(&req, i);
                thread::spawn(move || respond(stream, canned));
            }
        });
        Self { url, requests }
    }

    pub fn requests(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }
}

fn read_request(stream: &TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let target = parts.next()?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Request { method, target, headers, body: String::from_utf8_lossy(&body).into_owned() })
}

fn respond(mut stream: TcpStream, c: Canned) {
    thread::sleep(c.delay);
    let mut head = format!("HTTP/1.1 {} X\r\nContent-Length: {}\r\nConnection: close\r\n", c.status, c.body.len());
    for (k, v) in &c.headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(c.body.as_bytes());
}

// ---------------------------------------------------------------------------
// synthetic market data

pub fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn business_days(from: NaiveDate, n: usize) -> Vec<NaiveDate> {
    from.iter_days().filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)).take(n).collect()
}

pub fn bars(dates: &[NaiveDate], closes: &[f64]) -> Vec<PriceBar> {
    dates
        .iter()
        .zip(closes)
        .map(|(&date, &c)| PriceBar { date, open: c, high: c * 1.01, low: c * 0.99, close: c, volume: 1_000_000 })
        .collect()
}

/// Geometric random walk with daily log-volatility `vol`.
pub fn random_walk(seed: u64, n: usize, start: f64, vol: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = start;
    (0..n)
        .map(|i| {
            if i > 0 {
                p *= (vol * (rng.random::<f64>() * 2.0 - 1.0) * 1.7).exp();
            }
            p
        })
        .collect()
}

pub fn ramp(n: usize, start: f64, step: f64) -> Vec<f64> {
    (0..n).map(|i| start + step * i as f64).collect()
}

const HEADLINES: [&str; 6] = [
    "beats delivery estimates",
    "faces recall over software issue",
    "announces new factory expansion",
    "shares slip after analyst downgrade",
    "unveils cheaper model",
    "reports record quarterly revenue",
];

/// One company item every other day, one macro item every third day (some of
/// them gossip), and a 10-Q plus a 10-K somewhere in the range.
pub fn text_for(symbol: &str, dates: &[NaiveDate]) -> (Vec<NewsItem>, Vec<NewsItem>, Vec<FilingDoc>) {
    let mut company = Vec::new();
    let mut macro_news = Vec::new();
    for (i, d) in dates.iter().enumerate() {
        if i % 2 == 0 {
            company.push(NewsItem {
                id: format!("c{i}"),
                date: *d,
                headline: format!("{symbol} {}", HEADLINES[i % HEADLINES.len()]),
                summary: format!("{symbol} update number {i}"),
                scope: NewsScope::Company,
                symbol: Some(symbol.into()),
            });
        }
        if i % 3 == 0 {
            let headline = if i % 9 == 0 {
                "celebrity spotted at gala".to_string()
            } else {
                format!("Fed holds rates; Target company: {symbol}")
            };
            macro_news.push(NewsItem {
                id: format!("m{i}"),
                date: *d,
                headline,
                summary: "markets react".into(),
                scope: NewsScope::Macro,
                symbol: None,
            });
        }
    }
    let mut filings = Vec::new();
    if dates.len() > 4 {
        filings.push(FilingDoc {
            symbol: symbol.into(),
            date: dates[2],
            kind: FilingKind::Quarterly10Q,
            body: "Revenue grew 12% year over year; gross margin 18%.".into(),
        });
        filings.push(FilingDoc {
            symbol: symbol.into(),
            date: dates[dates.len() / 2],
            kind: FilingKind::Annual10K,
            body: "Annual report: capacity expansion continues; risks include competition.".into(),
        });
    }
    (company, macro_news, filings)
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub cfg: RunConfig,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn config_path(&self) -> PathBuf {
        self.path("config.toml")
    }

    pub fn out(&self) -> PathBuf {
        self.cfg.output_dir.clone()
    }
}

/// Writes a complete on-disk fixture. The first `train_days` bars form the
/// train range, the rest the test range. `train_days == 0` disables training.
pub fn fixture(closes: &[f64], train_days: usize, with_text: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let dates = business_days(ymd(2024, 1, 2), closes.len());
    let symbol = "TSLA";
    write_price_csv(&dir.path().join("prices.csv"), &bars(&dates, closes)).unwrap();
    let mut toml = format!("symbol = \"{symbol}\"\nseed = 7\noutput_dir = \"out\"\n");
    if train_days > 0 {
        toml.push_str(&format!("[train]\nfrom = {}\nto = {}\n", dates[0], dates[train_days - 1]));
    } else {
        // no bars fall in this range; callers disable training explicitly
        toml.push_str("[train]\nfrom = 2023-01-02\nto = 2023-01-03\n");
    }
    toml.push_str(&format!("[test]\nfrom = {}\nto = {}\n", dates[train_days], dates[dates.len() - 1]));
    toml.push_str("[data]\nprices = \"prices.csv\"\n");
    if with_text {
        let (company, macro_news, filings) = text_for(symbol, &dates);
        write_jsonl(&dir.path().join("company_news.jsonl"), &company).unwrap();
        write_jsonl(&dir.path().join("macro_news.jsonl"), &macro_news).unwrap();
        write_jsonl(&dir.path().join("filings.jsonl"), &filings).unwrap();
        std::fs::write(dir.path().join("events.csv"), format!("date,label\n{},earnings\n", dates[dates.len() - 3]))
            .unwrap();
        toml.push_str(
            "company_news = \"company_news.jsonl\"\nmacro_news = \"macro_news.jsonl\"\nfilings = \"filings.jsonl\"\nevents = \"events.csv\"\n",
        );
    }
    let path = dir.path().join("config.toml");
    std::fs::write(&path, &toml).unwrap();
    let mut cfg = RunConfig::load(&path).unwrap();
    if train_days == 0 {
        cfg.train = None;
    }
    Fixture { dir, cfg, dates, closes: closes.to_vec() }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
