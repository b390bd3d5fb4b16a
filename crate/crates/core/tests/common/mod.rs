#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use slowcast::dataset::{
    apply_missing, parse_csv, slide_windows, CsvSchema, MissingMask, MissingMode, ObservedWindow,
    WindowInstance,
};
use slowcast::experiment::RunConfig;
use slowcast::prompt::{build_prompt, ContextDescriptor, FrameMeta, HybridPrompt, PromptVariant};
use slowcast::synth::{ett_csv, write_ett_csv, SynthSpec};

/// What the stub answers for the `n`-th request (0-based).
pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn ok(body: String) -> Self {
        Self {
            status: 200,
            body,
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: r#"{"error":{"message":"stub"}}"#.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

/// Chat-completions JSON carrying `content` and optional reasoning text.
pub fn chat_body(content: &str, reasoning: Option<&str>) -> String {
    serde_json::json!({
        "choices": [{"message": {"content": content, "reasoning_content": reasoning}}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 20}
    })
    .to_string()
}

#[derive(Debug, Clone)]
pub struct SeenRequest {
    pub arrived: Instant,
    pub authorization: Option<String>,
    pub body: String,
}

/// Minimal HTTP/1.1 server recording requests and peak concurrency.
pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<SeenRequest>>>,
    pub peak_in_flight: Arc<AtomicUsize>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &str) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let url = format!(
            "http://{}/chat/completions",
            listener.local_addr().expect("addr")
        );
        let requests: Arc<Mutex<Vec<SeenRequest>>> = Arc::default();
        let peak: Arc<AtomicUsize> = Arc::default();
        let in_flight: Arc<AtomicUsize> = Arc::default();
        let counter: Arc<AtomicUsize> = Arc::default();
        let handler = Arc::new(handler);
        {
            let requests = requests.clone();
            let peak = peak.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let (requests, peak, in_flight, counter, handler) = (
                        requests.clone(),
                        peak.clone(),
                        in_flight.clone(),
                        counter.clone(),
                        handler.clone(),
                    );
                    std::thread::spawn(move || {
                        serve(stream, &requests, &peak, &in_flight, &counter, &*handler)
                    });
                }
            });
        }
        Self {
            url,
            requests,
            peak_in_flight: peak,
        }
    }

    pub fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn seen(&self) -> Vec<SeenRequest> {
        self.requests.lock().unwrap().clone()
    }
}

fn serve(
    stream: TcpStream,
    requests: &Mutex<Vec<SeenRequest>>,
    peak: &AtomicUsize,
    in_flight: &AtomicUsize,
    counter: &AtomicUsize,
    handler: &(dyn Fn(usize, &str) -> Reply + Send + Sync),
) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut content_length = 0usize;
    let mut authorization = None;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((name, value)) = trimmed.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let body = String::from_utf8_lossy(&body).into_owned();
    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    peak.fetch_max(now, Ordering::SeqCst);
    let n = counter.fetch_add(1, Ordering::SeqCst);
    requests.lock().unwrap().push(SeenRequest {
        arrived: Instant::now(),
        authorization,
        body: body.clone(),
    });
    let reply = handler(n, &body);
    std::thread::sleep(reply.delay);
    in_flight.fetch_sub(1, Ordering::SeqCst);
    let response = format!(
        "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    );
    let mut stream = stream;
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

/// A window of a synthetic hourly series.
pub fn synthetic_window(lookback: usize, horizon: usize) -> WindowInstance {
    let frame = parse_csv(
        &ett_csv(&SynthSpec {
            rows: lookback + horizon,
            noise: 0.2,
            seed: 1,
            ..SynthSpec::default()
        }),
        &CsvSchema::new("date"),
    )
    .expect("synthetic csv parses");
    slide_windows(&frame, lookback, horizon, horizon, 0)
        .expect("window fits")
        .remove(0)
}

pub fn full(window: &WindowInstance) -> ObservedWindow {
    apply_missing(window, MissingMode::Full, &MissingMask::from_indices([])).expect("full data")
}

pub fn meta() -> FrameMeta {
    FrameMeta {
        dataset: "ETTh1".into(),
        channel: "OT".into(),
        frequency: slowcast::dataset::Frequency::Hourly,
        train_stats: None,
    }
}

pub fn context() -> ContextDescriptor {
    ContextDescriptor::parse("[domain]\nTransformer station.\n[channels]\nOT: oil temperature\n")
        .expect("context parses")
}

/// A default-variant prompt over a synthetic window.
pub fn prompt(lookback: usize, horizon: usize) -> HybridPrompt {
    let window = synthetic_window(lookback, horizon);
    build_prompt(
        &full(&window),
        &context(),
        &PromptVariant::default(),
        &meta(),
    )
    .expect("prompt builds")
}

/// Writes a synthetic ETTh1-format file into `dir` and returns a config for
/// it with the given extra TOML appended.
pub fn config_in(dir: &Path, spec: &SynthSpec, extra: &str) -> RunConfig {
    write_ett_csv(dir.join("ETTh1.csv"), spec).expect("write csv");
    let text = format!("include = [\"preset:etth1\"]\n[dataset]\npath = \"ETTh1.csv\"\n{extra}\n");
    let mut cfg = RunConfig::from_toml_str(&text, dir).expect("config parses");
    cfg.run.out = dir.join("runs");
    cfg
}
