//! Scriptable stand-in for a chat-completion server, for offline runs and tests.
//!
//! A script is JSON:
//!
//! ```json
//! {
//!   "rules": [
//!     {"pattern": "moved on.*POST-7\\b", "responses": [{"content": "Yes."}]},
//!     {"pattern": "POST-7\\b", "model": "qwen",
//!      "responses": [{"status": 500}, {"content": "Final answer: {Yes, No, Yes}"}]}
//!   ],
//!   "fallback": {"content": "Final answer: {No, No, No}"}
//! }
//! ```
//!
//! Rules are tried in order against the user message (and, when `model` is
//! set, the requested model name). The n-th request hitting a rule gets
//! `responses[n]`; the last response repeats once the list is exhausted.
//! A response is a completion (`content`, optional `finish_reason`), a bare
//! HTTP status (`status`, optional `body`), or a raw 200 body (`raw`).

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Environment variable naming the default bind address of the mock server.
pub const MOCK_ADDR_ENV: &str = "RISKPIPE_MOCK_ADDR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockResponse {
    Completion {
        content: String,
        #[serde(default = "default_finish")]
        finish_reason: String,
    },
    Status {
        status: u16,
        #[serde(default)]
        body: String,
    },
    Raw {
        raw: String,
    },
}

fn default_finish() -> String {
    "stop".into()
}

impl MockResponse {
    pub fn completion(content: impl Into<String>) -> Self {
        MockResponse::Completion {
            content: content.into(),
            finish_reason: default_finish(),
        }
    }

    pub fn status(status: u16) -> Self {
        MockResponse::Status {
            status,
            body: String::new(),
        }
    }

    pub fn raw(raw: impl Into<String>) -> Self {
        MockResponse::Raw { raw: raw.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub responses: Vec<MockResponse>,
    #[serde(default)]
    pub delay_ms: u64,
}

impl MockRule {
    pub fn new(pattern: impl Into<String>, responses: Vec<MockResponse>) -> Self {
        MockRule {
            pattern: pattern.into(),
            model: None,
            responses,
            delay_ms: 0,
        }
    }

    pub fn for_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn with_delay(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<MockResponse>,
}

impl MockScript {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, MockError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn fallback(mut self, response: MockResponse) -> Self {
        self.fallback = Some(response);
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MockError {
    #[error("rule {index}: bad pattern: {source}")]
    Pattern {
        index: usize,
        #[source]
        source: regex::Error,
    },
    #[error("rule {0} has no responses")]
    EmptyRule(usize),
    #[error("cannot bind mock server: {0}")]
    Bind(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One request as seen by the mock server.
#[derive(Debug, Clone)]
pub struct RequestRecord {
    pub prompt: String,
    pub model: String,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u64>,
    /// Index of the matched rule, `None` for fallback or no match.
    pub rule: Option<usize>,
    pub started: Instant,
    pub finished: Instant,
}

struct CompiledRule {
    pattern: Regex,
    model: Option<Regex>,
    responses: Vec<MockResponse>,
    delay: Duration,
    hits: AtomicUsize,
}

struct Shared {
    rules: Vec<CompiledRule>,
    fallback: Option<MockResponse>,
    log: Mutex<Vec<RequestRecord>>,
    in_flight: AtomicUsize,
    high_water: AtomicUsize,
}

/// Running mock server. Stops when dropped.
///
/// Each connection gets its own thread and is kept alive until the client
/// closes it, so idle pooled connections never hold up new ones.
pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Bind to `addr` (use port 0 for an ephemeral port) and start serving.
    pub fn start(script: MockScript, addr: &str) -> Result<MockServer, MockError> {
        let mut rules = Vec::with_capacity(script.rules.len());
        for (index, rule) in script.rules.into_iter().enumerate() {
            if rule.responses.is_empty() {
                return Err(MockError::EmptyRule(index));
            }
            let pattern = Regex::new(&rule.pattern).map_err(|source| MockError::Pattern { index, source })?;
            let model = rule
                .model
                .as_deref()
                .map(Regex::new)
                .transpose()
                .map_err(|source| MockError::Pattern { index, source })?;
            rules.push(CompiledRule {
                pattern,
                model,
                responses: rule.responses,
                delay: Duration::from_millis(rule.delay_ms),
                hits: AtomicUsize::new(0),
            });
        }
        let listener = TcpListener::bind(addr).map_err(|e| MockError::Bind(format!("{addr}: {e}")))?;
        let bound = listener.local_addr()?;
        let shared = Arc::new(Shared {
            rules,
            fallback: script.fallback,
            log: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            high_water: AtomicUsize::new(0),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let shared = Arc::clone(&shared);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match stream {
                        Ok(stream) => {
                            let shared = Arc::clone(&shared);
                            std::thread::spawn(move || serve_connection(&shared, stream));
                        }
                        Err(e) => log::debug!("mock server accept failed: {e}"),
                    }
                }
            })
        };
        Ok(MockServer {
            addr: bound,
            shared,
            stop,
            acceptor: Some(acceptor),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL suitable for `DecodingConfig::endpoint_url`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<RequestRecord> {
        self.shared.log.lock().expect("mock log poisoned").clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.log.lock().expect("mock log poisoned").len()
    }

    /// Largest number of requests that were being handled at the same time.
    pub fn max_in_flight(&self) -> usize {
        self.shared.high_water.load(Ordering::SeqCst)
    }

    /// Block the calling thread until the server stops.
    pub fn wait(mut self) {
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept so the loop sees the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

/// Largest request head accepted, in bytes.
const MAX_HEAD: usize = 64 * 1024;

struct RawRequest {
    method: String,
    path: String,
    body: Option<String>,
    close: bool,
}

/// Read one request. `Ok(None)` means the client closed the connection.
fn read_request(reader: &mut BufReader<TcpStream>) -> std::io::Result<Option<RawRequest>> {
    let mut head = Vec::new();
    loop {
        let n = reader.read_until(b'\n', &mut head)?;
        if n == 0 {
            return if head.is_empty() {
                Ok(None)
            } else {
                Err(std::io::ErrorKind::UnexpectedEof.into())
            };
        }
        if head.ends_with(b"\r\n\r\n") || head.ends_with(b"\n\n") {
            break;
        }
        if head.len() > MAX_HEAD {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "request head too large"));
        }
    }
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut req = httparse::Request::new(&mut headers);
    let bad = |e: String| std::io::Error::new(std::io::ErrorKind::InvalidData, e);
    match req.parse(&head) {
        Ok(httparse::Status::Complete(_)) => {}
        Ok(httparse::Status::Partial) => return Err(bad("incomplete request head".into())),
        Err(e) => return Err(bad(e.to_string())),
    }
    let header = |name: &str| {
        req.headers
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(name))
            .map(|h| String::from_utf8_lossy(h.value).trim().to_ascii_lowercase())
    };
    if header("transfer-encoding").is_some() {
        return Err(bad("chunked request bodies are not supported".into()));
    }
    let length: usize = match header("content-length") {
        Some(v) => v.parse().map_err(|_| bad(format!("bad content-length {v:?}")))?,
        None => 0,
    };
    let close = match header("connection") {
        Some(v) => v.contains("close"),
        None => req.version == Some(0),
    };
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    Ok(Some(RawRequest {
        method: req.method.unwrap_or_default().to_string(),
        path: req.path.unwrap_or_default().to_string(),
        body: String::from_utf8(body).ok(),
        close,
    }))
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        408 => "Request Timeout",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn serve_connection(shared: &Shared, stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    let mut writer = match stream.try_clone() {
        Ok(w) => w,
        Err(e) => {
            log::debug!("mock server cannot clone stream: {e}");
            return;
        }
    };
    let mut reader = BufReader::new(stream);
    loop {
        let request = match read_request(&mut reader) {
            Ok(Some(r)) => r,
            Ok(None) => return,
            Err(e) => {
                log::debug!("mock server read failed: {e}");
                let _ = writer.write_all(b"HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
                return;
            }
        };
        let (status, payload) = handle(shared, &request);
        let head = format!(
            "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: {}\r\n\r\n",
            reason(status),
            payload.len(),
            if request.close { "close" } else { "keep-alive" }
        );
        let sent = writer
            .write_all(head.as_bytes())
            .and_then(|_| writer.write_all(payload.as_bytes()))
            .and_then(|_| writer.flush());
        if let Err(e) = sent {
            log::debug!("mock server failed to respond: {e}");
            return;
        }
        if request.close {
            return;
        }
    }
}

fn handle(shared: &Shared, request: &RawRequest) -> (u16, String) {
    let started = Instant::now();
    let now = shared.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    shared.high_water.fetch_max(now, Ordering::SeqCst);

    let body = request.body.as_deref().unwrap_or_default();
    let read_ok = request.body.is_some();
    let is_chat = request.method == "POST" && request.path.trim_end_matches('/') == "/v1/chat/completions";

    let parsed: Option<Value> = serde_json::from_str(body).ok();
    let prompt = parsed
        .as_ref()
        .and_then(|v| v.get("messages"))
        .and_then(Value::as_array)
        .and_then(|msgs| msgs.iter().rev().find(|m| m["role"] == "user"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let model = parsed
        .as_ref()
        .and_then(|v| v.get("model"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();

    let (status, payload, rule_index) = if !read_ok || !is_chat || parsed.is_none() {
        (404, json!({"error": "unsupported request"}).to_string(), None)
    } else {
        let matched = shared.rules.iter().enumerate().find(|(_, r)| {
            r.pattern.is_match(&prompt) && r.model.as_ref().is_none_or(|m| m.is_match(&model))
        });
        let (response, index) = match matched {
            Some((i, rule)) => {
                let hit = rule.hits.fetch_add(1, Ordering::SeqCst);
                if !rule.delay.is_zero() {
                    std::thread::sleep(rule.delay);
                }
                (Some(&rule.responses[hit.min(rule.responses.len() - 1)]), Some(i))
            }
            None => (shared.fallback.as_ref(), None),
        };
        match response {
            Some(MockResponse::Completion {
                content,
                finish_reason,
            }) => (200, completion_body(&model, content, finish_reason), index),
            Some(MockResponse::Status { status, body }) => (*status, body.clone(), index),
            Some(MockResponse::Raw { raw }) => (200, raw.clone(), index),
            None => (404, json!({"error": "no matching rule"}).to_string(), None),
        }
    };

    let parsed_ref = parsed.as_ref();
    let record = RequestRecord {
        prompt,
        model,
        temperature: parsed_ref.and_then(|v| v.get("temperature")).and_then(Value::as_f64),
        max_tokens: parsed_ref.and_then(|v| v.get("max_tokens")).and_then(Value::as_u64),
        rule: rule_index,
        started,
        finished: Instant::now(),
    };
    shared.log.lock().expect("mock log poisoned").push(record);
    shared.in_flight.fetch_sub(1, Ordering::SeqCst);

    (status, payload)
}

fn completion_body(model: &str, content: &str, finish_reason: &str) -> String {
    json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "created": 0,
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": finish_reason,
        }],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0},
    })
    .to_string()
}
