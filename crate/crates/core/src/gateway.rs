//! Text-generation client with a fixture-replay mock and an HTTP backend.

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::GatewayError;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_INPUT_TOKENS: usize = 4096;
pub const DEFAULT_MAX_OUTPUT_TOKENS: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model_name: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: usize,
    /// Index of this sample when several candidates are drawn for one prompt.
    #[serde(default)]
    pub sample: u32,
}

impl GenerationRequest {
    pub fn new(model_name: impl Into<String>, prompt: impl Into<String>) -> Self {
        GenerationRequest {
            model_name: model_name.into(),
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            sample: 0,
        }
    }

    pub fn with_sample(mut self, sample: u32) -> Self {
        self.sample = sample;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other(String),
}

impl FinishReason {
    fn from_wire(s: Option<&str>) -> FinishReason {
        match s {
            None | Some("stop") | Some("eos") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(other) => FinishReason::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency: Duration,
}

/// Anything that turns a prompt into text.
pub trait TextGenerator: Send + Sync {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, GatewayError>;
}

/// Hex SHA-256 of the prompt bytes; names mock fixtures.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays responses from a directory of `<hash>.txt` files.
///
/// Sample `i` of a prompt is looked up as `<hash>.<i>.txt` first, then
/// `<hash>.txt`, so a single fixture serves every sample.
#[derive(Debug, Clone)]
pub struct MockGateway {
    dir: PathBuf,
}

impl MockGateway {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MockGateway { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn fixture_path(dir: &Path, prompt: &str, sample: Option<u32>) -> PathBuf {
        let hash = prompt_hash(prompt);
        match sample {
            Some(i) => dir.join(format!("{hash}.{i}.txt")),
            None => dir.join(format!("{hash}.txt")),
        }
    }

    /// Writes a fixture so that `prompt` (optionally only sample `i`) replays `text`.
    pub fn record(dir: &Path, prompt: &str, sample: Option<u32>, text: &str) -> Result<PathBuf, GatewayError> {
        std::fs::create_dir_all(dir)?;
        let path = MockGateway::fixture_path(dir, prompt, sample);
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

impl TextGenerator for MockGateway {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        req.validate()?;
        let start = Instant::now();
        for path in [
            MockGateway::fixture_path(&self.dir, &req.prompt, Some(req.sample)),
            MockGateway::fixture_path(&self.dir, &req.prompt, None),
        ] {
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    return Ok(GenerationResponse { text, finish_reason: FinishReason::Stop, latency: start.elapsed() })
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(GatewayError::FixtureMiss { hash: prompt_hash(&req.prompt) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL of a text-completion API; requests go to `<base_url>/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if the endpoint needs one.
    pub token_env: Option<String>,
    pub timeout_secs: f64,
    pub max_concurrency: usize,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:11434/v1".into(),
            model: "qwen2.5-coder:7b".into(),
            token_env: Some("PERFHINT_API_TOKEN".into()),
            timeout_secs: 300.0,
            max_concurrency: 4,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Permits { free: Mutex::new(n.max(1)), released: Condvar::new() }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

/// HTTP client for an OpenAI-style `/completions` endpoint.
#[derive(Debug)]
pub struct LiveGateway {
    config: EndpointConfig,
    token: Option<String>,
    agent: ureq::Agent,
    permits: Permits,
}

enum Failure {
    Transient(GatewayError),
    Fatal(GatewayError),
}

impl LiveGateway {
    pub fn new(config: EndpointConfig) -> Self {
        let token = config.token_env.as_deref().and_then(|v| std::env::var(v).ok());
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001))).build();
        let permits = Permits::new(config.max_concurrency);
        LiveGateway { config, token, agent, permits }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn send(&self, req: &GenerationRequest) -> Result<GenerationResponse, Failure> {
        let url = format!("{}/completions", self.config.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": req.model_name,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        let mut call = self.agent.post(&url).set("Content-Type", "application/json");
        if let Some(token) = &self.token {
            call = call.set("Authorization", &format!("Bearer {token}"));
        }
        let start = Instant::now();
        let reply: serde_json::Value = match call.send_json(body) {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| Failure::Fatal(GatewayError::Endpoint(format!("malformed response body: {e}"))))?,
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                let err = GatewayError::Endpoint(format!("HTTP {code}: {}", detail.trim()));
                return Err(if code == 429 || code >= 500 { Failure::Transient(err) } else { Failure::Fatal(err) });
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                let err = if msg.contains("timed out") {
                    GatewayError::Timeout(Duration::from_secs_f64(self.config.timeout_secs))
                } else {
                    GatewayError::Endpoint(msg)
                };
                return Err(Failure::Transient(err));
            }
        };
        parse_reply(&reply, start.elapsed()).map_err(Failure::Fatal)
    }
}

/// Accepts `{"choices":[{"text",...}]}` as well as flat `{"text"}` / `{"response"}` bodies.
fn parse_reply(reply: &serde_json::Value, latency: Duration) -> Result<GenerationResponse, GatewayError> {
    let (text, reason) = if let Some(choice) = reply.get("choices").and_then(|c| c.get(0)) {
        let text = choice
            .get("text")
            .or_else(|| choice.get("message").and_then(|m| m.get("content")))
            .and_then(|t| t.as_str());
        (text, choice.get("finish_reason").and_then(|r| r.as_str()))
    } else {
        let text = reply.get("text").or_else(|| reply.get("response")).and_then(|t| t.as_str());
        (text, reply.get("finish_reason").or_else(|| reply.get("done_reason")).and_then(|r| r.as_str()))
    };
    let text = text.ok_or_else(|| GatewayError::Endpoint(format!("response has no text field: {reply}")))?;
    Ok(GenerationResponse { text: text.to_string(), finish_reason: FinishReason::from_wire(reason), latency })
}

impl TextGenerator for LiveGateway {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        req.validate()?;
        let _permit = self.permits.acquire();
        let mut attempt = 0;
        loop {
            match self.send(req) {
                Ok(resp) => return Ok(resp),
                Err(Failure::Transient(e)) if attempt < self.config.retries => {
                    let wait = Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << attempt));
                    log::warn!("request failed ({e}); retry {} in {wait:?}", attempt + 1);
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(Failure::Transient(e) | Failure::Fatal(e)) => return Err(e),
            }
        }
    }
}

/// Byte ranges of estimated tokens: runs of word characters, or single
/// punctuation characters. Whitespace separates tokens and is not counted.
fn token_ends(text: &str) -> impl Iterator<Item = usize> + '_ {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || loop {
        let (i, c) = chars.next()?;
        if c.is_whitespace() {
            continue;
        }
        let mut end = i + c.len_utf8();
        if is_word(c) {
            while let Some(&(j, d)) = chars.peek() {
                if !is_word(d) {
                    break;
                }
                end = j + d.len_utf8();
                chars.next();
            }
        }
        return Some(end);
    })
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub fn estimate_tokens(text: &str) -> usize {
    token_ends(text).count()
}

/// Longest prefix of `text` whose token estimate fits in `max_tokens`.
pub fn truncate_to_budget(text: &str, max_tokens: usize) -> &str {
    if max_tokens == 0 {
        return "";
    }
    match token_ends(text).nth(max_tokens - 1) {
        Some(end) if token_ends(&text[end..]).next().is_some() => &text[..end],
        _ => text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_replays_by_hash_and_sample() {
        let dir = tempfile::tempdir().unwrap();
        MockGateway::record(dir.path(), "p", None, "base").unwrap();
        MockGateway::record(dir.path(), "p", Some(2), "second").unwrap();
        let gw = MockGateway::new(dir.path());
        let req = GenerationRequest::new("m", "p");
        assert_eq!(gw.complete(&req).unwrap().text, "base");
        assert_eq!(gw.complete(&req.clone().with_sample(2)).unwrap().text, "second");
        assert_eq!(gw.complete(&req.clone().with_sample(1)).unwrap().text, "base");
        let again = gw.complete(&req).unwrap();
        assert_eq!(again.text, "base");
        assert_eq!(again.finish_reason, FinishReason::Stop);
    }

    #[test]
    fn mock_miss_names_hash() {
        let dir = tempfile::tempdir().unwrap();
        let gw = MockGateway::new(dir.path());
        match gw.complete(&GenerationRequest::new("m", "unseen")) {
            Err(GatewayError::FixtureMiss { hash }) => assert_eq!(hash, prompt_hash("unseen")),
            other => panic!("expected miss, got {other:?}"),
        }
    }

    #[test]
    fn request_defaults_and_validation() {
        let req = GenerationRequest::new("m", "x");
        assert_eq!(req.temperature, 0.7);
        assert_eq!(req.max_output_tokens, 8192);
        assert!(GenerationRequest::new("m", "").validate().is_err());
        let mut hot = req.clone();
        hot.temperature = -1.0;
        assert!(hot.validate().is_err());
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(prompt_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn token_estimate_counts_words_and_punctuation() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("int main() {}"), 6);
        assert_eq!(estimate_tokens("a_b1  +\n c"), 3);
    }

    #[test]
    fn truncation_is_prefix_within_budget() {
        let text = "for (int i = 0; i < n; ++i) sum += a[i];";
        assert_eq!(truncate_to_budget(text, 1000), text);
        let cut = truncate_to_budget(text, 5);
        assert_eq!(cut, "for (int i =");
        assert!(text.starts_with(cut));
        assert_eq!(estimate_tokens(cut), 5);
        assert_eq!(truncate_to_budget(text, estimate_tokens(text)), text);
        assert_eq!(truncate_to_budget("x   ", 1), "x   ");
    }

    #[test]
    fn parses_common_reply_shapes() {
        let d = Duration::ZERO;
        let a = serde_json::json!({"choices": [{"text": "hi", "finish_reason": "length"}]});
        let r = parse_reply(&a, d).unwrap();
        assert_eq!((r.text.as_str(), r.finish_reason), ("hi", FinishReason::Length));
        let b = serde_json::json!({"choices": [{"message": {"content": "yo"}}]});
        assert_eq!(parse_reply(&b, d).unwrap().text, "yo");
        let c = serde_json::json!({"response": "ok", "done_reason": "stop"});
        assert_eq!(parse_reply(&c, d).unwrap().text, "ok");
        assert!(parse_reply(&serde_json::json!({}), d).is_err());
    }

    #[test]
    fn unreachable_endpoint_reports_error_after_retries() {
        let gw = LiveGateway::new(EndpointConfig {
            base_url: "http://127.0.0.1:9".into(),
            token_env: None,
            timeout_secs: 2.0,
            retries: 1,
            backoff_ms: 1,
            ..EndpointConfig::default()
        });
        let err = gw.complete(&GenerationRequest::new("m", "hello")).unwrap_err();
        assert!(matches!(err, GatewayError::Endpoint(_) | GatewayError::Timeout(_)), "{err:?}");
    }

    #[test]
    fn permits_bound_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let permits = Permits::new(2);
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| {
                    let _g = permits.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
