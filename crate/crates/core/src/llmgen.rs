//! Few-shot prompting of chat-style LLM endpoints with an on-disk response
//! cache.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{write_atomic, Example};

pub const INSTRUCTION: &str = "Pretend that you are a programmer writing Python functions. \
For a given Python function you have to generate a short documentation describing what the function does.";

pub const DEFAULT_SHOTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub instruction: String,
    /// `(code, description)` demonstrations.
    pub shots: Vec<(String, String)>,
    pub target_code: String,
}

fn push_code_block(out: &mut String, code: &str) {
    out.push_str("Code:\n```python\n");
    out.push_str(code);
    if !code.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```\n");
}

impl PromptSpec {
    /// The single user message sent to the model.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.instruction);
        out.push_str("\n\n");
        for (code, desc) in &self.shots {
            push_code_block(&mut out, code);
            out.push_str("Description: ");
            out.push_str(desc.trim());
            out.push_str("\n\n");
        }
        push_code_block(&mut out, &self.target_code);
        out.push_str("Description:");
        out
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("the target snippet is among the few-shot examples")]
    TargetInShots,
    #[error("endpoint failed after {attempts} attempts: {last}")]
    EndpointError { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("cache error on {path}: {source}")]
    Cache { path: PathBuf, source: std::io::Error },
}

pub fn build_prompt(ex: &Example, shots: &[(String, String)]) -> Result<PromptSpec, GenError> {
    if shots.iter().any(|(code, _)| *code == ex.code) {
        return Err(GenError::TargetInShots);
    }
    Ok(PromptSpec { instruction: INSTRUCTION.to_string(), shots: shots.to_vec(), target_code: ex.code.clone() })
}

/// Deterministically picks `n` demonstrations: the first `n` examples of a
/// seeded shuffle of `pool`.
pub fn select_shots(pool: &[Example], n: usize, seed: u64) -> Vec<Example> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.into_iter().take(n).map(|i| pool[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams { temperature: 0.0, max_tokens: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub model: String,
    pub prompt: String,
    pub params: DecodingParams,
}

impl GenRequest {
    /// SHA-256 over the model id, prompt and decoding parameters.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::json!({
            "model": self.model,
            "prompt": self.prompt,
            "temperature": self.params.temperature,
            "max_tokens": self.params.max_tokens,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// What a client returns for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenResponse {
    /// Post-processed summary.
    pub text: String,
    pub raw: String,
    pub latency: Duration,
    pub usage: Option<TokenUsage>,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            ClientError::Transport(_) => true,
            ClientError::Malformed(_) => false,
        }
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, req: &GenRequest) -> Result<Completion, ClientError>;
}

/// Client for OpenAI-style `chat/completions` endpoints.
#[derive(Debug)]
pub struct HttpChatClient {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

/// Extracts the first choice from a chat-completions response body.
pub fn parse_chat_response(body: &str) -> Result<Completion, ClientError> {
    let resp: ChatResponse = serde_json::from_str(body).map_err(|e| ClientError::Malformed(e.to_string()))?;
    let choice = resp.choices.into_iter().next().ok_or_else(|| ClientError::Malformed("no choices".into()))?;
    let text = choice.message.content.ok_or_else(|| ClientError::Malformed("choice has no content".into()))?;
    Ok(Completion { text, usage: resp.usage })
}

impl HttpChatClient {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpChatClient { agent, url: url.into(), api_key }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, req: &GenRequest) -> Result<Completion, ClientError> {
        let body = ChatRequest {
            model: &req.model,
            messages: [ChatMessage { role: "user", content: &req.prompt }],
            temperature: req.params.temperature,
            max_tokens: req.params.max_tokens,
        };
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { status, body: text });
        }
        parse_chat_response(&text)
    }
}

/// Test client that answers every prompt with the reference description of
/// the example the prompt was built for.
#[derive(Debug, Default)]
pub struct EchoClient {
    by_prompt: HashMap<String, String>,
}

impl EchoClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, prompt: String, reference: String) {
        self.by_prompt.entry(prompt).or_insert(reference);
    }
}

impl ChatClient for EchoClient {
    fn complete(&self, req: &GenRequest) -> Result<Completion, ClientError> {
        self.by_prompt
            .get(&req.prompt)
            .map(|r| Completion { text: r.clone(), usage: None })
            .ok_or_else(|| ClientError::Status { status: 404, body: "prompt not registered with echo client".into() })
    }
}

/// Keeps the first paragraph of a model answer, dropping code fences and a
/// leading `Description:` label.
pub fn postprocess(raw: &str) -> String {
    let lines: Vec<&str> = raw.lines().filter(|l| !l.trim_start().starts_with("```")).collect();
    let text = lines.join("\n");
    let text = text.trim();
    let text = text.strip_prefix("Description:").unwrap_or(text).trim_start();
    let mut paragraph = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if paragraph.is_empty() {
                continue;
            }
            break;
        }
        paragraph.push(line);
    }
    paragraph.join("\n").trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model: String,
    text: String,
    raw: String,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

/// Content-addressed response cache: one JSON file per request key.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GenError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| GenError::Cache { path: dir.clone(), source })?;
        Ok(ResponseCache { dir, write_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn get(&self, key: &str) -> Option<CacheEntry> {
        let path = self.path(key);
        let text = fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.key == key => Some(entry),
            _ => {
                log::warn!("ignoring corrupt cache entry {}", path.display());
                None
            }
        }
    }

    fn put(&self, entry: &CacheEntry) -> Result<(), GenError> {
        let path = self.path(&entry.key);
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let bytes = serde_json::to_vec_pretty(entry).expect("cache entries serialize");
        write_atomic(&path, &bytes).map_err(|e| GenError::Cache {
            path,
            source: match e {
                crate::corpus::RunIoError::Io { source, .. } => source,
                other => std::io::Error::other(other.to_string()),
            },
        })
    }

    pub fn contains(&self, req: &GenRequest) -> bool {
        self.get(&req.cache_key()).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(500) }
    }
}

/// Answers `req` from the cache, or queries `client` with exponential
/// backoff and caches the result before returning it.
pub fn generate(
    req: &GenRequest,
    client: &dyn ChatClient,
    cache: &ResponseCache,
    policy: &RetryPolicy,
) -> Result<GenResponse, GenError> {
    let key = req.cache_key();
    if let Some(hit) = cache.get(&key) {
        return Ok(GenResponse { text: hit.text, raw: hit.raw, latency: Duration::ZERO, usage: hit.usage, from_cache: true });
    }
    let started = Instant::now();
    let mut attempt = 0;
    let completion = loop {
        attempt += 1;
        match client.complete(req) {
            Ok(c) => break c,
            Err(ClientError::Malformed(m)) => return Err(GenError::MalformedResponse(m)),
            Err(e) if !e.retryable() || attempt >= policy.max_attempts => {
                return Err(GenError::EndpointError { attempts: attempt, last: e.to_string() });
            }
            Err(e) => {
                let delay = policy.base_delay * 2u32.saturating_pow(attempt - 1);
                log::warn!("request for {} failed (attempt {attempt}): {e}; retrying in {delay:?}", req.model);
                std::thread::sleep(delay);
            }
        }
    };
    let entry = CacheEntry {
        key,
        model: req.model.clone(),
        text: postprocess(&completion.text),
        raw: completion.text,
        usage: completion.usage,
    };
    cache.put(&entry)?;
    Ok(GenResponse { text: entry.text, raw: entry.raw, latency: started.elapsed(), usage: entry.usage, from_cache: false })
}

/// Runs [`generate`] over `requests` with at most `jobs` requests in
/// flight. Results come back in request order.
pub fn generate_batch(
    requests: &[GenRequest],
    client: &dyn ChatClient,
    cache: &ResponseCache,
    policy: &RetryPolicy,
    jobs: usize,
) -> Vec<Result<GenResponse, GenError>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<GenResponse, GenError>>>> =
        Mutex::new((0..requests.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, requests.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let result = generate(req, client, cache, policy);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every request is processed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    fn shots(n: usize) -> Vec<(String, String)> {
        (0..n).map(|i| (format!("def f{i}():\n    return {i}"), format!("returns {i}"))).collect()
    }

    #[test]
    fn prompt_ten_shots() {
        let ex = Example::new("t", "def target(x):\n    return x", "returns x");
        let p = build_prompt(&ex, &shots(10)).unwrap().render();
        assert!(p.starts_with(INSTRUCTION));
        assert_eq!(p.matches("```python").count(), 11);
        assert!(p.ends_with("def target(x):\n    return x\n```\nDescription:"));
    }

    #[test]
    fn prompt_zero_shot() {
        let ex = Example::new("t", "def g(): pass", "does nothing");
        let p = build_prompt(&ex, &[]).unwrap().render();
        assert_eq!(p, format!("{INSTRUCTION}\n\nCode:\n```python\ndef g(): pass\n```\nDescription:"));
    }

    #[test]
    fn prompt_target_in_shots() {
        let s = shots(3);
        let ex = Example::new("t", s[1].0.clone(), "x");
        assert!(matches!(build_prompt(&ex, &s), Err(GenError::TargetInShots)));
    }

    #[test]
    fn shot_selection_is_seeded() {
        let pool: Vec<_> = (0..30).map(|i| Example::new(format!("{i}"), "c", "d")).collect();
        let a: Vec<_> = select_shots(&pool, 10, 5).into_iter().map(|e| e.id).collect();
        let b: Vec<_> = select_shots(&pool, 10, 5).into_iter().map(|e| e.id).collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_eq!(select_shots(&pool[..3], 10, 5).len(), 3);
    }

    #[test]
    fn cache_key_depends_on_params() {
        let r = GenRequest { model: "m".into(), prompt: "p".into(), params: DecodingParams::default() };
        let mut r2 = r.clone();
        r2.params.temperature = 0.7;
        assert_ne!(r.cache_key(), r2.cache_key());
        assert_eq!(r.cache_key(), r.clone().cache_key());
        assert_eq!(r.cache_key().len(), 64);
    }

    #[test]
    fn postprocess_first_paragraph() {
        assert_eq!(postprocess("Description: Adds two numbers.\n\nIt uses +."), "Adds two numbers.");
        assert_eq!(postprocess("```\nReturns x\n```\n"), "Returns x");
        assert_eq!(postprocess("\n\n  Line one\nline two\n\nmore"), "Line one\nline two");
        assert_eq!(postprocess(""), "");
    }

    #[test]
    fn parse_chat_bodies() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#;
        let c = parse_chat_response(ok).unwrap();
        assert_eq!(c.text, "hi");
        assert_eq!(c.usage, Some(TokenUsage { prompt_tokens: 3, completion_tokens: 1 }));
        assert!(parse_chat_response(r#"{"choices":[]}"#).is_err());
        assert!(parse_chat_response("nope").is_err());
    }

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
    }

    impl ChatClient for Flaky {
        fn complete(&self, _req: &GenRequest) -> Result<Completion, ClientError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(ClientError::Status { status: 500, body: "boom".into() })
            } else {
                Ok(Completion { text: "Returns the answer.\n\nMore.".into(), usage: None })
            }
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(1) }
    }

    fn req() -> GenRequest {
        GenRequest { model: "m".into(), prompt: "p".into(), params: DecodingParams::default() }
    }

    #[test]
    fn second_call_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let client = Flaky { calls: AtomicU32::new(0), fail_first: 0 };
        let first = generate(&req(), &client, &cache, &fast()).unwrap();
        assert!(!first.from_cache);
        assert_eq!(first.text, "Returns the answer.");
        let second = generate(&req(), &client, &cache, &fast()).unwrap();
        assert!(second.from_cache);
        assert_eq!(second.text, first.text);
        assert_eq!(client.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn retries_then_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let client = Flaky { calls: AtomicU32::new(0), fail_first: 4 };
        assert!(generate(&req(), &client, &cache, &fast()).is_ok());
        assert_eq!(client.calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn five_server_errors_give_up() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let client = Flaky { calls: AtomicU32::new(0), fail_first: 5 };
        let err = generate(&req(), &client, &cache, &fast()).unwrap_err();
        assert!(matches!(err, GenError::EndpointError { attempts: 5, .. }));
        assert!(!cache.contains(&req()));
    }

    #[test]
    fn corrupt_entry_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let client = Flaky { calls: AtomicU32::new(0), fail_first: 0 };
        let mut other = req();
        other.prompt = "q".into();
        generate(&req(), &client, &cache, &fast()).unwrap();
        generate(&other, &client, &cache, &fast()).unwrap();
        fs::write(cache.path(&req().cache_key()), "{garbage").unwrap();
        assert!(!cache.contains(&req()));
        assert!(cache.contains(&other));
        assert!(!generate(&req(), &client, &cache, &fast()).unwrap().from_cache);
        assert!(cache.contains(&req()));
    }

    #[test]
    fn echo_returns_reference() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let mut echo = EchoClient::new();
        echo.register("p".into(), "Returns the sum of a and b.".into());
        assert_eq!(generate(&req(), &echo, &cache, &fast()).unwrap().text, "Returns the sum of a and b.");
    }

    #[test]
    fn batch_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let mut echo = EchoClient::new();
        let reqs: Vec<_> = (0..12)
            .map(|i| {
                echo.register(format!("p{i}"), format!("answer {i}"));
                GenRequest { model: "m".into(), prompt: format!("p{i}"), params: DecodingParams::default() }
            })
            .collect();
        let out = generate_batch(&reqs, &echo, &cache, &fast(), 4);
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap().text, format!("answer {i}"));
        }
    }
}
