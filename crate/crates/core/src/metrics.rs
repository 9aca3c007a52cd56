//! Scoring functions: sentence BLEU-4, token-copy rate, BERTScore and
//! correlation coefficients.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subtok::SubwordSeq;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("description has no tokens")]
    EmptyDescription,
    #[error("embedding sequence is empty")]
    EmptySequence,
    #[error("vector {index} has norm {norm}, expected 1")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

/// Sentence-level BLEU-4 with the length-scaled smoothing of zero-match
/// orders ("method 4" in NLTK's `SmoothingFunction`, k = 5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// Score in `[0, 100]`.
    pub value: f64,
    /// Smoothed modified precisions for n = 1..=4.
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
}

impl BleuScore {
    fn zero(precisions: [f64; 4], brevity_penalty: f64) -> Self {
        BleuScore { value: 0.0, precisions, brevity_penalty }
    }
}

const SMOOTHING_K: f64 = 5.0;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the hypothesis n-gram total (at least 1).
fn modified_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(gram, &count)| count.min(refc.get(gram).copied().unwrap_or(0)))
        .sum();
    let total: usize = cand.values().sum();
    (matched, total.max(1))
}

/// Scores `candidate` against a single `reference`.
///
/// Orders with no matching n-gram get a numerator of
/// `ln(|candidate|) / (2^k * 5)`, where `k` counts the zero-match orders seen
/// so far. A candidate without any unigram match, and an empty candidate,
/// score 0. Orders whose precision is still zero after smoothing (only
/// possible for one-token candidates) drop out of the geometric mean.
pub fn bleu4<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Result<BleuScore, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let hyp_len = candidate.len();
    let ref_len = reference.len();
    let bp = if hyp_len > ref_len {
        1.0
    } else if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };

    let counts: [(usize, usize); 4] = std::array::from_fn(|i| modified_precision(candidate, reference, i + 1));
    let mut precisions = counts.map(|(m, t)| m as f64 / t as f64);
    if counts[0].0 == 0 {
        return Ok(BleuScore::zero(precisions, bp));
    }

    let mut zero_orders = 1;
    for (p, &(matched, total)) in precisions.iter_mut().zip(&counts) {
        if matched == 0 && hyp_len > 1 {
            let numerator = 1.0 / (2f64.powi(zero_orders) * SMOOTHING_K / (hyp_len as f64).ln());
            *p = numerator / total as f64;
            zero_orders += 1;
        }
    }
    let log_sum = kahan_sum(precisions.iter().filter(|&&p| p > 0.0).map(|p| 0.25 * p.ln()));
    Ok(BleuScore { value: 100.0 * bp * log_sum.exp(), precisions, brevity_penalty: bp })
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Whitespace tokenization used for BLEU.
pub fn bleu_tokens(text: &str, lowercase: bool) -> Vec<String> {
    text.split_whitespace()
        .map(|w| if lowercase { w.to_lowercase() } else { w.to_string() })
        .collect()
}

/// Share of description subwords that also occur among the code subwords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCopy {
    pub value: f64,
    pub tokenizer: String,
    pub matched: usize,
    pub total: usize,
}

pub fn p_copy(code: &SubwordSeq, description: &SubwordSeq, tokenizer: &str) -> Result<PCopy, MetricError> {
    if description.is_empty() {
        return Err(MetricError::EmptyDescription);
    }
    let code_set: HashSet<&str> = code.iter().map(String::as_str).collect();
    let matched = description.iter().filter(|t| code_set.contains(t.as_str())).count();
    let total = description.len();
    Ok(PCopy { value: matched as f64 / total as f64, tokenizer: tokenizer.to_string(), matched, total })
}

/// Precision, recall and F1, each scaled to `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BertScoreResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Unit-norm token embeddings of one text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSeq {
    vectors: Vec<Vec<f64>>,
}

const NORM_TOLERANCE: f64 = 1e-9;

impl EmbeddingSeq {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        for (index, v) in vectors.iter().enumerate() {
            let norm = l2(v);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(MetricError::NotUnitNorm { index, norm });
            }
        }
        Ok(EmbeddingSeq { vectors })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Greedy-matching BERTScore without idf weighting or baseline rescaling.
///
/// Recall averages, over reference tokens, the best similarity to any
/// candidate token; precision averages over candidate tokens.
pub fn bertscore(reference: &EmbeddingSeq, candidate: &EmbeddingSeq) -> Result<BertScoreResult, MetricError> {
    if reference.is_empty() || candidate.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let sims: Vec<Vec<f64>> = reference
        .vectors
        .iter()
        .map(|x| candidate.vectors.iter().map(|y| dot(x, y)).collect())
        .collect();
    let recall = sims
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    let precision = (0..candidate.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let f1 = if precision + recall != 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(BertScoreResult { precision: 100.0 * precision, recall: 100.0 * recall, f1: 100.0 * f1 })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned {got} vectors for {expected} tokens")]
    CountMismatch { expected: usize, got: usize },
    #[error("token {index} has a zero embedding")]
    ZeroVector { index: usize },
}

/// Maps tokens to (not necessarily normalized) vectors.
///
/// Implementations must be deterministic for a fixed token list and
/// provider id.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Embeds `tokens` and L2-normalizes each vector.
pub fn embed(tokens: &SubwordSeq, provider: &dyn EmbeddingProvider) -> Result<EmbeddingSeq, EmbedError> {
    if tokens.is_empty() {
        return Ok(EmbeddingSeq { vectors: Vec::new() });
    }
    let raw = provider.embed_tokens(tokens.as_slice())?;
    if raw.len() != tokens.len() {
        return Err(EmbedError::CountMismatch { expected: tokens.len(), got: raw.len() });
    }
    let dim = provider.dim();
    let vectors = raw
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            if v.len() != dim {
                return Err(EmbedError::DimensionMismatch { expected: dim, got: v.len() });
            }
            let norm = l2(&v);
            if norm == 0.0 || !norm.is_finite() {
                return Err(EmbedError::ZeroVector { index });
            }
            Ok(v.into_iter().map(|x| x / norm).collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EmbeddingSeq { vectors })
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Test provider: each token maps to the basis vector `fnv1a(token) mod dim`.
///
/// With no hash collisions, the similarity of two tokens is 1 when their
/// strings are equal and 0 otherwise, which reduces BERTScore to token-set
/// overlap.
#[derive(Debug, Clone)]
pub struct OneHotProvider {
    dim: usize,
    id: String,
}

impl OneHotProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "one-hot dimension must be positive");
        OneHotProvider { dim, id: format!("onehot-{dim}") }
    }

    pub fn slot(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl EmbeddingProvider for OneHotProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(tokens
            .iter()
            .map(|t| {
                let mut v = vec![0.0; self.dim];
                v[self.slot(t)] = 1.0;
                v
            })
            .collect())
    }
}

/// Client for a remote embedding service.
///
/// Request: `POST {url}` with body `{"model": <id>, "tokens": [..]}`.
/// Response: `{"vectors": [[f64; dim], ..]}`, one vector per token.
#[derive(Debug)]
pub struct HttpEmbeddingProvider {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    retries: u32,
    backoff: Duration,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    tokens: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl HttpEmbeddingProvider {
    pub fn new(url: impl Into<String>, model: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpEmbeddingProvider {
            agent,
            url: url.into(),
            model: model.into(),
            api_key: None,
            dim,
            retries: 3,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    /// Total attempts per call and the base delay between them.
    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries.max(1);
        self.backoff = backoff;
        self
    }

    fn attempt(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, String> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(EmbedRequest { model: &self.model, tokens })
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let body: EmbedResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(body.vectors)
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn id(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut last = String::new();
        for attempt in 0..self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.attempt(tokens) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("embedding request to {} failed (attempt {}): {e}", self.url, attempt + 1);
                    last = e;
                }
            }
        }
        Err(EmbedError::ProviderUnavailable(format!("{} after {} attempts: {last}", self.url, self.retries)))
    }
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::DegenerateInput("length mismatch"));
    }
    if xs.len() < 2 {
        return Err(MetricError::DegenerateInput("fewer than two points"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(MetricError::DegenerateInput("non-finite value"));
    }
    Ok(())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::DegenerateInput("zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}
