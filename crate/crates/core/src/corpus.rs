//! Code/description datasets and evaluation run files.
//!
//! Corpora are JSON Lines with CodeSearchNet field names: `code` and
//! `docstring` are required, `id` is optional, and every other field is
//! kept verbatim in [`Example::origin`].

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::analysis::CopyAttribution;
use crate::metrics::{BertScoreResult, BleuScore, PCopy};
use crate::pylex;
use crate::transform::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub code: String,
    pub reference: String,
    /// Fields of the source record other than `id`, `code` and `docstring`.
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub origin: Map<String, Value>,
}

impl Example {
    pub fn new(id: impl Into<String>, code: impl Into<String>, reference: impl Into<String>) -> Self {
        Example { id: id.into(), code: code.into(), reference: reference.into(), origin: Map::new() }
    }

    /// One corpus line in the same schema [`load_corpus`] reads.
    pub fn to_json_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("code".into(), Value::String(self.code.clone()));
        obj.insert("docstring".into(), Value::String(self.reference.clone()));
        for (k, v) in &self.origin {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, dev or test)")),
        }
    }
}

/// A corpus line that did not yield an [`Example`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusLoad {
    pub examples: Vec<Example>,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Parses corpus bytes. Every line (`\n`-terminated; a final newline does
/// not start a new line) produces exactly one example or one error.
pub fn parse_corpus(bytes: &[u8], label: &str) -> CorpusLoad {
    let mut load = CorpusLoad::default();
    let mut seen = HashSet::new();
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if bytes.is_empty() {
        return load;
    }
    for (idx, raw) in body.split(|&b| b == b'\n').enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        match parse_line(raw, label, line) {
            Ok(ex) if !seen.insert(ex.id.clone()) => {
                load.errors.push(LineError { line, message: format!("duplicate id `{}`", ex.id) })
            }
            Ok(ex) => load.examples.push(ex),
            Err(message) => load.errors.push(LineError { line, message }),
        }
    }
    load
}

fn parse_line(raw: &[u8], label: &str, line: usize) -> Result<Example, String> {
    let text = std::str::from_utf8(raw).map_err(|e| format!("invalid UTF-8: {e}"))?;
    if text.trim().is_empty() {
        return Err("blank line".into());
    }
    let value: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(mut obj) = value else {
        return Err("line is not a JSON object".into());
    };
    let code = match obj.remove("code") {
        Some(Value::String(s)) => s,
        Some(_) => return Err("field `code` is not a string".into()),
        None => return Err("missing field `code`".into()),
    };
    let reference = match obj.remove("docstring") {
        Some(Value::String(s)) => s,
        Some(_) => return Err("field `docstring` is not a string".into()),
        None => return Err("missing field `docstring`".into()),
    };
    if code.is_empty() {
        return Err("field `code` is empty".into());
    }
    let id = match obj.remove("id") {
        Some(Value::String(s)) => s,
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err("field `id` is not a string or number".into()),
        None => match obj.get("path") {
            Some(Value::String(p)) => format!("{p}:{line}"),
            _ => format!("{label}:{line}"),
        },
    };
    Ok(Example { id, code, reference, origin: obj })
}

/// Loads a corpus file. When `path` is a directory, `<path>/<split>.jsonl`
/// is read.
pub fn load_corpus(path: &Path, split: Split) -> Result<CorpusLoad, CorpusError> {
    let file = if path.is_dir() { path.join(format!("{split}.jsonl")) } else { path.to_path_buf() };
    let bytes = fs::read(&file).map_err(|source| CorpusError::Io { path: file.clone(), source })?;
    Ok(parse_corpus(&bytes, split.as_str()))
}

/// Writes examples as a corpus file readable by [`load_corpus`].
pub fn save_corpus(examples: &[Example], path: &Path) -> Result<(), RunIoError> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&ex.to_json_line());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterReason {
    Empty,
    HasUrl,
    TooShort,
    TooLong,
    Unlexable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub accepted: bool,
    pub reason: Option<FilterReason>,
}

impl FilterDecision {
    pub fn accept() -> Self {
        FilterDecision { accepted: true, reason: None }
    }

    pub fn reject(reason: FilterReason) -> Self {
        FilterDecision { accepted: false, reason: Some(reason) }
    }
}

/// Inclusive bounds on the whitespace-token length of the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { min_tokens: 3, max_tokens: 256 }
    }
}

pub fn filter_example(ex: &Example, config: &FilterConfig) -> FilterDecision {
    if ex.reference.trim().is_empty() || ex.code.trim().is_empty() {
        return FilterDecision::reject(FilterReason::Empty);
    }
    if ex.reference.contains("http://") {
        return FilterDecision::reject(FilterReason::HasUrl);
    }
    let n = ex.reference.split_whitespace().count();
    if n < config.min_tokens {
        return FilterDecision::reject(FilterReason::TooShort);
    }
    if n > config.max_tokens {
        return FilterDecision::reject(FilterReason::TooLong);
    }
    if pylex::lex(&ex.code).is_err() {
        return FilterDecision::reject(FilterReason::Unlexable);
    }
    FilterDecision::accept()
}

/// Scores attached to a [`RunRecord`] by the scoring stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub tokenizer: String,
    pub bleu: BleuScore,
    pub bertscore: BertScoreResult,
    pub p_copy_reference: PCopy,
    /// Absent when the generation has no tokens.
    pub p_copy_generated: Option<PCopy>,
    pub bucket: String,
    pub attribution: CopyAttribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub example_id: String,
    pub variant: Variant,
    pub model_id: String,
    pub reference: String,
    pub generated: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EvalRecord>,
}

impl RunRecord {
    pub fn key(&self) -> RunKey {
        RunKey { example_id: self.example_id.clone(), variant: self.variant, model_id: self.model_id.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub example_id: String,
    pub variant: Variant,
    pub model_id: String,
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.example_id, self.variant, self.model_id)
    }
}

#[derive(Debug, Error)]
pub enum RunIoError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("duplicate run record {0}")]
    DuplicateKey(RunKey),
}

fn check_unique<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Result<(), RunIoError> {
    let mut seen = HashSet::new();
    for r in records {
        let key = r.key();
        if seen.contains(&key) {
            return Err(RunIoError::DuplicateKey(key));
        }
        seen.insert(key);
    }
    Ok(())
}

/// Writes through a temporary sibling file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunIoError> {
    let io = |source| RunIoError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn encode_run(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("run records serialize"));
        out.push('\n');
    }
    out
}

/// Writes a run file, replacing any existing one.
pub fn save_run(records: &[RunRecord], path: &Path) -> Result<(), RunIoError> {
    check_unique(records)?;
    write_atomic(path, encode_run(records).as_bytes())
}

/// Appends records to a run file, rejecting keys already present.
pub fn append_run(records: &[RunRecord], path: &Path) -> Result<(), RunIoError> {
    let mut all = if path.exists() { load_run(path)? } else { Vec::new() };
    all.extend_from_slice(records);
    save_run(&all, path)
}

pub fn parse_run(text: &str, path: &Path) -> Result<Vec<RunRecord>, RunIoError> {
    let records = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str::<RunRecord>(line).map_err(|e| RunIoError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    check_unique(&records)?;
    Ok(records)
}

pub fn load_run(path: &Path) -> Result<Vec<RunRecord>, RunIoError> {
    let text = fs::read_to_string(path).map_err(|source| RunIoError::Io { path: path.to_path_buf(), source })?;
    parse_run(&text, path)
}
