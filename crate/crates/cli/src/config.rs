//! Run configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sumprobe::corpus::{FilterConfig, Split};
use sumprobe::llmgen::{DecodingParams, DEFAULT_SHOTS};
use sumprobe::metrics::{EmbeddingProvider, HttpEmbeddingProvider, OneHotProvider};
use sumprobe::subtok::Tokenizer;
use sumprobe::transform::Variant;

pub const DEFAULT_API_KEY_ENV: &str = "SUMPROBE_API_KEY";
pub const DEFAULT_ONEHOT_DIM: usize = 4096;

/// On-disk layout of the config file. Every field is optional so that
/// flags can fill the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub max_errors: Option<usize>,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub transform: TransformSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub score: ScoreSection,
    #[serde(default)]
    pub embedding: Option<EmbeddingSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
    pub split: Option<String>,
    /// Few-shot pool; defaults to the train split next to `path`.
    pub train: Option<PathBuf>,
    pub min_tokens: Option<usize>,
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    pub variants: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub id: Option<String>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub shots: Option<usize>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    pub tokenizer: Option<String>,
    pub lowercase_bleu: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    Onehot { dim: usize },
    Http {
        url: String,
        model: String,
        dim: usize,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Onehot { dim: DEFAULT_ONEHOT_DIM }
    }
}

impl EmbeddingSpec {
    pub fn provider(&self, api_key: Option<String>) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbeddingSpec::Onehot { dim } => {
                if *dim == 0 {
                    bail!("embedding dim must be positive");
                }
                Box::new(OneHotProvider::new(*dim))
            }
            EmbeddingSpec::Http { url, model, dim, timeout_secs } => Box::new(
                HttpEmbeddingProvider::new(url, model, *dim, Duration::from_secs(timeout_secs.unwrap_or(60)))
                    .with_api_key(api_key),
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mock {
    Echo,
}

/// Flag values that override the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub max_errors: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub split: Option<String>,
    pub train: Option<PathBuf>,
    pub variants: Vec<String>,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub mock: Option<Mock>,
    pub shots: Option<usize>,
    pub tokenizer: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub id: Option<String>,
    pub endpoint: Option<String>,
    pub mock: Option<Mock>,
    pub api_key_env: String,
    pub timeout: Duration,
    pub shots: usize,
    pub decoding: DecodingParams,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    /// Record-level errors tolerated before a stage exits non-zero.
    pub max_errors: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub split: Split,
    pub train: Option<PathBuf>,
    pub filter: FilterConfig,
    pub variants: Vec<Variant>,
    pub model: ModelConfig,
    pub tokenizer: String,
    pub lowercase_bleu: bool,
    pub embedding: EmbeddingSpec,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get().min(4))
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: Overrides) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<FileConfig>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        Self::merge(file, o)
    }

    pub fn merge(f: FileConfig, o: Overrides) -> Result<Self> {
        let Some(seed) = o.seed.or(f.seed) else {
            bail!("a seed is required: pass --seed or set `seed` in the config file");
        };
        let split = o.split.or(f.corpus.split).unwrap_or_else(|| "test".into());
        let variant_names = if o.variants.is_empty() { f.transform.variants.unwrap_or_default() } else { o.variants };
        let variants = parse_variants(&variant_names)?;
        let decoding = DecodingParams {
            temperature: f.model.temperature.unwrap_or(DecodingParams::default().temperature),
            max_tokens: f.model.max_tokens.unwrap_or(DecodingParams::default().max_tokens),
        };
        let defaults = FilterConfig::default();
        let filter = FilterConfig {
            min_tokens: f.corpus.min_tokens.unwrap_or(defaults.min_tokens),
            max_tokens: f.corpus.max_tokens.unwrap_or(defaults.max_tokens),
        };
        if filter.min_tokens > filter.max_tokens {
            bail!("corpus.min_tokens exceeds corpus.max_tokens");
        }
        Ok(RunConfig {
            seed,
            out: o.out.or(f.out).unwrap_or_else(|| PathBuf::from("out")),
            jobs: o.jobs.or(f.jobs).unwrap_or_else(default_jobs).max(1),
            max_errors: o.max_errors.or(f.max_errors),
            corpus: o.corpus.or(f.corpus.path),
            split: split.parse().map_err(anyhow::Error::msg)?,
            train: o.train.or(f.corpus.train),
            filter,
            variants,
            model: ModelConfig {
                id: o.model.or(f.model.id),
                endpoint: o.endpoint.or(f.model.endpoint),
                mock: o.mock,
                api_key_env: f.model.api_key_env.unwrap_or_else(|| DEFAULT_API_KEY_ENV.into()),
                timeout: Duration::from_secs(f.model.timeout_secs.unwrap_or(60)),
                shots: o.shots.or(f.model.shots).unwrap_or(DEFAULT_SHOTS),
                decoding,
            },
            tokenizer: o.tokenizer.or(f.score.tokenizer).unwrap_or_else(|| "fallback".into()),
            lowercase_bleu: f.score.lowercase_bleu.unwrap_or(false),
            embedding: f.embedding.unwrap_or_default(),
        })
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.model.api_key_env).ok().filter(|k| !k.is_empty())
    }

    /// The corpus path, checked to exist.
    pub fn corpus_path(&self) -> Result<&Path> {
        let Some(p) = self.corpus.as_deref() else {
            bail!("no corpus given: pass --corpus or set corpus.path in the config file");
        };
        if !p.exists() {
            bail!("corpus path {} does not exist", p.display());
        }
        Ok(p)
    }

    /// Few-shot pool location: explicit `train`, else the train split in the
    /// corpus directory.
    pub fn train_path(&self) -> Result<PathBuf> {
        let p = match (&self.train, &self.corpus) {
            (Some(t), _) => t.clone(),
            (None, Some(c)) if c.is_dir() => c.join(format!("{}.jsonl", Split::Train)),
            _ => bail!("few-shot prompting needs a training pool: set corpus.train or use a corpus directory"),
        };
        if !p.exists() {
            bail!("training pool {} does not exist", p.display());
        }
        Ok(p)
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        if self.tokenizer != "fallback" && !Path::new(&self.tokenizer).is_file() {
            bail!("tokenizer vocabulary {} does not exist (use `fallback` or a vocab file)", self.tokenizer);
        }
        Tokenizer::from_spec(&self.tokenizer).with_context(|| format!("loading tokenizer {}", self.tokenizer))
    }
}

pub fn parse_variants(names: &[String]) -> Result<Vec<Variant>> {
    if names.is_empty() || names.iter().any(|n| n == "all") {
        return Ok(Variant::ALL.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let v: Variant = n.parse().map_err(anyhow::Error::msg)?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out.sort();
    Ok(out)
}
