//! The four pipeline stages. Each reads its inputs from and writes its
//! outputs to files under the output directory, so any stage can be re-run
//! on its own.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sumprobe::analysis;
use sumprobe::corpus::{filter_example, load_corpus, load_run, save_corpus, save_run, write_atomic, Example, RunRecord, Split};
use sumprobe::llmgen::{
    build_prompt, generate_batch, select_shots, ChatClient, DecodingParams, EchoClient, GenRequest, HttpChatClient,
    ResponseCache, RetryPolicy,
};
use sumprobe::scoring::Scorer;
use sumprobe::subtok::Tokenizer;
use sumprobe::transform::{apply_variant, DonorIndex, Variant};

use crate::config::{EmbeddingSpec, Mock, RunConfig};

/// What a stage produced and how many record-level errors it hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub records: usize,
    pub errors: usize,
    /// Errors tolerated before the run counts as failed; `None` is unlimited.
    pub tolerated: Option<usize>,
}

impl StageOutcome {
    pub fn ok(&self) -> bool {
        self.tolerated.is_none_or(|t| self.errors <= t)
    }
}

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }
    pub fn variant_corpus(&self, v: Variant) -> PathBuf {
        self.corpus_dir().join(format!("{v}.jsonl"))
    }
    pub fn variant_errors(&self, v: Variant) -> PathBuf {
        self.corpus_dir().join(format!("{v}.errors.jsonl"))
    }
    pub fn filtered(&self) -> PathBuf {
        self.corpus_dir().join("filtered.jsonl")
    }
    pub fn manifest(&self) -> PathBuf {
        self.corpus_dir().join("manifest.json")
    }
    pub fn run(&self) -> PathBuf {
        self.root.join("run.jsonl")
    }
    pub fn run_meta(&self) -> PathBuf {
        self.root.join("run_meta.json")
    }
    pub fn generate_errors(&self) -> PathBuf {
        self.root.join("generate.errors.jsonl")
    }
    pub fn cache(&self) -> PathBuf {
        self.root.join("cache")
    }
    pub fn scored(&self) -> PathBuf {
        self.root.join("scored.jsonl")
    }
    pub fn score_meta(&self) -> PathBuf {
        self.root.join("score_meta.json")
    }
    pub fn score_errors(&self) -> PathBuf {
        self.root.join("score.errors.jsonl")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn require(path: &Path, command: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing {}: run `sumprobe {command}` first", path.display());
    }
    Ok(())
}

fn write_lines(path: &Path, lines: &[serde_json::Value]) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(Into::into)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(Into::into)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub split: String,
    pub variants: Vec<Variant>,
    pub counts: Vec<usize>,
}

/// Loads and filters the corpus, then writes one file per variant.
pub fn cmd_transform(cfg: &RunConfig) -> Result<StageOutcome> {
    let layout = Layout::new(&cfg.out);
    let load = load_corpus(cfg.corpus_path()?, cfg.split)?;
    let mut errors = load.errors.len();
    let mut filtered: Vec<serde_json::Value> =
        load.errors.iter().map(|e| json!({"line": e.line, "error": e.message})).collect();

    let mut accepted = Vec::new();
    for ex in load.examples {
        let decision = filter_example(&ex, &cfg.filter);
        match decision.reason {
            None => accepted.push(ex),
            Some(reason) => filtered.push(json!({"id": ex.id, "reason": format!("{reason:?}")})),
        }
    }
    log::info!("{} examples accepted, {} filtered or unreadable", accepted.len(), filtered.len());
    write_lines(&layout.filtered(), &filtered)?;

    let donors = cfg
        .variants
        .contains(&Variant::AdversarialNames)
        .then(|| DonorIndex::build(&accepted).assign_donors(cfg.seed));

    let mut counts = Vec::new();
    let mut records = 0;
    for &variant in &cfg.variants {
        let mut out = Vec::new();
        let mut failures = Vec::new();
        for ex in &accepted {
            let donor = match donors.as_ref().and_then(|d| d.get(&ex.id)) {
                Some(Ok(name)) if variant == Variant::AdversarialNames => Some(name.as_str()),
                Some(Err(e)) if variant == Variant::AdversarialNames => {
                    failures.push(json!({"id": ex.id, "error": e.to_string()}));
                    continue;
                }
                _ => None,
            };
            match apply_variant(ex, variant, donor) {
                Ok(t) => out.push(t),
                Err(e) => failures.push(json!({"id": ex.id, "error": e.to_string()})),
            }
        }
        if !failures.is_empty() {
            log::warn!("{variant}: {} examples could not be transformed", failures.len());
        }
        errors += failures.len();
        records += out.len();
        counts.push(out.len());
        save_corpus(&out, &layout.variant_corpus(variant))?;
        write_lines(&layout.variant_errors(variant), &failures)?;
    }
    write_json(
        &layout.manifest(),
        &Manifest { seed: cfg.seed, split: cfg.split.to_string(), variants: cfg.variants.clone(), counts },
    )?;
    Ok(StageOutcome { records, errors, tolerated: Some(cfg.max_errors.unwrap_or(0)) })
}

fn read_manifest(layout: &Layout) -> Result<Manifest> {
    require(&layout.manifest(), "transform")?;
    read_json(&layout.manifest())
}

fn load_variant(layout: &Layout, v: Variant) -> Result<Vec<Example>> {
    let path = layout.variant_corpus(v);
    require(&path, &format!("transform --variant {v}"))?;
    let load = load_corpus(&path, Split::Test)?;
    if let Some(e) = load.errors.first() {
        bail!("{}:{}: {}", path.display(), e.line, e.message);
    }
    Ok(load.examples)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    seed: u64,
    client: String,
    decoding: DecodingParams,
    shots: Vec<String>,
    variants: Vec<Variant>,
    records: usize,
    errors: usize,
}

/// Prompts the model for every transformed example and merges the answers
/// into the run file.
pub fn cmd_generate(cfg: &RunConfig) -> Result<StageOutcome> {
    let layout = Layout::new(&cfg.out);
    let manifest = read_manifest(&layout)?;
    let model = cfg.model.id.clone().ok_or_else(|| anyhow!("no model given: pass --model or set model.id"))?;

    let shots = if cfg.model.shots == 0 {
        Vec::new()
    } else {
        let train = cfg.train_path()?;
        let pool = load_corpus(&train, Split::Train)?;
        let pool: Vec<Example> =
            pool.examples.into_iter().filter(|ex| filter_example(ex, &cfg.filter).accepted).collect();
        if pool.len() < cfg.model.shots {
            log::warn!("training pool has only {} usable examples for {} shots", pool.len(), cfg.model.shots);
        }
        select_shots(&pool, cfg.model.shots, cfg.seed)
    };
    let shot_pairs: Vec<(String, String)> = shots.iter().map(|s| (s.code.clone(), s.reference.clone())).collect();

    let mut echo = EchoClient::new();
    let mut requests = Vec::new();
    let mut targets = Vec::new();
    let mut failures = Vec::new();
    for &variant in &manifest.variants {
        for ex in load_variant(&layout, variant)? {
            match build_prompt(&ex, &shot_pairs) {
                Ok(p) => {
                    let prompt = p.render();
                    echo.register(prompt.clone(), ex.reference.clone());
                    requests.push(GenRequest { model: model.clone(), prompt, params: cfg.model.decoding });
                    targets.push((variant, ex));
                }
                Err(e) => failures.push(json!({"id": ex.id, "variant": variant, "error": e.to_string()})),
            }
        }
    }

    let (client, client_label): (Box<dyn ChatClient>, String) = match (cfg.model.mock, &cfg.model.endpoint) {
        (Some(Mock::Echo), _) => (Box::new(echo), "mock:echo".into()),
        (None, Some(url)) => {
            let key = cfg.api_key();
            if key.is_none() {
                log::warn!("{} is not set; sending requests without credentials", cfg.model.api_key_env);
            }
            (Box::new(HttpChatClient::new(url, key, cfg.model.timeout)), url.clone())
        }
        (None, None) => bail!("no endpoint configured: set model.endpoint or pass --endpoint (or --mock echo)"),
    };

    let cache = ResponseCache::open(layout.cache())?;
    let responses = generate_batch(&requests, client.as_ref(), &cache, &RetryPolicy::default(), cfg.jobs);
    let mut fresh = Vec::new();
    let mut hits = 0;
    for ((variant, ex), resp) in targets.into_iter().zip(responses) {
        match resp {
            Ok(r) => {
                hits += usize::from(r.from_cache);
                fresh.push(RunRecord {
                    example_id: ex.id,
                    variant,
                    model_id: model.clone(),
                    reference: ex.reference,
                    generated: r.text,
                    metrics: None,
                });
            }
            Err(e) => failures.push(json!({"id": ex.id, "variant": variant, "error": e.to_string()})),
        }
    }
    log::info!("{} generations ({hits} from cache), {} failures", fresh.len(), failures.len());

    let mut merged: Vec<RunRecord> = if layout.run().exists() {
        load_run(&layout.run())?
            .into_iter()
            .filter(|r| !(r.model_id == model && manifest.variants.contains(&r.variant)))
            .collect()
    } else {
        Vec::new()
    };
    let records = fresh.len();
    merged.extend(fresh);
    merged.sort_by_key(RunRecord::key);
    save_run(&merged, &layout.run())?;
    write_lines(&layout.generate_errors(), &failures)?;

    let mut meta: serde_json::Map<String, serde_json::Value> =
        if layout.run_meta().exists() { read_json(&layout.run_meta())? } else { serde_json::Map::new() };
    meta.insert(
        model.clone(),
        serde_json::to_value(ModelMeta {
            seed: cfg.seed,
            client: client_label,
            decoding: cfg.model.decoding,
            shots: shots.iter().map(|s| s.id.clone()).collect(),
            variants: manifest.variants.clone(),
            records,
            errors: failures.len(),
        })?,
    );
    meta.sort_keys();
    write_json(&layout.run_meta(), &meta)?;
    Ok(StageOutcome { records, errors: failures.len(), tolerated: cfg.max_errors })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreMeta {
    pub tokenizer: String,
    pub tokenizer_id: String,
    pub embedding: EmbeddingSpec,
    pub lowercase_bleu: bool,
}

fn scorer(tokenizer: Tokenizer, embedding: &EmbeddingSpec, lowercase_bleu: bool, cfg: &RunConfig) -> Result<Scorer> {
    let mut s = Scorer::new(tokenizer, embedding.provider(cfg.api_key())?);
    s.lowercase_bleu = lowercase_bleu;
    Ok(s)
}

/// Attaches BLEU, BERTScore, copy rates and attribution to every run record.
pub fn cmd_score(cfg: &RunConfig) -> Result<StageOutcome> {
    let layout = Layout::new(&cfg.out);
    require(&layout.run(), "generate")?;
    let tokenizer = cfg.tokenizer()?;
    let manifest = read_manifest(&layout)?;
    let run = load_run(&layout.run())?;

    let mut code: HashMap<Variant, HashMap<String, String>> = HashMap::new();
    for &v in &manifest.variants {
        code.insert(v, load_variant(&layout, v)?.into_iter().map(|e| (e.id, e.code)).collect());
    }
    let meta = ScoreMeta {
        tokenizer: cfg.tokenizer.clone(),
        tokenizer_id: tokenizer.id().to_string(),
        embedding: cfg.embedding.clone(),
        lowercase_bleu: cfg.lowercase_bleu,
    };
    let scorer = scorer(tokenizer, &cfg.embedding, cfg.lowercase_bleu, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    let results = pool.install(|| {
        scorer.score_records(&run, |r| code.get(&r.variant)?.get(&r.example_id).map(String::as_str))
    });

    let mut scored = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in run.iter().zip(results) {
        match res {
            Ok(s) => scored.push(s),
            Err(e) => failures.push(json!({"key": r.key().to_string(), "error": e.to_string()})),
        }
    }
    save_run(&scored, &layout.scored())?;
    write_lines(&layout.score_errors(), &failures)?;
    write_json(&layout.score_meta(), &meta)?;
    Ok(StageOutcome { records: scored.len(), errors: failures.len(), tolerated: Some(cfg.max_errors.unwrap_or(0)) })
}

/// Writes the report tables and figures for the scored run.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<StageOutcome> {
    let layout = Layout::new(&cfg.out);
    require(&layout.scored(), "score")?;
    require(&layout.score_meta(), "score")?;
    let meta: ScoreMeta = read_json(&layout.score_meta())?;
    let records = load_run(&layout.scored())?;
    let tokenizer = Tokenizer::from_spec(&meta.tokenizer)
        .with_context(|| format!("reloading tokenizer {} used for scoring", meta.tokenizer))?;
    if tokenizer.id() != meta.tokenizer_id {
        bail!("tokenizer {} no longer matches the one used for scoring ({})", meta.tokenizer, meta.tokenizer_id);
    }
    let scorer = scorer(tokenizer, &meta.embedding, meta.lowercase_bleu, cfg)?;
    let written = analysis::emit_report(&records, &scorer, cfg.seed, &layout.report())?;
    log::info!("wrote {} report files to {}", written.len(), layout.report().display());
    Ok(StageOutcome { records: records.len(), errors: 0, tolerated: Some(0) })
}
