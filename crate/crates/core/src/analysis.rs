//! Aggregate analyses over scored run records and the report writer.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_atomic, EvalRecord, RunIoError, RunRecord};
use crate::metrics::{self, MetricError, PCopy};
use crate::pylex::{Category, Role, RoleToken};
use crate::scoring::{ScoreError, Scorer};
use crate::subtok::{SubwordSeq, Tokenizer};
use crate::transform::Variant;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least two records, got {0}")]
    TooFewRecords(usize),
    #[error("record {0} has not been scored")]
    Unscored(String),
    #[error("empty score population")]
    EmptyPopulation,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] RunIoError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

pub const BUCKET_LABELS: [&str; 11] = [
    "=0", "(0,10]", "(10,20]", "(20,30]", "(30,40]", "(40,50]", "(50,60]", "(60,70]", "(70,80]", "(80,90]",
    "(90,100]",
];

/// Bucket of a copy rate `matched / total`: 0 for an exact zero, otherwise
/// the decile `k` with `(k-1)*10% < rate <= k*10%`. Integer arithmetic keeps
/// the edges exact.
pub fn bucket_index(matched: usize, total: usize) -> usize {
    assert!(total > 0 && matched <= total, "invalid copy counts {matched}/{total}");
    if matched == 0 {
        0
    } else {
        (10 * matched).div_ceil(total)
    }
}

pub fn bucket_label(p: &PCopy) -> &'static str {
    BUCKET_LABELS[bucket_index(p.matched, p.total)]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub label: &'static str,
    pub members: Vec<String>,
}

/// Partitions `(record id, reference copy rate)` pairs into the 11 buckets,
/// returned in label order (empty buckets included).
pub fn bucketize<'a>(items: impl IntoIterator<Item = (&'a str, &'a PCopy)>) -> Vec<Bucket> {
    let mut buckets: Vec<Bucket> = BUCKET_LABELS.iter().map(|&label| Bucket { label, members: Vec::new() }).collect();
    for (id, p) in items {
        buckets[bucket_index(p.matched, p.total)].members.push(id.to_string());
    }
    buckets
}

/// [`bucketize`] over scored run records.
pub fn bucketize_records(records: &[RunRecord]) -> Result<Vec<Bucket>, AnalysisError> {
    let items = records
        .iter()
        .map(|r| {
            r.metrics
                .as_ref()
                .map(|m| (r.example_id.as_str(), &m.p_copy_reference))
                .ok_or_else(|| AnalysisError::Unscored(r.example_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(bucketize(items))
}

/// Token classes for copy attribution, declared in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttributionCategory {
    FunctionName,
    Identifier,
    Comment,
    String,
    Keyword,
    Number,
    OperatorDelimiter,
}

impl AttributionCategory {
    pub const ALL: [AttributionCategory; 7] = [
        AttributionCategory::FunctionName,
        AttributionCategory::Identifier,
        AttributionCategory::Comment,
        AttributionCategory::String,
        AttributionCategory::Keyword,
        AttributionCategory::Number,
        AttributionCategory::OperatorDelimiter,
    ];

    pub fn of(token: &RoleToken) -> Option<Self> {
        if token.role == Role::FunctionName {
            return Some(AttributionCategory::FunctionName);
        }
        match token.base.category {
            Category::Identifier => Some(AttributionCategory::Identifier),
            Category::Keyword => Some(AttributionCategory::Keyword),
            Category::Comment => Some(AttributionCategory::Comment),
            Category::String => Some(AttributionCategory::String),
            Category::Number => Some(AttributionCategory::Number),
            Category::Operator | Category::Delimiter => Some(AttributionCategory::OperatorDelimiter),
            Category::Newline | Category::Whitespace => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttributionCategory::FunctionName => "function_name",
            AttributionCategory::Identifier => "identifier",
            AttributionCategory::Comment => "comment",
            AttributionCategory::String => "string",
            AttributionCategory::Keyword => "keyword",
            AttributionCategory::Number => "number",
            AttributionCategory::OperatorDelimiter => "operator_delimiter",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub function_name: usize,
    pub identifier: usize,
    pub comment: usize,
    pub string: usize,
    pub keyword: usize,
    pub number: usize,
    pub operator_delimiter: usize,
}

impl CategoryCounts {
    fn slot(&mut self, c: AttributionCategory) -> &mut usize {
        match c {
            AttributionCategory::FunctionName => &mut self.function_name,
            AttributionCategory::Identifier => &mut self.identifier,
            AttributionCategory::Comment => &mut self.comment,
            AttributionCategory::String => &mut self.string,
            AttributionCategory::Keyword => &mut self.keyword,
            AttributionCategory::Number => &mut self.number,
            AttributionCategory::OperatorDelimiter => &mut self.operator_delimiter,
        }
    }

    pub fn get(&self, c: AttributionCategory) -> usize {
        let mut copy = *self;
        *copy.slot(c)
    }

    pub fn add(&mut self, c: AttributionCategory, n: usize) {
        *self.slot(c) += n;
    }

    pub fn total(&self) -> usize {
        AttributionCategory::ALL.iter().map(|&c| self.get(c)).sum()
    }

    pub fn merge(&mut self, other: &CategoryCounts) {
        for c in AttributionCategory::ALL {
            self.add(c, other.get(c));
        }
    }
}

/// Per-category subword counts for the code itself, for description
/// subwords copied into the reference, and for those copied into the
/// generated summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyAttribution {
    pub code: CategoryCounts,
    pub reference: CategoryCounts,
    pub generated: CategoryCounts,
}

/// Code subwords, encoded token by token so that each subword keeps the
/// category of the lexical token it came from.
#[derive(Debug, Clone, Default)]
pub struct CodeSubwords {
    seq: SubwordSeq,
    categories: Vec<AttributionCategory>,
}

impl CodeSubwords {
    pub fn from_roles(roles: &[RoleToken], tokenizer: &Tokenizer) -> Self {
        let mut seq = Vec::new();
        let mut categories = Vec::new();
        for t in roles {
            let Some(cat) = AttributionCategory::of(t) else { continue };
            for sw in tokenizer.encode(&t.base.lexeme).into_inner() {
                seq.push(sw);
                categories.push(cat);
            }
        }
        CodeSubwords { seq: seq.into(), categories }
    }

    pub fn seq(&self) -> &SubwordSeq {
        &self.seq
    }

    fn best_sources(&self) -> HashMap<&str, AttributionCategory> {
        let mut best: HashMap<&str, AttributionCategory> = HashMap::new();
        for (sw, &cat) in self.seq.iter().zip(&self.categories) {
            best.entry(sw.as_str()).and_modify(|c| *c = (*c).min(cat)).or_insert(cat);
        }
        best
    }
}

fn count_copies(best: &HashMap<&str, AttributionCategory>, desc: &SubwordSeq) -> CategoryCounts {
    let mut counts = CategoryCounts::default();
    for sw in desc {
        if let Some(&c) = best.get(sw.as_str()) {
            counts.add(c, 1);
        }
    }
    counts
}

/// Attributes every description subword found in the code to the
/// highest-priority category among the code tokens that produced it.
pub fn attribute_copies(code: &CodeSubwords, reference: &SubwordSeq, generated: Option<&SubwordSeq>) -> CopyAttribution {
    let mut code_counts = CategoryCounts::default();
    for &c in &code.categories {
        code_counts.add(c, 1);
    }
    let best = code.best_sources();
    CopyAttribution {
        code: code_counts,
        reference: count_copies(&best, reference),
        generated: generated.map(|g| count_copies(&best, g)).unwrap_or_default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    RefVsOwnGen,
    RefVsRandomGen,
    RefVsRef,
    GenVsGen,
}

impl Pairing {
    pub const ALL: [Pairing; 4] = [Pairing::RefVsOwnGen, Pairing::RefVsRandomGen, Pairing::RefVsRef, Pairing::GenVsGen];

    pub fn as_str(self) -> &'static str {
        match self {
            Pairing::RefVsOwnGen => "ref-vs-own-gen",
            Pairing::RefVsRandomGen => "ref-vs-random-gen",
            Pairing::RefVsRef => "ref-vs-ref",
            Pairing::GenVsGen => "gen-vs-gen",
        }
    }
}

/// Uniformly random permutation of `0..n` without fixed points, by
/// rejection sampling seeded shuffles.
pub fn derangement(n: usize, seed: u64) -> Result<Vec<usize>, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::TooFewRecords(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// One text pair per record as `(candidate, reference)` for `pairing`.
pub fn pair_texts<'a>(
    items: &[(&'a str, &'a str)],
    pairing: Pairing,
    seed: u64,
) -> Result<Vec<(&'a str, &'a str)>, AnalysisError> {
    if items.len() < 2 {
        return Err(AnalysisError::TooFewRecords(items.len()));
    }
    if pairing == Pairing::RefVsOwnGen {
        return Ok(items.iter().map(|&(r, g)| (g, r)).collect());
    }
    let perm = derangement(items.len(), seed)?;
    Ok(items
        .iter()
        .zip(&perm)
        .map(|(&(r, g), &j)| match pairing {
            Pairing::RefVsRandomGen => (items[j].1, r),
            Pairing::RefVsRef => (items[j].0, r),
            Pairing::GenVsGen => (items[j].1, g),
            Pairing::RefVsOwnGen => unreachable!(),
        })
        .collect())
}

/// Scores `(reference, generated)` items under `pairing` and summarizes the
/// resulting population.
pub fn paired_vs_random<E>(
    items: &[(&str, &str)],
    pairing: Pairing,
    seed: u64,
    score: impl Fn(&str, &str) -> Result<f64, E>,
) -> Result<DistSummary, AnalysisError>
where
    AnalysisError: From<E>,
{
    let scores = pair_texts(items, pairing, seed)?
        .into_iter()
        .map(|(c, r)| score(c, r))
        .collect::<Result<Vec<_>, E>>()?;
    summarize(&scores, HISTOGRAM_BIN_WIDTH)
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
    pub bin_width: f64,
    /// Counts over `[0, 100]` in steps of `bin_width`; the last bin is
    /// closed and out-of-range values go to the nearest end bin.
    pub bins: Vec<usize>,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile(&sorted, 0.5))
}

pub fn summarize(values: &[f64], bin_width: f64) -> Result<DistSummary, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyPopulation);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nbins = (100.0 / bin_width).ceil() as usize;
    let mut bins = vec![0; nbins];
    for &v in values {
        let i = ((v / bin_width).floor().max(0.0) as usize).min(nbins - 1);
        bins[i] += 1;
    }
    Ok(DistSummary {
        count: values.len(),
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        bin_width,
        bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Bleu,
    BertScoreF1,
    PCopyReference,
    PCopyGenerated,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Bleu => "bleu",
            MetricKind::BertScoreF1 => "bertscore_f1",
            MetricKind::PCopyReference => "p_copy_reference",
            MetricKind::PCopyGenerated => "p_copy_generated",
        }
    }

    /// The record's value for this metric; a missing generated copy rate
    /// counts as 0.
    pub fn value(self, m: &EvalRecord) -> f64 {
        match self {
            MetricKind::Bleu => m.bleu.value,
            MetricKind::BertScoreF1 => m.bertscore.f1,
            MetricKind::PCopyReference => m.p_copy_reference.value,
            MetricKind::PCopyGenerated => m.p_copy_generated.as_ref().map_or(0.0, |p| p.value),
        }
    }
}

fn scored(records: &[RunRecord]) -> Result<Vec<&EvalRecord>, AnalysisError> {
    records
        .iter()
        .map(|r| r.metrics.as_ref().ok_or_else(|| AnalysisError::Unscored(r.example_id.clone())))
        .collect()
}

/// Pearson and Spearman coefficients between two per-record metrics.
pub fn correlate(records: &[RunRecord], a: MetricKind, b: MetricKind) -> Result<(f64, f64), AnalysisError> {
    correlate_scored(&scored(records)?, a, b)
}

fn correlate_scored(m: &[&EvalRecord], a: MetricKind, b: MetricKind) -> Result<(f64, f64), AnalysisError> {
    if m.len() < 2 {
        return Err(AnalysisError::TooFewRecords(m.len()));
    }
    let xs: Vec<f64> = m.iter().map(|e| a.value(e)).collect();
    let ys: Vec<f64> = m.iter().map(|e| b.value(e)).collect();
    Ok((metrics::pearson(&xs, &ys)?, metrics::spearman(&xs, &ys)?))
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

type GroupKey = (Variant, String);

fn group(records: &[RunRecord]) -> BTreeMap<GroupKey, Vec<&RunRecord>> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.variant, r.model_id.clone())).or_default().push(r);
    }
    for recs in groups.values_mut() {
        recs.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    }
    groups
}

/// BLEU and BERTScore F1 populations of one group under each pairing.
struct PairScores {
    pairing: Pairing,
    bleu: Vec<f64>,
    bertscore: Vec<f64>,
}

fn pair_scores(recs: &[&RunRecord], scorer: &Scorer, seed: u64) -> Result<Vec<PairScores>, AnalysisError> {
    let texts: Vec<(&str, &str)> = recs.iter().map(|r| (r.reference.as_str(), r.generated.as_str())).collect();
    Pairing::ALL
        .iter()
        .map(|&pairing| {
            let pairs = pair_texts(&texts, pairing, seed)?;
            let bleu = pairs.iter().map(|(c, r)| scorer.bleu(c, r).map(|b| b.value)).collect::<Result<_, _>>()?;
            let bertscore =
                pairs.iter().map(|(c, r)| scorer.bertscore(c, r).map(|b| b.f1)).collect::<Result<_, _>>()?;
            Ok(PairScores { pairing, bleu, bertscore })
        })
        .collect()
}

struct Table {
    name: &'static str,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(name: &'static str, header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("writing to memory");
        Table { name, writer }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, group: &GroupKey, fields: I) {
        let mut record = vec![group.0.to_string(), group.1.clone()];
        record.extend(fields);
        self.writer.write_record(&record).expect("writing to memory");
    }

    fn finish(self) -> Vec<u8> {
        self.writer.into_inner().expect("writing to memory")
    }
}

/// Writes the CSV tables and SVG figures for a scored run into `out_dir`
/// and returns the paths written. Output depends only on the records, the
/// scorer and `seed`.
pub fn emit_report(records: &[RunRecord], scorer: &Scorer, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    scored(records)?;
    let groups = group(records);

    let mut summary = Table::new(
        "summary.csv",
        &[
            "variant",
            "model",
            "n",
            "mean_bleu",
            "median_bleu",
            "mean_bertscore_f1",
            "median_bertscore_f1",
            "mean_p_copy_reference",
            "mean_p_copy_generated",
        ],
    );
    let mut buckets =
        Table::new("buckets.csv", &["variant", "model", "bucket", "count", "mean_bleu", "median_bleu", "zero_bleu_share"]);
    let mut attribution = Table::new("attribution.csv", &["variant", "model", "source", "category", "count"]);
    let mut distributions = Table::new(
        "distributions.csv",
        &["variant", "model", "metric", "pairing", "count", "min", "q1", "median", "mean", "q3", "max"],
    );
    let mut correlations =
        Table::new("correlations.csv", &["variant", "model", "metric_a", "metric_b", "n", "pearson", "spearman"]);
    let mut figures: Vec<(String, String)> = Vec::new();

    for (key, recs) in &groups {
        let (variant, model) = key;
        let m: Vec<&EvalRecord> = recs.iter().map(|r| r.metrics.as_ref().expect("checked above")).collect();
        let col = |k: MetricKind| m.iter().map(|e| k.value(e)).collect::<Vec<_>>();
        let bleu = col(MetricKind::Bleu);
        let bert = col(MetricKind::BertScoreF1);
        summary.row(
            key,
            [
                m.len().to_string(),
                opt(mean(&bleu)),
                opt(median(&bleu)),
                opt(mean(&bert)),
                opt(median(&bert)),
                opt(mean(&col(MetricKind::PCopyReference))),
                opt(mean(&col(MetricKind::PCopyGenerated))),
            ],
        );

        let bleu_of: HashMap<&str, f64> = recs.iter().zip(&bleu).map(|(r, &b)| (r.example_id.as_str(), b)).collect();
        for b in bucketize(recs.iter().zip(&m).map(|(r, e)| (r.example_id.as_str(), &e.p_copy_reference))) {
            let scores: Vec<f64> = b.members.iter().map(|id| bleu_of[id.as_str()]).collect();
            let zero_share = (!scores.is_empty())
                .then(|| scores.iter().filter(|&&s| s == 0.0).count() as f64 / scores.len() as f64);
            buckets.row(
                key,
                [b.label.to_string(), scores.len().to_string(), opt(mean(&scores)), opt(median(&scores)), opt(zero_share)],
            );
        }

        let mut totals = CopyAttribution::default();
        for e in &m {
            totals.code.merge(&e.attribution.code);
            totals.reference.merge(&e.attribution.reference);
            totals.generated.merge(&e.attribution.generated);
        }
        for (source, counts) in [("code", totals.code), ("reference", totals.reference), ("generated", totals.generated)] {
            for c in AttributionCategory::ALL {
                attribution.row(key, [source.to_string(), c.as_str().to_string(), counts.get(c).to_string()]);
            }
        }

        for (a, b) in [
            (MetricKind::Bleu, MetricKind::BertScoreF1),
            (MetricKind::PCopyReference, MetricKind::Bleu),
            (MetricKind::PCopyGenerated, MetricKind::Bleu),
        ] {
            let (p, s) = match correlate_scored(&m, a, b) {
                Ok((p, s)) => (fmt_f(p), fmt_f(s)),
                Err(_) => (String::new(), String::new()),
            };
            correlations.row(key, [a.as_str().to_string(), b.as_str().to_string(), m.len().to_string(), p, s]);
        }

        let stem = format!("{}_{}", variant, sanitize(model));
        figures.push((format!("p_copy_{stem}.svg"), p_copy_histogram(&format!("p_copy, {variant} / {model}"), &m)));

        if recs.len() < 2 {
            log::info!("skipping pairwise distributions for {variant}/{model}: fewer than two records");
            continue;
        }
        let pairs = pair_scores(recs, scorer, seed)?;
        for p in &pairs {
            for (metric, scores) in [("bleu", &p.bleu), ("bertscore_f1", &p.bertscore)] {
                let d = summarize(scores, HISTOGRAM_BIN_WIDTH)?;
                distributions.row(
                    key,
                    [
                        metric.to_string(),
                        p.pairing.as_str().to_string(),
                        d.count.to_string(),
                        fmt_f(d.min),
                        fmt_f(d.q1),
                        fmt_f(d.median),
                        fmt_f(d.mean),
                        fmt_f(d.q3),
                        fmt_f(d.max),
                    ],
                );
            }
        }
        let shown = [Pairing::RefVsOwnGen, Pairing::RefVsRandomGen];
        for (metric, title) in [("bleu", "BLEU-4"), ("bertscore_f1", "BERTScore F1")] {
            let mut series = Vec::new();
            for p in pairs.iter().filter(|p| shown.contains(&p.pairing)) {
                let scores = if metric == "bleu" { &p.bleu } else { &p.bertscore };
                series.push((p.pairing.as_str(), summarize(scores, HISTOGRAM_BIN_WIDTH)?.bins));
            }
            let labels: Vec<String> =
                (0..series[0].1.len()).map(|i| format!("{}", i as f64 * HISTOGRAM_BIN_WIDTH)).collect();
            figures.push((
                format!("{metric}_pairs_{stem}.svg"),
                svg_bars(&format!("{title}: corresponding vs random, {variant} / {model}"), &labels, &series),
            ));
        }
    }

    let mut written = Vec::new();
    let mut write = |name: &str, body: &[u8]| -> Result<(), AnalysisError> {
        let path = out_dir.join(name);
        write_atomic(&path, body)?;
        written.push(path);
        Ok(())
    };
    for table in [summary, buckets, attribution, distributions, correlations] {
        let name = table.name;
        write(name, &table.finish())?;
    }
    for (name, svg) in &figures {
        write(name, svg.as_bytes())?;
    }
    Ok(written)
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn p_copy_histogram(title: &str, m: &[&EvalRecord]) -> String {
    let mut reference = vec![0usize; BUCKET_LABELS.len()];
    let mut generated = vec![0usize; BUCKET_LABELS.len()];
    for e in m {
        reference[bucket_index(e.p_copy_reference.matched, e.p_copy_reference.total)] += 1;
        if let Some(p) = &e.p_copy_generated {
            generated[bucket_index(p.matched, p.total)] += 1;
        }
    }
    let labels: Vec<String> = BUCKET_LABELS.iter().map(|s| s.to_string()).collect();
    svg_bars(title, &labels, &[("reference", reference), ("generated", generated)])
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

/// Grouped bar chart as a self-contained SVG document.
fn svg_bars(title: &str, labels: &[String], series: &[(&str, Vec<usize>)]) -> String {
    let (width, height, margin) = (720.0, 360.0, 48.0);
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let max = series.iter().flat_map(|(_, v)| v.iter().copied()).max().unwrap_or(0).max(1) as f64;
    let group_w = plot_w / labels.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, width / 2.0, xml_escape(title));
    let _ = writeln!(
        svg,
        r#"<line x1="{margin}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = height - margin,
        x2 = width - margin
    );
    for (s, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        for (i, &v) in values.iter().enumerate() {
            let h = plot_h * v as f64 / max;
            let x = margin + i as f64 * group_w + group_w * 0.1 + s as f64 * bar_w;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{color}"><title>{}: {v}</title></rect>"#,
                height - margin - h,
                xml_escape(name)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            width - margin - 120.0,
            30.0 + 14.0 * s as f64,
            width - margin - 106.0,
            39.0 + 14.0 * s as f64,
            xml_escape(name)
        );
    }
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            margin + (i as f64 + 0.5) * group_w,
            height - margin + 14.0,
            xml_escape(label)
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, margin - 4.0, margin + 4.0, max as usize);
    svg.push_str("</svg>\n");
    svg
}
