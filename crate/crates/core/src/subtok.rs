//! Subword tokenization: byte-pair-encoding merges loaded from a vocabulary
//! file, and a vocabulary-free splitter for identifiers and prose.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ordered subword strings of one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubwordSeq(Vec<String>);

impl SubwordSeq {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn extend(&mut self, other: SubwordSeq) {
        self.0.extend(other.0);
    }
}

impl From<Vec<String>> for SubwordSeq {
    fn from(v: Vec<String>) -> Self {
        SubwordSeq(v)
    }
}

impl FromIterator<String> for SubwordSeq {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        SubwordSeq(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a SubwordSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("failed to read vocabulary {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed vocabulary file: {0}")]
    Malformed(String),
    #[error("merge #{rank} `{merge}` is not two space-separated symbols")]
    BadMerge { rank: usize, merge: String },
    #[error("merge #{rank} produces `{symbol}`, which is missing from the vocabulary")]
    MissingSymbol { rank: usize, symbol: String },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VocabList {
    List(Vec<String>),
    Ids(HashMap<String, u64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    merges: Vec<String>,
    vocab: VocabList,
    #[serde(default)]
    word_prefix: Option<String>,
}

/// BPE merge table plus vocabulary.
///
/// On disk this is a JSON object with `merges` (array of `"a b"` strings,
/// rank = index), `vocab` (array of subwords, or an object keyed by
/// subword) and an optional `word_prefix` marker prepended to every
/// whitespace-delimited word before merging (e.g. `"▁"`).
#[derive(Debug, Clone)]
pub struct SubwordVocab {
    merges: Vec<(String, String)>,
    ranks: HashMap<String, usize>,
    vocabulary: HashSet<String>,
    word_prefix: Option<String>,
}

fn pair_key(a: &str, b: &str) -> String {
    let mut k = String::with_capacity(a.len() + b.len() + 1);
    k.push_str(a);
    k.push(' ');
    k.push_str(b);
    k
}

impl SubwordVocab {
    pub fn new(
        merges: Vec<(String, String)>,
        vocabulary: HashSet<String>,
        word_prefix: Option<String>,
    ) -> Result<Self, VocabError> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (a, b)) in merges.iter().enumerate() {
            let symbol = format!("{a}{b}");
            if !vocabulary.contains(&symbol) {
                return Err(VocabError::MissingSymbol { rank, symbol });
            }
            ranks.entry(pair_key(a, b)).or_insert(rank);
        }
        Ok(SubwordVocab { merges, ranks, vocabulary, word_prefix })
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let file: VocabFile = serde_json::from_str(text).map_err(|e| VocabError::Malformed(e.to_string()))?;
        let merges = file
            .merges
            .into_iter()
            .enumerate()
            .map(|(rank, m)| {
                let mut parts = m.split(' ');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
                    _ => Err(VocabError::BadMerge { rank, merge: m }),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let vocabulary = match file.vocab {
            VocabList::List(v) => v.into_iter().collect(),
            VocabList::Ids(m) => m.into_keys().collect(),
        };
        if file.word_prefix.as_deref() == Some("") {
            return Err(VocabError::Malformed("word_prefix must not be empty".into()));
        }
        SubwordVocab::new(merges, vocabulary, file.word_prefix)
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| VocabError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.vocabulary.contains(symbol)
    }

    pub fn word_prefix(&self) -> Option<&str> {
        self.word_prefix.as_deref()
    }

    fn rank(&self, a: &str, b: &str) -> Option<usize> {
        self.ranks.get(&pair_key(a, b)).copied()
    }

    fn encode_word(&self, word: &str, out: &mut Vec<String>) {
        let mut symbols: Vec<String> = self.word_prefix.iter().cloned().collect();
        symbols.extend(word.chars().map(String::from));
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.rank(&w[0], &w[1]).map(|r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == a && &symbols[i + 1] == b {
                    merged.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        out.extend(symbols);
    }

    /// Applies merges lowest rank first, independently for each
    /// whitespace-delimited word. Characters no merge covers stay single
    /// symbols.
    pub fn encode(&self, text: &str) -> SubwordSeq {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            self.encode_word(word, &mut out);
        }
        SubwordSeq(out)
    }

    /// Concatenates subwords with word markers removed.
    pub fn detokenize(&self, seq: &SubwordSeq) -> String {
        match &self.word_prefix {
            Some(p) => seq.iter().map(|s| s.replace(p.as_str(), "")).collect(),
            None => seq.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Lower,
    Upper,
    Digit,
    Underscore,
    Other,
}

fn class_of(c: char) -> CharClass {
    if c == '_' {
        CharClass::Underscore
    } else if c.is_uppercase() {
        CharClass::Upper
    } else if c.is_alphabetic() {
        CharClass::Lower
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Other
    }
}

fn is_letter(c: CharClass) -> bool {
    matches!(c, CharClass::Lower | CharClass::Upper)
}

/// Vocabulary-free splitter approximating what subword tokenizers do to
/// code identifiers.
///
/// Splits on whitespace, then around `_` and other punctuation (each kept as
/// its own token), at lower-to-upper camelCase transitions and at
/// letter/digit transitions. Every piece is lowercased.
pub fn fallback_split(text: &str) -> SubwordSeq {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut piece = String::new();
        let mut prev: Option<CharClass> = None;
        for c in word.chars() {
            let class = class_of(c);
            let boundary = match (prev, class) {
                (None, _) => false,
                (_, CharClass::Underscore | CharClass::Other) => true,
                (Some(CharClass::Underscore | CharClass::Other), _) => true,
                (Some(CharClass::Lower), CharClass::Upper) => true,
                (Some(p), c) => (is_letter(p) && c == CharClass::Digit) || (p == CharClass::Digit && is_letter(c)),
            };
            if boundary && !piece.is_empty() {
                out.push(std::mem::take(&mut piece));
            }
            piece.extend(c.to_lowercase());
            prev = Some(class);
        }
        if !piece.is_empty() {
            out.push(piece);
        }
    }
    SubwordSeq(out)
}

/// Subword tokenizer used by the overlap metrics.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Fallback,
    Bpe { vocab: SubwordVocab, label: String },
}

impl Tokenizer {
    /// `"fallback"` or a path to a vocabulary file.
    pub fn from_spec(spec: &str) -> Result<Self, VocabError> {
        if spec == "fallback" {
            return Ok(Tokenizer::Fallback);
        }
        let path = Path::new(spec);
        let vocab = SubwordVocab::load(path)?;
        let name = path.file_name().map_or_else(|| spec.to_string(), |n| n.to_string_lossy().into_owned());
        Ok(Tokenizer::Bpe { vocab, label: format!("bpe:{name}") })
    }

    pub fn id(&self) -> &str {
        match self {
            Tokenizer::Fallback => "fallback",
            Tokenizer::Bpe { label, .. } => label,
        }
    }

    pub fn encode(&self, text: &str) -> SubwordSeq {
        match self {
            Tokenizer::Fallback => fallback_split(text),
            Tokenizer::Bpe { vocab, .. } => vocab.encode(text),
        }
    }
}

impl fmt::Display for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}
