//! Semantics-hiding rewrites of a Python function, applied to token streams.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Example;
use crate::pylex::{self, classify_roles, Category, LexError, Role, SignatureError, TokenStream};

/// How the code of an example is presented to a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Unmodified code.
    Original,
    /// Function name letters shifted by one (`a`→`b`, `z`→`a`).
    ObfuscatedNames,
    /// Function name replaced by the name of another function.
    AdversarialNames,
    /// Keywords, operators and delimiters removed.
    NoCodeStructure,
    /// Only the `def` header kept.
    NoFunctionBody,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Original,
        Variant::ObfuscatedNames,
        Variant::AdversarialNames,
        Variant::NoCodeStructure,
        Variant::NoFunctionBody,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::ObfuscatedNames => "obfuscated_names",
            Variant::AdversarialNames => "adversarial_names",
            Variant::NoCodeStructure => "no_code_structure",
            Variant::NoFunctionBody => "no_function_body",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.as_str()).collect();
                format!("unknown variant `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("snippet contains no function definition")]
    NoFunction,
    #[error("function header starting at byte {offset} is not closed by `:`")]
    IncompleteSignature { offset: usize },
    #[error("`{0}` is not a valid Python identifier")]
    InvalidDonor(String),
    #[error("donor name `{0}` already occurs in the snippet")]
    DonorCollision(String),
    #[error("the adversarial variant needs a donor name")]
    MissingDonor,
    #[error("no donor name available for `{0}`")]
    NoDonorAvailable(String),
    #[error("shifted name `{0}` is a keyword or already occurs in the snippet")]
    ShiftCollision(String),
}

impl From<SignatureError> for TransformError {
    fn from(e: SignatureError) -> Self {
        match e {
            SignatureError::NoFunction => TransformError::NoFunction,
            SignatureError::IncompleteSignature { offset } => TransformError::IncompleteSignature { offset },
        }
    }
}

fn is_plain_whitespace(lexeme: &str) -> bool {
    !lexeme.contains('\\')
}

/// Removes comments together with the whitespace before them. A comment
/// alone on its line also takes that line's newline with it.
pub fn strip_comments(tokens: &TokenStream) -> TokenStream {
    let toks = tokens.tokens();
    let mut out: Vec<(String, Category)> = Vec::with_capacity(toks.len());
    let mut i = 0;
    while i < toks.len() {
        let t = &toks[i];
        if t.category != Category::Comment {
            out.push((t.lexeme.clone(), t.category));
            i += 1;
            continue;
        }
        while out.last().is_some_and(|(l, c)| *c == Category::Whitespace && is_plain_whitespace(l)) {
            out.pop();
        }
        let whole_line = out.last().is_none_or(|(_, c)| *c == Category::Newline);
        i += 1;
        if whole_line {
            if toks.get(i).is_some_and(|n| n.category == Category::Newline) {
                i += 1;
            } else if out.last().is_some_and(|(_, c)| *c == Category::Newline) {
                out.pop();
            }
        }
    }
    TokenStream::from_parts(out)
}

fn shift_char(c: char) -> char {
    match c {
        'z' => 'a',
        'Z' => 'A',
        'a'..='y' | 'A'..='Y' => (c as u8 + 1) as char,
        _ => c,
    }
}

fn unshift_char(c: char) -> char {
    match c {
        'a' => 'z',
        'A' => 'Z',
        'b'..='z' | 'B'..='Z' => (c as u8 - 1) as char,
        _ => c,
    }
}

/// Replaces every ASCII letter by its successor, wrapping `z` to `a`; case,
/// digits, `_` and non-ASCII characters are kept.
pub fn shift_name(name: &str) -> String {
    name.chars().map(shift_char).collect()
}

/// Inverse of [`shift_name`].
pub fn unshift_name(name: &str) -> String {
    name.chars().map(unshift_char).collect()
}

fn rename_function(tokens: &TokenStream, rename: impl Fn(&str) -> String) -> Result<TokenStream, TransformError> {
    let roles = classify_roles(tokens);
    if !roles.iter().any(|r| r.role == Role::FunctionName) {
        return Err(TransformError::NoFunction);
    }
    Ok(TokenStream::from_parts(roles.into_iter().map(|r| {
        if r.role == Role::FunctionName {
            (rename(&r.base.lexeme), r.base.category)
        } else {
            (r.base.lexeme, r.base.category)
        }
    })))
}

/// Shifts the letters of the function name at every occurrence.
///
/// Occurrences inside strings and comments are left alone. A shifted name
/// that spells a keyword or another identifier of the snippet could not be
/// shifted back, so it is rejected.
pub fn obfuscate_function_names(tokens: &TokenStream) -> Result<TokenStream, TransformError> {
    let roles = classify_roles(tokens);
    if let Some(name) = roles.iter().find(|r| r.role == Role::FunctionName) {
        let shifted = shift_name(&name.base.lexeme);
        if pylex::is_keyword(&shifted)
            || roles.iter().any(|r| {
                r.role != Role::FunctionName && r.base.category == Category::Identifier && r.base.lexeme == shifted
            })
        {
            return Err(TransformError::ShiftCollision(shifted));
        }
    }
    rename_function(tokens, shift_name)
}

/// Undoes [`obfuscate_function_names`] on its output stream.
pub fn deobfuscate_function_names(tokens: &TokenStream) -> Result<TokenStream, TransformError> {
    rename_function(tokens, unshift_name)
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c == '_' || c.is_alphabetic())
        && chars.all(|c| c == '_' || c.is_alphanumeric())
        && !pylex::is_keyword(name)
}

/// Replaces the function name with `donor` at every occurrence.
pub fn adversarialize(tokens: &TokenStream, donor: &str) -> Result<TokenStream, TransformError> {
    if !is_identifier(donor) {
        return Err(TransformError::InvalidDonor(donor.to_string()));
    }
    let roles = classify_roles(tokens);
    let Some(name) = roles.iter().find(|r| r.role == Role::FunctionName).map(|r| r.base.lexeme.clone()) else {
        return Err(TransformError::NoFunction);
    };
    if name == donor {
        log::info!("donor `{donor}` equals the original function name; snippet unchanged");
        return Ok(tokens.clone());
    }
    if roles.iter().any(|r| r.base.category == Category::Identifier && r.base.lexeme == donor) {
        return Err(TransformError::DonorCollision(donor.to_string()));
    }
    rename_function(tokens, |_| donor.to_string())
}

/// Drops keywords, operators and delimiters.
///
/// Within each line the surviving tokens are joined by single spaces; the
/// line's original indentation is kept when anything survives on it.
pub fn remove_code_structure(tokens: &TokenStream) -> TokenStream {
    let mut out: Vec<(String, Category)> = Vec::new();
    let mut line: Vec<&pylex::LexToken> = Vec::new();
    let flush = |line: &mut Vec<&pylex::LexToken>, out: &mut Vec<(String, Category)>| {
        let kept: Vec<_> = line
            .iter()
            .filter(|t| matches!(t.category, Category::Identifier | Category::Number | Category::String | Category::Comment))
            .collect();
        if !kept.is_empty() {
            if let Some(first) = line.first().filter(|t| t.category == Category::Whitespace && is_plain_whitespace(&t.lexeme)) {
                out.push((first.lexeme.clone(), Category::Whitespace));
            }
            for (i, t) in kept.iter().enumerate() {
                if i > 0 {
                    out.push((" ".to_string(), Category::Whitespace));
                }
                out.push((t.lexeme.clone(), t.category));
            }
        }
        line.clear();
    };
    for t in tokens {
        if t.category == Category::Newline {
            flush(&mut line, &mut out);
            out.push((t.lexeme.clone(), Category::Newline));
        } else {
            line.push(t);
        }
    }
    flush(&mut line, &mut out);
    TokenStream::from_parts(out)
}

/// Keeps only the first function's header, `def` through the closing `:`.
pub fn remove_function_body(tokens: &TokenStream) -> Result<TokenStream, TransformError> {
    let span = pylex::signature_span(tokens)?;
    Ok(TokenStream::from_parts(
        tokens.tokens()[span.first_token..span.last_token].iter().map(|t| (t.lexeme.clone(), t.category)),
    ))
}

/// Rewrites `ex.code` into `variant`. The four transformed variants strip
/// comments first; `Original` returns the example untouched.
pub fn apply_variant(ex: &Example, variant: Variant, donor: Option<&str>) -> Result<Example, TransformError> {
    if variant == Variant::Original {
        return Ok(ex.clone());
    }
    let tokens = strip_comments(&pylex::lex(&ex.code)?);
    let rewritten = match variant {
        Variant::Original => unreachable!(),
        Variant::ObfuscatedNames => obfuscate_function_names(&tokens)?,
        Variant::AdversarialNames => adversarialize(&tokens, donor.ok_or(TransformError::MissingDonor)?)?,
        Variant::NoCodeStructure => remove_code_structure(&tokens),
        Variant::NoFunctionBody => remove_function_body(&tokens)?,
    };
    Ok(Example { code: rewritten.text(), ..ex.clone() })
}

#[derive(Debug, Clone)]
struct DonorEntry {
    id: String,
    name: String,
    identifiers: HashSet<String>,
}

/// Function names of a corpus, built once before donors are drawn.
#[derive(Debug, Clone, Default)]
pub struct DonorIndex {
    entries: Vec<DonorEntry>,
}

impl DonorIndex {
    /// Indexes every lexable example that defines a function.
    pub fn build(examples: &[Example]) -> Self {
        let entries = examples
            .iter()
            .filter_map(|ex| {
                let tokens = strip_comments(&pylex::lex(&ex.code).ok()?);
                let name = pylex::defined_name(&tokens)?.to_string();
                let identifiers = classify_roles(&tokens)
                    .into_iter()
                    .filter(|r| r.base.category == Category::Identifier && r.role != Role::FunctionName)
                    .map(|r| r.base.lexeme)
                    .collect();
                Some(DonorEntry { id: ex.id.clone(), name, identifiers })
            })
            .collect();
        DonorIndex { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    fn target_rng(seed: u64, target_id: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(target_id.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    /// Candidate donor entries for `target`, in seeded draw order, that
    /// neither repeat its name nor collide with its identifiers.
    fn draws(&self, target: usize, seed: u64) -> Vec<usize> {
        let t = &self.entries[target];
        let mut order: Vec<usize> = (0..self.entries.len()).filter(|&i| i != target).collect();
        order.shuffle(&mut Self::target_rng(seed, &t.id));
        order
            .into_iter()
            .filter(|&i| {
                let name = &self.entries[i].name;
                *name != t.name && !t.identifiers.contains(name)
            })
            .collect()
    }

    /// Draws a donor name for one example.
    pub fn pick_donor(&self, target_id: &str, seed: u64) -> Result<String, TransformError> {
        let target = self.position(target_id).ok_or_else(|| TransformError::NoDonorAvailable(target_id.to_string()))?;
        self.draws(target, seed)
            .first()
            .map(|&i| self.entries[i].name.clone())
            .ok_or_else(|| TransformError::NoDonorAvailable(target_id.to_string()))
    }

    /// Assigns donors to every indexed example, using each donor function at
    /// most once while unused donors remain.
    pub fn assign_donors(&self, seed: u64) -> BTreeMap<String, Result<String, TransformError>> {
        let mut used = vec![false; self.entries.len()];
        let mut out = BTreeMap::new();
        for (target, entry) in self.entries.iter().enumerate() {
            let draws = self.draws(target, seed);
            let pick = draws.iter().copied().find(|&i| !used[i]).or_else(|| {
                let reused = draws.first().copied();
                if reused.is_some() {
                    log::info!("donor pool exhausted for `{}`; reusing a donor", entry.id);
                }
                reused
            });
            let result = match pick {
                Some(i) => {
                    used[i] = true;
                    Ok(self.entries[i].name.clone())
                }
                None => Err(TransformError::NoDonorAvailable(entry.id.clone())),
            };
            out.insert(entry.id.clone(), result);
        }
        out
    }
}
