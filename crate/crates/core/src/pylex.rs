//! Lexer for Python source text.
//!
//! The lexer is lossless: every byte of the input belongs to exactly one
//! token, so concatenating the lexemes of a [`TokenStream`] reproduces the
//! source. It checks lexical well-formedness only (strings and brackets are
//! closed); grammar is never validated, which lets the broken-looking output
//! of the code transformations round-trip through it.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Python 3.10 reserved words.
pub const KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global",
    "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield",
];

// Longest first so that maximal munch works with a linear scan.
const OPERATORS: [&str; 22] = [
    "**", "//", "<<", ">>", "<=", ">=", "==", "!=", ":=", "+", "-", "*", "/", "%", "@", "&",
    "|", "^", "~", "<", ">", "!",
];

const DELIMITERS: [&str; 26] = [
    "**=", "//=", ">>=", "<<=", "...", "->", "+=", "-=", "*=", "/=", "%=", "@=", "&=", "|=",
    "^=", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

/// Lexical category of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Keyword,
    Identifier,
    Operator,
    Delimiter,
    Number,
    String,
    Comment,
    Newline,
    Whitespace,
}

impl Category {
    /// Tokens that carry no content of their own.
    pub fn is_trivia(self) -> bool {
        matches!(self, Category::Newline | Category::Whitespace)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LexToken {
    pub lexeme: String,
    pub category: Category,
    /// Byte offsets `[start, end)` into the text the stream was built from.
    pub span: Range<usize>,
}

impl LexToken {
    pub fn is(&self, category: Category, lexeme: &str) -> bool {
        self.category == category && self.lexeme == lexeme
    }
}

/// Ordered, gap-free sequence of tokens covering a piece of text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    tokens: Vec<LexToken>,
}

impl TokenStream {
    /// Builds a stream from `(lexeme, category)` pairs, assigning contiguous
    /// spans starting at zero.
    pub fn from_parts<I, S>(parts: I) -> Self
    where
        I: IntoIterator<Item = (S, Category)>,
        S: Into<String>,
    {
        let mut offset = 0;
        let tokens = parts
            .into_iter()
            .map(|(lexeme, category)| {
                let lexeme = lexeme.into();
                let start = offset;
                offset += lexeme.len();
                LexToken { lexeme, category, span: start..offset }
            })
            .collect();
        TokenStream { tokens }
    }

    pub fn tokens(&self) -> &[LexToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LexToken> {
        self.tokens.iter()
    }

    /// Concatenation of all lexemes.
    pub fn text(&self) -> String {
        let mut out = String::with_capacity(self.tokens.last().map_or(0, |t| t.span.end));
        for t in &self.tokens {
            out.push_str(&t.lexeme);
        }
        out
    }

    pub fn into_tokens(self) -> Vec<LexToken> {
        self.tokens
    }
}

impl<'a> IntoIterator for &'a TokenStream {
    type Item = &'a LexToken;
    type IntoIter = std::slice::Iter<'a, LexToken>;

    fn into_iter(self) -> Self::IntoIter {
        self.tokens.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated string literal starting at byte {offset}")]
    UnterminatedString { offset: usize },
    #[error("unclosed bracket `{bracket}` at byte {offset}")]
    UnterminatedBracket { offset: usize, bracket: char },
}

impl LexError {
    pub fn offset(&self) -> usize {
        match *self {
            LexError::UnterminatedString { offset } | LexError::UnterminatedBracket { offset, .. } => {
                offset
            }
        }
    }
}

/// Splits `source` into categorized tokens.
pub fn lex(source: &str) -> Result<TokenStream, LexError> {
    Lexer { src: source, pos: 0, tokens: Vec::new(), brackets: Vec::new() }.run()
}

struct Lexer<'s> {
    src: &'s str,
    pos: usize,
    tokens: Vec<LexToken>,
    brackets: Vec<(char, usize)>,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

fn is_string_prefix(word: &str) -> bool {
    matches!(
        word.to_ascii_lowercase().as_str(),
        "r" | "u" | "b" | "f" | "br" | "rb" | "fr" | "rf"
    )
}

impl<'s> Lexer<'s> {
    fn rest(&self) -> &'s str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn push(&mut self, start: usize, category: Category) {
        self.tokens.push(LexToken {
            lexeme: self.src[start..self.pos].to_string(),
            category,
            span: start..self.pos,
        });
    }

    fn run(mut self) -> Result<TokenStream, LexError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                '\r' => {
                    self.pos += 1;
                    if self.peek() == Some('\n') {
                        self.pos += 1;
                    }
                    self.push(start, Category::Newline);
                }
                '\n' => {
                    self.pos += 1;
                    self.push(start, Category::Newline);
                }
                '\\' if matches!(self.peek_at(1), Some('\n') | Some('\r')) => {
                    // explicit line join
                    self.pos += 1;
                    if self.rest().starts_with("\r\n") {
                        self.pos += 2;
                    } else {
                        self.pos += 1;
                    }
                    self.push(start, Category::Whitespace);
                }
                '#' => {
                    let end = self.rest().find(['\n', '\r']).map_or(self.src.len(), |i| self.pos + i);
                    self.pos = end;
                    self.push(start, Category::Comment);
                }
                '\'' | '"' => self.string(start)?,
                c if c.is_whitespace() => {
                    while let Some(c) = self.peek() {
                        if c == '\n' || c == '\r' || !c.is_whitespace() {
                            break;
                        }
                        self.pos += c.len_utf8();
                    }
                    self.push(start, Category::Whitespace);
                }
                c if c.is_ascii_digit() => self.number(start),
                '.' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => self.number(start),
                c if is_ident_start(c) => {
                    while let Some(c) = self.peek() {
                        if !is_ident_continue(c) {
                            break;
                        }
                        self.pos += c.len_utf8();
                    }
                    let word = &self.src[start..self.pos];
                    if matches!(self.peek(), Some('\'') | Some('"')) && is_string_prefix(word) {
                        self.string(start)?;
                    } else if is_keyword(word) {
                        self.push(start, Category::Keyword);
                    } else {
                        self.push(start, Category::Identifier);
                    }
                }
                _ => self.punctuation(start, c),
            }
        }
        if let Some(&(bracket, offset)) = self.brackets.first() {
            return Err(LexError::UnterminatedBracket { offset, bracket });
        }
        Ok(TokenStream { tokens: self.tokens })
    }

    /// Scans a string literal whose optional prefix starts at `start`;
    /// `self.pos` sits on the opening quote.
    fn string(&mut self, start: usize) -> Result<(), LexError> {
        let quote = self.peek().expect("caller checked quote");
        let triple: String = std::iter::repeat_n(quote, 3).collect();
        let is_triple = self.rest().starts_with(&triple);
        self.pos += if is_triple { 3 } else { 1 };
        loop {
            let Some(c) = self.peek() else {
                return Err(LexError::UnterminatedString { offset: start });
            };
            match c {
                '\\' => {
                    self.pos += 1;
                    match self.peek() {
                        Some('\r') if self.rest().starts_with("\r\n") => self.pos += 2,
                        Some(n) => self.pos += n.len_utf8(),
                        None => return Err(LexError::UnterminatedString { offset: start }),
                    }
                }
                '\n' | '\r' if !is_triple => {
                    return Err(LexError::UnterminatedString { offset: start });
                }
                c if c == quote => {
                    if !is_triple {
                        self.pos += 1;
                        break;
                    }
                    if self.rest().starts_with(&triple) {
                        self.pos += 3;
                        break;
                    }
                    self.pos += 1;
                }
                c => self.pos += c.len_utf8(),
            }
        }
        self.push(start, Category::String);
        Ok(())
    }

    fn number(&mut self, start: usize) {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize, ok: fn(u8) -> bool| {
            while *pos < bytes.len() && (ok(bytes[*pos]) || bytes[*pos] == b'_') {
                *pos += 1;
            }
        };
        let mut pos = self.pos;
        let radix_prefixed = bytes[pos] == b'0'
            && pos + 1 < bytes.len()
            && matches!(bytes[pos + 1], b'x' | b'X' | b'o' | b'O' | b'b' | b'B');
        if radix_prefixed {
            pos += 2;
            digits(&mut pos, |b| b.is_ascii_hexdigit());
        } else {
            digits(&mut pos, |b| b.is_ascii_digit());
            if pos < bytes.len() && bytes[pos] == b'.' {
                pos += 1;
                digits(&mut pos, |b| b.is_ascii_digit());
            }
            if pos < bytes.len() && matches!(bytes[pos], b'e' | b'E') {
                let mut exp = pos + 1;
                if exp < bytes.len() && matches!(bytes[exp], b'+' | b'-') {
                    exp += 1;
                }
                if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                    pos = exp;
                    digits(&mut pos, |b| b.is_ascii_digit());
                }
            }
            if pos < bytes.len() && matches!(bytes[pos], b'j' | b'J') {
                pos += 1;
            }
        }
        self.pos = pos;
        self.push(start, Category::Number);
    }

    fn punctuation(&mut self, start: usize, c: char) {
        let rest = self.rest();
        // Delimiters are checked first so that augmented assignments (`**=`)
        // win over their operator prefixes (`**`).
        let (len, category) = if let Some(d) = DELIMITERS.iter().find(|d| rest.starts_with(**d)) {
            let longer_op = OPERATORS.iter().find(|o| rest.starts_with(**o) && o.len() > d.len());
            match longer_op {
                Some(op) => (op.len(), Category::Operator),
                None => (d.len(), Category::Delimiter),
            }
        } else if let Some(op) = OPERATORS.iter().find(|o| rest.starts_with(**o)) {
            (op.len(), Category::Operator)
        } else {
            // Characters Python does not use (`$`, `?`, control bytes, ...).
            (c.len_utf8(), Category::Operator)
        };
        self.pos += len;
        match c {
            '(' | '[' | '{' => self.brackets.push((c, start)),
            ')' | ']' | '}' => {
                self.brackets.pop();
            }
            _ => {}
        }
        self.push(start, category);
    }
}

/// Syntactic role of a token within a single-function snippet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    /// The name of the snippet's (first) function, wherever it occurs after
    /// the definition.
    FunctionName,
    /// Identifier inside the parentheses of the function signature.
    Parameter,
    /// Call of a function that is itself defined inside the snippet (a nested
    /// `def`), e.g. `helper(x)`.
    CalleeOfDefinedName,
    PlainIdentifier,
    /// Identifier immediately after a `.`.
    AttributeName,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleToken {
    pub base: LexToken,
    pub role: Role,
}

/// Byte range of the first function signature: from `def` through the colon
/// that ends the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignatureSpan {
    pub start: usize,
    pub end: usize,
    /// Token indices `[first, last)` covered by the span.
    pub first_token: usize,
    pub last_token: usize,
}

impl SignatureSpan {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("snippet contains no function definition")]
    NoFunction,
    #[error("function header starting at byte {offset} is not closed by `:`")]
    IncompleteSignature { offset: usize },
}

fn next_significant(tokens: &[LexToken], from: usize) -> Option<usize> {
    (from..tokens.len()).find(|&i| {
        !tokens[i].category.is_trivia() && tokens[i].category != Category::Comment
    })
}

fn prev_significant(tokens: &[LexToken], before: usize) -> Option<usize> {
    (0..before).rev().find(|&i| {
        !tokens[i].category.is_trivia() && tokens[i].category != Category::Comment
    })
}

/// Token index of the name following the first `def`, if any.
fn defined_name_index(tokens: &[LexToken]) -> Option<(usize, usize)> {
    let def = tokens.iter().position(|t| t.is(Category::Keyword, "def"))?;
    let name = next_significant(tokens, def + 1)?;
    (tokens[name].category == Category::Identifier).then_some((def, name))
}

/// The name of the snippet's first function.
pub fn defined_name(tokens: &TokenStream) -> Option<&str> {
    defined_name_index(tokens.tokens()).map(|(_, i)| tokens.tokens()[i].lexeme.as_str())
}

pub fn signature_span(tokens: &TokenStream) -> Result<SignatureSpan, SignatureError> {
    let toks = tokens.tokens();
    let def = toks
        .iter()
        .position(|t| t.is(Category::Keyword, "def"))
        .ok_or(SignatureError::NoFunction)?;
    let mut depth = 0usize;
    let mut seen_params = false;
    for (i, t) in toks.iter().enumerate().skip(def + 1) {
        if t.category != Category::Delimiter {
            continue;
        }
        match t.lexeme.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    seen_params = true;
                }
            }
            ":" if depth == 0 && seen_params => {
                return Ok(SignatureSpan {
                    start: toks[def].span.start,
                    end: t.span.end,
                    first_token: def,
                    last_token: i + 1,
                });
            }
            _ => {}
        }
    }
    Err(SignatureError::IncompleteSignature { offset: toks[def].span.start })
}

/// Assigns a [`Role`] to every token.
pub fn classify_roles(tokens: &TokenStream) -> Vec<RoleToken> {
    let toks = tokens.tokens();
    let defined = defined_name_index(toks);
    let function_name = defined.map(|(_, i)| toks[i].lexeme.as_str());
    let params = defined.and_then(|(_, name)| {
        let open = next_significant(toks, name + 1)?;
        if !toks[open].is(Category::Delimiter, "(") {
            return None;
        }
        let mut depth = 0usize;
        for (i, t) in toks.iter().enumerate().skip(open) {
            if t.category == Category::Delimiter {
                match t.lexeme.as_str() {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(open..i);
                        }
                    }
                    _ => {}
                }
            }
        }
        Some(open..toks.len())
    });
    // Names bound by nested `def`s.
    let inner_names: Vec<&str> = toks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is(Category::Keyword, "def"))
        .filter_map(|(i, _)| next_significant(toks, i + 1))
        .filter(|&i| toks[i].category == Category::Identifier)
        .map(|i| toks[i].lexeme.as_str())
        .filter(|name| Some(*name) != function_name)
        .collect();

    toks.iter()
        .enumerate()
        .map(|(i, t)| {
            let role = if t.category != Category::Identifier {
                Role::None
            } else if defined.is_some_and(|(_, name)| i >= name) && Some(t.lexeme.as_str()) == function_name {
                Role::FunctionName
            } else if params.as_ref().is_some_and(|p| p.contains(&i)) {
                Role::Parameter
            } else if prev_significant(toks, i).is_some_and(|p| toks[p].is(Category::Delimiter, ".")) {
                Role::AttributeName
            } else if inner_names.contains(&t.lexeme.as_str())
                && !prev_significant(toks, i).is_some_and(|p| toks[p].is(Category::Keyword, "def"))
                && next_significant(toks, i + 1).is_some_and(|n| toks[n].is(Category::Delimiter, "("))
            {
                Role::CalleeOfDefinedName
            } else {
                Role::PlainIdentifier
            };
            RoleToken { base: t.clone(), role }
        })
        .collect()
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(src: &str) -> Vec<(String, Category)> {
        lex(src).unwrap().iter().map(|t| (t.lexeme.clone(), t.category)).collect()
    }

    fn p(l: &str, c: Category) -> (String, Category) {
        (l.to_string(), c)
    }

    #[test]
    fn simple_function() {
        use Category::*;
        assert_eq!(
            parts("def f(x):\n    return x"),
            vec![
                p("def", Keyword),
                p(" ", Whitespace),
                p("f", Identifier),
                p("(", Delimiter),
                p("x", Identifier),
                p(")", Delimiter),
                p(":", Delimiter),
                p("\n", Newline),
                p("    ", Whitespace),
                p("return", Keyword),
                p(" ", Whitespace),
                p("x", Identifier),
            ]
        );
    }

    #[test]
    fn empty_source() {
        assert!(lex("").unwrap().is_empty());
    }

    #[test]
    fn hash_inside_string_is_not_a_comment() {
        let toks = parts("x = 'a # b'  # c");
        assert!(toks.contains(&p("'a # b'", Category::String)));
        assert_eq!(toks.last().unwrap(), &p("# c", Category::Comment));
        assert_eq!(toks.iter().filter(|t| t.1 == Category::Comment).count(), 1);
    }

    #[test]
    fn prefixed_and_triple_strings() {
        let src = "a = rb'\\'' + f\"{x}\" + '''multi\nline''' + U\"u\"";
        let strings: Vec<_> =
            parts(src).into_iter().filter(|t| t.1 == Category::String).map(|t| t.0).collect();
        assert_eq!(strings, vec!["rb'\\''", "f\"{x}\"", "'''multi\nline'''", "U\"u\""]);
    }

    #[test]
    fn identifier_not_a_prefix_before_quote() {
        let toks = parts("ab'x'");
        assert_eq!(toks, vec![p("ab", Category::Identifier), p("'x'", Category::String)]);
    }

    #[test]
    fn numbers() {
        let nums: Vec<_> = parts("1 0x1F 1_000 3.14 .5 1e-3 2j 0b1 7.")
            .into_iter()
            .filter(|t| t.1 == Category::Number)
            .map(|t| t.0)
            .collect();
        assert_eq!(nums, vec!["1", "0x1F", "1_000", "3.14", ".5", "1e-3", "2j", "0b1", "7."]);
    }

    #[test]
    fn operators_and_delimiters() {
        use Category::*;
        let toks = parts("a**=b->c**d!=e...")
            .into_iter()
            .filter(|t| t.1 != Identifier)
            .collect::<Vec<_>>();
        assert_eq!(
            toks,
            vec![p("**=", Delimiter), p("->", Delimiter), p("**", Operator), p("!=", Operator), p("...", Delimiter)]
        );
    }

    #[test]
    fn word_operators_are_keywords() {
        for w in ["not", "and", "or", "in", "is"] {
            assert_eq!(parts(w), vec![p(w, Category::Keyword)]);
        }
    }

    #[test]
    fn unterminated_string() {
        assert_eq!(lex("x = 'abc\ny'"), Err(LexError::UnterminatedString { offset: 4 }));
        assert_eq!(lex("'''abc"), Err(LexError::UnterminatedString { offset: 0 }));
        assert_eq!(lex("'abc\\"), Err(LexError::UnterminatedString { offset: 0 }));
    }

    #[test]
    fn unterminated_bracket() {
        assert_eq!(lex("f(a, [b]"), Err(LexError::UnterminatedBracket { offset: 1, bracket: '(' }));
    }

    #[test]
    fn stray_closer_is_tolerated() {
        assert!(lex("x)").is_ok());
    }

    #[test]
    fn crlf_and_continuation() {
        use Category::*;
        assert_eq!(
            parts("a\\\r\nb\r\n"),
            vec![p("a", Identifier), p("\\\r\n", Whitespace), p("b", Identifier), p("\r\n", Newline)]
        );
    }

    #[test]
    fn spans_are_contiguous() {
        let src = "def résumé(x):  # ünïcode\n    return 'é'\n";
        let stream = lex(src).unwrap();
        let mut at = 0;
        for t in &stream {
            assert_eq!(t.span.start, at);
            assert_eq!(&src[t.span.clone()], t.lexeme);
            at = t.span.end;
        }
        assert_eq!(at, src.len());
    }

    fn roles(src: &str) -> Vec<(String, Role)> {
        classify_roles(&lex(src).unwrap())
            .into_iter()
            .filter(|r| r.base.category == Category::Identifier)
            .map(|r| (r.base.lexeme, r.role))
            .collect()
    }

    #[test]
    fn roles_recursive_name() {
        assert_eq!(
            roles("def dup(a): return dup"),
            vec![("dup".into(), Role::FunctionName), ("a".into(), Role::Parameter), ("dup".into(), Role::FunctionName)]
        );
    }

    #[test]
    fn roles_plain_call() {
        assert_eq!(roles("def f(): g()")[1], ("g".into(), Role::PlainIdentifier));
    }

    #[test]
    fn roles_attribute_without_def() {
        assert_eq!(
            roles("x.save()"),
            vec![("x".into(), Role::PlainIdentifier), ("save".into(), Role::AttributeName)]
        );
    }

    #[test]
    fn roles_nested_def_callee() {
        let r = roles("def outer(x):\n    def inner(y):\n        return y\n    return inner(x)");
        assert_eq!(r[2], ("inner".into(), Role::PlainIdentifier));
        assert_eq!(r.last().unwrap(), &("x".into(), Role::PlainIdentifier));
        assert_eq!(r[r.len() - 2], ("inner".into(), Role::CalleeOfDefinedName));
    }

    #[test]
    fn roles_method_self_call_keeps_function_name() {
        let r = roles("def save(self):\n    self.save()");
        assert_eq!(r.last().unwrap(), &("save".into(), Role::FunctionName));
    }

    #[test]
    fn roles_only_after_definition() {
        let r = roles("@f.wrap\ndef f(): pass");
        assert_eq!(r[0], ("f".into(), Role::PlainIdentifier));
        assert_eq!(r[2], ("f".into(), Role::FunctionName));
    }

    #[test]
    fn signature_multiline() {
        let src = "def f(a,\n    b):\n    pass";
        let s = lex(src).unwrap();
        assert_eq!(signature_span(&s).unwrap().text(src), "def f(a,\n    b):");
    }

    #[test]
    fn signature_with_annotations_and_lambda_default() {
        let src = "def f(key=lambda v: v) -> Dict[str, int]:\n    pass";
        let s = lex(src).unwrap();
        assert_eq!(signature_span(&s).unwrap().text(src), "def f(key=lambda v: v) -> Dict[str, int]:");
    }

    #[test]
    fn signature_missing() {
        assert_eq!(signature_span(&lex("x=1").unwrap()), Err(SignatureError::NoFunction));
        assert!(matches!(
            signature_span(&lex("def f(x)").unwrap()),
            Err(SignatureError::IncompleteSignature { offset: 0 })
        ));
    }

    #[test]
    fn signature_excludes_decorator() {
        let src = "@dec\ndef f():\n    return 1";
        let s = lex(src).unwrap();
        let span = signature_span(&s).unwrap();
        assert_eq!(span.start, 5);
        assert_eq!(span.text(src), "def f():");
    }
}
