//! Tokenization, vocabularies, TSV datasets and annotated parse trees.
//!
//! Tokenization is deliberately plain: lowercase, then split on Unicode
//! whitespace. Punctuation stays attached to the word it touches unless the
//! source already separates it (`"good ."` gives `["good", "."]`, `"good."`
//! gives `["good."]`).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const MASK: TokenId = 2;
pub const BOS: TokenId = 3;
pub const EOS: TokenId = 4;
pub const NUM_RESERVED: usize = 5;

const RESERVED_NAMES: [&str; NUM_RESERVED] = ["<pad>", "<unk>", "<mask>", "<bos>", "<eos>"];

pub fn is_reserved(id: TokenId) -> bool {
    (id as usize) < NUM_RESERVED
}

pub fn tokenize(text: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = text.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.is_empty() {
        return Err(Error::Empty("text has no tokens"));
    }
    Ok(tokens)
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(|t| t.as_ref()).collect::<Vec<_>>().join(" ")
}

/// Token ↔ id map with ids 0..5 reserved for PAD, UNK, MASK, BOS and EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    to_id: HashMap<String, TokenId>,
    tokens: Vec<String>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab {
            to_id: HashMap::new(),
            tokens: RESERVED_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Vocab {
    /// Builds a vocabulary from token lists, assigning ids in first-seen order.
    pub fn build<'a, I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut vocab = Vocab::default();
        for sentence in sentences {
            for tok in sentence {
                vocab.insert(tok.as_ref());
            }
        }
        vocab
    }

    /// Rebuilds a vocabulary from its non-reserved tokens in id order.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let mut vocab = Vocab::default();
        for tok in tokens {
            let before = vocab.len();
            vocab.insert(tok.as_ref());
            if vocab.len() != before + 1 {
                return Err(Error::ModelShape(format!(
                    "vocabulary token {:?} is duplicated or reserved",
                    tok.as_ref()
                )));
            }
        }
        Ok(vocab)
    }

    fn insert(&mut self, tok: &str) {
        if RESERVED_NAMES.contains(&tok) || self.to_id.contains_key(tok) {
            return;
        }
        let id = self.tokens.len() as TokenId;
        self.to_id.insert(tok.to_string(), id);
        self.tokens.push(tok.to_string());
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == NUM_RESERVED
    }

    /// Id of a corpus token; unknown tokens and literal reserved names map to UNK.
    pub fn id(&self, tok: &str) -> TokenId {
        self.to_id.get(tok).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map_or("<unk>", |s| s.as_str())
    }

    /// Non-reserved tokens in id order.
    pub fn content_tokens(&self) -> &[String] {
        &self.tokens[NUM_RESERVED..]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<TokenSeq> {
        TokenSeq::new(tokens.iter().map(|t| self.id(t.as_ref())).collect())
    }

    pub fn decode(&self, seq: &[TokenId]) -> Vec<String> {
        seq.iter().map(|&id| self.token(id).to_string()).collect()
    }
}

/// A non-empty sentence of vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(Vec<TokenId>);

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        Ok(TokenSeq(ids))
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Tokens of `span` as their own sequence.
    pub fn slice(&self, span: Span) -> Result<TokenSeq> {
        span.check(self.len())?;
        TokenSeq::new(self.0[span.start..span.end].to_vec())
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.0
    }
}

impl std::ops::Deref for TokenSeq {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

/// Half-open token range `[start, end)`. Serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    /// Non-empty and inside a sequence of length `len`.
    pub fn check(&self, len: usize) -> Result<()> {
        if self.start < self.end && self.end <= len {
            Ok(())
        } else {
            Err(Error::InvalidSpan {
                start: self.start,
                end: self.end,
                len,
            })
        }
    }

    /// Parses the `"i:j"` command-line form.
    pub fn parse(spec: &str) -> Option<Span> {
        let (a, b) = spec.split_once(':')?;
        Some(Span::new(a.trim().parse().ok()?, b.trim().parse().ok()?))
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// Copy of `seq` with every position of `span` replaced by `fill`.
pub fn mask_span(seq: &TokenSeq, span: Span, fill: TokenId) -> Result<TokenSeq> {
    span.check(seq.len())?;
    let mut ids = seq.0.clone();
    ids[span.start..span.end].fill(fill);
    Ok(TokenSeq(ids))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub seq: TokenSeq,
    pub label: usize,
}

/// One TSV line before vocabulary lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct RawExample {
    pub label: usize,
    pub tokens: Vec<String>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `label<TAB>sentence` lines; blank lines are skipped.
pub fn parse_tsv(text: &str, origin: &str) -> Result<Vec<RawExample>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            msg,
        };
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected label<TAB>sentence".into()))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| bad(format!("label {:?} is not a non-negative integer", label)))?;
        let tokens = tokenize(sentence).map_err(|_| bad("empty sentence".into()))?;
        out.push(RawExample { label, tokens });
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 0,
            msg: "dataset is empty".into(),
        });
    }
    Ok(out)
}

pub fn read_tsv(path: impl AsRef<Path>) -> Result<Vec<RawExample>> {
    let path = path.as_ref();
    parse_tsv(&read_text(path)?, &path.display().to_string())
}

/// Loads a TSV dataset against an existing vocabulary (OOV → UNK).
pub fn load_tsv(path: impl AsRef<Path>, vocab: &Vocab) -> Result<Vec<LabeledExample>> {
    encode_examples(&read_tsv(path)?, vocab)
}

pub fn encode_examples(raw: &[RawExample], vocab: &Vocab) -> Result<Vec<LabeledExample>> {
    raw.iter()
        .map(|r| {
            Ok(LabeledExample {
                seq: vocab.encode(&r.tokens)?,
                label: r.label,
            })
        })
        .collect()
}

/// Builds a vocabulary from a training split.
pub fn vocab_from_examples(raw: &[RawExample]) -> Vocab {
    Vocab::build(raw.iter().map(|r| r.tokens.as_slice()))
}

/// Parse-tree node with a real-valued annotation; leaves carry one token.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedTree {
    pub span: Span,
    pub score: f64,
    pub token: Option<String>,
    pub children: Vec<AnnotatedTree>,
}

impl AnnotatedTree {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.token {
            Some(t) => out.push(t),
            None => self.children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&AnnotatedTree> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.nodes());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(line: &str) -> Vec<(usize, Lexeme<'_>)> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Lexeme::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Lexeme::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !matches!(bytes[i], b'(' | b')') && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push((start, Lexeme::Atom(&line[start..i])));
            }
        }
    }
    out
}

struct TreeParser<'a> {
    lexemes: Vec<(usize, Lexeme<'a>)>,
    pos: usize,
    end: usize,
    next_leaf: usize,
}

impl<'a> TreeParser<'a> {
    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::Tree {
            pos: at,
            msg: msg.into(),
        }
    }

    fn here(&self) -> usize {
        self.lexemes.get(self.pos).map_or(self.end, |l| l.0)
    }

    fn node(&mut self) -> Result<AnnotatedTree> {
        match self.lexemes.get(self.pos) {
            Some((_, Lexeme::Open)) => self.pos += 1,
            _ => return Err(self.err(self.here(), "expected '('")),
        }
        let score = match self.lexemes.get(self.pos) {
            Some((at, Lexeme::Atom(a))) => {
                let at = *at;
                let v: f64 = a
                    .parse()
                    .map_err(|_| self.err(at, format!("score {:?} is not a number", a)))?;
                if !v.is_finite() {
                    return Err(self.err(at, "score must be finite"));
                }
                self.pos += 1;
                v
            }
            _ => return Err(self.err(self.here(), "expected a numeric score")),
        };
        let start = self.next_leaf;
        let mut children = Vec::new();
        let mut token = None;
        loop {
            match self.lexemes.get(self.pos) {
                None => return Err(self.err(self.end, "unbalanced parentheses: missing ')'")),
                Some((_, Lexeme::Close)) => {
                    self.pos += 1;
                    break;
                }
                Some((_, Lexeme::Open)) => {
                    if token.is_some() {
                        return Err(self.err(self.here(), "a token leaf cannot have siblings"));
                    }
                    children.push(self.node()?);
                }
                Some((at, Lexeme::Atom(a))) => {
                    if token.is_some() || !children.is_empty() {
                        return Err(self.err(*at, "a token leaf cannot have siblings"));
                    }
                    token = Some(a.to_lowercase());
                    self.next_leaf += 1;
                    self.pos += 1;
                }
            }
        }
        if token.is_none() && children.is_empty() {
            return Err(self.err(self.here(), "node has no children"));
        }
        Ok(AnnotatedTree {
            span: Span::new(start, self.next_leaf),
            score,
            token,
            children,
        })
    }
}

/// Parses one s-expression `(score child ...)`; a child is either a subtree or
/// a single bare token.
pub fn parse_tree(line: &str) -> Result<AnnotatedTree> {
    let mut p = TreeParser {
        lexemes: lex(line),
        pos: 0,
        end: line.len(),
        next_leaf: 0,
    };
    let tree = p.node()?;
    if let Some((at, l)) = p.lexemes.get(p.pos) {
        let msg = if *l == Lexeme::Close {
            "unbalanced parentheses: unexpected ')'"
        } else {
            "trailing input after tree"
        };
        return Err(Error::Tree {
            pos: *at,
            msg: msg.into(),
        });
    }
    Ok(tree)
}

pub fn parse_trees(text: &str, origin: &str) -> Result<Vec<AnnotatedTree>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tree = parse_tree(line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            msg: e.to_string(),
        })?;
        out.push(tree);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 0,
            msg: "tree file is empty".into(),
        });
    }
    Ok(out)
}

pub fn load_trees(path: impl AsRef<Path>) -> Result<Vec<AnnotatedTree>> {
    let path = path.as_ref();
    parse_trees(&read_text(path)?, &path.display().to_string())
}
