//! Replacement contexts for the words around a phrase.
//!
//! A draw replaces the left window `[s - N, s)` and the right window
//! `[e, e + N)` of a phrase `[s, e)`. The left window is filled right to left
//! by the backward LM and the right window left to right by the forward LM;
//! window positions not yet filled are read as MASK.

use serde::{Deserialize, Serialize};

use crate::corpus::{is_reserved, Span, TokenId, TokenSeq, MASK, PAD};
use crate::error::{Error, Result};
use crate::model::{Direction, LmCursor, LmParams};
use crate::numerics::Rng;

pub const DEFAULT_ENUMERATION_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    #[serde(rename = "lm")]
    Lm,
    #[serde(rename = "exhaustive")]
    Exhaustive,
    #[serde(rename = "pad")]
    Padding,
    #[serde(rename = "corpus")]
    Corpus,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Lm => "lm",
            SamplerKind::Exhaustive => "exhaustive",
            SamplerKind::Padding => "pad",
            SamplerKind::Corpus => "corpus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lm" => Some(SamplerKind::Lm),
            "exhaustive" => Some(SamplerKind::Exhaustive),
            "pad" | "padding" => Some(SamplerKind::Padding),
            "corpus" => Some(SamplerKind::Corpus),
            _ => None,
        }
    }
}

/// Left and right context windows of a phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Windows {
    pub left: Span,
    pub right: Span,
}

impl Windows {
    pub fn len(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.left.contains(i) || self.right.contains(i)
    }

    fn positions(&self) -> impl Iterator<Item = usize> {
        (self.left.start..self.left.end).chain(self.right.start..self.right.end)
    }
}

/// Windows of up to `n` tokens on each side, clipped to `[0, len)`.
pub fn window(len: usize, phrase: Span, n: usize) -> Windows {
    Windows {
        left: Span::new(phrase.start.saturating_sub(n), phrase.start),
        right: Span::new(phrase.end, (phrase.end + n).min(len).max(phrase.end)),
    }
}

/// One replacement of the window tokens: left window then right window, in
/// sentence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDraw {
    pub replacement: Vec<TokenId>,
    pub weight: f64,
}

impl ContextDraw {
    /// `seq` with the window positions overwritten by this draw.
    pub fn apply(&self, seq: &[TokenId], windows: Windows) -> Vec<TokenId> {
        let mut out = seq.to_vec();
        for (pos, &tok) in windows.positions().zip(&self.replacement) {
            out[pos] = tok;
        }
        out
    }
}

fn masked_windows(seq: &[TokenId], windows: Windows) -> Vec<TokenId> {
    let mut x = seq.to_vec();
    for pos in windows.positions() {
        x[pos] = MASK;
    }
    x
}

fn backward_cursor<'a>(lm: &'a LmParams, x: &[TokenId], from: usize) -> LmCursor<'a> {
    let mut c = LmCursor::start(lm, Direction::Backward);
    x[from..].iter().rev().for_each(|&t| c.feed(t));
    c
}

fn forward_cursor<'a>(lm: &'a LmParams, x: &[TokenId], upto: usize) -> LmCursor<'a> {
    let mut c = LmCursor::start(lm, Direction::Forward);
    x[..upto].iter().for_each(|&t| c.feed(t));
    c
}

fn collect_replacement(x: &[TokenId], windows: Windows) -> Vec<TokenId> {
    windows.positions().map(|p| x[p]).collect()
}

/// `k` Monte-Carlo draws, each with weight `1/k`.
pub fn draw_contexts(
    lm: &LmParams,
    seq: &[TokenId],
    phrase: Span,
    n: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<ContextDraw>> {
    phrase.check(seq.len())?;
    if k == 0 {
        return Err(Error::Empty("sample count K"));
    }
    let windows = window(seq.len(), phrase, n);
    let weight = 1.0 / k as f64;
    if windows.is_empty() {
        return Ok(vec![
            ContextDraw {
                replacement: Vec::new(),
                weight
            };
            k
        ]);
    }
    let base = masked_windows(seq, windows);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut x = base.clone();
        if !windows.left.is_empty() {
            let mut cur = backward_cursor(lm, &x, windows.left.end);
            for pos in (windows.left.start..windows.left.end).rev() {
                x[pos] = rng.categorical(&cur.dist()) as TokenId;
                cur.feed(x[pos]);
            }
        }
        if !windows.right.is_empty() {
            let mut cur = forward_cursor(lm, &x, windows.right.start);
            for pos in windows.right.start..windows.right.end {
                x[pos] = rng.categorical(&cur.dist()) as TokenId;
                cur.feed(x[pos]);
            }
        }
        out.push(ContextDraw {
            replacement: collect_replacement(&x, windows),
            weight,
        });
    }
    Ok(out)
}

fn content_vocab(lm: &LmParams) -> Vec<TokenId> {
    (0..lm.vocab_size() as TokenId).filter(|&t| !is_reserved(t)).collect()
}

/// Every window assignment with its chain-rule probability under the same
/// fill order as [`draw_contexts`].
pub fn enumerate_contexts(
    lm: &LmParams,
    seq: &[TokenId],
    phrase: Span,
    n: usize,
    cap: usize,
) -> Result<Vec<ContextDraw>> {
    phrase.check(seq.len())?;
    let windows = window(seq.len(), phrase, n);
    let vocab = content_vocab(lm);
    let needed = (vocab.len() as f64).powi(windows.len() as i32);
    if needed > cap as f64 {
        return Err(Error::EnumerationCap { needed, cap });
    }
    let mut out = Vec::with_capacity(needed as usize);
    let x = masked_windows(seq, windows);
    let left: Vec<usize> = (windows.left.start..windows.left.end).rev().collect();
    let cursor = (!left.is_empty()).then(|| backward_cursor(lm, &x, windows.left.end));
    enumerate_left(lm, &vocab, windows, &left, x, cursor, 1.0, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_left(
    lm: &LmParams,
    vocab: &[TokenId],
    windows: Windows,
    todo: &[usize],
    x: Vec<TokenId>,
    cursor: Option<LmCursor<'_>>,
    prob: f64,
    out: &mut Vec<ContextDraw>,
) {
    match (todo.split_first(), cursor) {
        (Some((&pos, rest)), Some(cur)) => {
            let dist = cur.dist();
            for &v in vocab {
                let mut x2 = x.clone();
                x2[pos] = v;
                let mut next = cur.clone();
                next.feed(v);
                enumerate_left(lm, vocab, windows, rest, x2, Some(next), prob * dist[v as usize], out);
            }
        }
        _ => {
            let right: Vec<usize> = (windows.right.start..windows.right.end).collect();
            let cursor = (!right.is_empty()).then(|| forward_cursor(lm, &x, windows.right.start));
            enumerate_right(vocab, windows, &right, x, cursor, prob, out);
        }
    }
}

fn enumerate_right(
    vocab: &[TokenId],
    windows: Windows,
    todo: &[usize],
    x: Vec<TokenId>,
    cursor: Option<LmCursor<'_>>,
    prob: f64,
    out: &mut Vec<ContextDraw>,
) {
    match (todo.split_first(), cursor) {
        (Some((&pos, rest)), Some(cur)) => {
            let dist = cur.dist();
            for &v in vocab {
                let mut x2 = x.clone();
                x2[pos] = v;
                let mut next = cur.clone();
                next.feed(v);
                enumerate_right(vocab, windows, rest, x2, Some(next), prob * dist[v as usize], out);
            }
        }
        _ => out.push(ContextDraw {
            replacement: collect_replacement(&x, windows),
            weight: prob,
        }),
    }
}

/// A single all-PAD window fill with weight 1.
pub fn padding_contexts(len: usize, phrase: Span, n: usize) -> Vec<ContextDraw> {
    let w = window(len, phrase, n);
    vec![ContextDraw {
        replacement: vec![PAD; w.len()],
        weight: 1.0,
    }]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub sentence: usize,
    pub start: usize,
}

/// Every position where `phrase` occurs as a contiguous subsequence.
pub fn corpus_occurrences(corpus: &[TokenSeq], phrase: &[TokenId]) -> Vec<Occurrence> {
    let mut out = Vec::new();
    if phrase.is_empty() {
        return out;
    }
    for (i, s) in corpus.iter().enumerate() {
        if s.len() < phrase.len() {
            continue;
        }
        for start in 0..=s.len() - phrase.len() {
            if &s[start..start + phrase.len()] == phrase {
                out.push(Occurrence { sentence: i, start });
            }
        }
    }
    out
}

/// Window fills copied from corpus occurrences of the phrase, aligned on the
/// phrase position and padded where the corpus sentence is too short. Falls
/// back to the original window when the phrase never occurs.
pub fn corpus_contexts(corpus: &[TokenSeq], seq: &[TokenId], phrase: Span, n: usize) -> Result<Vec<ContextDraw>> {
    phrase.check(seq.len())?;
    let windows = window(seq.len(), phrase, n);
    let hits = corpus_occurrences(corpus, &seq[phrase.start..phrase.end]);
    if hits.is_empty() {
        return Ok(vec![ContextDraw {
            replacement: collect_replacement(seq, windows),
            weight: 1.0,
        }]);
    }
    let weight = 1.0 / hits.len() as f64;
    Ok(hits
        .iter()
        .map(|h| {
            let src = &corpus[h.sentence];
            let replacement = windows
                .positions()
                .map(|pos| {
                    let idx = h.start as isize + pos as isize - phrase.start as isize;
                    if idx >= 0 && (idx as usize) < src.len() {
                        src[idx as usize]
                    } else {
                        PAD
                    }
                })
                .collect();
            ContextDraw { replacement, weight }
        })
        .collect())
}
