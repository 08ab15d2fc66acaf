use serde::{Deserialize, Serialize};

use super::train::lm_pairs;
use super::LstmParams;
use crate::corpus::{is_reserved, TokenId, TokenSeq, BOS, EOS};
use crate::numerics::softmax;

/// Forward and backward next-token models over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl LmParams {
    pub fn vocab_size(&self) -> usize {
        self.forward.dims().vocab
    }

    pub fn direction(&self, dir: Direction) -> &LstmParams {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    /// Per-direction perplexity over a corpus, including the end marker.
    pub fn perplexity(&self, data: &[TokenSeq]) -> (f64, f64) {
        let mut nll = [0.0; 2];
        let mut count = 0usize;
        for seq in data {
            for (dir, (inputs, targets)) in lm_pairs(seq).iter().enumerate() {
                let params = if dir == 0 { &self.forward } else { &self.backward };
                for (step, &t) in params.trace(inputs).iter().zip(targets) {
                    let p = softmax(&params.head_scores(&step.hidden));
                    nll[dir] -= p[t as usize].max(1e-300).ln();
                }
            }
            count += seq.len() + 1;
        }
        let n = count.max(1) as f64;
        ((nll[0] / n).exp(), (nll[1] / n).exp())
    }
}

/// Incremental reader over one LM direction.
#[derive(Debug, Clone)]
pub struct LmCursor<'a> {
    params: &'a LstmParams,
    hidden: Vec<f64>,
    cell: Vec<f64>,
}

impl<'a> LmCursor<'a> {
    /// A cursor that has read the direction's start marker.
    pub fn start(lm: &'a LmParams, direction: Direction) -> Self {
        let params = lm.direction(direction);
        let d_h = params.hidden_dim();
        let mut cursor = LmCursor {
            params,
            hidden: vec![0.0; d_h],
            cell: vec![0.0; d_h],
        };
        cursor.feed(match direction {
            Direction::Forward => BOS,
            Direction::Backward => EOS,
        });
        cursor
    }

    pub fn feed(&mut self, token: TokenId) {
        let step = self
            .params
            .step(self.params.embedding.row(token as usize), &self.hidden, &self.cell);
        self.hidden = step.hidden;
        self.cell = step.cell;
    }

    /// Distribution over the next token with reserved ids zeroed.
    pub fn dist(&self) -> Vec<f64> {
        let mut p = softmax(&self.params.head_scores(&self.hidden));
        for (id, v) in p.iter_mut().enumerate() {
            if is_reserved(id as TokenId) {
                *v = 0.0;
            }
        }
        let total: f64 = p.iter().sum();
        if total > 0.0 && total.is_finite() {
            p.iter_mut().for_each(|v| *v /= total);
        } else {
            let content = p
                .iter()
                .enumerate()
                .filter(|(id, _)| !is_reserved(*id as TokenId))
                .count();
            for (id, v) in p.iter_mut().enumerate() {
                *v = if is_reserved(id as TokenId) {
                    0.0
                } else {
                    1.0 / content as f64
                };
            }
        }
        p
    }
}

/// Next-token distribution given a context.
///
/// `Forward` reads `context` left to right after BOS and predicts the token
/// that follows it. `Backward` takes the right-hand context in natural order,
/// reads it reversed after EOS, and predicts the token that precedes it.
/// MASK tokens in the context go through the MASK embedding row. Reserved
/// tokens get zero mass and the remainder is renormalised.
pub fn lm_next_dist(lm: &LmParams, context: &[TokenId], direction: Direction) -> Vec<f64> {
    let mut cursor = LmCursor::start(lm, direction);
    match direction {
        Direction::Forward => context.iter().for_each(|&t| cursor.feed(t)),
        Direction::Backward => context.iter().rev().for_each(|&t| cursor.feed(t)),
    }
    cursor.dist()
}
