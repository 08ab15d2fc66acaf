//! Toy sentiment corpora with controllable negation.

use serde::{Deserialize, Serialize};

use crate::corpus::RawExample;
use crate::numerics::Rng;

pub const POSITIVE: [&str; 5] = ["good", "great", "fine", "nice", "love"];
pub const NEGATIVE: [&str; 5] = ["bad", "awful", "poor", "boring", "hate"];
pub const NEUTRAL: [&str; 8] = ["the", "movie", "film", "was", "it", "plot", "acting", "very"];
pub const NEGATION: &str = "not";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Polar words per sentence are drawn from 1..=max_polar.
    pub max_polar: usize,
    /// Chance that a polar word is preceded by "not", flipping it.
    pub negation_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            sentences: 200,
            min_len: 4,
            max_len: 8,
            max_polar: 1,
            negation_prob: 0.0,
            seed: 7,
        }
    }
}

/// Sentences whose label is 1 when flipped polarities sum above zero.
/// Draws with a zero sum are rejected.
pub fn sentiment_corpus(cfg: &SyntheticConfig) -> Vec<RawExample> {
    let mut rng = Rng::new(cfg.seed);
    let mut out = Vec::with_capacity(cfg.sentences);
    while out.len() < cfg.sentences {
        if let Some(ex) = sentence(cfg, &mut rng) {
            out.push(ex);
        }
    }
    out
}

fn sentence(cfg: &SyntheticConfig, rng: &mut Rng) -> Option<RawExample> {
    let len = cfg.min_len + rng.below(cfg.max_len - cfg.min_len + 1);
    let polar = 1 + rng.below(cfg.max_polar.max(1));
    let mut units: Vec<Vec<&str>> = Vec::new();
    let mut total = 0i32;
    for _ in 0..polar {
        let positive = rng.uniform() < 0.5;
        let word = if positive {
            POSITIVE[rng.below(POSITIVE.len())]
        } else {
            NEGATIVE[rng.below(NEGATIVE.len())]
        };
        let mut sign = if positive { 1 } else { -1 };
        if rng.uniform() < cfg.negation_prob {
            units.push(vec![NEGATION, word]);
            sign = -sign;
        } else {
            units.push(vec![word]);
        }
        total += sign;
    }
    if total == 0 {
        return None;
    }
    let used: usize = units.iter().map(|u| u.len()).sum();
    for _ in used..len {
        units.push(vec![NEUTRAL[rng.below(NEUTRAL.len())]]);
    }
    rng.shuffle(&mut units);
    Some(RawExample {
        label: usize::from(total > 0),
        tokens: units.concat().into_iter().map(String::from).collect(),
    })
}
