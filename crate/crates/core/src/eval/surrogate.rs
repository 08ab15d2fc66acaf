use serde::{Deserialize, Serialize};

use crate::corpus::{is_reserved, LabeledExample, TokenId};
use crate::error::{Error, Result};
use crate::model::SequenceModel;
use crate::numerics::{dot, softmax};

/// Bag-of-tokens softmax regression. Scores are `bias + Σ coef[·][token]`;
/// reserved tokens have coefficient 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSurrogate {
    /// `coef[class][token]`.
    pub coef: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub l2: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub history: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            l2: 1e-4,
            tolerance: 1e-6,
            max_iter: 5000,
            history: 10,
        }
    }
}

impl LinearSurrogate {
    pub fn vocab_size(&self) -> usize {
        self.coef[0].len()
    }

    /// Polarity of a token: class 1 minus class 0 for binary tasks, the
    /// class's own coefficient otherwise.
    pub fn word_reference(&self, token: TokenId, class: usize) -> f64 {
        if self.coef.len() == 2 {
            self.coef[1][token as usize] - self.coef[0][token as usize]
        } else {
            self.coef[class][token as usize]
        }
    }

    /// Fits by L-BFGS on mean cross-entropy plus `l2/2 · |coef|²`.
    pub fn fit(data: &[LabeledExample], vocab_size: usize, classes: usize, config: &SurrogateConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("surrogate training data"));
        }
        for ex in data {
            if ex.label >= classes {
                return Err(Error::InvalidLabel {
                    label: ex.label,
                    classes,
                });
            }
        }
        let feats: Vec<Vec<(usize, f64)>> = data.iter().map(|ex| counts(&ex.seq, vocab_size)).collect();
        let dim = classes * vocab_size + classes;
        let n = data.len() as f64;
        let objective = |w: &[f64]| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; dim];
            for (f, ex) in feats.iter().zip(data) {
                let mut logits = w[classes * vocab_size..].to_vec();
                for (c, l) in logits.iter_mut().enumerate() {
                    for &(t, cnt) in f {
                        *l += w[c * vocab_size + t] * cnt;
                    }
                }
                let p = softmax(&logits);
                loss -= p[ex.label].max(1e-300).ln();
                for c in 0..classes {
                    let d = (p[c] - if c == ex.label { 1.0 } else { 0.0 }) / n;
                    grad[classes * vocab_size + c] += d;
                    for &(t, cnt) in f {
                        grad[c * vocab_size + t] += d * cnt;
                    }
                }
            }
            loss /= n;
            for c in 0..classes {
                for t in 0..vocab_size {
                    let k = c * vocab_size + t;
                    if is_reserved(t as TokenId) {
                        grad[k] = 0.0;
                    } else {
                        loss += 0.5 * config.l2 * w[k] * w[k];
                        grad[k] += config.l2 * w[k];
                    }
                }
            }
            (loss, grad)
        };
        let (w, grad_norm, iterations) = lbfgs(objective, vec![0.0; dim], config)?;
        let coef = (0..classes)
            .map(|c| w[c * vocab_size..(c + 1) * vocab_size].to_vec())
            .collect();
        Ok(LinearSurrogate {
            coef,
            bias: w[classes * vocab_size..].to_vec(),
            grad_norm,
            iterations,
        })
    }

    pub fn accuracy(&self, data: &[LabeledExample]) -> f64 {
        let correct = data
            .iter()
            .filter(|ex| crate::numerics::argmax(&self.scores(&ex.seq)) == ex.label)
            .count();
        correct as f64 / data.len().max(1) as f64
    }
}

fn counts(seq: &[TokenId], vocab_size: usize) -> Vec<(usize, f64)> {
    let mut c = std::collections::BTreeMap::new();
    for &t in seq {
        if !is_reserved(t) && (t as usize) < vocab_size {
            *c.entry(t as usize).or_insert(0.0) += 1.0;
        }
    }
    c.into_iter().collect()
}

impl SequenceModel for LinearSurrogate {
    fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn scores(&self, ids: &[TokenId]) -> Vec<f64> {
        let mut s = self.bias.clone();
        for (c, v) in s.iter_mut().enumerate() {
            for &t in ids {
                *v += self.coef[c].get(t as usize).copied().unwrap_or(0.0);
            }
        }
        s
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Limited-memory BFGS with a backtracking Armijo line search. Returns the
/// minimiser, the final gradient norm and the iteration count.
pub fn lbfgs<F>(f: F, x0: Vec<f64>, config: &SurrogateConfig) -> Result<(Vec<f64>, f64, usize)>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iter = 0;
    while iter < config.max_iter {
        let gn = norm(&g);
        if !gn.is_finite() || !fx.is_finite() {
            return Err(Error::Training("surrogate objective is not finite".into()));
        }
        if gn < config.tolerance {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alpha = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / gn.max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
            s_hist.clear();
            y_hist.clear();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (fn_, gn_) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn_));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn_)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn_.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-16 * norm(&s) * norm(&y) && dot(&s, &y) > 0.0 {
            if s_hist.len() == config.history {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        x = xn;
        fx = fn_;
        g = gn_;
        iter += 1;
    }
    let gn = norm(&g);
    Ok((x, gn, iter))
}
