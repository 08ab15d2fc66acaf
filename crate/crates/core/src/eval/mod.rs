//! Correlation metrics against a linear oracle and annotated trees.

mod adversarial;
mod surrogate;
mod sweep;

pub use adversarial::{adversarial_experiment, inverted_word_examples, AdversarialConfig, AdversarialReport};
pub use surrogate::{lbfgs, LinearSurrogate, SurrogateConfig};
pub use sweep::{sweep, SweepCell, SweepPoint, SweepReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::AttributionScore;
use crate::corpus::{is_reserved, AnnotatedTree, Span, TokenId, TokenSeq};
use crate::error::{Error, Result};
use crate::hierarchy::PhraseScorer;
use crate::sampler::SamplerKind;

/// Sample Pearson correlation, clamped to [−1, 1].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            op: "pearson",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::DegenerateVariance("fewer than two points"));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(a) || constant(b) {
        return Err(Error::DegenerateVariance("constant input"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateVariance("zero variance after centering"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// One correlated unit: an attributed score and its reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance: usize,
    pub span: Span,
    pub score: f64,
    pub reference: f64,
}

/// Attribution settings echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub context_size: usize,
    pub samples: usize,
    pub seed: u64,
    pub sampler: SamplerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub word_rho: f64,
    pub phrase_rho: Option<f64>,
    pub word_records: Vec<EvalRecord>,
    pub phrase_records: Vec<EvalRecord>,
    pub config: EvalConfig,
}

/// Scalar compared against the oracle: the display scalar for binary tasks,
/// the target-class score otherwise.
fn eval_scalar(score: &AttributionScore) -> f64 {
    if score.per_class.len() == 2 {
        score.display()
    } else {
        score.value
    }
}

/// Scores every non-reserved token occurrence as a single-token phrase.
pub fn word_records<S: PhraseScorer + ?Sized>(
    scorer: &S,
    surrogate: &LinearSurrogate,
    eval_set: &[TokenSeq],
) -> Result<Vec<EvalRecord>> {
    if eval_set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let per_sentence = eval_set
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut out = Vec::new();
            for (pos, &tok) in seq.iter().enumerate() {
                if is_reserved(tok) {
                    continue;
                }
                let span = Span::new(pos, pos + 1);
                let s = scorer.score(seq, span)?;
                out.push(EvalRecord {
                    instance: i,
                    span,
                    score: eval_scalar(&s),
                    reference: reference(surrogate, tok, s.target_class),
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sentence.into_iter().flatten().collect())
}

fn reference(surrogate: &LinearSurrogate, tok: TokenId, class: usize) -> f64 {
    if (tok as usize) < surrogate.vocab_size() {
        surrogate.word_reference(tok, class)
    } else {
        0.0
    }
}

fn rho_of(records: &[EvalRecord]) -> Result<f64> {
    let a: Vec<f64> = records.iter().map(|r| r.score).collect();
    let b: Vec<f64> = records.iter().map(|r| r.reference).collect();
    pearson(&a, &b)
}

/// Correlation of single-word scores with the surrogate's coefficients.
pub fn word_rho<S: PhraseScorer + ?Sized>(
    scorer: &S,
    surrogate: &LinearSurrogate,
    eval_set: &[TokenSeq],
) -> Result<f64> {
    rho_of(&word_records(scorer, surrogate, eval_set)?)
}

/// Scores every internal node of each tree against its annotation.
pub fn phrase_records<S: PhraseScorer + ?Sized>(
    scorer: &S,
    items: &[(TokenSeq, AnnotatedTree)],
) -> Result<Vec<EvalRecord>> {
    if items.is_empty() {
        return Err(Error::Empty("annotated trees"));
    }
    let per_tree = items
        .par_iter()
        .enumerate()
        .map(|(i, (seq, tree))| {
            tree.nodes()
                .into_iter()
                .filter(|n| !n.is_leaf())
                .map(|n| {
                    let s = scorer.score(seq, n.span)?;
                    Ok(EvalRecord {
                        instance: i,
                        span: n.span,
                        score: eval_scalar(&s),
                        reference: n.score,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_tree.into_iter().flatten().collect())
}

/// Correlation of internal-node scores with tree annotations.
pub fn phrase_rho<S: PhraseScorer + ?Sized>(scorer: &S, items: &[(TokenSeq, AnnotatedTree)]) -> Result<f64> {
    rho_of(&phrase_records(scorer, items)?)
}

/// Word ρ and, when trees are given, phrase ρ for one scorer.
pub fn evaluate<S: PhraseScorer + ?Sized>(
    scorer: &S,
    method: &str,
    config: EvalConfig,
    surrogate: &LinearSurrogate,
    eval_set: &[TokenSeq],
    trees: Option<&[(TokenSeq, AnnotatedTree)]>,
) -> Result<EvalReport> {
    let word_records = word_records(scorer, surrogate, eval_set)?;
    let word_rho = rho_of(&word_records)?;
    let (phrase_rho, phrase_records) = match trees {
        Some(items) => {
            let recs = phrase_records(scorer, items)?;
            (Some(rho_of(&recs)?), recs)
        }
        None => (None, Vec::new()),
    };
    Ok(EvalReport {
        method: method.to_string(),
        word_rho,
        phrase_rho,
        word_records,
        phrase_records,
        config,
    })
}
