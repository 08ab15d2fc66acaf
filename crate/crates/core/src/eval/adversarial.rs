use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalConfig, EvalReport, LinearSurrogate, SurrogateConfig};
use crate::attribution::{AttributionQuery, ContextSource, Method};
use crate::corpus::{is_reserved, LabeledExample, Span, TokenSeq};
use crate::error::{Error, Result};
use crate::hierarchy::MethodScorer;
use crate::model::{evaluate_classifier, train_classifier, LmParams, LstmParams, TrainConfig};
use crate::sampler::SamplerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversarialConfig {
    pub train: TrainConfig,
    pub surrogate: SurrogateConfig,
    /// Copies of each inverted single-word example.
    pub repeats: usize,
    pub context_size: usize,
    pub samples: usize,
    pub seed: u64,
    /// Largest allowed gap in full-sentence training accuracy.
    pub accuracy_tolerance: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            train: TrainConfig::default(),
            surrogate: SurrogateConfig::default(),
            repeats: 3,
            context_size: 10,
            samples: 20,
            seed: 0,
            accuracy_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub normal_accuracy: f64,
    pub adversarial_accuracy: f64,
    pub inverted_examples: usize,
    /// DirectFeed, SOC and SCD on the normally trained model.
    pub normal: Vec<EvalReport>,
    /// The same methods on the model trained with inverted single words.
    pub adversarial: Vec<EvalReport>,
    pub config: AdversarialConfig,
}

impl AdversarialReport {
    pub fn rho(&self, adversarial: bool, method: Method) -> Option<f64> {
        let reports = if adversarial { &self.adversarial } else { &self.normal };
        reports.iter().find(|r| r.method == method.name()).map(|r| r.word_rho)
    }
}

/// Every non-reserved training word alone, labeled against the sign of its
/// surrogate polarity. Words with zero polarity are skipped.
pub fn inverted_word_examples(
    surrogate: &LinearSurrogate,
    train: &[LabeledExample],
    repeats: usize,
) -> Vec<LabeledExample> {
    let words: BTreeSet<_> = train
        .iter()
        .flat_map(|ex| ex.seq.iter().copied())
        .filter(|&t| !is_reserved(t) && (t as usize) < surrogate.vocab_size())
        .collect();
    let mut out = Vec::new();
    for w in words {
        let polarity = surrogate.word_reference(w, 1);
        if polarity == 0.0 {
            continue;
        }
        let label = usize::from(polarity < 0.0);
        for _ in 0..repeats {
            out.push(LabeledExample {
                seq: TokenSeq::new(vec![w]).expect("single token"),
                label,
            });
        }
    }
    out
}

/// Trains a normal classifier and one that also sees inverted single-word
/// examples, then reports word ρ for DirectFeed, SOC and SCD on both.
pub fn adversarial_experiment(
    train: &[LabeledExample],
    eval_set: &[TokenSeq],
    vocab_size: usize,
    lm: &LmParams,
    cfg: &AdversarialConfig,
) -> Result<AdversarialReport> {
    let surrogate = LinearSurrogate::fit(train, vocab_size, 2, &cfg.surrogate)?;
    let (normal, _) = train_classifier(train, vocab_size, 2, &cfg.train)?;
    let inverted = inverted_word_examples(&surrogate, train, cfg.repeats);
    let mut augmented = train.to_vec();
    augmented.extend(inverted.iter().cloned());
    let (adversarial, _) = train_classifier(&augmented, vocab_size, 2, &cfg.train)?;

    let (_, normal_accuracy) = evaluate_classifier(&normal, train);
    let (_, adversarial_accuracy) = evaluate_classifier(&adversarial, train);
    if (normal_accuracy - adversarial_accuracy).abs() > cfg.accuracy_tolerance {
        return Err(Error::Training(format!(
            "training accuracies differ: normal {normal_accuracy:.4}, adversarial {adversarial_accuracy:.4}"
        )));
    }

    let corpus: Vec<TokenSeq> = train.iter().map(|ex| ex.seq.clone()).collect();
    let run = |model: &LstmParams| -> Result<Vec<EvalReport>> {
        [Method::DirectFeed, Method::Soc, Method::Scd]
            .into_iter()
            .map(|method| {
                let mut query = AttributionQuery::new(Span::new(0, 1), method);
                query.context_size = cfg.context_size;
                query.samples = cfg.samples;
                query.seed = cfg.seed;
                let scorer = MethodScorer {
                    model,
                    source: ContextSource {
                        corpus: &corpus,
                        ..ContextSource::with_lm(lm)
                    },
                    query,
                };
                let echo = EvalConfig {
                    context_size: cfg.context_size,
                    samples: cfg.samples,
                    seed: cfg.seed,
                    sampler: SamplerKind::Lm,
                };
                evaluate(&scorer, method.name(), echo, &surrogate, eval_set, None)
            })
            .collect()
    };
    Ok(AdversarialReport {
        normal_accuracy,
        adversarial_accuracy,
        inverted_examples: inverted.len(),
        normal: run(&normal)?,
        adversarial: run(&adversarial)?,
        config: cfg.clone(),
    })
}
