//! Phrase importance scorers.

use serde::{Deserialize, Serialize};

use crate::corpus::{Span, TokenId, TokenSeq, PAD};
use crate::decomp::{decompose, ActivationSampleSet, DecompMethod};
use crate::error::{Error, Result};
use crate::model::{LmParams, SequenceModel};
use crate::numerics::{argmax, Rng};
use crate::sampler::{
    corpus_contexts, corpus_occurrences, draw_contexts, enumerate_contexts, padding_contexts, window, ContextDraw,
    SamplerKind, DEFAULT_ENUMERATION_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Soc,
    Scd,
    Cd,
    Acd,
    Occlusion,
    DirectFeed,
    Statistic,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Soc,
        Method::Scd,
        Method::Cd,
        Method::Acd,
        Method::Occlusion,
        Method::DirectFeed,
        Method::Statistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Soc => "soc",
            Method::Scd => "scd",
            Method::Cd => "cd",
            Method::Acd => "acd",
            Method::Occlusion => "occlusion",
            Method::DirectFeed => "directfeed",
            Method::Statistic => "statistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Whether the method marginalises over sampled contexts.
    pub fn uses_context(self) -> bool {
        matches!(self, Method::Soc | Method::Scd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionScore {
    pub per_class: Vec<f64>,
    pub target_class: usize,
    pub value: f64,
    /// Head contribution of the bias part for decomposition methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
}

impl AttributionScore {
    pub fn new(per_class: Vec<f64>, target_class: usize) -> Self {
        let value = per_class[target_class];
        AttributionScore {
            per_class,
            target_class,
            value,
            bias: None,
        }
    }

    /// Class 1 minus class 0 for binary tasks, the class margin otherwise.
    pub fn display(&self) -> f64 {
        display_scalar(&self.per_class, self.target_class)
    }
}

pub fn display_scalar(per_class: &[f64], target: usize) -> f64 {
    if per_class.len() == 2 {
        per_class[1] - per_class[0]
    } else {
        class_margin(per_class, target)
    }
}

/// Score of `predicted` minus the best other class.
pub fn class_margin(per_class: &[f64], predicted: usize) -> f64 {
    let best_other = per_class
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != predicted)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    per_class[predicted] - best_other
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionQuery {
    pub phrase: Span,
    pub method: Method,
    pub context_size: usize,
    pub samples: usize,
    pub sampler: SamplerKind,
    pub seed: u64,
    /// Class whose score is reported; the model's prediction when unset.
    #[serde(default)]
    pub target: Option<usize>,
}

impl AttributionQuery {
    pub fn new(phrase: Span, method: Method) -> Self {
        AttributionQuery {
            phrase,
            method,
            context_size: 10,
            samples: 20,
            sampler: SamplerKind::Lm,
            seed: 0,
            target: None,
        }
    }
}

/// Where replacement contexts come from.
#[derive(Debug, Clone, Copy)]
pub struct ContextSource<'a> {
    pub lm: Option<&'a LmParams>,
    pub corpus: &'a [TokenSeq],
    pub enumeration_cap: usize,
}

impl Default for ContextSource<'_> {
    fn default() -> Self {
        ContextSource {
            lm: None,
            corpus: &[],
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl<'a> ContextSource<'a> {
    pub fn with_lm(lm: &'a LmParams) -> Self {
        ContextSource {
            lm: Some(lm),
            ..ContextSource::default()
        }
    }

    fn lm(&self, method: Method) -> Result<&'a LmParams> {
        self.lm.ok_or_else(|| Error::MethodMismatch {
            method: method.name().into(),
            reason: "with LM sampling needs a language model".into(),
        })
    }

    /// Weighted window fills for `query`. An empty window always yields one
    /// empty draw of weight 1.
    pub fn contexts(&self, seq: &[TokenId], query: &AttributionQuery) -> Result<Vec<ContextDraw>> {
        let phrase = query.phrase;
        phrase.check(seq.len())?;
        if window(seq.len(), phrase, query.context_size).is_empty() {
            return Ok(vec![ContextDraw {
                replacement: Vec::new(),
                weight: 1.0,
            }]);
        }
        match query.sampler {
            SamplerKind::Lm => {
                let mut rng = Rng::new(query.seed);
                draw_contexts(
                    self.lm(query.method)?,
                    seq,
                    phrase,
                    query.context_size,
                    query.samples,
                    &mut rng,
                )
            }
            SamplerKind::Exhaustive => enumerate_contexts(
                self.lm(query.method)?,
                seq,
                phrase,
                query.context_size,
                self.enumeration_cap,
            ),
            SamplerKind::Padding => Ok(padding_contexts(seq.len(), phrase, query.context_size)),
            SamplerKind::Corpus => corpus_contexts(self.corpus, seq, phrase, query.context_size),
        }
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn occlusion_diff(model: &dyn SequenceModel, ids: &[TokenId], phrase: Span) -> Vec<f64> {
    let mut masked = ids.to_vec();
    masked[phrase.start..phrase.end].fill(PAD);
    diff(&model.scores(ids), &model.scores(&masked))
}

fn resolve_target(model: &dyn SequenceModel, seq: &[TokenId], target: Option<usize>) -> Result<usize> {
    match target {
        Some(t) if t >= model.num_classes() => Err(Error::InvalidLabel {
            label: t,
            classes: model.num_classes(),
        }),
        Some(t) => Ok(t),
        None => Ok(argmax(&model.scores(seq))),
    }
}

/// `s(x) − s(x with the phrase replaced by PAD)`.
pub fn input_occlusion(model: &dyn SequenceModel, seq: &[TokenId], phrase: Span) -> Result<AttributionScore> {
    phrase.check(seq.len())?;
    let target = resolve_target(model, seq, None)?;
    Ok(AttributionScore::new(occlusion_diff(model, seq, phrase), target))
}

/// Scores of the phrase fed alone.
pub fn direct_feed(model: &dyn SequenceModel, seq: &[TokenId], phrase: Span) -> Result<AttributionScore> {
    phrase.check(seq.len())?;
    let target = resolve_target(model, seq, None)?;
    Ok(AttributionScore::new(
        model.scores(&seq[phrase.start..phrase.end]),
        target,
    ))
}

/// Per-draw occlusion differences for a set of window fills.
pub fn soc_draws(
    model: &dyn SequenceModel,
    seq: &[TokenId],
    phrase: Span,
    n: usize,
    draws: &[ContextDraw],
) -> Vec<Vec<f64>> {
    let windows = window(seq.len(), phrase, n);
    draws
        .iter()
        .map(|d| occlusion_diff(model, &d.apply(seq, windows), phrase))
        .collect()
}

fn weighted_mean(rows: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = vec![0.0; rows.first().map_or(0, |r| r.len())];
    for (row, w) in rows.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += w * v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    acc
}

/// Weighted mean over window fills of the occlusion difference.
pub fn soc(
    model: &dyn SequenceModel,
    source: &ContextSource<'_>,
    seq: &[TokenId],
    query: &AttributionQuery,
) -> Result<AttributionScore> {
    let target = resolve_target(model, seq, query.target)?;
    let draws = source.contexts(seq, query)?;
    let rows = soc_draws(model, seq, query.phrase, query.context_size, &draws);
    let weights: Vec<f64> = draws.iter().map(|d| d.weight).collect();
    Ok(AttributionScore::new(weighted_mean(&rows, &weights), target))
}

/// Decomposition with activation statistics from sampled contexts.
pub fn scd_score(
    model: &dyn SequenceModel,
    source: &ContextSource<'_>,
    seq: &[TokenId],
    query: &AttributionQuery,
) -> Result<AttributionScore> {
    let params = lstm_of(model, Method::Scd)?;
    let target = resolve_target(model, seq, query.target)?;
    let draws = source.contexts(seq, query)?;
    let windows = window(seq.len(), query.phrase, query.context_size);
    let seqs: Vec<Vec<TokenId>> = draws.iter().map(|d| d.apply(seq, windows)).collect();
    let samples = ActivationSampleSet::record(params, &seqs, draws.iter().map(|d| d.weight).collect())?;
    let out = decompose(params, seq, query.phrase, DecompMethod::SCD, Some(&samples))?;
    let mut score = AttributionScore::new(out.phrase, target);
    score.bias = Some(out.bias);
    Ok(score)
}

fn lstm_of(model: &dyn SequenceModel, method: Method) -> Result<&crate::model::LstmParams> {
    model.lstm().ok_or_else(|| Error::MethodMismatch {
        method: method.name().into(),
        reason: "needs an LSTM model".into(),
    })
}

/// Mean occlusion difference over corpus occurrences of the phrase tokens;
/// plain occlusion on `seq` when there are none.
pub fn statistic_importance(
    model: &dyn SequenceModel,
    corpus: &[TokenSeq],
    seq: &[TokenId],
    phrase: Span,
) -> Result<AttributionScore> {
    phrase.check(seq.len())?;
    let target = resolve_target(model, seq, None)?;
    let hits = corpus_occurrences(corpus, &seq[phrase.start..phrase.end]);
    if hits.is_empty() {
        return Ok(AttributionScore::new(occlusion_diff(model, seq, phrase), target));
    }
    let mut acc = vec![0.0; model.num_classes()];
    for h in &hits {
        let span = Span::new(h.start, h.start + phrase.len());
        for (a, v) in acc.iter_mut().zip(occlusion_diff(model, &corpus[h.sentence], span)) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= hits.len() as f64);
    Ok(AttributionScore::new(acc, target))
}

/// Dispatches `query.method`.
pub fn attribute(
    model: &dyn SequenceModel,
    source: &ContextSource<'_>,
    seq: &[TokenId],
    query: &AttributionQuery,
) -> Result<AttributionScore> {
    query.phrase.check(seq.len())?;
    if query.method.uses_context() && query.samples == 0 {
        return Err(Error::Empty("sample count K"));
    }
    let mut score = match query.method {
        Method::Soc => return soc(model, source, seq, query),
        Method::Scd => return scd_score(model, source, seq, query),
        Method::Occlusion => input_occlusion(model, seq, query.phrase)?,
        Method::DirectFeed => direct_feed(model, seq, query.phrase)?,
        Method::Statistic => statistic_importance(model, source.corpus, seq, query.phrase)?,
        Method::Cd | Method::Acd => {
            let m = if query.method == Method::Cd {
                DecompMethod::CD
            } else {
                DecompMethod::ACD
            };
            let out = decompose(lstm_of(model, query.method)?, seq, query.phrase, m, None)?;
            let mut s = AttributionScore::new(out.phrase, 0);
            s.bias = Some(out.bias);
            s
        }
    };
    let target = resolve_target(model, seq, query.target)?;
    score.target_class = target;
    score.value = score.per_class[target];
    Ok(score)
}
