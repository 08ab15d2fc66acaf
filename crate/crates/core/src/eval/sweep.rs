use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{word_rho, LinearSurrogate};
use crate::corpus::TokenSeq;
use crate::error::{Error, Result};
use crate::hierarchy::PhraseScorer;
use crate::sampler::SamplerKind;

/// One grid point handed to the scorer factory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub context_size: usize,
    pub samples: usize,
    pub seed: u64,
    pub sampler: SamplerKind,
}

/// Word ρ per seed at one (N, K, sampler) setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub context_size: usize,
    pub samples: usize,
    pub sampler: SamplerKind,
    pub seeds: Vec<u64>,
    pub word_rho: Vec<f64>,
    pub mean: f64,
    /// Unbiased variance across seeds; 0 for a single seed.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub method: String,
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub cells: Vec<SweepCell>,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Word ρ over the full N × K × seed grid, once with `sampler` and once with
/// the padding sampler at every point.
#[allow(clippy::too_many_arguments)]
pub fn sweep<S, F>(
    factory: F,
    method: &str,
    sampler: SamplerKind,
    surrogate: &LinearSurrogate,
    eval_set: &[TokenSeq],
    n_values: &[usize],
    k_values: &[usize],
    seeds: &[u64],
) -> Result<SweepReport>
where
    S: PhraseScorer,
    F: Fn(&SweepPoint) -> Result<S>,
{
    if n_values.is_empty() || k_values.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let mut samplers = vec![sampler];
    if sampler != SamplerKind::Padding {
        samplers.push(SamplerKind::Padding);
    }
    let mut cells = Vec::new();
    for &n in n_values {
        for &k in k_values {
            for &smp in &samplers {
                let rhos = seeds
                    .iter()
                    .map(|&seed| {
                        let point = SweepPoint {
                            context_size: n,
                            samples: k,
                            seed,
                            sampler: smp,
                        };
                        word_rho(&factory(&point)?, surrogate, eval_set)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (mean, variance) = mean_var(&rhos);
                cells.push(SweepCell {
                    context_size: n,
                    samples: k,
                    sampler: smp,
                    seeds: seeds.to_vec(),
                    word_rho: rhos,
                    mean,
                    variance,
                });
            }
        }
    }
    Ok(SweepReport {
        method: method.to_string(),
        n_values: n_values.to_vec(),
        k_values: k_values.to_vec(),
        seeds: seeds.to_vec(),
        cells,
    })
}

impl SweepReport {
    /// One row per (cell, seed). The method column carries the sampler.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,K,seed,method,word_rho,variance\n");
        for c in &self.cells {
            for (seed, rho) in c.seeds.iter().zip(&c.word_rho) {
                let _ = writeln!(
                    out,
                    "{},{},{},{}/{},{},{}",
                    c.context_size,
                    c.samples,
                    seed,
                    self.method,
                    c.sampler.name(),
                    rho,
                    c.variance
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::AttributionScore;
    use crate::corpus::{LabeledExample, Span, TokenId};
    use crate::eval::SurrogateConfig;
    use crate::numerics::Rng;

    fn setup() -> (LinearSurrogate, Vec<TokenSeq>) {
        let data: Vec<LabeledExample> = [(vec![5, 7], 1), (vec![6, 7], 0), (vec![5, 8], 1), (vec![6, 8, 7], 0)]
            .into_iter()
            .map(|(ids, label)| LabeledExample {
                seq: TokenSeq::new(ids).unwrap(),
                label,
            })
            .collect();
        let s = LinearSurrogate::fit(&data, 9, 2, &SurrogateConfig::default()).unwrap();
        (s, data.into_iter().map(|d| d.seq).collect())
    }

    /// Coefficient plus seeded noise that shrinks with K.
    fn noisy<'a>(
        s: &'a LinearSurrogate,
        p: &SweepPoint,
    ) -> impl Fn(&[TokenId], Span) -> Result<AttributionScore> + Sync + 'a {
        let p = *p;
        move |seq, span| {
            let tok = seq[span.start];
            let mut rng = Rng::derive(p.seed, (span.start * 31 + tok as usize) as u64);
            let noise = (rng.uniform() - 0.5) / p.samples as f64;
            let v = s.word_reference(tok, 1) + noise;
            Ok(AttributionScore::new(vec![0.0, v], 1))
        }
    }

    #[test]
    fn grid_covers_cross_product_with_padding_variant() {
        let (s, eval) = setup();
        let rep = sweep(
            |p| Ok(noisy(&s, p)),
            "soc",
            SamplerKind::Lm,
            &s,
            &eval,
            &[1, 2],
            &[5, 20],
            &[0, 1, 2],
        )
        .unwrap();
        assert_eq!(rep.cells.len(), 2 * 2 * 2);
        assert_eq!(rep.to_csv().lines().count(), 1 + 8 * 3);
        assert!(rep
            .to_csv()
            .starts_with("N,K,seed,method,word_rho,variance\n1,5,0,soc/lm,"));
        assert!(rep.cells.iter().any(|c| c.sampler == SamplerKind::Padding));
        for c in &rep.cells {
            assert!(c.variance >= 0.0);
            assert!(c.word_rho.iter().all(|r| (-1.0..=1.0).contains(r)));
        }
    }

    #[test]
    fn single_point_and_determinism() {
        let (s, eval) = setup();
        let run = || {
            sweep(
                |p| Ok(noisy(&s, p)),
                "soc",
                SamplerKind::Padding,
                &s,
                &eval,
                &[3],
                &[4],
                &[9],
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a.cells.len(), 1);
        assert_eq!(a.cells[0].variance, 0.0);
        assert_eq!(a.to_csv(), run().to_csv());
    }

    #[test]
    fn empty_grid_is_an_error() {
        let (s, eval) = setup();
        let r = sweep(|p| Ok(noisy(&s, p)), "soc", SamplerKind::Lm, &s, &eval, &[], &[4], &[0]);
        assert!(matches!(r, Err(Error::Empty(_))));
    }

    #[test]
    fn mean_var_matches_hand_values() {
        assert_eq!(mean_var(&[1.0, 2.0, 3.0]), (2.0, 1.0));
        assert_eq!(mean_var(&[4.0]), (4.0, 0.0));
    }
}
