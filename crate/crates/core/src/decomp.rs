//! Contextual decomposition of an LSTM forward pass.
//!
//! Every intermediate vector `h` is split into a phrase part `beta`, a
//! context part `gamma` and a bias part `zeta`. The rules differ per method
//! (CD, ACD, SCD) but `gamma` is always the exact remainder, so
//! `beta + gamma + zeta == h` up to rounding at every layer.

use serde::{Deserialize, Serialize};

use crate::corpus::{Span, TokenId};
use crate::error::{Error, Result};
use crate::model::{Gate, LstmParams, TraceStep};
use crate::numerics::{matvec, ActivationKind, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomp {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl Decomp {
    pub fn zeros(n: usize) -> Self {
        Decomp {
            beta: vec![0.0; n],
            gamma: vec![0.0; n],
            zeta: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn total(&self) -> Vec<f64> {
        (0..self.len())
            .map(|j| self.beta[j] + self.gamma[j] + self.zeta[j])
            .collect()
    }

    /// Largest `|beta + gamma + zeta - h|` over all dimensions.
    pub fn reconstruction_error(&self, h: &[f64]) -> f64 {
        self.total()
            .iter()
            .zip(h)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_len(&self) -> Result<()> {
        let n = self.beta.len();
        for found in [self.gamma.len(), self.zeta.len()] {
            if found != n {
                return Err(Error::Dimension {
                    op: "decomposition components",
                    expected: n,
                    found,
                });
            }
        }
        Ok(())
    }

    fn sum(a: &Decomp, b: &Decomp) -> Decomp {
        let add = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + q).collect();
        Decomp {
            beta: add(&a.beta, &b.beta),
            gamma: add(&a.gamma, &b.gamma),
            zeta: add(&a.zeta, &b.zeta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecompMethod {
    CD,
    ACD,
    SCD,
}

impl DecompMethod {
    pub fn name(self) -> &'static str {
        match self {
            DecompMethod::CD => "cd",
            DecompMethod::ACD => "acd",
            DecompMethod::SCD => "scd",
        }
    }
}

pub fn cd_linear(x: &[f64], w: &Mat, b: &[f64], in_phrase: bool) -> Result<Decomp> {
    let wx = matvec(w, x)?;
    if b.len() != wx.len() {
        return Err(Error::Dimension {
            op: "cd_linear bias",
            expected: wx.len(),
            found: b.len(),
        });
    }
    let zero = vec![0.0; wx.len()];
    let (beta, gamma) = if in_phrase { (wx, zero) } else { (zero, wx) };
    Ok(Decomp {
        beta,
        gamma,
        zeta: b.to_vec(),
    })
}

pub fn cd_multiply(a: &Decomp, b: &Decomp) -> Result<Decomp> {
    a.check_len()?;
    b.check_len()?;
    if a.len() != b.len() {
        return Err(Error::Dimension {
            op: "cd_multiply",
            expected: a.len(),
            found: b.len(),
        });
    }
    let (ta, tb) = (a.total(), b.total());
    let mut out = Decomp::zeros(a.len());
    for j in 0..a.len() {
        let beta = a.beta[j] * b.beta[j] + a.beta[j] * b.zeta[j] + a.zeta[j] * b.beta[j];
        let zeta = a.zeta[j] * b.zeta[j];
        out.beta[j] = beta;
        out.zeta[j] = zeta;
        out.gamma[j] = ta[j] * tb[j] - beta - zeta;
    }
    Ok(out)
}

pub fn cd_activation(d: &Decomp, kind: ActivationKind) -> Decomp {
    let s = |v: f64| kind.eval(v);
    let mut out = Decomp::zeros(d.len());
    for j in 0..d.len() {
        let (b, g, z) = (d.beta[j], d.gamma[j], d.zeta[j]);
        let full = s(b + g + z);
        let beta = 0.5 * (full - s(g + z)) + 0.5 * (s(b + z) - s(z));
        let zeta = s(z);
        out.beta[j] = beta;
        out.zeta[j] = zeta;
        out.gamma[j] = full - beta - zeta;
    }
    out
}

/// ACD activation; expects `zeta` already merged (it is ignored).
pub fn acd_activation(d: &Decomp, kind: ActivationKind) -> Decomp {
    let s = |v: f64| kind.eval(v);
    let mut out = Decomp::zeros(d.len());
    for j in 0..d.len() {
        out.beta[j] = s(d.beta[j]);
        out.gamma[j] = s(d.beta[j] + d.gamma[j]) - out.beta[j];
    }
    out
}

/// ACD linear layer: the bias is shared between `beta` and `gamma` in
/// proportion to `|Wβ|` and `|Wγ|` per dimension, half each when both are 0.
pub fn acd_linear(d: &Decomp, w: &Mat, b: &[f64]) -> Result<Decomp> {
    let wb = matvec(w, &d.beta)?;
    let wg = matvec(w, &d.gamma)?;
    if b.len() != wb.len() {
        return Err(Error::Dimension {
            op: "acd_linear bias",
            expected: wb.len(),
            found: b.len(),
        });
    }
    let mut out = Decomp::zeros(wb.len());
    for j in 0..wb.len() {
        let denom = wb[j].abs() + wg[j].abs();
        let share = if denom == 0.0 { 0.5 } else { wb[j].abs() / denom };
        out.beta[j] = wb[j] + share * b[j];
        out.gamma[j] = wg[j] + (1.0 - share) * b[j];
    }
    Ok(out)
}

fn weighted_mean<F>(weights: &[f64], n: usize, mut term: F) -> Vec<f64>
where
    F: FnMut(usize, usize) -> f64,
{
    let total: f64 = weights.iter().sum();
    (0..n)
        .map(|j| weights.iter().enumerate().map(|(s, w)| w * term(s, j)).sum::<f64>() / total)
        .collect()
}

fn check_samples(samples: &[&[f64]], weights: &[f64], n: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("activation sample set"));
    }
    if weights.len() != samples.len() {
        return Err(Error::Dimension {
            op: "sample weights",
            expected: samples.len(),
            found: weights.len(),
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != n) {
        return Err(Error::Dimension {
            op: "activation sample",
            expected: n,
            found: bad.len(),
        });
    }
    Ok(())
}

/// SCD activation: `beta' = E[σ(h) − σ(h − β)]` over recorded inputs `h`,
/// `gamma' = σ(h_actual) − beta'`, no bias part.
pub fn scd_activation(
    beta: &[f64],
    samples: &[&[f64]],
    weights: &[f64],
    kind: ActivationKind,
    h_actual: &[f64],
) -> Result<Decomp> {
    let n = beta.len();
    check_samples(samples, weights, n)?;
    if h_actual.len() != n {
        return Err(Error::Dimension {
            op: "scd_activation",
            expected: n,
            found: h_actual.len(),
        });
    }
    let b = weighted_mean(weights, n, |s, j| {
        if beta[j] == 0.0 {
            0.0
        } else {
            kind.eval(samples[s][j]) - kind.eval(samples[s][j] - beta[j])
        }
    });
    let gamma = (0..n).map(|j| kind.eval(h_actual[j]) - b[j]).collect();
    Ok(Decomp {
        beta: b,
        gamma,
        zeta: vec![0.0; n],
    })
}

/// SCD elementwise product: with sampled operands `h1`, `h2` and
/// `γ = h − β`, `beta' = E[h1 ⊙ h2 − γ1 ⊙ γ2]`, `gamma' = a ⊙ b − beta'`.
#[allow(clippy::too_many_arguments)]
pub fn scd_multiply(
    beta_a: &[f64],
    beta_b: &[f64],
    samples_a: &[&[f64]],
    samples_b: &[&[f64]],
    weights: &[f64],
    actual_a: &[f64],
    actual_b: &[f64],
) -> Result<Decomp> {
    let n = beta_a.len();
    if samples_a.len() != samples_b.len() {
        return Err(Error::Dimension {
            op: "scd_multiply sample alignment",
            expected: samples_a.len(),
            found: samples_b.len(),
        });
    }
    check_samples(samples_a, weights, n)?;
    check_samples(samples_b, weights, n)?;
    for v in [beta_b, actual_a, actual_b] {
        if v.len() != n {
            return Err(Error::Dimension {
                op: "scd_multiply",
                expected: n,
                found: v.len(),
            });
        }
    }
    let b = weighted_mean(weights, n, |s, j| {
        let (h1, h2) = (samples_a[s][j], samples_b[s][j]);
        h1 * h2 - (h1 - beta_a[j]) * (h2 - beta_b[j])
    });
    let gamma = (0..n).map(|j| actual_a[j] * actual_b[j] - b[j]).collect();
    Ok(Decomp {
        beta: b,
        gamma,
        zeta: vec![0.0; n],
    })
}

/// Forward traces of sampled-context sequences with their weights.
///
/// All traces share the length of the explained sequence, so timestep `t`
/// of every trace is an aligned recording of the same activation sites.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSampleSet {
    traces: Vec<Vec<TraceStep>>,
    weights: Vec<f64>,
}

impl ActivationSampleSet {
    pub fn new(traces: Vec<Vec<TraceStep>>, weights: Vec<f64>) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::Empty("activation sample set"));
        }
        if weights.len() != traces.len() {
            return Err(Error::Dimension {
                op: "sample weights",
                expected: traces.len(),
                found: weights.len(),
            });
        }
        let len = traces[0].len();
        if let Some(t) = traces.iter().find(|t| t.len() != len) {
            return Err(Error::Dimension {
                op: "sampled sequence length",
                expected: len,
                found: t.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Empty("positive sample weight"));
        }
        Ok(ActivationSampleSet { traces, weights })
    }

    /// Records a forward pass for each sequence.
    pub fn record(params: &LstmParams, seqs: &[Vec<TokenId>], weights: Vec<f64>) -> Result<Self> {
        let traces = seqs.iter().map(|s| params.trace(s)).collect();
        ActivationSampleSet::new(traces, weights)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.traces[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn traces(&self) -> &[Vec<TraceStep>] {
        &self.traces
    }

    fn site<'a>(&'a self, t: usize, get: impl Fn(&'a TraceStep) -> &'a [f64]) -> Vec<&'a [f64]> {
        self.traces.iter().map(|tr| get(&tr[t])).collect()
    }
}

/// Decomposition of every intermediate value of one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecomp {
    pub pre: [Decomp; 4],
    pub gates: [Decomp; 4],
    pub forget_term: Decomp,
    pub input_term: Decomp,
    pub cell: Decomp,
    pub tanh_cell: Decomp,
    pub hidden: Decomp,
}

impl StepDecomp {
    /// Worst reconstruction error against the undecomposed trace.
    pub fn reconstruction_error(&self, actual: &TraceStep, c_prev: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            worst = worst.max(self.pre[k].reconstruction_error(&actual.pre[k]));
            worst = worst.max(self.gates[k].reconstruction_error(&actual.gates[k]));
        }
        let f = &actual.gates[Gate::Forget as usize];
        let i = &actual.gates[Gate::Input as usize];
        let g = &actual.gates[Gate::Cell as usize];
        let fc: Vec<f64> = f.iter().zip(c_prev).map(|(a, b)| a * b).collect();
        let ig: Vec<f64> = i.iter().zip(g).map(|(a, b)| a * b).collect();
        worst
            .max(self.forget_term.reconstruction_error(&fc))
            .max(self.input_term.reconstruction_error(&ig))
            .max(self.cell.reconstruction_error(&actual.cell))
            .max(self.tanh_cell.reconstruction_error(&actual.tanh_cell))
            .max(self.hidden.reconstruction_error(&actual.hidden))
    }
}

/// Head contributions of the final hidden decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadContribution {
    /// `W_l β_T`, the phrase score per class.
    pub phrase: Vec<f64>,
    /// `W_l ζ_T`, reported separately and never folded into the score.
    pub bias: Vec<f64>,
}

/// Full decomposed forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompTrace {
    pub steps: Vec<StepDecomp>,
    pub trace: Vec<TraceStep>,
}

impl DecompTrace {
    pub fn max_reconstruction_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (t, (d, actual)) in self.steps.iter().zip(&self.trace).enumerate() {
            let zeros = vec![0.0; actual.cell.len()];
            let c_prev = if t == 0 { &zeros } else { &self.trace[t - 1].cell };
            worst = worst.max(d.reconstruction_error(actual, c_prev));
        }
        worst
    }
}

fn split_input(params: &LstmParams, x: &[f64], in_phrase: bool, h: &Decomp) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d_e = x.len();
    let mut ub = vec![0.0; d_e + h.len()];
    let mut ug = vec![0.0; d_e + h.len()];
    let mut uz = vec![0.0; d_e + h.len()];
    if in_phrase {
        ub[..d_e].copy_from_slice(x);
    } else {
        ug[..d_e].copy_from_slice(x);
    }
    ub[d_e..].copy_from_slice(&h.beta);
    ug[d_e..].copy_from_slice(&h.gamma);
    uz[d_e..].copy_from_slice(&h.zeta);
    debug_assert_eq!(ub.len(), params.gate_weights[0].cols());
    (ub, ug, uz)
}

/// Runs the decomposition through the whole recurrence.
///
/// SCD requires `samples` with one aligned trace per sampled context; CD and
/// ACD reject them.
pub fn decompose_trace(
    params: &LstmParams,
    ids: &[TokenId],
    phrase: Span,
    method: DecompMethod,
    samples: Option<&ActivationSampleSet>,
) -> Result<DecompTrace> {
    phrase.check(ids.len())?;
    match (method, samples) {
        (DecompMethod::SCD, None) => {
            return Err(Error::MethodMismatch {
                method: "scd".into(),
                reason: "requires an activation sample set".into(),
            })
        }
        (DecompMethod::CD | DecompMethod::ACD, Some(_)) => {
            return Err(Error::MethodMismatch {
                method: method.name().into(),
                reason: "does not take activation samples".into(),
            })
        }
        (DecompMethod::SCD, Some(s)) if s.seq_len() != ids.len() => {
            return Err(Error::Dimension {
                op: "sampled sequence length",
                expected: ids.len(),
                found: s.seq_len(),
            })
        }
        _ => {}
    }

    let trace = params.trace(ids);
    let d_h = params.hidden_dim();
    let mut h = Decomp::zeros(d_h);
    let mut c = Decomp::zeros(d_h);
    let zeros = vec![0.0; d_h];
    let mut steps = Vec::with_capacity(ids.len());

    for (t, &id) in ids.iter().enumerate() {
        let actual = &trace[t];
        let x = params.embedding.row(id as usize);
        let (ub, ug, uz) = split_input(params, x, phrase.contains(t), &h);
        let c_prev_actual: &[f64] = if t == 0 { &zeros } else { &trace[t - 1].cell };

        let pre: [Decomp; 4] = match method {
            DecompMethod::ACD => {
                let input = Decomp {
                    beta: ub,
                    gamma: ug,
                    zeta: uz,
                };
                let mut out = Vec::with_capacity(4);
                for k in 0..4 {
                    out.push(acd_linear(&input, &params.gate_weights[k], &params.gate_biases[k])?);
                }
                out.try_into().expect("four gates")
            }
            _ => {
                let mut out = Vec::with_capacity(4);
                for k in 0..4 {
                    let w = &params.gate_weights[k];
                    let mut zeta = matvec(w, &uz)?;
                    for (z, b) in zeta.iter_mut().zip(&params.gate_biases[k]) {
                        *z += b;
                    }
                    out.push(Decomp {
                        beta: matvec(w, &ub)?,
                        gamma: matvec(w, &ug)?,
                        zeta,
                    });
                }
                out.try_into().expect("four gates")
            }
        };

        let step = match (method, samples) {
            (DecompMethod::SCD, Some(s)) => {
                let w = s.weights();
                let mut gates = Vec::with_capacity(4);
                for g in Gate::ALL {
                    let k = g as usize;
                    let site = s.site(t, |st| &st.pre[k]);
                    gates.push(scd_activation(&pre[k].beta, &site, w, g.activation(), &actual.pre[k])?);
                }
                let gates: [Decomp; 4] = gates.try_into().expect("four gates");
                let (fi, ii, oi, gi) = (
                    Gate::Forget as usize,
                    Gate::Input as usize,
                    Gate::Output as usize,
                    Gate::Cell as usize,
                );
                let prev_cells: Vec<&[f64]> = if t == 0 {
                    vec![&zeros[..]; s.len()]
                } else {
                    s.site(t - 1, |st| &st.cell)
                };
                let forget_term = scd_multiply(
                    &gates[fi].beta,
                    &c.beta,
                    &s.site(t, |st| &st.gates[fi]),
                    &prev_cells,
                    w,
                    &actual.gates[fi],
                    c_prev_actual,
                )?;
                let input_term = scd_multiply(
                    &gates[ii].beta,
                    &gates[gi].beta,
                    &s.site(t, |st| &st.gates[ii]),
                    &s.site(t, |st| &st.gates[gi]),
                    w,
                    &actual.gates[ii],
                    &actual.gates[gi],
                )?;
                let cell = Decomp::sum(&forget_term, &input_term);
                let tanh_cell = scd_activation(
                    &cell.beta,
                    &s.site(t, |st| &st.cell),
                    w,
                    ActivationKind::Tanh,
                    &actual.cell,
                )?;
                let hidden = scd_multiply(
                    &gates[oi].beta,
                    &tanh_cell.beta,
                    &s.site(t, |st| &st.gates[oi]),
                    &s.site(t, |st| &st.tanh_cell),
                    w,
                    &actual.gates[oi],
                    &actual.tanh_cell,
                )?;
                StepDecomp {
                    pre,
                    gates,
                    forget_term,
                    input_term,
                    cell,
                    tanh_cell,
                    hidden,
                }
            }
            _ => {
                let act = |d: &Decomp, kind| match method {
                    DecompMethod::ACD => acd_activation(d, kind),
                    _ => cd_activation(d, kind),
                };
                let gates: [Decomp; 4] = std::array::from_fn(|k| act(&pre[k], Gate::ALL[k].activation()));
                let forget_term = cd_multiply(&gates[Gate::Forget as usize], &c)?;
                let input_term = cd_multiply(&gates[Gate::Input as usize], &gates[Gate::Cell as usize])?;
                let cell = Decomp::sum(&forget_term, &input_term);
                let tanh_cell = act(&cell, ActivationKind::Tanh);
                let hidden = cd_multiply(&gates[Gate::Output as usize], &tanh_cell)?;
                StepDecomp {
                    pre,
                    gates,
                    forget_term,
                    input_term,
                    cell,
                    tanh_cell,
                    hidden,
                }
            }
        };
        h = step.hidden.clone();
        c = step.cell.clone();
        steps.push(step);
    }
    Ok(DecompTrace { steps, trace })
}

/// Phrase score `W_l β_T` per class, with `W_l ζ_T` alongside.
pub fn decompose(
    params: &LstmParams,
    ids: &[TokenId],
    phrase: Span,
    method: DecompMethod,
    samples: Option<&ActivationSampleSet>,
) -> Result<HeadContribution> {
    let dt = decompose_trace(params, ids, phrase, method, samples)?;
    let last = &dt.steps.last().expect("non-empty sequence").hidden;
    Ok(HeadContribution {
        phrase: matvec(&params.head, &last.beta)?,
        bias: matvec(&params.head, &last.zeta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PAD;
    use crate::model::Dims;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn dec(beta: &[f64], gamma: &[f64], zeta: &[f64]) -> Decomp {
        Decomp {
            beta: beta.to_vec(),
            gamma: gamma.to_vec(),
            zeta: zeta.to_vec(),
        }
    }

    #[test]
    fn cd_linear_examples() {
        let w = Mat::identity(1);
        assert_eq!(
            cd_linear(&[2.0], &w, &[1.0], true).unwrap(),
            dec(&[2.0], &[0.0], &[1.0])
        );
        assert_eq!(
            cd_linear(&[2.0], &w, &[1.0], false).unwrap(),
            dec(&[0.0], &[2.0], &[1.0])
        );
        assert_eq!(cd_linear(&[0.0], &w, &[0.0], true).unwrap(), Decomp::zeros(1));
        assert!(cd_linear(&[1.0, 2.0], &w, &[0.0], true).is_err());
    }

    #[test]
    fn cd_multiply_examples() {
        let m = cd_multiply(&dec(&[1.0], &[2.0], &[0.0]), &dec(&[3.0], &[4.0], &[0.0])).unwrap();
        assert_eq!(m, dec(&[3.0], &[18.0], &[0.0]));
        let m = cd_multiply(&dec(&[0.0], &[0.0], &[1.5]), &dec(&[0.0], &[0.0], &[-2.0])).unwrap();
        assert_eq!(m, dec(&[0.0], &[0.0], &[-3.0]));
        let m = cd_multiply(&dec(&[2.0], &[0.0], &[3.0]), &dec(&[5.0], &[0.0], &[7.0])).unwrap();
        assert_eq!(m, dec(&[2.0 * 5.0 + 2.0 * 7.0 + 3.0 * 5.0], &[0.0], &[21.0]));
        assert!(cd_multiply(&Decomp::zeros(1), &Decomp::zeros(2)).is_err());
    }

    #[test]
    fn cd_activation_examples() {
        let d = dec(&[0.0, 0.0], &[1.3, -0.4], &[0.2, 0.9]);
        for kind in [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::ReLU] {
            assert!(cd_activation(&d, kind).beta.iter().all(|&b| b == 0.0));
        }
        let d = dec(&[0.7], &[-1.1], &[0.4]);
        assert_eq!(cd_activation(&d, ActivationKind::Identity), d);
        let r = cd_activation(&dec(&[2.0], &[-3.0], &[0.0]), ActivationKind::ReLU);
        assert_eq!(r.beta, vec![1.0]);
    }

    #[test]
    fn acd_examples() {
        let r = acd_activation(&dec(&[-1.0], &[5.0], &[0.0]), ActivationKind::ReLU);
        assert_eq!(r, dec(&[0.0], &[4.0], &[0.0]));
        let r = acd_activation(&dec(&[0.3], &[0.0], &[0.0]), ActivationKind::Tanh);
        assert_eq!(r.gamma, vec![0.0]);
        let d = dec(&[0.3], &[-0.8], &[0.0]);
        assert_eq!(acd_activation(&d, ActivationKind::Identity), d);

        let w = Mat::from_rows(&[&[1.0]]).unwrap();
        assert_eq!(
            acd_linear(&dec(&[2.0], &[2.0], &[0.0]), &w, &[1.0]).unwrap(),
            dec(&[2.5], &[2.5], &[0.0])
        );
        assert_eq!(
            acd_linear(&dec(&[2.0], &[0.0], &[0.0]), &w, &[1.0]).unwrap(),
            dec(&[3.0], &[0.0], &[0.0])
        );
        assert_eq!(
            acd_linear(&dec(&[0.0], &[0.0], &[0.0]), &w, &[2.0]).unwrap(),
            dec(&[1.0], &[1.0], &[0.0])
        );
    }

    #[test]
    fn scd_activation_examples() {
        let relu = ActivationKind::ReLU;
        let h = [0.6];
        let r = scd_activation(&[0.9], &[&h], &[1.0], ActivationKind::Sigmoid, &h).unwrap();
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        assert!((r.beta[0] - (s(0.6) - s(0.6 - 0.9))).abs() < 1e-15);
        let r = scd_activation(&[0.0], &[&[3.0], &[-2.0]], &[0.5, 0.5], relu, &[1.0]).unwrap();
        assert_eq!(r.beta, vec![0.0]);
        let r = scd_activation(&[1.0], &[&[-1.0], &[2.0]], &[0.5, 0.5], relu, &[2.0]).unwrap();
        assert_eq!(r.beta, vec![0.5]);
        assert_eq!(r.gamma, vec![1.5]);
        assert!(matches!(
            scd_activation(&[1.0], &[], &[], relu, &[1.0]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn scd_multiply_examples() {
        // single sample equal to the actual operands, gamma = 0
        let r = scd_multiply(&[2.0], &[3.0], &[&[2.0]], &[&[3.0]], &[1.0], &[2.0], &[3.0]).unwrap();
        assert_eq!(r.beta, vec![6.0]);
        let r = scd_multiply(&[0.0], &[0.0], &[&[4.0]], &[&[5.0]], &[1.0], &[4.0], &[5.0]).unwrap();
        assert_eq!(r.beta, vec![0.0]);
        // (β1, γ1) = (β2, γ2) = (1, 1): (1+1)(1+1) − 1·1
        let r = scd_multiply(&[1.0], &[1.0], &[&[2.0]], &[&[2.0]], &[1.0], &[2.0], &[2.0]).unwrap();
        assert_eq!(r.beta, vec![3.0]);
        assert_eq!(r.gamma, vec![1.0]);
        assert!(scd_multiply(&[1.0], &[1.0], &[&[2.0]], &[], &[1.0], &[2.0], &[2.0]).is_err());
    }

    fn random_params(seed: u64, bias: bool) -> LstmParams {
        let dims = Dims {
            vocab: 10,
            embed: 3,
            hidden: 4,
            classes: 2,
        };
        let mut rng = Rng::new(seed);
        let mut p = LstmParams::init(dims, 0.8, &mut rng);
        for w in p.gate_weights.iter_mut() {
            *w = Mat::uniform(4, 7, 1.2, &mut rng);
        }
        p.embedding = Mat::uniform(10, 3, 1.0, &mut rng);
        p.embedding.row_mut(PAD as usize).fill(0.0);
        for b in p.gate_biases.iter_mut() {
            if bias {
                b.iter_mut().for_each(|v| *v = rng.uniform_range(-0.5, 0.5));
            } else {
                b.fill(0.0);
            }
        }
        p
    }

    #[test]
    fn full_span_cd_without_biases_recovers_the_score() {
        for seed in 0..5 {
            let p = random_params(seed, false);
            let ids = [5, 7, 6, 9];
            let out = decompose(&p, &ids, Span::new(0, 4), DecompMethod::CD, None).unwrap();
            let s = p.forward(&ids).0;
            for c in 0..2 {
                assert!((out.phrase[c] - s[c]).abs() < 1e-9);
                assert!(out.bias[c].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_scores() {
        let p = LstmParams::zeros(Dims {
            vocab: 8,
            embed: 2,
            hidden: 3,
            classes: 2,
        });
        for m in [DecompMethod::CD, DecompMethod::ACD] {
            let out = decompose(&p, &[5, 6, 7], Span::new(1, 2), m, None).unwrap();
            assert_eq!(out.phrase, vec![0.0, 0.0]);
        }
        let s = ActivationSampleSet::record(&p, &[vec![5, 6, 7]], vec![1.0]).unwrap();
        let out = decompose(&p, &[5, 6, 7], Span::new(1, 2), DecompMethod::SCD, Some(&s)).unwrap();
        assert_eq!(out.phrase, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_traced_scalar_cd() {
        // d_e = d_h = 1, T = 2, phrase = token 0.
        let mut p = LstmParams::zeros(Dims {
            vocab: 7,
            embed: 1,
            hidden: 1,
            classes: 2,
        });
        p.embedding.set(5, 0, 0.8);
        p.embedding.set(6, 0, -0.5);
        let wx = [0.9, -0.4, 0.6, 1.1];
        let wh = [0.3, 0.5, -0.7, 0.2];
        let b = [0.1, 0.8, -0.1, 0.05];
        for k in 0..4 {
            p.gate_weights[k] = Mat::from_rows(&[&[wx[k], wh[k]]]).unwrap();
            p.gate_biases[k] = vec![b[k]];
        }
        p.head = Mat::from_rows(&[&[1.5], &[-2.0]]).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let tanh = |v: f64| v.tanh();
        // Eq-2 style activation split for scalars: returns (beta, gamma, zeta)
        let act = |f: &dyn Fn(f64) -> f64, bt: f64, gm: f64, zt: f64| {
            let beta = 0.5 * (f(bt + gm + zt) - f(gm + zt)) + 0.5 * (f(bt + zt) - f(zt));
            let zeta = f(zt);
            (beta, f(bt + gm + zt) - beta - zeta, zeta)
        };
        let mul = |a: (f64, f64, f64), c: (f64, f64, f64)| {
            let beta = a.0 * c.0 + a.0 * c.2 + a.2 * c.0;
            let zeta = a.2 * c.2;
            (beta, (a.0 + a.1 + a.2) * (c.0 + c.1 + c.2) - beta - zeta, zeta)
        };
        let add = |a: (f64, f64, f64), c: (f64, f64, f64)| (a.0 + c.0, a.1 + c.1, a.2 + c.2);

        // t = 0, x = 0.8 in phrase, h_prev = c_prev = 0
        let gate0 = |k: usize, f: &dyn Fn(f64) -> f64| act(f, wx[k] * 0.8, 0.0, b[k]);
        let (i0, f0, o0, g0) = (gate0(0, &sig), gate0(1, &sig), gate0(2, &sig), gate0(3, &tanh));
        let c0 = add(mul(f0, (0.0, 0.0, 0.0)), mul(i0, g0));
        let tc0 = act(&tanh, c0.0, c0.1, c0.2);
        let h0 = mul(o0, tc0);
        // t = 1, x = -0.5 outside the phrase
        let gate1 =
            |k: usize, f: &dyn Fn(f64) -> f64| act(f, wh[k] * h0.0, wx[k] * -0.5 + wh[k] * h0.1, b[k] + wh[k] * h0.2);
        let (i1, f1, o1, g1) = (gate1(0, &sig), gate1(1, &sig), gate1(2, &sig), gate1(3, &tanh));
        let c1 = add(mul(f1, c0), mul(i1, g1));
        let tc1 = act(&tanh, c1.0, c1.1, c1.2);
        let h1 = mul(o1, tc1);

        let out = decompose(&p, &[5, 6], Span::new(0, 1), DecompMethod::CD, None).unwrap();
        assert!((out.phrase[0] - 1.5 * h1.0).abs() < 1e-9);
        assert!((out.phrase[1] + 2.0 * h1.0).abs() < 1e-9);
        assert!((out.bias[0] - 1.5 * h1.2).abs() < 1e-9);
    }

    #[test]
    fn scd_with_only_the_original_trace_is_single_context() {
        // Independent single-context recursion: beta' = σ(h) − σ(h − β) at
        // every activation, beta' = a·b − (a − βa)(b − βb) at products.
        let p = random_params(21, true);
        let ids = [5, 8, 6, 7, 9];
        let phrase = Span::new(1, 3);
        let trace = p.trace(&ids);
        let d_h = 4;
        let d_e = 3;
        let (mut bh, mut bc) = (vec![0.0; d_h], vec![0.0; d_h]);
        for (t, &id) in ids.iter().enumerate() {
            let st = &trace[t];
            let x = p.embedding.row(id as usize);
            let c_prev = if t == 0 {
                vec![0.0; d_h]
            } else {
                trace[t - 1].cell.clone()
            };
            let mut bg = [vec![0.0; d_h], vec![0.0; d_h], vec![0.0; d_h], vec![0.0; d_h]];
            for k in 0..4 {
                let w = &p.gate_weights[k];
                for j in 0..d_h {
                    let mut z = 0.0;
                    if phrase.contains(t) {
                        z += (0..d_e).map(|e| w.get(j, e) * x[e]).sum::<f64>();
                    }
                    z += (0..d_h).map(|e| w.get(j, d_e + e) * bh[e]).sum::<f64>();
                    let act = Gate::ALL[k].activation();
                    bg[k][j] = act.eval(st.pre[k][j]) - act.eval(st.pre[k][j] - z);
                }
            }
            let pm = |a: f64, b: f64, ba: f64, bb: f64| a * b - (a - ba) * (b - bb);
            for j in 0..d_h {
                let (i, f, o, g) = (st.gates[0][j], st.gates[1][j], st.gates[2][j], st.gates[3][j]);
                let c = pm(f, c_prev[j], bg[1][j], bc[j]) + pm(i, g, bg[0][j], bg[3][j]);
                let tc = st.cell[j].tanh() - (st.cell[j] - c).tanh();
                bc[j] = c;
                bh[j] = pm(o, st.tanh_cell[j], bg[2][j], tc);
            }
        }
        let expected = matvec(&p.head, &bh).unwrap();
        let samples = ActivationSampleSet::new(vec![trace], vec![1.0]).unwrap();
        let out = decompose(&p, &ids, phrase, DecompMethod::SCD, Some(&samples)).unwrap();
        for c in 0..2 {
            assert!((out.phrase[c] - expected[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn method_sample_mismatch_is_an_error() {
        let p = random_params(1, true);
        let s = ActivationSampleSet::record(&p, &[vec![5, 6]], vec![1.0]).unwrap();
        assert!(matches!(
            decompose(&p, &[5, 6], Span::new(0, 1), DecompMethod::CD, Some(&s)),
            Err(Error::MethodMismatch { .. })
        ));
        assert!(matches!(
            decompose(&p, &[5, 6], Span::new(0, 1), DecompMethod::SCD, None),
            Err(Error::MethodMismatch { .. })
        ));
        assert!(decompose(&p, &[5, 6, 7], Span::new(0, 1), DecompMethod::SCD, Some(&s)).is_err());
        assert!(decompose(&p, &[5, 6], Span::new(1, 3), DecompMethod::CD, None).is_err());
    }

    #[test]
    fn pad_phrase_has_zero_scd_score() {
        let p = random_params(4, true);
        let ids = [5, PAD, 7];
        let seqs = vec![vec![5, PAD, 7], vec![8, PAD, 6], vec![9, PAD, 9]];
        let s = ActivationSampleSet::record(&p, &seqs, vec![1.0; 3]).unwrap();
        let out = decompose(&p, &ids, Span::new(1, 2), DecompMethod::SCD, Some(&s)).unwrap();
        assert_eq!(out.phrase, vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn every_engine_reconstructs_every_layer(
            seed in 0u64..1000,
            ids in proptest::collection::vec(1u32..10, 1..7),
            a in 0usize..6,
            len in 1usize..4,
            n_samples in 1usize..4,
        ) {
            let p = random_params(seed, true);
            let t = ids.len();
            let start = a % t;
            let phrase = Span::new(start, (start + len).min(t));
            let mut rng = Rng::new(seed ^ 0xabc);
            let seqs: Vec<Vec<TokenId>> = (0..n_samples)
                .map(|_| ids.iter().enumerate().map(|(k, &v)| if phrase.contains(k) { v } else { 5 + rng.below(5) as u32 }).collect())
                .collect();
            let weights: Vec<f64> = (0..n_samples).map(|_| rng.uniform() + 0.1).collect();
            let s = ActivationSampleSet::record(&p, &seqs, weights).unwrap();
            for (m, smp) in [(DecompMethod::CD, None), (DecompMethod::ACD, None), (DecompMethod::SCD, Some(&s))] {
                let dt = decompose_trace(&p, &ids, phrase, m, smp).unwrap();
                prop_assert!(dt.max_reconstruction_error() <= 1e-6, "{:?}", m);
                if m == DecompMethod::ACD {
                    prop_assert!(dt.steps.iter().all(|st| st.hidden.zeta.iter().all(|&z| z == 0.0)));
                }
            }
        }

        #[test]
        fn null_beta_stays_null(
            g in proptest::collection::vec(-3.0f64..3.0, 1..5),
            z in proptest::collection::vec(-3.0f64..3.0, 1..5),
            hs in proptest::collection::vec(-3.0f64..3.0, 1..5),
        ) {
            let n = g.len().min(z.len()).min(hs.len());
            let d = Decomp { beta: vec![0.0; n], gamma: g[..n].to_vec(), zeta: z[..n].to_vec() };
            for kind in [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::ReLU, ActivationKind::Identity] {
                prop_assert!(cd_activation(&d, kind).beta.iter().all(|&b| b == 0.0));
                let r = scd_activation(&d.beta, &[&hs[..n]], &[1.0], kind, &hs[..n]).unwrap();
                prop_assert!(r.beta.iter().all(|&b| b == 0.0));
            }
        }
    }
}
