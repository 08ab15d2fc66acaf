//! One-layer LSTM classifier, the bidirectional LSTM language model used for
//! context sampling, their training loops and the on-disk container.

mod io;
mod lm;
mod train;

pub use io::{
    classifier_bytes, classifier_from_bytes, lm_bytes, lm_from_bytes, load_classifier, load_lm, save_classifier,
    save_lm, MAGIC,
};
pub use lm::{lm_next_dist, Direction, LmCursor, LmParams};
pub use train::{
    backward, classifier_loss_and_grads, evaluate_classifier, lm_loss_and_grads, train_classifier, train_lm,
    LmTrainReport, TrainConfig, TrainReport,
};

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, PAD};
use crate::numerics::{matvec, ActivationKind, Mat, Rng};

/// The four LSTM gates, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Cell = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    pub fn activation(self) -> ActivationKind {
        match self {
            Gate::Cell => ActivationKind::Tanh,
            _ => ActivationKind::Sigmoid,
        }
    }
}

/// Embedding, single LSTM layer and a linear head `s = W_l h_T + b_l`.
///
/// Each gate reads the concatenation `[x_t; h_{t-1}]`, so gate weights are
/// `d_h × (d_e + d_h)`. The PAD embedding row is held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub embedding: Mat,
    pub gate_weights: [Mat; 4],
    pub gate_biases: [Vec<f64>; 4],
    pub head: Mat,
    pub head_bias: Vec<f64>,
}

/// Intermediate values of one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub input: Vec<f64>,
    pub pre: [Vec<f64>; 4],
    pub gates: [Vec<f64>; 4],
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl LstmParams {
    pub fn zeros(d: Dims) -> Self {
        let cols = d.embed + d.hidden;
        LstmParams {
            embedding: Mat::zeros(d.vocab, d.embed),
            gate_weights: std::array::from_fn(|_| Mat::zeros(d.hidden, cols)),
            gate_biases: std::array::from_fn(|_| vec![0.0; d.hidden]),
            head: Mat::zeros(d.classes, d.hidden),
            head_bias: vec![0.0; d.classes],
        }
    }

    /// Random initialisation: embeddings U(-0.1, 0.1), gate weights
    /// U(-1/√d_h, 1/√d_h), forget bias 1, head U(-head_scale, head_scale),
    /// head bias 0.
    pub fn init(d: Dims, head_scale: f64, rng: &mut Rng) -> Self {
        let mut p = LstmParams::zeros(d);
        p.embedding = Mat::uniform(d.vocab, d.embed, 0.1, rng);
        p.embedding.row_mut(PAD as usize).fill(0.0);
        let k = 1.0 / (d.hidden as f64).sqrt();
        for w in p.gate_weights.iter_mut() {
            *w = Mat::uniform(d.hidden, d.embed + d.hidden, k, rng);
        }
        p.gate_biases[Gate::Forget as usize].fill(1.0);
        if head_scale > 0.0 {
            p.head = Mat::uniform(d.classes, d.hidden, head_scale, rng);
        }
        p
    }

    pub fn dims(&self) -> Dims {
        Dims {
            vocab: self.embedding.rows(),
            embed: self.embedding.cols(),
            hidden: self.gate_biases[0].len(),
            classes: self.head.rows(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gate_biases[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.head.rows()
    }

    /// Parameter tensors in the fixed order: embedding, four gate weights,
    /// four gate biases, head, head bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embedding.as_slice()];
        out.extend(self.gate_weights.iter().map(|w| w.as_slice()));
        out.extend(self.gate_biases.iter().map(|b| b.as_slice()));
        out.push(self.head.as_slice());
        out.push(&self.head_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_mut_slice()];
        out.extend(self.gate_weights.iter_mut().map(|w| w.as_mut_slice()));
        out.extend(self.gate_biases.iter_mut().map(|b| b.as_mut_slice()));
        out.push(self.head.as_mut_slice());
        out.push(&mut self.head_bias);
        out
    }

    /// `(rows, cols)` per tensor, vectors as `1 × n`.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut out = vec![self.embedding.shape()];
        out.extend(self.gate_weights.iter().map(|w| w.shape()));
        out.extend(self.gate_biases.iter().map(|b| (1, b.len())));
        out.push(self.head.shape());
        out.push((1, self.head_bias.len()));
        out
    }

    pub fn expected_shapes(d: Dims) -> Vec<(usize, usize)> {
        LstmParams::zeros(d).shapes()
    }

    /// Runs the recurrence from a zero state and records every timestep.
    pub fn trace(&self, ids: &[TokenId]) -> Vec<TraceStep> {
        let dh = self.hidden_dim();
        let mut h = vec![0.0; dh];
        let mut c = vec![0.0; dh];
        let mut steps = Vec::with_capacity(ids.len());
        for &id in ids {
            let step = self.step(self.embedding.row(id as usize), &h, &c);
            h.clone_from(&step.hidden);
            c.clone_from(&step.cell);
            steps.push(step);
        }
        steps
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> TraceStep {
        let mut input = Vec::with_capacity(x.len() + h_prev.len());
        input.extend_from_slice(x);
        input.extend_from_slice(h_prev);
        let pre: [Vec<f64>; 4] = std::array::from_fn(|k| {
            let mut z = matvec(&self.gate_weights[k], &input).expect("gate shape");
            for (zi, bi) in z.iter_mut().zip(&self.gate_biases[k]) {
                *zi += bi;
            }
            z
        });
        let gates: [Vec<f64>; 4] = std::array::from_fn(|k| {
            let act = Gate::ALL[k].activation();
            pre[k].iter().map(|&v| act.eval(v)).collect()
        });
        let (i, f, o, g) = (&gates[0], &gates[1], &gates[2], &gates[3]);
        let cell: Vec<f64> = (0..h_prev.len()).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let tanh_cell: Vec<f64> = cell.iter().map(|v| v.tanh()).collect();
        let hidden: Vec<f64> = o.iter().zip(&tanh_cell).map(|(a, b)| a * b).collect();
        TraceStep {
            input,
            pre,
            gates,
            cell,
            tanh_cell,
            hidden,
        }
    }

    pub fn head_scores(&self, hidden: &[f64]) -> Vec<f64> {
        let mut s = matvec(&self.head, hidden).expect("head shape");
        for (si, bi) in s.iter_mut().zip(&self.head_bias) {
            *si += bi;
        }
        s
    }

    /// Scores `W_l h_T + b_l` and the full trace.
    pub fn forward(&self, ids: &[TokenId]) -> (Vec<f64>, Vec<TraceStep>) {
        let trace = self.trace(ids);
        let h_last = trace
            .last()
            .map_or_else(|| vec![0.0; self.hidden_dim()], |s| s.hidden.clone());
        (self.head_scores(&h_last), trace)
    }
}

/// Anything that maps a token sequence to per-class scores.
pub trait SequenceModel: Sync {
    fn num_classes(&self) -> usize;

    fn scores(&self, ids: &[TokenId]) -> Vec<f64>;

    /// The underlying LSTM, for decomposition-based methods.
    fn lstm(&self) -> Option<&LstmParams> {
        None
    }
}

impl SequenceModel for LstmParams {
    fn num_classes(&self) -> usize {
        self.head.rows()
    }

    fn scores(&self, ids: &[TokenId]) -> Vec<f64> {
        self.forward(ids).0
    }

    fn lstm(&self) -> Option<&LstmParams> {
        Some(self)
    }
}

/// σ derivative expressed through its output.
#[inline]
pub(crate) fn dsigmoid_from_output(y: f64) -> f64 {
    y * (1.0 - y)
}
