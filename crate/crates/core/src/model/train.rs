use serde::{Deserialize, Serialize};

use super::{dsigmoid_from_output, Dims, Gate, LmParams, LstmParams, TraceStep};
use crate::corpus::{LabeledExample, TokenId, TokenSeq, BOS, EOS, MASK, PAD};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, argmax, matvec_transposed, softmax, AdamConfig, AdamState, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    /// LM only: probability of replacing an input token with MASK.
    pub mask_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 16,
            hidden_dim: 32,
            epochs: 20,
            batch_size: 8,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            seed: 1,
            mask_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmTrainReport {
    pub forward_losses: Vec<f64>,
    pub backward_losses: Vec<f64>,
    pub forward_perplexity: f64,
    pub backward_perplexity: f64,
}

/// Back-propagation through time.
///
/// `ids` and `trace` describe one forward pass; `dhidden[t]` is the external
/// gradient on `h_t` (from whatever head sits on top). Gate and embedding
/// gradients are accumulated into `grads`; head gradients are the caller's.
pub fn backward(
    params: &LstmParams,
    ids: &[TokenId],
    trace: &[TraceStep],
    dhidden: &[Vec<f64>],
    grads: &mut LstmParams,
) {
    let d = params.dims();
    let mut dh_next = vec![0.0; d.hidden];
    let mut dc_next = vec![0.0; d.hidden];
    for t in (0..trace.len()).rev() {
        let step = &trace[t];
        let c_prev: &[f64] = if t > 0 { &trace[t - 1].cell } else { &[] };
        let (i, f, o, g) = (&step.gates[0], &step.gates[1], &step.gates[2], &step.gates[3]);
        let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; d.hidden]);
        for j in 0..d.hidden {
            let dh = dhidden[t][j] + dh_next[j];
            let do_ = dh * step.tanh_cell[j];
            let dc = dc_next[j] + dh * o[j] * (1.0 - step.tanh_cell[j] * step.tanh_cell[j]);
            let cp = if t > 0 { c_prev[j] } else { 0.0 };
            dz[Gate::Input as usize][j] = dc * g[j] * dsigmoid_from_output(i[j]);
            dz[Gate::Forget as usize][j] = dc * cp * dsigmoid_from_output(f[j]);
            dz[Gate::Output as usize][j] = do_ * dsigmoid_from_output(o[j]);
            dz[Gate::Cell as usize][j] = dc * i[j] * (1.0 - g[j] * g[j]);
            dc_next[j] = dc * f[j];
        }
        let mut dinput = vec![0.0; d.embed + d.hidden];
        for k in 0..4 {
            grads.gate_weights[k].add_outer(&dz[k], &step.input, 1.0);
            for (gb, z) in grads.gate_biases[k].iter_mut().zip(&dz[k]) {
                *gb += z;
            }
            let back = matvec_transposed(&params.gate_weights[k], &dz[k]).expect("gate shape");
            for (a, b) in dinput.iter_mut().zip(&back) {
                *a += b;
            }
        }
        let id = ids[t] as usize;
        if ids[t] != PAD {
            for (e, dx) in grads.embedding.row_mut(id).iter_mut().zip(&dinput[..d.embed]) {
                *e += dx;
            }
        }
        dh_next.copy_from_slice(&dinput[d.embed..]);
    }
}

fn cross_entropy_grad(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let loss = -p[target].max(1e-300).ln();
    p[target] -= 1.0;
    (loss, p)
}

/// Cross-entropy of one labelled sequence, with gradients added into `grads`
/// scaled by `scale`. Returns (loss, predicted class).
pub fn classifier_loss_and_grads(
    params: &LstmParams,
    ids: &[TokenId],
    label: usize,
    grads: &mut LstmParams,
    scale: f64,
) -> (f64, usize) {
    let (scores, trace) = params.forward(ids);
    let (loss, mut dscores) = cross_entropy_grad(&scores, label);
    dscores.iter_mut().for_each(|v| *v *= scale);
    let h_last = &trace.last().expect("non-empty sequence").hidden;
    grads.head.add_outer(&dscores, h_last, 1.0);
    for (gb, d) in grads.head_bias.iter_mut().zip(&dscores) {
        *gb += d;
    }
    let mut dhidden = vec![vec![0.0; params.hidden_dim()]; ids.len()];
    dhidden[ids.len() - 1] = matvec_transposed(&params.head, &dscores).expect("head shape");
    backward(params, ids, &trace, &dhidden, grads);
    (loss, argmax(&scores))
}

/// Next-token cross-entropy summed over positions: `inputs[t]` predicts
/// `targets[t]`. Gradients are scaled by `scale`. Returns the summed loss.
pub fn lm_loss_and_grads(
    params: &LstmParams,
    inputs: &[TokenId],
    targets: &[TokenId],
    grads: &mut LstmParams,
    scale: f64,
) -> f64 {
    let trace = params.trace(inputs);
    let mut total = 0.0;
    let mut dhidden = Vec::with_capacity(inputs.len());
    for (step, &target) in trace.iter().zip(targets) {
        let logits = params.head_scores(&step.hidden);
        let (loss, mut dlogits) = cross_entropy_grad(&logits, target as usize);
        total += loss;
        dlogits.iter_mut().for_each(|v| *v *= scale);
        grads.head.add_outer(&dlogits, &step.hidden, 1.0);
        for (gb, d) in grads.head_bias.iter_mut().zip(&dlogits) {
            *gb += d;
        }
        dhidden.push(matvec_transposed(&params.head, &dlogits).expect("head shape"));
    }
    backward(params, inputs, &trace, &dhidden, grads);
    total
}

fn grad_norm(grads: &LstmParams) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Clips, zeroes the PAD row and applies one Adam update.
fn apply_update(
    params: &mut LstmParams,
    grads: &mut LstmParams,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    grads.embedding.row_mut(PAD as usize).fill(0.0);
    if config.clip_norm > 0.0 {
        let norm = grad_norm(grads);
        if !norm.is_finite() {
            return Err(Error::Training("non-finite gradient".into()));
        }
        if norm > config.clip_norm {
            let s = config.clip_norm / norm;
            for t in grads.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    adam_step(&mut p, &g, state, &config.adam)
}

fn zero(grads: &mut LstmParams) {
    for t in grads.tensors_mut() {
        t.fill(0.0);
    }
}

fn adam_state_for(params: &LstmParams) -> AdamState {
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    AdamState::new(&sizes)
}

fn check_tokens(seq: &[TokenId], vocab_size: usize) -> Result<()> {
    match seq.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(Error::Dimension {
            op: "token id",
            expected: vocab_size,
            found: id as usize,
        }),
        None => Ok(()),
    }
}

/// Softmax cross-entropy training with mini-batch Adam.
///
/// Initialisation and shuffling come from `config.seed`, so the result is a
/// pure function of the inputs.
pub fn train_classifier(
    data: &[LabeledExample],
    vocab_size: usize,
    num_classes: usize,
    config: &TrainConfig,
) -> Result<(LstmParams, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if num_classes < 2 {
        return Err(Error::InvalidLabel {
            label: 0,
            classes: num_classes,
        });
    }
    for ex in data {
        if ex.label >= num_classes {
            return Err(Error::InvalidLabel {
                label: ex.label,
                classes: num_classes,
            });
        }
        check_tokens(&ex.seq, vocab_size)?;
    }
    let dims = Dims {
        vocab: vocab_size,
        embed: config.embed_dim,
        hidden: config.hidden_dim,
        classes: num_classes,
    };
    let mut rng = Rng::new(config.seed);
    let mut params = LstmParams::init(dims, 0.1, &mut rng);
    let mut grads = LstmParams::zeros(dims);
    let mut state = adam_state_for(&params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = config.batch_size.max(1);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            zero(&mut grads);
            let scale = 1.0 / chunk.len() as f64;
            for &k in chunk {
                let ex = &data[k];
                epoch_loss += classifier_loss_and_grads(&params, &ex.seq, ex.label, &mut grads, scale).0;
            }
            apply_update(&mut params, &mut grads, &mut state, config)?;
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Training("loss diverged".into()));
        }
        epoch_losses.push(mean);
    }

    let (final_loss, accuracy) = evaluate_classifier(&params, data);
    Ok((
        params,
        TrainReport {
            epoch_losses,
            final_loss,
            accuracy,
        },
    ))
}

/// Mean cross-entropy and accuracy over a labelled set.
pub fn evaluate_classifier(params: &LstmParams, data: &[LabeledExample]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in data {
        let s = params.forward(&ex.seq).0;
        loss += cross_entropy_grad(&s, ex.label).0;
        if argmax(&s) == ex.label {
            correct += 1;
        }
    }
    let n = data.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

/// Input/target pairs for the two LM directions.
pub(crate) fn lm_pairs(seq: &[TokenId]) -> [(Vec<TokenId>, Vec<TokenId>); 2] {
    let mut fwd_in = vec![BOS];
    fwd_in.extend_from_slice(seq);
    let mut fwd_out = seq.to_vec();
    fwd_out.push(EOS);
    let rev: Vec<TokenId> = seq.iter().rev().copied().collect();
    let mut bwd_in = vec![EOS];
    bwd_in.extend_from_slice(&rev);
    let mut bwd_out = rev;
    bwd_out.push(BOS);
    [(fwd_in, fwd_out), (bwd_in, bwd_out)]
}

/// Trains the forward and backward next-token models.
///
/// During training each content input token is replaced by MASK with
/// probability `mask_prob`, so the models learn to read masked positions.
pub fn train_lm(data: &[TokenSeq], vocab_size: usize, config: &TrainConfig) -> Result<(LmParams, LmTrainReport)> {
    if data.is_empty() {
        return Err(Error::Empty("language-model corpus"));
    }
    for s in data {
        check_tokens(s, vocab_size)?;
    }
    let dims = Dims {
        vocab: vocab_size,
        embed: config.embed_dim,
        hidden: config.hidden_dim,
        classes: vocab_size,
    };
    let mut rng = Rng::new(config.seed);
    let mut dirs = [
        LstmParams::init(dims, 0.0, &mut rng),
        LstmParams::init(dims, 0.0, &mut rng),
    ];
    let mut grads = [LstmParams::zeros(dims), LstmParams::zeros(dims)];
    let mut states = [adam_state_for(&dirs[0]), adam_state_for(&dirs[1])];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = config.batch_size.max(1);
    let mut losses: [Vec<f64>; 2] = [Vec::new(), Vec::new()];

    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut totals = [0.0; 2];
        let mut count = 0usize;
        for chunk in order.chunks(batch) {
            zero(&mut grads[0]);
            zero(&mut grads[1]);
            let tokens: usize = chunk.iter().map(|&k| data[k].len() + 1).sum();
            let scale = 1.0 / tokens as f64;
            for &k in chunk {
                for (dir, (mut inputs, targets)) in lm_pairs(&data[k]).into_iter().enumerate() {
                    for tok in inputs.iter_mut().skip(1) {
                        if config.mask_prob > 0.0 && rng.uniform() < config.mask_prob {
                            *tok = MASK;
                        }
                    }
                    totals[dir] += lm_loss_and_grads(&dirs[dir], &inputs, &targets, &mut grads[dir], scale);
                }
            }
            count += tokens;
            for dir in 0..2 {
                apply_update(&mut dirs[dir], &mut grads[dir], &mut states[dir], config)?;
            }
        }
        for dir in 0..2 {
            let mean = totals[dir] / count as f64;
            if !mean.is_finite() {
                return Err(Error::Training("language-model loss diverged".into()));
            }
            losses[dir].push(mean);
        }
    }

    let [forward, backward] = dirs;
    let lm = LmParams { forward, backward };
    let (fp, bp) = lm.perplexity(data);
    let [forward_losses, backward_losses] = losses;
    Ok((
        lm,
        LmTrainReport {
            forward_losses,
            backward_losses,
            forward_perplexity: fp,
            backward_perplexity: bp,
        },
    ))
}
