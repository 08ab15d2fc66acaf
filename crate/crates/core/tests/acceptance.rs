//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

#![allow(clippy::needless_range_loop)]

use std::process::Command;
use std::time::Instant;

use hiexpl::attribution::{attribute, input_occlusion, soc, soc_draws, AttributionQuery, ContextSource, Method};
use hiexpl::corpus::{encode_examples, vocab_from_examples, LabeledExample, Span, TokenId, TokenSeq, NUM_RESERVED};
use hiexpl::decomp::{decompose_trace, ActivationSampleSet, DecompMethod};
use hiexpl::eval::{adversarial_experiment, word_rho, AdversarialConfig, LinearSurrogate, SurrogateConfig};
use hiexpl::hierarchy::MethodScorer;
use hiexpl::model::{
    classifier_loss_and_grads, lm_loss_and_grads, train_classifier, train_lm, Dims, LmParams, LstmParams, TrainConfig,
};
use hiexpl::numerics::{Mat, Rng};
use hiexpl::sampler::{draw_contexts, SamplerKind};
use hiexpl::synthetic::{sentiment_corpus, SyntheticConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_lstm(rng: &mut Rng, vocab: usize, embed: usize, hidden: usize, classes: usize) -> LstmParams {
    let d = Dims {
        vocab,
        embed,
        hidden,
        classes,
    };
    let mut p = LstmParams::init(d, 1.0, rng);
    p.embedding = Mat::uniform(vocab, embed, 1.0, rng);
    p.embedding.row_mut(0).fill(0.0);
    for b in p.gate_biases.iter_mut() {
        b.iter_mut().for_each(|v| *v = rng.uniform_range(-1.0, 1.0));
    }
    p.head_bias.iter_mut().for_each(|v| *v = rng.uniform_range(-1.0, 1.0));
    p
}

fn random_seq(rng: &mut Rng, vocab: usize, len: usize) -> Vec<TokenId> {
    (0..len)
        .map(|_| (NUM_RESERVED + rng.below(vocab - NUM_RESERVED)) as TokenId)
        .collect()
}

fn random_span(rng: &mut Rng, len: usize) -> Span {
    let start = rng.below(len);
    let end = start + 1 + rng.below(len - start);
    Span::new(start, end)
}

fn small_cfg(epochs: usize, hidden: usize) -> TrainConfig {
    TrainConfig {
        embed_dim: 8,
        hidden_dim: hidden,
        epochs,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

fn untrained_lm(vocab: usize) -> LmParams {
    let data = vec![TokenSeq::new(vec![NUM_RESERVED as TokenId]).unwrap()];
    train_lm(&data, vocab, &small_cfg(0, 4)).unwrap().0
}

fn criterion_1() -> Outcome {
    let mut rng = Rng::new(101);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let vocab = NUM_RESERVED + 2 + rng.below(6);
        let hidden = 1 + rng.below(8);
        let embed = 1 + rng.below(6);
        let classes = 2 + rng.below(2);
        let p = random_lstm(&mut rng, vocab, embed, hidden, classes);
        let len = 1 + rng.below(12);
        let seq = random_seq(&mut rng, vocab, len);
        let phrase = random_span(&mut rng, len);
        let seqs: Vec<Vec<TokenId>> = (0..1 + rng.below(6))
            .map(|_| random_seq(&mut rng, vocab, len))
            .collect();
        let weights: Vec<f64> = seqs.iter().map(|_| rng.uniform_range(0.1, 1.0)).collect();
        let samples = ActivationSampleSet::record(&p, &seqs, weights).unwrap();
        for (i, m) in [DecompMethod::CD, DecompMethod::ACD, DecompMethod::SCD]
            .into_iter()
            .enumerate()
        {
            let s = (m == DecompMethod::SCD).then_some(&samples);
            let err = decompose_trace(&p, &seq, phrase, m, s)
                .unwrap()
                .max_reconstruction_error();
            worst[i] = worst[i].max(err);
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    outcome(
        max <= 1e-6,
        format!(
            "max error CD {:.2e} ACD {:.2e} SCD {:.2e} (tol 1e-6)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn corpus(cfg: SyntheticConfig) -> (Vec<LabeledExample>, usize) {
    let raw = sentiment_corpus(&cfg);
    let vocab = vocab_from_examples(&raw);
    (encode_examples(&raw, &vocab).unwrap(), vocab.len())
}

fn criterion_2() -> Outcome {
    let (data, vocab) = corpus(SyntheticConfig {
        sentences: 120,
        max_polar: 2,
        ..SyntheticConfig::default()
    });
    let s = LinearSurrogate::fit(&data, vocab, 2, &SurrogateConfig::default()).unwrap();
    let seqs: Vec<TokenSeq> = data.iter().map(|e| e.seq.clone()).collect();
    let eval = &seqs[..30];
    let lm = untrained_lm(vocab);
    let source = ContextSource {
        corpus: &seqs,
        ..ContextSource::with_lm(&lm)
    };

    let mut worst_coef: f64 = 0.0;
    let mut worst_rho: f64 = 0.0;
    let mut settings = vec![
        (Method::Occlusion, SamplerKind::Lm, 0, 1),
        (Method::Statistic, SamplerKind::Lm, 0, 1),
    ];
    for (n, k) in [(0, 1), (1, 5), (3, 20), (10, 7)] {
        settings.push((Method::Soc, SamplerKind::Lm, n, k));
    }
    settings.push((Method::Soc, SamplerKind::Padding, 4, 1));
    settings.push((Method::Soc, SamplerKind::Corpus, 2, 1));
    for (method, sampler, n, k) in settings {
        let mut query = AttributionQuery::new(Span::new(0, 1), method);
        query.context_size = n;
        query.samples = k;
        query.sampler = sampler;
        query.seed = 5;
        let scorer = MethodScorer {
            model: &s,
            source,
            query: query.clone(),
        };
        for seq in eval {
            for pos in 0..seq.len() {
                let q = AttributionQuery {
                    phrase: Span::new(pos, pos + 1),
                    ..query.clone()
                };
                let score = attribute(&s, &source, seq, &q).unwrap();
                for c in 0..2 {
                    worst_coef = worst_coef.max((score.per_class[c] - s.coef[c][seq[pos] as usize]).abs());
                }
            }
        }
        let rho = word_rho(&scorer, &s, eval).unwrap();
        worst_rho = worst_rho.max((rho - 1.0).abs());
    }
    outcome(
        worst_coef <= 1e-9 && worst_rho <= 1e-9,
        format!("max |score - coef| {worst_coef:.2e}, max |rho - 1| {worst_rho:.2e} (tol 1e-9)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = Rng::new(303);
    let mut mismatches = 0;
    for _ in 0..50 {
        let vocab = NUM_RESERVED + 2 + rng.below(6);
        let (embed, hidden, classes) = (1 + rng.below(6), 1 + rng.below(8), 2 + rng.below(2));
        let p = random_lstm(&mut rng, vocab, embed, hidden, classes);
        let lm = untrained_lm(vocab);
        let len = 1 + rng.below(12);
        let seq = random_seq(&mut rng, vocab, len);
        let phrase = random_span(&mut rng, len);
        let mut q = AttributionQuery::new(phrase, Method::Soc);
        q.context_size = 0;
        q.seed = rng.below(1000) as u64;
        let a = soc(&p, &ContextSource::with_lm(&lm), &seq, &q).unwrap();
        let b = input_occlusion(&p, &seq, phrase).unwrap();
        let same = a
            .per_class
            .iter()
            .zip(&b.per_class)
            .all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/50 fixtures differ bitwise"))
}

fn small_vocab_models() -> (LstmParams, LmParams, usize) {
    // four content tokens: vocabulary of 9 ids, 4 non-reserved
    let vocab = NUM_RESERVED + 4;
    let mut rng = Rng::new(404);
    let data: Vec<TokenSeq> = (0..60)
        .map(|_| {
            let len = 3 + rng.below(4);
            TokenSeq::new(random_seq(&mut rng, vocab, len)).unwrap()
        })
        .collect();
    let mut cfg = small_cfg(8, 8);
    cfg.mask_prob = 0.2;
    let lm = train_lm(&data, vocab, &cfg).unwrap().0;
    let clf = random_lstm(&mut rng, vocab, 4, 6, 2);
    (clf, lm, vocab)
}

fn criterion_4() -> Outcome {
    let (clf, lm, vocab) = small_vocab_models();
    let mut rng = Rng::new(4040);
    let mut within = 0;
    for trial in 0..100u64 {
        let len = 3 + rng.below(4);
        let seq = random_seq(&mut rng, vocab, len);
        let phrase = random_span(&mut rng, len);
        let mut q = AttributionQuery::new(phrase, Method::Soc);
        q.context_size = 1;
        q.sampler = SamplerKind::Exhaustive;
        let exact = soc(&clf, &ContextSource::with_lm(&lm), &seq, &q).unwrap().display();

        let mut draw_rng = Rng::new(trial);
        let draws = draw_contexts(&lm, &seq, phrase, 1, 2000, &mut draw_rng).unwrap();
        let values: Vec<f64> = soc_draws(&clf, &seq, phrase, 1, &draws)
            .iter()
            .map(|v| v[1] - v[0])
            .collect();
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let se = (var / k).sqrt();
        if (mean - exact).abs() <= 3.0 * se || (mean - exact).abs() < 1e-12 {
            within += 1;
        }
    }
    outcome(within >= 95, format!("{within}/100 trials within 3 SE (need 95)"))
}

fn criterion_5() -> Outcome {
    let (clf, lm, vocab) = small_vocab_models();
    let mut rng = Rng::new(505);
    let len = 6;
    let phrase = Span::new(2, 4);
    let fixed = random_seq(&mut rng, vocab, 2);
    let mut scores = Vec::new();
    for _ in 0..10 {
        let mut seq = random_seq(&mut rng, vocab, len);
        seq[2..4].copy_from_slice(&fixed);
        let mut q = AttributionQuery::new(phrase, Method::Soc);
        q.context_size = len;
        q.sampler = SamplerKind::Exhaustive;
        scores.push(soc(&clf, &ContextSource::with_lm(&lm), &seq, &q).unwrap().per_class);
    }
    let spread = (0..2)
        .map(|c| {
            let (lo, hi) = scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s[c]), hi.max(s[c]))
            });
            hi - lo
        })
        .fold(0.0, f64::max);
    outcome(
        spread <= 1e-12,
        format!("max spread across 10 sentences {spread:.2e} (tol 1e-12)"),
    )
}

struct SentimentSetup {
    train: Vec<LabeledExample>,
    vocab: hiexpl::corpus::Vocab,
    clf: LstmParams,
    lm: LmParams,
}

fn negation_setup() -> SentimentSetup {
    let raw = sentiment_corpus(&SyntheticConfig {
        sentences: 400,
        negation_prob: 0.5,
        seed: 66,
        ..SyntheticConfig::default()
    });
    let vocab = vocab_from_examples(&raw);
    let train = encode_examples(&raw, &vocab).unwrap();
    let cfg = small_cfg(15, 16);
    let clf = train_classifier(&train, vocab.len(), 2, &cfg).unwrap().0;
    let seqs: Vec<TokenSeq> = train.iter().map(|e| e.seq.clone()).collect();
    let lm = train_lm(&seqs, vocab.len(), &small_cfg(8, 16)).unwrap().0;
    SentimentSetup { train, vocab, clf, lm }
}

fn criterion_6() -> Outcome {
    let st = negation_setup();
    let (_, acc) = hiexpl::model::evaluate_classifier(&st.clf, &st.train);
    let sentence = ["the", "movie", "was", "not", "good", "plot"];
    let seq = st.vocab.encode(&sentence).unwrap();
    let source = ContextSource::with_lm(&st.lm);
    let mut parts = Vec::new();
    let mut pass = true;
    for method in [Method::Soc, Method::Scd] {
        let phi = |span: Span| {
            let mut q = AttributionQuery::new(span, method);
            q.target = Some(1);
            q.seed = 9;
            attribute(&st.clf, &source, &seq, &q).unwrap().display()
        };
        let both = phi(Span::new(3, 5));
        let not = phi(Span::new(3, 4));
        let good = phi(Span::new(4, 5));
        let gap = (both - not - good).abs();
        pass &= gap > 0.1;
        parts.push(format!(
            "{}: phi(not good) {both:.3}, phi(not) {not:.3}, phi(good) {good:.3}, gap {gap:.3}",
            method.name()
        ));
    }
    outcome(
        pass,
        format!("train acc {acc:.3}; {} (need gap > 0.1)", parts.join("; ")),
    )
}

fn criterion_7() -> Outcome {
    let raw = sentiment_corpus(&SyntheticConfig {
        sentences: 300,
        max_polar: 2,
        seed: 77,
        ..SyntheticConfig::default()
    });
    let vocab = vocab_from_examples(&raw);
    let train = encode_examples(&raw, &vocab).unwrap();
    let seqs: Vec<TokenSeq> = train.iter().map(|e| e.seq.clone()).collect();
    let lm = train_lm(&seqs, vocab.len(), &small_cfg(8, 16)).unwrap().0;
    let cfg = AdversarialConfig {
        train: small_cfg(20, 16),
        repeats: 3,
        ..AdversarialConfig::default()
    };
    match adversarial_experiment(&train, &seqs[..40], vocab.len(), &lm, &cfg) {
        Ok(r) => {
            let soc = r.rho(true, Method::Soc).unwrap();
            let df = r.rho(true, Method::DirectFeed).unwrap();
            let scd = r.rho(true, Method::Scd).unwrap();
            outcome(
                soc - df >= 0.2,
                format!(
                    "acc normal {:.3} adversarial {:.3}; normal rho DF {:.3} SOC {:.3} SCD {:.3}; adversarial rho DF {df:.3} SOC {soc:.3} SCD {scd:.3}; SOC - DF {:.3} (need >= 0.2)",
                    r.normal_accuracy,
                    r.adversarial_accuracy,
                    r.rho(false, Method::DirectFeed).unwrap(),
                    r.rho(false, Method::Soc).unwrap(),
                    r.rho(false, Method::Scd).unwrap(),
                    soc - df
                ),
            )
        }
        Err(e) => outcome(false, format!("experiment failed: {e}")),
    }
}

fn criterion_8() -> Outcome {
    let st = negation_setup();
    let seq = st
        .vocab
        .encode(&["the", "film", "was", "great", "acting", "it", "very"])
        .unwrap();
    let source = ContextSource::with_lm(&st.lm);
    let variance = |k: usize| {
        let vals: Vec<f64> = (0..50u64)
            .map(|seed| {
                let mut q = AttributionQuery::new(Span::new(3, 4), Method::Soc);
                q.context_size = 3;
                q.samples = k;
                q.seed = seed;
                soc(&st.clf, &source, &seq, &q).unwrap().display()
            })
            .collect();
        let m = vals.iter().sum::<f64>() / 50.0;
        vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 49.0
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [5, 20] {
        let (v1, v4) = (variance(k), variance(4 * k));
        pass &= v4 <= 0.5 * v1;
        parts.push(format!("K={k}: var {v1:.3e}, 4K: var {v4:.3e}, ratio {:.3}", v4 / v1));
    }
    outcome(pass, format!("{} (need ratio <= 0.5)", parts.join("; ")))
}

fn grad_check(params: &mut LstmParams, loss: &dyn Fn(&LstmParams, &mut LstmParams) -> f64) -> f64 {
    let mut grads = LstmParams::zeros(params.dims());
    loss(params, &mut grads);
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut scratch = LstmParams::zeros(params.dims());
    for (ti, g) in analytic.iter().enumerate() {
        for j in 0..g.len() {
            let orig = params.tensors()[ti][j];
            params.tensors_mut()[ti][j] = orig + eps;
            let up = loss(params, &mut scratch);
            params.tensors_mut()[ti][j] = orig - eps;
            let down = loss(params, &mut scratch);
            params.tensors_mut()[ti][j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let denom = numeric.abs().max(g[j].abs()).max(1e-4);
            worst = worst.max((numeric - g[j]).abs() / denom);
        }
    }
    worst
}

fn criterion_9() -> Outcome {
    let mut rng = Rng::new(909);
    let mut clf = random_lstm(&mut rng, NUM_RESERVED + 4, 3, 4, 3);
    let ids = [5, 7, 6, 8, 5];
    let c = grad_check(&mut clf, &|p, g| classifier_loss_and_grads(p, &ids, 2, g, 1.0).0);
    let mut lm = random_lstm(&mut rng, NUM_RESERVED + 4, 3, 4, NUM_RESERVED + 4);
    let inputs = [3, 5, 2, 7];
    let targets = [5, 6, 7, 4];
    let l = grad_check(&mut lm, &|p, g| lm_loss_and_grads(p, &inputs, &targets, g, 1.0));
    outcome(
        c < 1e-4 && l < 1e-4,
        format!("max relative error classifier {c:.2e}, LM {l:.2e} (tol 1e-4)"),
    )
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hiexpl"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name).to_string_lossy().into_owned();
    let raw = sentiment_corpus(&SyntheticConfig {
        sentences: 80,
        max_polar: 2,
        ..SyntheticConfig::default()
    });
    let tsv: String = raw
        .iter()
        .map(|e| format!("{}\t{}\n", e.label, e.tokens.join(" ")))
        .collect();
    std::fs::write(d.join("data.tsv"), tsv).unwrap();
    std::fs::write(
        d.join("trees.txt"),
        "(1.0 (0.5 (0.0 the) (0.0 movie)) (0.9 (0.0 was) (0.9 good)))\n(-1.0 (-0.8 (0.0 it) (-0.8 bad)) (0.0 plot))\n",
    )
    .unwrap();
    let common = ["--hidden-dim", "8", "--embed-dim", "4", "--seed", "3"];
    let commands: Vec<(Vec<String>, Vec<&str>)> = vec![
        (
            vec![
                "train".into(),
                "--data".into(),
                p("data.tsv"),
                "--model".into(),
                p("m.bin"),
                "--epochs".into(),
                "3".into(),
            ],
            vec!["m.bin", "m.json"],
        ),
        (
            vec![
                "train-lm".into(),
                "--data".into(),
                p("data.tsv"),
                "--model".into(),
                p("m.bin"),
                "--lm".into(),
                p("lm.bin"),
                "--epochs".into(),
                "3".into(),
            ],
            vec!["lm.bin", "lm.json"],
        ),
        (
            vec![
                "explain".into(),
                "--model".into(),
                p("m.bin"),
                "--lm".into(),
                p("lm.bin"),
                "--text".into(),
                "the movie was not good".into(),
                "--samples".into(),
                "4".into(),
                "--out".into(),
                p("agg"),
            ],
            vec!["agg.json", "agg.html"],
        ),
        (
            vec![
                "explain".into(),
                "--model".into(),
                p("m.bin"),
                "--lm".into(),
                p("lm.bin"),
                "--trees".into(),
                p("trees.txt"),
                "--method".into(),
                "scd".into(),
                "--samples".into(),
                "4".into(),
                "--out".into(),
                p("tree"),
            ],
            vec!["tree.json", "tree.html"],
        ),
        (
            vec![
                "explain".into(),
                "--model".into(),
                p("m.bin"),
                "--text".into(),
                "it was bad".into(),
                "--method".into(),
                "cd".into(),
                "--phrase".into(),
                "0:3".into(),
                "--out".into(),
                p("phrase"),
            ],
            vec!["phrase.json", "phrase.html"],
        ),
        (
            vec![
                "render".into(),
                "--input".into(),
                p("agg.json"),
                "--out".into(),
                p("render.html"),
            ],
            vec!["render.html"],
        ),
        (
            vec![
                "eval".into(),
                "--model".into(),
                p("m.bin"),
                "--lm".into(),
                p("lm.bin"),
                "--data".into(),
                p("data.tsv"),
                "--trees".into(),
                p("trees.txt"),
                "--samples".into(),
                "3".into(),
                "--out".into(),
                p("eval.json"),
            ],
            vec!["eval.json"],
        ),
        (
            vec![
                "sweep".into(),
                "--model".into(),
                p("m.bin"),
                "--lm".into(),
                p("lm.bin"),
                "--data".into(),
                p("data.tsv"),
                "--n-values".into(),
                "1,2".into(),
                "--k-values".into(),
                "2,4".into(),
                "--seeds".into(),
                "0,1".into(),
                "--out".into(),
                p("sweep"),
            ],
            vec!["sweep.json", "sweep.csv"],
        ),
        (
            vec![
                "adversarial".into(),
                "--lm".into(),
                p("lm.bin"),
                "--model".into(),
                p("m.bin"),
                "--data".into(),
                p("data.tsv"),
                "--samples".into(),
                "3".into(),
                "--epochs".into(),
                "30".into(),
                "--out".into(),
                p("adv.json"),
            ],
            vec!["adv.json"],
        ),
    ];
    let mut failures = Vec::new();
    for (args, outputs) in &commands {
        let mut full: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        full.extend(common);
        let read = |files: &[&str]| -> Vec<Vec<u8>> {
            files
                .iter()
                .map(|f| std::fs::read(d.join(f)).unwrap_or_default())
                .collect()
        };
        let (c1, e1) = run_cli(&full);
        let first = read(outputs);
        let (c2, _) = run_cli(&full);
        let second = read(outputs);
        if c1 != 0 || c2 != 0 {
            failures.push(format!("{} exited {c1}/{c2}: {}", args[0], e1.trim()));
        } else if first != second || first.iter().any(|b| b.is_empty()) {
            failures.push(format!("{} output differs", args[0]));
        }
    }
    let missing = run_cli(&["train", "--data", &p("nope.tsv"), "--model", &p("x.bin")]).0;
    if missing != 2 {
        failures.push(format!("missing file exited {missing}"));
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} commands byte-identical across reruns", commands.len())
        } else {
            failures.join("; ")
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("reconstruction invariant", criterion_1),
        ("linear-surrogate exactness", criterion_2),
        ("SOC reduction at N=0", criterion_3),
        ("Monte-Carlo vs exhaustive SOC", criterion_4),
        ("context independence", criterion_5),
        ("non-additivity", criterion_6),
        ("adversarial model", criterion_7),
        ("variance scaling", criterion_8),
        ("gradient check", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if let Some(f) = &filter {
            if f != &id {
                continue;
            }
        }
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {:>2} {:<32} {} ({:.1}s) {}",
            id,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
