//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, AttributionQuery, ContextSource, Method};
use crate::corpus::{
    encode_examples, load_trees, read_tsv, tokenize, vocab_from_examples, AnnotatedTree, LabeledExample, RawExample,
    Span, TokenSeq, Vocab,
};
use crate::error::Error;
use crate::eval::{
    adversarial_experiment, evaluate, sweep, AdversarialConfig, EvalConfig, LinearSurrogate, SurrogateConfig,
};
use crate::hierarchy::{agglomerate, explain_tree, render_page, ExplainedNode, HierarchyLevel, MethodScorer};
use crate::model::{
    load_classifier, load_lm, save_classifier, save_lm, train_classifier, train_lm, LmParams, LstmParams,
    SequenceModel, TrainConfig,
};
use crate::sampler::{SamplerKind, DEFAULT_ENUMERATION_CAP};

/// Resolved settings of one run. Every output file embeds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub trees: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub text: Option<String>,
    pub classes: Option<usize>,
    pub method: Method,
    pub phrase: Option<String>,
    pub context_size: usize,
    pub samples: usize,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub target: Option<usize>,
    pub oracle: bool,
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub repeats: usize,
    pub enumeration_cap: usize,
    pub train: TrainConfig,
    pub surrogate: SurrogateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            eval_data: None,
            trees: None,
            model: None,
            lm: None,
            input: None,
            out: None,
            text: None,
            classes: None,
            method: Method::Soc,
            phrase: None,
            context_size: 10,
            samples: 20,
            sampler: SamplerKind::Lm,
            seed: 0,
            target: None,
            oracle: false,
            n_values: vec![10],
            k_values: vec![20],
            seeds: vec![0],
            repeats: 3,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            train: TrainConfig::default(),
            surrogate: SurrogateConfig::default(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "hiexpl",
    version,
    about = "Hierarchical phrase attribution for LSTM classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a classifier on a TSV dataset.
    Train(Flags),
    /// Train the forward and backward language models.
    TrainLm(Flags),
    /// Explain predictions as phrase, tree or agglomerative hierarchies.
    Explain(Flags),
    /// Word and phrase correlation against a linear surrogate.
    Eval(Flags),
    /// Word correlation over a grid of context sizes, sample counts and seeds.
    Sweep(Flags),
    /// Compare a normal model with one trained on inverted single words.
    Adversarial(Flags),
    /// Re-render an explanation JSON file as HTML.
    Render(Flags),
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method {s:?}"))
}

fn parse_sampler(s: &str) -> Result<SamplerKind, String> {
    SamplerKind::parse(s).ok_or_else(|| format!("unknown sampler {s:?}"))
}

#[derive(clap::Args, Debug, Default)]
struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Labeled TSV data (label, tab, space-separated tokens).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluation sentences as TSV; defaults to --data.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// Annotated trees, one s-expression per line.
    #[arg(long)]
    trees: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    lm: Option<PathBuf>,
    /// Explanation JSON to render.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// A sentence to explain.
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Token span i:j, end exclusive.
    #[arg(long)]
    phrase: Option<String>,
    #[arg(long)]
    context_size: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_parser = parse_sampler)]
    sampler: Option<SamplerKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target: Option<usize>,
    /// Explain the linear surrogate instead of the classifier.
    #[arg(long)]
    oracle: bool,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn innermost(e: &Error) -> &Error {
    match e {
        Error::Node { source, .. } => innermost(source),
        other => other,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match innermost(&e) {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => CliError::Usage(e.to_string()),
            Error::Parse { .. }
            | Error::Tree { .. }
            | Error::InvalidSpan { .. }
            | Error::MethodMismatch { .. }
            | Error::Json(_)
            | Error::EnumerationCap { .. } => CliError::Usage(e.to_string()),
            Error::Empty(what) if what.contains("grid") || what.contains("sample count") => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn resolve(flags: Flags) -> CliResult<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {$(
            if let Some(v) = flags.$field { cfg.$field = Some(v); }
        )*};
    }
    take!(data, eval_data, trees, model, lm, input, out, text, classes, phrase, target);
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = flags.$field { cfg.$field = v; }
        )*};
    }
    set!(
        method,
        context_size,
        samples,
        sampler,
        seed,
        n_values,
        k_values,
        seeds,
        repeats
    );
    cfg.oracle |= flags.oracle;
    if let Some(v) = flags.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = flags.hidden_dim {
        cfg.train.hidden_dim = v;
    }
    if let Some(v) = flags.embed_dim {
        cfg.train.embed_dim = v;
    }
    cfg.train.seed = cfg.seed;
    Ok(cfg)
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    v.as_deref().ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

fn config_json(cfg: &RunConfig) -> String {
    serde_json::to_string(cfg).expect("config serialises")
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    write(path, &s)
}

#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn class_count(cfg: &RunConfig, data: &[RawExample]) -> usize {
    cfg.classes
        .unwrap_or_else(|| data.iter().map(|e| e.label + 1).max().unwrap_or(2).max(2))
}

fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let raw = read_tsv(required(&cfg.data, "data")?)?;
    let model_path = required(&cfg.model, "model")?;
    let vocab = vocab_from_examples(&raw);
    let data = encode_examples(&raw, &vocab)?;
    let classes = class_count(cfg, &raw);
    let (params, report) = train_classifier(&data, vocab.len(), classes, &cfg.train)?;
    save_classifier(model_path, &params, &vocab)?;
    let metrics = cfg.out.clone().unwrap_or_else(|| model_path.with_extension("json"));
    #[derive(Serialize)]
    struct Body {
        vocab_size: usize,
        classes: usize,
        report: crate::model::TrainReport,
    }
    println!("final loss {:.6} accuracy {:.4}", report.final_loss, report.accuracy);
    write_json(
        &metrics,
        &Output {
            config: cfg,
            body: Body {
                vocab_size: vocab.len(),
                classes,
                report,
            },
        },
    )
}

fn cmd_train_lm(cfg: &RunConfig) -> CliResult<()> {
    let raw = read_tsv(required(&cfg.data, "data")?)?;
    let lm_path = required(&cfg.lm, "lm")?;
    let vocab = match &cfg.model {
        Some(p) => load_classifier(p)?.1,
        None => vocab_from_examples(&raw),
    };
    let seqs: Vec<TokenSeq> = encode_examples(&raw, &vocab)?.into_iter().map(|e| e.seq).collect();
    let (lm, report) = train_lm(&seqs, vocab.len(), &cfg.train)?;
    save_lm(lm_path, &lm, &vocab)?;
    println!(
        "perplexity forward {:.4} backward {:.4}",
        report.forward_perplexity, report.backward_perplexity
    );
    let metrics = cfg.out.clone().unwrap_or_else(|| lm_path.with_extension("json"));
    write_json(
        &metrics,
        &Output {
            config: cfg,
            body: report,
        },
    )
}

fn load_lm_for(cfg: &RunConfig, vocab: &Vocab) -> CliResult<Option<LmParams>> {
    let Some(path) = &cfg.lm else {
        let needs_lm = matches!(cfg.sampler, SamplerKind::Lm | SamplerKind::Exhaustive);
        if cfg.method.uses_context() && needs_lm {
            return usage(format!(
                "{} with the {} sampler needs a language model (--lm)",
                cfg.method.name(),
                cfg.sampler.name()
            ));
        }
        return Ok(None);
    };
    let (lm, lm_vocab) = load_lm(path)?;
    if &lm_vocab != vocab {
        return usage("language model vocabulary differs from the classifier vocabulary; train it with --model");
    }
    Ok(Some(lm))
}

fn encode_raw(raw: &[RawExample], vocab: &Vocab) -> CliResult<Vec<TokenSeq>> {
    Ok(encode_examples(raw, vocab)?.into_iter().map(|e| e.seq).collect())
}

fn tree_items(path: &Path, vocab: &Vocab) -> CliResult<Vec<(Vec<String>, TokenSeq, AnnotatedTree)>> {
    load_trees(path)?
        .into_iter()
        .map(|t| {
            let tokens: Vec<String> = t.leaves().iter().map(|s| s.to_lowercase()).collect();
            let seq = vocab.encode(&tokens)?;
            Ok((tokens, seq, t))
        })
        .collect()
}

fn parse_phrase(spec: &str) -> CliResult<Span> {
    Span::parse(spec).ok_or_else(|| CliError::Usage(format!("bad --phrase {spec:?}; expected i:j")))
}

fn query_of(cfg: &RunConfig) -> AttributionQuery {
    AttributionQuery {
        phrase: Span::new(0, 1),
        method: cfg.method,
        context_size: cfg.context_size,
        samples: cfg.samples,
        sampler: cfg.sampler,
        seed: cfg.seed,
        target: cfg.target,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedSentence {
    pub tokens: Vec<String>,
    pub prediction: Vec<f64>,
    pub root: ExplainedNode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<HierarchyLevel>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainFile {
    pub config: RunConfig,
    pub sentences: Vec<ExplainedSentence>,
}

fn html_for(cfg: &RunConfig, sentences: &[ExplainedSentence]) -> CliResult<String> {
    let items: Vec<(&ExplainedNode, &[String])> = sentences.iter().map(|s| (&s.root, s.tokens.as_slice())).collect();
    Ok(render_page(&items, Some(&config_json(cfg)))?)
}

fn cmd_explain(cfg: &RunConfig) -> CliResult<()> {
    let (params, vocab) = load_classifier(required(&cfg.model, "model")?)?;
    let out = required(&cfg.out, "out")?;
    let lm = load_lm_for(cfg, &vocab)?;
    let corpus = match &cfg.data {
        Some(p) => encode_raw(&read_tsv(p)?, &vocab)?,
        None => Vec::new(),
    };
    let source = ContextSource {
        lm: lm.as_ref(),
        corpus: &corpus,
        enumeration_cap: cfg.enumeration_cap,
    };
    let scorer = MethodScorer {
        model: &params,
        source,
        query: query_of(cfg),
    };

    let mut inputs: Vec<(Vec<String>, TokenSeq, Option<AnnotatedTree>)> = Vec::new();
    if let Some(text) = &cfg.text {
        let tokens = tokenize(text)?;
        let seq = vocab.encode(&tokens)?;
        inputs.push((tokens, seq, None));
    } else if let Some(path) = &cfg.trees {
        for (tokens, seq, tree) in tree_items(path, &vocab)? {
            inputs.push((tokens, seq, Some(tree)));
        }
    } else if let Some(path) = &cfg.data {
        for ex in read_tsv(path)? {
            let seq = vocab.encode(&ex.tokens)?;
            inputs.push((ex.tokens, seq, None));
        }
    } else {
        return usage("explain needs --text, --trees or --data");
    }
    let phrase = cfg.phrase.as_deref().map(parse_phrase).transpose()?;

    let mut sentences = Vec::with_capacity(inputs.len());
    for (tokens, seq, tree) in inputs {
        let (root, levels) = if let Some(span) = phrase {
            span.check(seq.len())?;
            let query = AttributionQuery {
                phrase: span,
                ..scorer.query.clone()
            };
            let s = attribute(&params, &scorer.source, &seq, &query)?;
            let node = ExplainedNode {
                span,
                display: s.display(),
                score: s.per_class,
                children: Vec::new(),
            };
            (node, None)
        } else if let Some(tree) = &tree {
            (explain_tree(&scorer, &seq, tree)?, None)
        } else {
            let a = agglomerate(&scorer, &seq)?;
            (a.tree, Some(a.levels))
        };
        println!("{} {:.6}", root.span, root.display);
        sentences.push(ExplainedSentence {
            prediction: params.scores(&seq),
            tokens,
            root,
            levels,
        });
    }
    write(&out.with_extension("html"), &html_for(cfg, &sentences)?)?;
    write_json(
        &out.with_extension("json"),
        &ExplainFile {
            config: cfg.clone(),
            sentences,
        },
    )
}

fn cmd_render(cfg: &RunConfig) -> CliResult<()> {
    let input = required(&cfg.input, "input")?;
    let out = required(&cfg.out, "out")?;
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let file: ExplainFile =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
    write(out, &html_for(cfg, &file.sentences)?)
}

/// Classifier, vocabulary, labeled training data and evaluation sentences.
struct EvalInputs {
    model: Option<LstmParams>,
    vocab: Vocab,
    train: Vec<LabeledExample>,
    eval_set: Vec<TokenSeq>,
    classes: usize,
}

fn eval_inputs(cfg: &RunConfig, need_model: bool) -> CliResult<EvalInputs> {
    let raw = read_tsv(required(&cfg.data, "data")?)?;
    let (model, vocab) = match (&cfg.model, need_model) {
        (Some(p), _) => {
            let (m, v) = load_classifier(p)?;
            (Some(m), v)
        }
        (None, true) => return usage("missing --model"),
        (None, false) => (None, vocab_from_examples(&raw)),
    };
    let classes = model
        .as_ref()
        .map_or_else(|| class_count(cfg, &raw), |m| m.num_classes());
    let train = encode_examples(&raw, &vocab)?;
    let eval_set = match &cfg.eval_data {
        Some(p) => encode_raw(&read_tsv(p)?, &vocab)?,
        None => train.iter().map(|e| e.seq.clone()).collect(),
    };
    Ok(EvalInputs {
        model,
        vocab,
        train,
        eval_set,
        classes,
    })
}

fn cmd_eval(cfg: &RunConfig) -> CliResult<()> {
    let inp = eval_inputs(cfg, !cfg.oracle)?;
    let out = required(&cfg.out, "out")?;
    let surrogate = LinearSurrogate::fit(&inp.train, inp.vocab.len(), inp.classes, &cfg.surrogate)?;
    let lm = load_lm_for(cfg, &inp.vocab)?;
    let corpus: Vec<TokenSeq> = inp.train.iter().map(|e| e.seq.clone()).collect();
    let model: &dyn SequenceModel = match (&inp.model, cfg.oracle) {
        (Some(m), false) => m,
        _ => &surrogate,
    };
    let scorer = MethodScorer {
        model,
        source: ContextSource {
            lm: lm.as_ref(),
            corpus: &corpus,
            enumeration_cap: cfg.enumeration_cap,
        },
        query: query_of(cfg),
    };
    let trees = match &cfg.trees {
        Some(p) => Some(
            tree_items(p, &inp.vocab)?
                .into_iter()
                .map(|(_, s, t)| (s, t))
                .collect::<Vec<_>>(),
        ),
        None => None,
    };
    let echo = EvalConfig {
        context_size: cfg.context_size,
        samples: cfg.samples,
        seed: cfg.seed,
        sampler: cfg.sampler,
    };
    let report = evaluate(
        &scorer,
        cfg.method.name(),
        echo,
        &surrogate,
        &inp.eval_set,
        trees.as_deref(),
    )?;
    match report.phrase_rho {
        Some(p) => println!("word_rho {:.6} phrase_rho {:.6}", report.word_rho, p),
        None => println!("word_rho {:.6}", report.word_rho),
    }
    #[derive(Serialize)]
    struct Body {
        surrogate_grad_norm: f64,
        surrogate_iterations: usize,
        report: crate::eval::EvalReport,
    }
    write_json(
        out,
        &Output {
            config: cfg,
            body: Body {
                surrogate_grad_norm: surrogate.grad_norm,
                surrogate_iterations: surrogate.iterations,
                report,
            },
        },
    )
}

fn cmd_sweep(cfg: &RunConfig) -> CliResult<()> {
    if cfg.n_values.is_empty() || cfg.k_values.is_empty() || cfg.seeds.is_empty() {
        return usage("empty sweep grid");
    }
    let inp = eval_inputs(cfg, !cfg.oracle)?;
    let out = required(&cfg.out, "out")?;
    let surrogate = LinearSurrogate::fit(&inp.train, inp.vocab.len(), inp.classes, &cfg.surrogate)?;
    let lm = load_lm_for(cfg, &inp.vocab)?;
    let corpus: Vec<TokenSeq> = inp.train.iter().map(|e| e.seq.clone()).collect();
    let model: &dyn SequenceModel = match (&inp.model, cfg.oracle) {
        (Some(m), false) => m,
        _ => &surrogate,
    };
    let source = ContextSource {
        lm: lm.as_ref(),
        corpus: &corpus,
        enumeration_cap: cfg.enumeration_cap,
    };
    let report = sweep(
        |p| {
            let mut query = query_of(cfg);
            query.context_size = p.context_size;
            query.samples = p.samples;
            query.seed = p.seed;
            query.sampler = p.sampler;
            Ok(MethodScorer { model, source, query })
        },
        cfg.method.name(),
        cfg.sampler,
        &surrogate,
        &inp.eval_set,
        &cfg.n_values,
        &cfg.k_values,
        &cfg.seeds,
    )?;
    let csv = format!("# config: {}\n{}", config_json(cfg), report.to_csv());
    write(&out.with_extension("csv"), &csv)?;
    for c in &report.cells {
        println!(
            "N={} K={} sampler={} mean_rho={:.6} variance={:.3e}",
            c.context_size,
            c.samples,
            c.sampler.name(),
            c.mean,
            c.variance
        );
    }
    write_json(
        &out.with_extension("json"),
        &Output {
            config: cfg,
            body: report,
        },
    )
}

fn cmd_adversarial(cfg: &RunConfig) -> CliResult<()> {
    let inp = eval_inputs(cfg, false)?;
    let out = required(&cfg.out, "out")?;
    let Some(lm) = load_lm_for(cfg, &inp.vocab)? else {
        return usage("adversarial needs --lm");
    };
    if inp.classes != 2 {
        return usage("adversarial experiment needs a binary task");
    }
    let acfg = AdversarialConfig {
        train: cfg.train.clone(),
        surrogate: cfg.surrogate,
        repeats: cfg.repeats,
        context_size: cfg.context_size,
        samples: cfg.samples,
        seed: cfg.seed,
        ..AdversarialConfig::default()
    };
    let report = adversarial_experiment(&inp.train, &inp.eval_set, inp.vocab.len(), &lm, &acfg)?;
    for (label, reports) in [("normal", &report.normal), ("adversarial", &report.adversarial)] {
        for r in reports {
            println!("{label} {} word_rho {:.6}", r.method, r.word_rho);
        }
    }
    write_json(
        out,
        &Output {
            config: cfg,
            body: report,
        },
    )
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (flags, cmd): (Flags, fn(&RunConfig) -> CliResult<()>) = match cli.command {
        Command::Train(f) => (f, cmd_train),
        Command::TrainLm(f) => (f, cmd_train_lm),
        Command::Explain(f) => (f, cmd_explain),
        Command::Eval(f) => (f, cmd_eval),
        Command::Sweep(f) => (f, cmd_sweep),
        Command::Adversarial(f) => (f, cmd_adversarial),
        Command::Render(f) => (f, cmd_render),
    };
    match resolve(flags).and_then(|cfg| cmd(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
