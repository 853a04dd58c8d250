//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use summarunner::checkpoint::Checkpoint;
use summarunner::corpus::synthetic::{self, SyntheticConfig};
use summarunner::corpus::{build_vocab, load_corpus, load_word_vectors, write_corpus, Document, Vocabulary};
use summarunner::diffcore::ParameterStore;
use summarunner::evaluation::{evaluate_corpus, select, tune_k, ModelScorer, SelectionPolicy, SentenceScorer};
use summarunner::model::SummaRunner;
use summarunner::oracle::{label_corpus, LabelStats};
use summarunner::rouge::{Flavor, LengthLimit};
use summarunner::training::{label_accuracy, train, Decoder, Example, TrainMode, TrainReport};

use crate::config::{parse_assignment, RunConfig};
use crate::inspect::{inspect, render};

pub const LABELED_FILE: &str = "labeled.jsonl";
pub const LABEL_STATS_FILE: &str = "label_stats.json";
pub const CHECKPOINT_FILE: &str = "model.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const SUMMARIES_FILE: &str = "summaries.jsonl";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const INSPECT_FILE: &str = "inspect.json";
pub const INSPECT_TABLE_FILE: &str = "inspect.txt";
pub const SYNTH_FILE: &str = "synthetic.jsonl";

#[derive(Debug, Parser)]
#[command(name = "summarunner", version, about = "Recurrent extractive summarizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive extractive sentence labels from reference summaries
    MakeLabels(MakeLabelsArgs),
    /// Train a model and write the best checkpoint
    Train(TrainArgs),
    /// Extract summaries with a checkpoint or the lead baseline
    Summarize(SummarizeArgs),
    /// Score extracted summaries against references
    Evaluate(EvaluateArgs),
    /// Show the per-sentence scoring factors of one document
    Inspect(InspectArgs),
    /// Write a seeded toy corpus with reference summaries
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file with run settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Override any config key, e.g. --set hidden_dim=64
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct MakeLabelsArgs {
    /// JSONL corpus with reference summaries
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// rouge1_f1 | rouge2_f1 | mean_r1_r2_f1 | rouge1_recall
    #[arg(long)]
    pub oracle_metric: Option<String>,
    /// Replace labels already present in the input
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// extractive | abstractive
    #[arg(long)]
    pub mode: Option<String>,
}

/// The four standard evaluation settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    /// Recall, first 75 bytes
    #[value(name = "recall-75b")]
    Recall75Bytes,
    /// Recall, first 275 bytes
    #[value(name = "recall-275b")]
    Recall275Bytes,
    /// Recall, first 75 words
    #[value(name = "recall-75w")]
    Recall75Words,
    /// F1, no length limit
    #[value(name = "f1")]
    FullF1,
}

impl Protocol {
    pub fn settings(self) -> (LengthLimit, Flavor) {
        match self {
            Protocol::Recall75Bytes => (LengthLimit::Bytes(75), Flavor::Recall),
            Protocol::Recall275Bytes => (LengthLimit::Bytes(275), Flavor::Recall),
            Protocol::Recall75Words => (LengthLimit::Words(75), Flavor::Recall),
            Protocol::FullF1 => (LengthLimit::None, Flavor::F1),
        }
    }
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Model checkpoint; not needed for lead:N
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// prob | topk:K | topk:auto | lead:N
    #[arg(long)]
    pub policy: Option<String>,
    /// none | bytes:N | words:N
    #[arg(long, conflicts_with = "protocol")]
    pub limit: Option<String>,
    /// Validation corpus for topk:auto
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Preset limit and flavor
    #[arg(long, value_enum)]
    pub protocol: Option<Protocol>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// recall | precision | f1
    #[arg(long, conflicts_with = "protocol")]
    pub flavor: Option<String>,
    /// r1 | r2 | rl, the headline metric and the one topk:auto maximizes
    #[arg(long)]
    pub metric: Option<String>,
    /// Include per-document scores in the report
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Document id
    #[arg(long)]
    pub id: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 20)]
    pub documents: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MakeLabels(a) => make_labels(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Summarize(a) => summarize(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Inspect(a) => cmd_inspect(&a),
        Command::Synth(a) => synth(&a),
    }
}

/// Resolves the run config with typed flags applied last, creates the output
/// directory and writes the config into it.
fn prepare(common: &Common, flags: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut overrides = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    for (key, value) in flags {
        if let Some(v) = value {
            overrides.push((key.to_string(), format!("{v:?}")));
        }
    }
    let config = RunConfig::resolve(common.config.as_deref(), &overrides)?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    config.write_to(&common.out)?;
    Ok(config)
}

fn policy_flags(p: &PolicyArgs) -> Vec<(&'static str, Option<String>)> {
    let (limit, flavor) = match p.protocol.map(Protocol::settings) {
        Some((l, f)) => (Some(l.to_string()), Some(f.to_string())),
        None => (p.limit.clone(), None),
    };
    vec![("policy", p.policy.clone()), ("limit", limit), ("flavor", flavor)]
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_docs(path: &Path, config: &RunConfig) -> Result<Vec<Document>> {
    let corpus = load_corpus(path, &config.corpus()).with_context(|| format!("loading {}", path.display()))?;
    if corpus.skipped > 0 {
        eprintln!("{}: skipped {} empty documents", path.display(), corpus.skipped);
    }
    Ok(corpus.documents)
}

fn load_checkpoint(path: &Path) -> Result<(SummaRunner, ParameterStore, Vocabulary)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(ckpt.into_model()?)
}

#[derive(Debug, Serialize)]
struct LabelRunStats {
    #[serde(flatten)]
    stats: LabelStats,
    skipped: usize,
}

fn make_labels(args: &MakeLabelsArgs) -> Result<()> {
    let config = prepare(&args.common, &[("oracle_metric", args.oracle_metric.clone())])?;
    let corpus =
        load_corpus(&args.input, &config.corpus()).with_context(|| format!("loading {}", args.input.display()))?;
    let labeled: Vec<&str> = corpus
        .documents
        .iter()
        .filter(|d| d.labels.is_some())
        .map(|d| d.id.as_str())
        .collect();
    if !labeled.is_empty() && !args.overwrite {
        bail!(
            "{} documents already carry labels (first: {}); pass --overwrite to replace them",
            labeled.len(),
            labeled[0]
        );
    }
    let (docs, stats) = label_corpus(&corpus.documents, &config.oracle())?;
    let out = args.common.out.join(LABELED_FILE);
    write_corpus(&out, &docs)?;
    write_json(
        &args.common.out.join(LABEL_STATS_FILE),
        &LabelRunStats {
            stats,
            skipped: corpus.skipped,
        },
    )?;
    eprintln!(
        "labeled {} documents, {:.2} sentences each, mean oracle score {:.4} -> {}",
        stats.documents,
        stats.mean_selected,
        stats.mean_score,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainOutput {
    #[serde(flatten)]
    report: TrainReport,
    vocab_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    embeddings_from_vectors: Option<usize>,
    /// Sentence-label accuracy on the training set with the best parameters.
    #[serde(skip_serializing_if = "Option::is_none")]
    train_label_accuracy: Option<f64>,
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = prepare(&args.common, &[("mode", args.mode.clone())])?;
    let train_docs = load_docs(&args.train, &config)?;
    let valid_docs = load_docs(&args.valid, &config)?;
    ensure!(!train_docs.is_empty(), "{} has no documents", args.train.display());

    let vocab = build_vocab(&train_docs, config.vocab_cap);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParameterStore::new();
    let model = SummaRunner::new(config.model(vocab.len()), &mut store, &mut rng)?;
    let mut covered = None;
    if let Some(path) = &config.word_vectors {
        let vectors = load_word_vectors(path, &vocab, config.embedding_dim, &mut rng)
            .with_context(|| format!("loading {}", path.display()))?;
        store.set(model.params.embedding, vectors.matrix)?;
        covered = Some(vectors.covered);
    }
    let decoder = match config.mode {
        TrainMode::Abstractive => Some(Decoder::new(&model, &mut store, &mut rng)?),
        TrainMode::Extractive => None,
    };
    let train_set: Vec<Example> = train_docs.iter().map(|d| Example::from_document(d, &vocab)).collect();
    let valid_set: Vec<Example> = valid_docs.iter().map(|d| Example::from_document(d, &vocab)).collect();

    let ckpt_path = args.common.out.join(CHECKPOINT_FILE);
    let mut report = train(
        &model,
        decoder.as_ref(),
        &mut store,
        &train_set,
        &valid_set,
        &config.train(),
        |stats, s| {
            eprintln!(
                "epoch {:>3}  train {:.5}  valid {:.5}  (best, saved)",
                stats.epoch, stats.train_loss, stats.valid_loss
            );
            Checkpoint::capture(&model, &vocab, s)?.save(&ckpt_path)
        },
    )?;
    report.best_checkpoint = Some(CHECKPOINT_FILE.to_string());
    for e in &report.epochs {
        if let (Some(t), Some(v)) = (e.train_perplexity, e.valid_perplexity) {
            eprintln!("epoch {:>3}  perplexity train {t:.3}  valid {v:.3}", e.epoch);
        }
    }
    let accuracy = if train_set.iter().all(|e| e.labels.is_some()) {
        Some(label_accuracy(&model, &store, &train_set)?)
    } else {
        None
    };
    if let Some(a) = accuracy {
        eprintln!("training sentence-label accuracy {a:.4}");
    }
    eprintln!(
        "stopped after epoch {}, best epoch {} (valid {:.5})",
        report.stopped_epoch, report.best_epoch, report.best_valid_loss
    );
    write_json(
        &args.common.out.join(TRAIN_REPORT_FILE),
        &TrainOutput {
            report,
            vocab_size: vocab.len(),
            embeddings_from_vectors: covered,
            train_label_accuracy: accuracy,
        },
    )
}

struct Resolved {
    policy: SelectionPolicy,
    model: Option<(SummaRunner, ParameterStore, Vocabulary)>,
}

impl Resolved {
    fn scorer(&self) -> Option<ModelScorer<'_>> {
        self.model
            .as_ref()
            .map(|(model, store, vocab)| ModelScorer { model, store, vocab })
    }
}

/// Loads the checkpoint if one is needed and settles `topk:auto`.
fn resolve_policy(args: &PolicyArgs, config: &RunConfig) -> Result<Resolved> {
    let model = match &args.checkpoint {
        Some(path) => Some(load_checkpoint(path)?),
        None if config.policy.needs_model() => bail!("policy {} needs --checkpoint", config.policy),
        None => None,
    };
    let policy = match config.policy.resolve(config.limit) {
        Some(p) => p,
        None => {
            let valid = args.valid.as_ref().context("topk:auto needs --valid")?;
            let docs = load_docs(valid, config)?;
            let (m, s, v) = model.as_ref().expect("checked above");
            let scorer = ModelScorer {
                model: m,
                store: s,
                vocab: v,
            };
            let ks: Vec<usize> = (1..=config.max_k).collect();
            let search = tune_k(&scorer, &docs, &ks, config.metric, Flavor::F1)?;
            for (k, score) in &search.scores {
                eprintln!("top-{k}: {} F1 {score:.4}", config.metric);
            }
            eprintln!("chose k = {}", search.best_k);
            SelectionPolicy::TopK(search.best_k)
        }
    };
    Ok(Resolved { policy, model })
}

#[derive(Debug, Serialize)]
struct SummaryLine<'a> {
    id: &'a str,
    selected_indices: Vec<usize>,
    summary_sentences: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probabilities: Option<Vec<f64>>,
}

fn summarize(args: &SummarizeArgs) -> Result<()> {
    let config = prepare(&args.common, &policy_flags(&args.policy))?;
    let docs = load_docs(&args.corpus, &config)?;
    let resolved = resolve_policy(&args.policy, &config)?;
    let scorer = resolved.scorer();
    let path = args.common.out.join(SUMMARIES_FILE);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    for doc in &docs {
        let probs = match &scorer {
            Some(s) => Some(s.probabilities(doc)?),
            None => None,
        };
        let selected = select(probs.as_deref().unwrap_or_default(), doc, resolved.policy)?;
        let line = SummaryLine {
            id: &doc.id,
            summary_sentences: selected.iter().map(|&i| doc.sentences[i].join(" ")).collect(),
            selected_indices: selected,
            probabilities: probs,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    eprintln!(
        "wrote {} summaries with {} -> {}",
        docs.len(),
        resolved.policy,
        path.display()
    );
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut flags = policy_flags(&args.policy);
    if args.flavor.is_some() {
        flags.push(("flavor", args.flavor.clone()));
    }
    flags.push(("metric", args.metric.clone()));
    let config = prepare(&args.common, &flags)?;
    let docs = load_docs(&args.corpus, &config)?;
    let resolved = resolve_policy(&args.policy, &config)?;
    let scorer = resolved.scorer();
    let report = evaluate_corpus(
        scorer.as_ref().map(|s| s as &dyn SentenceScorer),
        &docs,
        resolved.policy,
        config.limit,
        config.flavor,
        args.verbose,
    )?;
    write_json(&args.common.out.join(EVAL_REPORT_FILE), &report)?;
    print!("{}", report.to_table());
    println!(
        "{} {}: {:.4}",
        config.metric,
        config.flavor,
        report.get(config.metric) * 100.0
    );
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let config = prepare(&args.common, &[])?;
    let docs = load_docs(&args.corpus, &config)?;
    let doc = docs
        .iter()
        .find(|d| d.id == args.id)
        .with_context(|| format!("no document `{}` in {}", args.id, args.corpus.display()))?;
    let (model, store, vocab) = load_checkpoint(&args.checkpoint)?;
    let prediction = model.predict(&store, &summarunner::corpus::encode(doc, &vocab))?;
    let ins = inspect(doc, &prediction.breakdowns);
    let table = render(&ins);
    write_json(&args.common.out.join(INSPECT_FILE), &ins)?;
    fs::write(args.common.out.join(INSPECT_TABLE_FILE), &table)?;
    print!("{table}");
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let config = prepare(&args.common, &[])?;
    ensure!(args.documents > 0, "--documents must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let synth_config = SyntheticConfig {
        documents: args.documents,
        ..SyntheticConfig::default()
    };
    let docs = synthetic::generate(&synth_config, &mut rng);
    let path = args.common.out.join(SYNTH_FILE);
    write_corpus(&path, &docs)?;
    eprintln!("wrote {} documents -> {}", docs.len(), path.display());
    Ok(())
}
