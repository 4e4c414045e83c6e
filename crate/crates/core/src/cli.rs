//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for data and configuration errors (the
//! diagnostic starts with the error name), 2 for usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::config::TrainConfig;
use crate::corpus::{corpus_stats, read_corpus, AnnotatedSentence};
use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::error::{AsteError, Result};
use crate::eval::{evaluate, read_records, write_records, EvalMode, EvalReport, SentenceRecord};
use crate::graph::{attach_heads, read_heads, DependencyGraph};
use crate::pipeline::Pipeline;
use crate::stage1::Stage1Model;
use crate::trainer::{train_stage1, train_stage2};

/// Relative input paths that do not exist are looked up under this directory.
pub const DATA_ROOT_VAR: &str = "ASTE_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(name = "aste", version, about = "Two-stage aspect sentiment triplet extraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a corpus and print sentence, pair, aspect and opinion counts.
    IngestCheck(IngestArgs),
    /// Train the aspect/sentiment and opinion tagger.
    TrainStage1(Stage1Args),
    /// Train the pair classifier on gold pairs.
    TrainStage2(Stage2Args),
    /// Score predictions against gold annotations.
    Evaluate(EvaluateArgs),
    /// Extract triplets with both trained stages.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Head indices, one line per sentence.
    #[arg(long)]
    pub dep: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub dep: Option<PathBuf>,
    /// Validation corpus used for epoch selection (defaults to the training corpus).
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub valid_dep: Option<PathBuf>,
    /// Word vectors, one `word v1 .. vD` line each; random vectors when absent.
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// Extra corpora whose tokens join the vocabulary.
    #[arg(long = "vocab-from")]
    pub vocab_from: Vec<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config override `key=value`; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct Stage1Args {
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct Stage2Args {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Stage-one checkpoint whose word vectors are reused.
    #[arg(long, conflicts_with = "emb")]
    pub ckpt1: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold annotations: a corpus or a prediction-format file.
    #[arg(long, visible_alias = "corpus")]
    pub gold: PathBuf,
    /// Predictions to score; otherwise both checkpoints predict the gold sentences.
    #[arg(long, required_unless_present_all = ["ckpt1", "ckpt2"])]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "ckpt2", conflicts_with = "pred")]
    pub ckpt1: Option<PathBuf>,
    #[arg(long, requires = "ckpt1", conflicts_with = "pred")]
    pub ckpt2: Option<PathBuf>,
    /// Head indices for the gold sentences when predicting.
    #[arg(long)]
    pub dep: Option<PathBuf>,
    /// One of unified, aspect_only, opinion, pair, triplet, or all.
    #[arg(long, default_value = "all")]
    pub mode: String,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt1: PathBuf,
    #[arg(long)]
    pub ckpt2: PathBuf,
    /// Sentences to tag: an annotated corpus, or tokenized lines with --raw.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub dep: Option<PathBuf>,
    /// Read one whitespace-tokenized sentence per line.
    #[arg(long)]
    pub raw: bool,
    /// Prediction file (JSON lines); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            1
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::IngestCheck(a) => ingest_check(a),
        Command::TrainStage1(a) => run_train_stage1(a.train),
        Command::TrainStage2(a) => run_train_stage2(a.train, a.ckpt1),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Predict(a) => run_predict(a),
    }
}

/// Resolves an input path, falling back to the data root for relative paths
/// that do not exist as given.
pub fn resolve(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(root) = std::env::var_os(DATA_ROOT_VAR) {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn load_corpus(corpus: &Path, dep: Option<&Path>) -> Result<Vec<AnnotatedSentence>> {
    let mut sentences = read_corpus(resolve(corpus))?;
    if let Some(dep) = dep {
        attach_heads(&mut sentences, &read_heads(resolve(dep))?)?;
    }
    Ok(sentences)
}

/// Refuses to overwrite any input.
fn check_output(out: &Path, inputs: &[Option<&Path>]) -> Result<()> {
    let Ok(target) = out.canonicalize() else {
        return Ok(());
    };
    for input in inputs.iter().flatten() {
        if resolve(input).canonicalize().is_ok_and(|p| p == target) {
            return Err(AsteError::Config(format!(
                "output {} would overwrite an input file",
                out.display()
            )));
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| AsteError::io(path, e))
}

fn ingest_check(a: IngestArgs) -> Result<()> {
    let sentences = load_corpus(&a.corpus, a.dep.as_deref())?;
    let stats = corpus_stats(&sentences);
    println!("sentences {}", stats.sentences);
    println!("pairs {}", stats.pairs);
    println!("aspects {}", stats.aspects);
    println!("opinions {}", stats.opinions);
    Ok(())
}

fn build_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::from_file(resolve(p))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    for s in &a.set {
        config.apply_override(s)?;
    }
    config.validate()?;
    Ok(config)
}

struct TrainData {
    config: TrainConfig,
    train: Vec<AnnotatedSentence>,
    valid: Vec<AnnotatedSentence>,
}

fn train_data(a: &TrainArgs) -> Result<TrainData> {
    let config = build_config(a)?;
    check_output(
        &a.out,
        &[
            Some(&a.corpus),
            a.dep.as_deref(),
            a.valid.as_deref(),
            a.valid_dep.as_deref(),
            a.emb.as_deref(),
            a.config.as_deref(),
        ],
    )?;
    let train = load_corpus(&a.corpus, a.dep.as_deref())?;
    let valid = match &a.valid {
        Some(v) => load_corpus(v, a.valid_dep.as_deref())?,
        None => Vec::new(),
    };
    Ok(TrainData { config, train, valid })
}

fn embeddings_for(a: &TrainArgs, data: &TrainData) -> Result<EmbeddingTable> {
    let extra = a
        .vocab_from
        .iter()
        .map(|p| read_corpus(resolve(p)))
        .collect::<Result<Vec<_>>>()?;
    let vocab = Vocabulary::build(
        [data.train.as_slice(), data.valid.as_slice()]
            .into_iter()
            .chain(extra.iter().map(Vec::as_slice)),
    );
    match &a.emb {
        Some(path) => EmbeddingTable::load(resolve(path), vocab, data.config.emb_dim, data.config.seed),
        None => {
            eprintln!("no --emb given; using random word vectors");
            Ok(EmbeddingTable::random(vocab, data.config.emb_dim, data.config.seed))
        }
    }
}

fn log_epoch(e: &crate::trainer::EpochLog) -> ControlFlow<()> {
    eprintln!("{e}");
    ControlFlow::Continue(())
}

fn run_train_stage1(a: TrainArgs) -> Result<()> {
    let data = train_data(&a)?;
    let embeddings = embeddings_for(&a, &data)?;
    let out = train_stage1(&data.config, &data.train, &data.valid, embeddings, log_epoch)?;
    checkpoint::save(&out.model, &a.out)?;
    println!("best epoch {} valid {:.6}", out.best_epoch, out.best_metric);
    Ok(())
}

fn run_train_stage2(a: TrainArgs, ckpt1: Option<PathBuf>) -> Result<()> {
    let data = train_data(&a)?;
    check_output(&a.out, &[ckpt1.as_deref()])?;
    let embeddings = match &ckpt1 {
        Some(path) => {
            let stage1: Stage1Model = checkpoint::load(resolve(path))?;
            if stage1.embeddings.dim() != data.config.emb_dim {
                return Err(AsteError::Dimension {
                    expected: data.config.emb_dim,
                    found: stage1.embeddings.dim(),
                    context: format!("word vectors of {}", path.display()),
                });
            }
            stage1.embeddings
        }
        None => embeddings_for(&a, &data)?,
    };
    let out = train_stage2(&data.config, &data.train, &data.valid, embeddings, log_epoch)?;
    checkpoint::save(&out.model, &a.out)?;
    println!("best epoch {} valid {:.6}", out.best_epoch, out.best_metric);
    Ok(())
}

fn parse_modes(mode: &str) -> Result<Vec<EvalMode>> {
    if mode == "all" {
        Ok(EvalMode::ALL.to_vec())
    } else {
        Ok(vec![mode.parse()?])
    }
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let modes = parse_modes(&a.mode)?;
    if let Some(out) = &a.out {
        check_output(out, &[Some(&a.gold), a.pred.as_deref()])?;
    }
    let gold_path = resolve(&a.gold);
    let (pred, gold) = match (&a.pred, &a.ckpt1, &a.ckpt2) {
        (Some(p), _, _) => (read_records(resolve(p))?, read_records(&gold_path)?),
        (None, Some(c1), Some(c2)) => {
            let sentences = load_corpus(&a.gold, a.dep.as_deref())?;
            let pipeline = Pipeline::load(resolve(c1), resolve(c2))?;
            let pred: Vec<SentenceRecord> = pipeline
                .predict_corpus(&sentences)?
                .into_iter()
                .map(|p| p.record)
                .collect();
            let gold = sentences
                .iter()
                .enumerate()
                .map(|(i, s)| SentenceRecord::from_gold(i, s))
                .collect();
            (pred, gold)
        }
        _ => return Err(AsteError::Config("evaluate needs --pred or both --ckpt1 and --ckpt2".into())),
    };
    let reports = modes
        .into_iter()
        .map(|m| evaluate(&pred, &gold, m))
        .collect::<Result<Vec<EvalReport>>>()?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&serde_json::to_string(r).expect("plain struct"));
        text.push('\n');
    }
    print!("{text}");
    if let Some(out) = &a.out {
        write_file(out, text.as_bytes())?;
    }
    Ok(())
}

fn read_raw(path: &Path, dep: Option<&Path>) -> Result<Vec<(Vec<String>, Option<DependencyGraph>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| AsteError::io(path, e))?;
    let sentences: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect();
    let graphs: Vec<Option<DependencyGraph>> = match dep {
        Some(d) => {
            let heads = read_heads(resolve(d))?;
            if heads.len() != sentences.len() {
                return Err(AsteError::Shape(format!(
                    "{} sentences but {} dependency lines",
                    sentences.len(),
                    heads.len()
                )));
            }
            sentences
                .iter()
                .zip(&heads)
                .enumerate()
                .map(|(i, (s, h))| {
                    if s.len() != h.len() {
                        return Err(AsteError::Shape(format!(
                            "sentence {i}: {} tokens but {} heads",
                            s.len(),
                            h.len()
                        )));
                    }
                    DependencyGraph::from_heads(h).map(Some)
                })
                .collect::<Result<_>>()?
        }
        None => vec![None; sentences.len()],
    };
    Ok(sentences.into_iter().zip(graphs).collect())
}

fn run_predict(a: PredictArgs) -> Result<()> {
    if let Some(out) = &a.out {
        check_output(
            out,
            &[Some(&a.corpus), a.dep.as_deref(), Some(&a.ckpt1), Some(&a.ckpt2)],
        )?;
    }
    let pipeline = Pipeline::load(resolve(&a.ckpt1), resolve(&a.ckpt2))?;
    let inputs: Vec<(Vec<String>, Option<DependencyGraph>)> = if a.raw {
        read_raw(&resolve(&a.corpus), a.dep.as_deref())?
    } else {
        load_corpus(&a.corpus, a.dep.as_deref())?
            .into_iter()
            .map(|s| (s.tokens, s.dep_graph))
            .collect()
    };
    let mut records = Vec::with_capacity(inputs.len());
    let mut dropped = 0;
    for (i, (tokens, graph)) in inputs.iter().enumerate() {
        let p = pipeline.predict(i, tokens, graph.as_ref())?;
        dropped += p.dropped;
        records.push(p.record);
    }
    let mut buf = Vec::new();
    write_records(&records, &mut buf).map_err(|e| AsteError::io("<buffer>", e))?;
    match &a.out {
        Some(out) => write_file(out, &buf)?,
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| AsteError::io("<stdout>", e))?,
    }
    let triplets: usize = records.iter().map(|r| r.triplets.len()).sum();
    eprintln!(
        "{} sentences, {triplets} triplets, {dropped} overlapping candidates dropped",
        records.len()
    );
    Ok(())
}
