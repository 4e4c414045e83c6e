//! Benchmark corpora, looked up under `ASTE_DATA_ROOT`.
//!
//! Expected layout: `<root>/<dataset>/{train,valid,test}.txt`, each with an
//! optional `.dep` head file alongside (`dev` is accepted for `valid`, and
//! `<root>/<dataset>.<split>` works too). Word vectors come from
//! `ASTE_EMB` or `<root>/glove.840B.300d.txt`.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use aste::config::TrainConfig;
use aste::corpus::{corpus_stats, read_corpus, AnnotatedSentence};
use aste::embeddings::{EmbeddingTable, Vocabulary};
use aste::eval::{evaluate, EvalMode, SentenceRecord};
use aste::graph::{attach_heads, read_heads};
use aste::pipeline::Pipeline;
use aste::trainer::{pair_examples, pair_report, train_stage1, train_stage2};

pub const DATASETS: [&str; 4] = ["14res", "14lap", "15res", "16res"];
pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

/// (sentences, pairs) per dataset and split.
pub const CORPUS_COUNTS: [[(usize, usize); 3]; 4] = [
    [(1300, 2145), (323, 524), (496, 862)],
    [(920, 1265), (228, 337), (339, 490)],
    [(593, 923), (148, 238), (318, 455)],
    [(842, 1289), (210, 316), (320, 465)],
];

/// Stage-two validation classifier F1, in points.
pub const CLASSIFIER_F1: [f64; 4] = [97.59, 94.36, 99.61, 97.91];
pub const CLASSIFIER_TOLERANCE: f64 = 2.0;

/// Test triplet F1 of the full pipeline, in points.
pub const TRIPLET_F1: [f64; 4] = [51.89, 43.50, 46.79, 53.62];
pub const TRIPLET_TOLERANCE: f64 = 3.0;

pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(aste::cli::DATA_ROOT_VAR).map(PathBuf::from)
}

pub fn split_path(root: &Path, dataset: &str, split: &str) -> Option<PathBuf> {
    let names: &[&str] = if split == "valid" { &["valid", "dev"] } else { &[split] };
    names.iter().find_map(|name| {
        [
            root.join(dataset).join(format!("{name}.txt")),
            root.join(dataset).join(name),
            root.join(format!("{dataset}.{name}")),
        ]
        .into_iter()
        .find(|p| p.is_file())
    })
}

pub fn embedding_path(root: &Path) -> Option<PathBuf> {
    std::env::var_os("ASTE_EMB")
        .map(PathBuf::from)
        .or_else(|| Some(root.join("glove.840B.300d.txt")))
        .filter(|p| p.is_file())
}

pub fn load_split(root: &Path, dataset: &str, split: &str) -> Result<Vec<AnnotatedSentence>, String> {
    let path = split_path(root, dataset, split).ok_or_else(|| format!("{dataset}/{split} not found"))?;
    let mut sentences = read_corpus(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let dep = path.with_extension("dep");
    if dep.is_file() {
        let heads = read_heads(&dep).map_err(|e| e.to_string())?;
        attach_heads(&mut sentences, &heads).map_err(|e| e.to_string())?;
    }
    Ok(sentences)
}

/// Every sentence and pair count of the four datasets.
pub fn corpus_fidelity(root: &Path) -> Result<String, String> {
    let mut mismatches = Vec::new();
    for (d, dataset) in DATASETS.iter().enumerate() {
        for (s, split) in SPLITS.iter().enumerate() {
            let stats = corpus_stats(&load_split(root, dataset, split)?);
            let expected = CORPUS_COUNTS[d][s];
            if (stats.sentences, stats.pairs) != expected {
                mismatches.push(format!(
                    "{dataset} {split}: {} / {} (expected {} / {})",
                    stats.sentences, stats.pairs, expected.0, expected.1
                ));
            }
        }
    }
    if mismatches.is_empty() {
        Ok("all 24 cells match".into())
    } else {
        Err(mismatches.join("; "))
    }
}

fn embeddings(root: &Path, corpora: &[&[AnnotatedSentence]]) -> Result<EmbeddingTable, String> {
    let path = embedding_path(root).ok_or("no word vectors (set ASTE_EMB)")?;
    let config = TrainConfig::default();
    EmbeddingTable::load(&path, Vocabulary::build(corpora.iter().copied()), config.emb_dim, config.seed)
        .map_err(|e| e.to_string())
}

fn quiet<T>(_: &T) -> ControlFlow<()> {
    ControlFlow::Continue(())
}

/// Validation classifier F1 of stage two trained on gold pairs.
pub fn classifier_reproduction(root: &Path) -> Result<String, String> {
    let mut lines = Vec::new();
    let mut failed = false;
    for (d, dataset) in DATASETS.iter().enumerate() {
        let (train, valid, test) = (
            load_split(root, dataset, "train")?,
            load_split(root, dataset, "valid")?,
            load_split(root, dataset, "test")?,
        );
        let emb = embeddings(root, &[&train, &valid, &test])?;
        let out = train_stage2(&TrainConfig::default(), &train, &valid, emb, quiet).map_err(|e| e.to_string())?;
        let f1 = 100.0 * pair_report(&out.model, &valid, &pair_examples(&valid)).map_err(|e| e.to_string())?.f1;
        let diff = f1 - CLASSIFIER_F1[d];
        failed |= diff.abs() > CLASSIFIER_TOLERANCE;
        lines.push(format!("{dataset} {f1:.2} ({diff:+.2})"));
    }
    let summary = lines.join(", ");
    if failed {
        Err(summary)
    } else {
        Ok(summary)
    }
}

/// Test triplet F1 of the full pipeline with default settings.
pub fn end_to_end(root: &Path) -> Result<String, String> {
    let mut lines = Vec::new();
    let mut failed = false;
    for (d, dataset) in DATASETS.iter().enumerate() {
        let (train, valid, test) = (
            load_split(root, dataset, "train")?,
            load_split(root, dataset, "valid")?,
            load_split(root, dataset, "test")?,
        );
        let emb = embeddings(root, &[&train, &valid, &test])?;
        let config = TrainConfig::default();
        let s1 = train_stage1(&config, &train, &valid, emb.clone(), quiet).map_err(|e| e.to_string())?;
        let s2 = train_stage2(&config, &train, &valid, emb, quiet).map_err(|e| e.to_string())?;
        let pipeline = Pipeline::new(s1.model, s2.model).map_err(|e| e.to_string())?;
        let pred: Vec<SentenceRecord> = pipeline
            .predict_corpus(&test)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| p.record)
            .collect();
        let gold: Vec<SentenceRecord> = test.iter().enumerate().map(|(i, s)| SentenceRecord::from_gold(i, s)).collect();
        let f1 = 100.0 * evaluate(&pred, &gold, EvalMode::Triplet).map_err(|e| e.to_string())?.f1;
        let diff = f1 - TRIPLET_F1[d];
        failed |= diff.abs() > TRIPLET_TOLERANCE;
        lines.push(format!("{dataset} {f1:.2} ({diff:+.2})"));
    }
    let summary = lines.join(", ");
    if failed {
        Err(summary)
    } else {
        Ok(summary)
    }
}
