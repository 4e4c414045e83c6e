#![allow(dead_code)]

use std::path::PathBuf;

use aste::corpus::{read_corpus, AnnotatedSentence};
use aste::embeddings::{EmbeddingTable, Vocabulary};
use aste::graph::{attach_heads, read_heads};

pub const FIXTURE_DIM: usize = 16;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// A fixture split with its dependency heads attached.
pub fn split(name: &str) -> Vec<AnnotatedSentence> {
    let mut s = read_corpus(data_path(&format!("{name}.txt"))).unwrap();
    let heads = read_heads(data_path(&format!("{name}.dep"))).unwrap();
    attach_heads(&mut s, &heads).unwrap();
    s
}

pub fn fixture_embeddings() -> EmbeddingTable {
    let (train, valid, test) = (split("train"), split("valid"), split("test"));
    let vocab = Vocabulary::build([train.as_slice(), valid.as_slice(), test.as_slice()]);
    EmbeddingTable::load(data_path("vectors.txt"), vocab, FIXTURE_DIM, 1).unwrap()
}

/// Relative error used by the gradient checks.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub mod gradcheck;
pub mod oracle;
pub mod codec;
pub mod structure;
pub mod capacity;
pub mod datasets;
