//! Vocabulary and frozen word vectors.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::AnnotatedSentence;
use crate::error::{AsteError, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Default word vector width.
pub const EMBEDDING_DIM: usize = 300;

/// Half-width of the uniform range used for out-of-vocabulary vectors.
pub const OOV_RANGE: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_words(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// `<pad>` and `<unk>` always occupy indices 0 and 1.
    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        vocab.insert(PAD.to_owned());
        vocab.insert(UNK.to_owned());
        for w in words {
            vocab.insert(w.into());
        }
        vocab
    }

    /// Collects tokens in order of first appearance.
    pub fn build<'a>(corpora: impl IntoIterator<Item = &'a [AnnotatedSentence]>) -> Self {
        let mut vocab = Self::default();
        for corpus in corpora {
            for s in corpus {
                for t in &s.tokens {
                    vocab.insert(t.clone());
                }
            }
        }
        vocab
    }

    fn insert(&mut self, word: String) -> usize {
        if let Some(&i) = self.index.get(&word) {
            return i;
        }
        let i = self.words.len();
        self.index.insert(word.clone(), i);
        self.words.push(word);
        i
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn lookup(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK_INDEX)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Hex SHA-256 over the word list; identifies a vocabulary across checkpoints.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    vectors: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocabulary, vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() != vocab.len() {
            return Err(AsteError::Shape(format!(
                "{} vectors for {} words",
                vectors.nrows(),
                vocab.len()
            )));
        }
        Ok(EmbeddingTable { vocab, vectors })
    }

    /// Every row except padding drawn from `U[-0.25, 0.25]`.
    pub fn random(vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-OOV_RANGE, OOV_RANGE);
        let mut vectors = Array2::zeros((vocab.len(), dim));
        for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
            if i != PAD_INDEX {
                row.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
            }
        }
        EmbeddingTable { vocab, vectors }
    }

    /// Loads `word v1 ... v_dim` lines. Vocabulary words found in the file
    /// (exact match first, then lowercase) take the file vector; the others
    /// get seeded uniform vectors drawn in vocabulary order.
    pub fn load(path: impl AsRef<Path>, vocab: Vocabulary, dim: usize, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| AsteError::io(path, e))?;
        let mut found: Vec<Option<(bool, Vec<f64>)>> = vec![None; vocab.len()];
        let mut lowercase: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, w) in vocab.words().iter().enumerate().skip(2) {
            lowercase.entry(w.to_lowercase()).or_default().push(i);
        }

        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| AsteError::io(path, e))?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            if values.len() != dim {
                return Err(AsteError::Dimension {
                    expected: dim,
                    found: values.len(),
                    context: format!("{} line {}", path.display(), n + 1),
                });
            }
            let exact = vocab.get(word).filter(|&i| i > UNK_INDEX);
            let folded: &[usize] = lowercase.get(word).map_or(&[], Vec::as_slice);
            if exact.is_none() && folded.is_empty() {
                continue;
            }
            let parsed = values
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| AsteError::format(n + 1, format!("bad vector value {v:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(i) = exact {
                found[i] = Some((true, parsed.clone()));
            }
            for &i in folded {
                if !matches!(found[i], Some((true, _))) {
                    found[i] = Some((false, parsed.clone()));
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-OOV_RANGE, OOV_RANGE);
        let mut vectors = Array2::zeros((vocab.len(), dim));
        for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
            match (&found[i], i) {
                (_, PAD_INDEX) => {}
                (Some((_, v)), _) => row.iter_mut().zip(v).for_each(|(r, x)| *r = *x),
                (None, _) => row.iter_mut().for_each(|r| *r = dist.sample(&mut rng)),
            }
        }
        Ok(EmbeddingTable { vocab, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut Array2<f64> {
        &mut self.vectors
    }

    pub fn vector(&self, word: &str) -> ArrayView1<'_, f64> {
        self.vectors.row(self.vocab.lookup(word))
    }

    pub fn indices(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.lookup(t)).collect()
    }

    /// `L x dim` matrix of token vectors.
    pub fn embed(&self, indices: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((indices.len(), self.dim()));
        for (mut row, &i) in out.rows_mut().into_iter().zip(indices) {
            row.assign(&self.vectors.row(i));
        }
        out
    }
}
