//! Self-describing binary checkpoints.
//!
//! Layout: 8-byte magic `ASTECKPT`, `u32` schema version, `u64` header
//! length, a JSON header (kind, hyperparameters, vocabulary, vocabulary hash,
//! tensor directory), then every tensor's values as little-endian `f64` in
//! directory order. The word-vector table is stored as the tensor
//! `embeddings`.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayViewD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::error::{AsteError, Result};
use crate::nn::Parameters;
use crate::stage1::{Stage1Hyper, Stage1Model, Stage1Params};
use crate::stage2::{Stage2Hyper, Stage2Model, Stage2Params};

pub const MAGIC: &[u8; 8] = b"ASTECKPT";
pub const SCHEMA_VERSION: u32 = 1;

const EMBEDDINGS: &str = "embeddings";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub hyper: serde_json::Value,
    pub vocab: Vec<String>,
    pub vocab_hash: String,
    pub tensors: Vec<TensorEntry>,
}

/// A model that can be written to and read from a checkpoint.
pub trait Checkpointable: Sized {
    const KIND: &'static str;
    type Hyper: Serialize + DeserializeOwned;
    type Params: Parameters;

    fn hyper(&self) -> &Self::Hyper;
    fn params(&self) -> &Self::Params;
    fn embeddings(&self) -> &EmbeddingTable;
    /// Parameters with the right shapes for `hyper` and a word width.
    fn blank_params(hyper: &Self::Hyper, word_dim: usize) -> Self::Params;
    fn assemble(hyper: Self::Hyper, params: Self::Params, embeddings: EmbeddingTable) -> Self;
}

impl Checkpointable for Stage1Model {
    const KIND: &'static str = "stage1";
    type Hyper = Stage1Hyper;
    type Params = Stage1Params;

    fn hyper(&self) -> &Stage1Hyper {
        &self.hyper
    }

    fn params(&self) -> &Stage1Params {
        &self.params
    }

    fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    fn blank_params(hyper: &Stage1Hyper, word_dim: usize) -> Stage1Params {
        Stage1Params::new(&mut ChaCha8Rng::seed_from_u64(0), word_dim, hyper)
    }

    fn assemble(hyper: Stage1Hyper, params: Stage1Params, embeddings: EmbeddingTable) -> Self {
        Stage1Model {
            hyper,
            params,
            embeddings,
        }
    }
}

impl Checkpointable for Stage2Model {
    const KIND: &'static str = "stage2";
    type Hyper = Stage2Hyper;
    type Params = Stage2Params;

    fn hyper(&self) -> &Stage2Hyper {
        &self.hyper
    }

    fn params(&self) -> &Stage2Params {
        &self.params
    }

    fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    fn blank_params(hyper: &Stage2Hyper, word_dim: usize) -> Stage2Params {
        Stage2Params::new(&mut ChaCha8Rng::seed_from_u64(0), word_dim, hyper)
    }

    fn assemble(hyper: Stage2Hyper, params: Stage2Params, embeddings: EmbeddingTable) -> Self {
        Stage2Model {
            hyper,
            params,
            embeddings,
        }
    }
}

fn corrupt(msg: impl Into<String>) -> AsteError {
    AsteError::Checkpoint(msg.into())
}

pub fn to_bytes<M: Checkpointable>(model: &M) -> Result<Vec<u8>> {
    let emb = model.embeddings();
    let mut tensors: Vec<(String, ArrayViewD<'_, f64>)> = vec![(EMBEDDINGS.into(), emb.vectors().view().into_dyn())];
    tensors.extend(model.params().tensors());
    let header = CheckpointHeader {
        kind: M::KIND.into(),
        hyper: serde_json::to_value(model.hyper()).map_err(|e| corrupt(e.to_string()))?,
        vocab: emb.vocab().words().to_vec(),
        vocab_hash: emb.vocab().hash(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
    let values: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(20 + header.len() + 8 * values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn split_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != SCHEMA_VERSION {
        return Err(corrupt(format!("schema version {version}, expected {SCHEMA_VERSION}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < len {
        return Err(corrupt("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[..len]).map_err(|e| corrupt(e.to_string()))?;
    Ok((header, &body[len..]))
}

pub fn header_from_bytes(bytes: &[u8]) -> Result<CheckpointHeader> {
    Ok(split_header(bytes)?.0)
}

pub fn from_bytes<M: Checkpointable>(bytes: &[u8]) -> Result<M> {
    let (header, mut data) = split_header(bytes)?;
    if header.kind != M::KIND {
        return Err(corrupt(format!("expected a {} checkpoint, found {}", M::KIND, header.kind)));
    }
    let vocab = Vocabulary::from_words(header.vocab.iter().cloned());
    if vocab.len() != header.vocab.len() || vocab.hash() != header.vocab_hash {
        return Err(corrupt("vocabulary does not match its recorded hash"));
    }

    let mut stored: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        if data.len() < 8 * n {
            return Err(corrupt(format!("truncated tensor {}", entry.name)));
        }
        let values = data[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[8 * n..];
        if stored.insert(entry.name.clone(), (entry.shape.clone(), values)).is_some() {
            return Err(corrupt(format!("duplicate tensor {}", entry.name)));
        }
    }
    if !data.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", data.len())));
    }

    let (shape, values) = stored
        .remove(EMBEDDINGS)
        .ok_or_else(|| corrupt("missing word vectors"))?;
    if shape.len() != 2 {
        return Err(corrupt("word vectors must be a matrix"));
    }
    let vectors = Array2::from_shape_vec((shape[0], shape[1]), values).map_err(|e| corrupt(e.to_string()))?;
    let embeddings = EmbeddingTable::new(vocab, vectors)?;

    let hyper: M::Hyper = serde_json::from_value(header.hyper).map_err(|e| corrupt(e.to_string()))?;
    let mut params = M::blank_params(&hyper, embeddings.dim());
    for (name, mut tensor) in params.tensors_mut() {
        let (shape, values) = stored
            .remove(&name)
            .ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if tensor.shape() != shape.as_slice() {
            return Err(corrupt(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                tensor.shape()
            )));
        }
        let array = ndarray::ArrayD::from_shape_vec(IxDyn(&shape), values).map_err(|e| corrupt(e.to_string()))?;
        tensor.assign(&array);
    }
    if let Some(name) = stored.keys().next() {
        return Err(corrupt(format!("unexpected tensor {name}")));
    }
    Ok(M::assemble(hyper, params, embeddings))
}

pub fn save<M: Checkpointable>(model: &M, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)?).map_err(|e| AsteError::io(path, e))
}

pub fn load<M: Checkpointable>(path: impl AsRef<Path>) -> Result<M> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| AsteError::io(path, e))?;
    from_bytes(&bytes)
}

pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| AsteError::io(path, e))?;
    header_from_bytes(&bytes)
}
