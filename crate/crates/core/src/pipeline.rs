//! Two-stage inference: tag, pair up, classify.

use std::path::Path;

use crate::checkpoint;
use crate::corpus::AnnotatedSentence;
use crate::error::{AsteError, Result};
use crate::eval::{AspectRecord, ScoredTriplet, SentenceRecord};
use crate::graph::DependencyGraph;
use crate::stage1::{Stage1Decoding, Stage1Model};
use crate::stage2::Stage2Model;

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub stage1: Stage1Model,
    pub stage2: Stage2Model,
}

/// One sentence's prediction plus the number of candidates dropped for
/// overlapping spans.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub record: SentenceRecord,
    pub dropped: usize,
}

impl Pipeline {
    /// Both stages must read the same vocabulary.
    pub fn new(stage1: Stage1Model, stage2: Stage2Model) -> Result<Self> {
        let (h1, h2) = (stage1.embeddings.vocab().hash(), stage2.embeddings.vocab().hash());
        if h1 != h2 {
            return Err(AsteError::Compatibility(format!(
                "stage-one vocabulary {} differs from stage-two vocabulary {}",
                &h1[..12],
                &h2[..12]
            )));
        }
        if stage1.embeddings.dim() != stage2.embeddings.dim() {
            return Err(AsteError::Compatibility(format!(
                "word vector widths {} and {}",
                stage1.embeddings.dim(),
                stage2.embeddings.dim()
            )));
        }
        Ok(Pipeline { stage1, stage2 })
    }

    pub fn load(ckpt1: impl AsRef<Path>, ckpt2: impl AsRef<Path>) -> Result<Self> {
        Self::new(checkpoint::load(ckpt1)?, checkpoint::load(ckpt2)?)
    }

    /// Second stage over a given stage-one decoding.
    pub fn pair_stage(&self, id: usize, tokens: &[String], decoding: Stage1Decoding) -> Result<Prediction> {
        let (scored, dropped) = self.stage2.score(tokens, &decoding)?;
        let triplets = self
            .stage2
            .select(scored)
            .into_iter()
            .map(|p| ScoredTriplet {
                aspect: p.pair.aspect,
                polarity: p.pair.polarity,
                opinion: p.pair.opinion,
                score: p.score,
            })
            .collect();
        Ok(Prediction {
            record: SentenceRecord {
                id,
                tokens: tokens.to_vec(),
                triplets,
                aspects: Some(
                    decoding
                        .aspects
                        .into_iter()
                        .map(|(span, polarity)| AspectRecord { span, polarity })
                        .collect(),
                ),
                opinions: Some(decoding.opinions),
            },
            dropped,
        })
    }

    pub fn predict(&self, id: usize, tokens: &[String], graph: Option<&DependencyGraph>) -> Result<Prediction> {
        if tokens.is_empty() {
            return Ok(Prediction {
                record: SentenceRecord {
                    id,
                    tokens: Vec::new(),
                    triplets: Vec::new(),
                    aspects: Some(Vec::new()),
                    opinions: Some(Vec::new()),
                },
                dropped: 0,
            });
        }
        let decoding = self.stage1.predict(&self.stage1.input(tokens, graph)?)?;
        self.pair_stage(id, tokens, decoding)
    }

    /// Predicts every sentence; ids are corpus positions.
    pub fn predict_corpus(&self, sentences: &[AnnotatedSentence]) -> Result<Vec<Prediction>> {
        sentences
            .iter()
            .enumerate()
            .map(|(i, s)| self.predict(i, &s.tokens, s.dep_graph.as_ref()))
            .collect()
    }
}
