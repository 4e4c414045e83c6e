//! Aspect/opinion pair classifier.
//!
//! Each candidate pair is encoded separately: every token gets its word
//! vector concatenated with a position vector (the pair's distance index on
//! aspect and opinion tokens, the pinned zero row elsewhere), a BiLSTM reads
//! the sequence, and the mean hidden states over both spans feed a binary
//! softmax classifier.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, Triplet};
use crate::embeddings::EmbeddingTable;
use crate::error::{AsteError, Result};
use crate::nn::{dropout_mask, prefixed, softmax_rows, BiLstm, BiLstmTrace, Linear, Parameters};
use crate::stage1::Stage1Decoding;
use crate::tags::{overlap_error, Polarity, Span};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Hyper {
    /// Position vector width.
    pub pos_dim: usize,
    /// Distances above this share one embedding row.
    pub pos_cap: usize,
    /// Hidden units per LSTM direction.
    pub hidden: usize,
    pub dropout: f64,
    pub threshold: f64,
}

impl Default for Stage2Hyper {
    fn default() -> Self {
        Stage2Hyper {
            pos_dim: 25,
            pos_cap: 50,
            hidden: 50,
            dropout: 0.5,
            threshold: 0.5,
        }
    }
}

impl Stage2Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.pos_dim == 0 || self.pos_cap == 0 {
            return Err(AsteError::Config(
                "stage-two hidden size, position width and distance cap must be positive".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(AsteError::Config(format!("threshold {} not in (0, 1)", self.threshold)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AsteError::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Distance index `max(1, floor(|center(a) - center(o)|))` with
/// `center(s, e) = (s + e) / 2`.
pub fn pair_distance(aspect: Span, opinion: Span) -> usize {
    (aspect.center2().abs_diff(opinion.center2()) / 2).max(1)
}

/// The distance index on every aspect and opinion token, 0 elsewhere.
pub fn position_indices(aspect: Span, opinion: Span, len: usize) -> Result<Vec<usize>> {
    aspect.check_bounds(len)?;
    opinion.check_bounds(len)?;
    if aspect.overlaps(&opinion) {
        return Err(overlap_error(&aspect, &opinion));
    }
    let d = pair_distance(aspect, opinion);
    let mut out = vec![0; len];
    for i in aspect.indices().chain(opinion.indices()) {
        out[i] = d;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub aspect: Span,
    pub polarity: Polarity,
    pub opinion: Span,
    pub position_indices: Vec<usize>,
}

impl CandidatePair {
    pub fn new(aspect: Span, polarity: Polarity, opinion: Span, len: usize) -> Result<Self> {
        Ok(CandidatePair {
            aspect,
            polarity,
            opinion,
            position_indices: position_indices(aspect, opinion, len)?,
        })
    }

    pub fn len(&self) -> usize {
        self.position_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position_indices.is_empty()
    }

    pub fn triplet(&self) -> Triplet {
        Triplet {
            aspect: self.aspect,
            polarity: self.polarity,
            opinion: self.opinion,
        }
    }
}

/// Candidates plus the number of combinations dropped because the two spans
/// overlap or fall outside the sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidatePool {
    pub pairs: Vec<CandidatePair>,
    pub dropped: usize,
}

/// Cross product of aspects and opinions in (aspect, opinion) order.
pub fn generate_candidates(aspects: &[(Span, Polarity)], opinions: &[Span], len: usize) -> CandidatePool {
    let mut pool = CandidatePool::default();
    for &(a, p) in aspects {
        for &o in opinions {
            match CandidatePair::new(a, p, o, len) {
                Ok(c) => pool.pairs.push(c),
                Err(_) => pool.dropped += 1,
            }
        }
    }
    pool
}

/// Gold pairs labelled `true`, every other gold aspect/opinion combination
/// labelled `false`.
pub fn build_training_pairs(gold: &AnnotatedSentence) -> Vec<(CandidatePair, bool)> {
    let aspects = crate::corpus::unique_aspects(&gold.triplets);
    let opinions = crate::corpus::unique_opinions(&gold.triplets);
    generate_candidates(&aspects, &opinions, gold.len())
        .pairs
        .into_iter()
        .map(|c| {
            let positive = gold
                .triplets
                .iter()
                .any(|t| t.aspect == c.aspect && t.opinion == c.opinion);
            (c, positive)
        })
        .collect()
}

/// Valid iff `probability >= threshold`.
pub fn pair_decode(probability: f64, threshold: f64) -> bool {
    probability >= threshold
}

/// One triplet per valid pair, polarity taken from the aspect.
pub fn assemble_triplets<'a>(valid: impl IntoIterator<Item = &'a CandidatePair>) -> Vec<Triplet> {
    valid.into_iter().map(CandidatePair::triplet).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Params {
    /// `(cap + 1) x P`; row 0 stays zero.
    pub position: Array2<f64>,
    pub encoder: BiLstm,
    /// Reads `[mean_aspect; mean_opinion]`, outputs (invalid, valid) logits.
    pub classifier: Linear,
}

impl Stage2Params {
    pub fn new<R: Rng>(rng: &mut R, word_dim: usize, hyper: &Stage2Hyper) -> Self {
        let dist = Uniform::new_inclusive(-0.25, 0.25);
        let mut position = Array2::from_shape_simple_fn((hyper.pos_cap + 1, hyper.pos_dim), || dist.sample(rng));
        position.row_mut(0).fill(0.0);
        Stage2Params {
            position,
            encoder: BiLstm::new(rng, word_dim + hyper.pos_dim, hyper.hidden),
            classifier: Linear::new(rng, 4 * hyper.hidden, 2),
        }
    }

    pub fn pos_cap(&self) -> usize {
        self.position.nrows() - 1
    }

    pub fn pos_dim(&self) -> usize {
        self.position.ncols()
    }
}

impl Parameters for Stage2Params {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        std::iter::once(("position".to_owned(), self.position.view().into_dyn()))
            .chain(prefixed("encoder", self.encoder.tensors()))
            .chain(prefixed("classifier", self.classifier.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let Stage2Params {
            position,
            encoder,
            classifier,
        } = self;
        std::iter::once(("position".to_owned(), position.view_mut().into_dyn()))
            .chain(prefixed("encoder", encoder.tensors_mut()))
            .chain(prefixed("classifier", classifier.tensors_mut()))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Stage2Trace {
    positions: Vec<usize>,
    aspect: Span,
    opinion: Span,
    encoder: BiLstmTrace,
    feature: Array1<f64>,
    mask: Option<Array1<f64>>,
    probs: Array1<f64>,
}

impl Stage2Trace {
    /// `[P(invalid), P(valid)]`.
    pub fn probs(&self) -> &Array1<f64> {
        &self.probs
    }

    pub fn hidden(&self) -> &Array2<f64> {
        self.encoder.output()
    }

    /// Pooled feature before dropout.
    pub fn feature(&self) -> &Array1<f64> {
        &self.feature
    }
}

fn span_mean(h: &Array2<f64>, span: Span) -> Array1<f64> {
    h.slice(s![span.start..=span.end, ..])
        .mean_axis(Axis(0))
        .expect("spans are non-empty")
}

/// Word vectors (`L x D`) and the pair's position vectors side by side.
pub fn pair_input(params: &Stage2Params, words: ArrayView2<'_, f64>, pair: &CandidatePair) -> Result<Array2<f64>> {
    let len = words.nrows();
    if pair.position_indices.len() != len {
        return Err(AsteError::Index {
            index: pair.position_indices.len(),
            len,
        });
    }
    pair.aspect.check_bounds(len)?;
    pair.opinion.check_bounds(len)?;
    let cap = params.pos_cap();
    let mut pos = Array2::zeros((len, params.pos_dim()));
    for (mut row, &d) in pos.rows_mut().into_iter().zip(&pair.position_indices) {
        row.assign(&params.position.row(d.min(cap)));
    }
    Ok(concatenate(Axis(1), &[words, pos.view()]).expect("equal row counts"))
}

/// Probability that the pair is valid, with the trace for backpropagation.
/// Dropout on the pooled feature is applied only when `dropout_rng` is given.
pub fn pair_forward<R: Rng>(
    params: &Stage2Params,
    hyper: &Stage2Hyper,
    words: ArrayView2<'_, f64>,
    pair: &CandidatePair,
    dropout_rng: Option<&mut R>,
) -> Result<(f64, Stage2Trace)> {
    let x = pair_input(params, words, pair)?;
    let encoder = params.encoder.run(x.view());
    let h = encoder.output();
    let feature = concatenate(
        Axis(0),
        &[span_mean(h, pair.aspect).view(), span_mean(h, pair.opinion).view()],
    )
    .expect("1-d");
    let mask = dropout_rng
        .filter(|_| hyper.dropout > 0.0)
        .map(|rng| dropout_mask(rng, (1, feature.len()), hyper.dropout).row(0).to_owned());
    let input = match &mask {
        Some(m) => &feature * m,
        None => feature.clone(),
    };
    let logits = params.classifier.forward_row(input.view());
    let probs = softmax_rows(&logits.insert_axis(Axis(0))).row(0).to_owned();
    let trace = Stage2Trace {
        positions: pair.position_indices.clone(),
        aspect: pair.aspect,
        opinion: pair.opinion,
        encoder,
        feature,
        mask,
        probs,
    };
    Ok((trace.probs[1], trace))
}

/// Cross-entropy of the trace's prediction against `label`.
pub fn pair_loss(trace: &Stage2Trace, label: bool) -> f64 {
    -trace.probs[usize::from(label)].ln()
}

/// Gradient of [`pair_loss`]. Returns parameter gradients and the gradient
/// with respect to the word vectors. The zero position row never receives
/// gradient.
pub fn pair_backward(params: &Stage2Params, trace: &Stage2Trace, label: bool) -> (Stage2Params, Array2<f64>) {
    let mut grad = params.zeroed();
    let mut dlogits = trace.probs.clone();
    dlogits[usize::from(label)] -= 1.0;

    let input = match &trace.mask {
        Some(m) => &trace.feature * m,
        None => trace.feature.clone(),
    };
    let dlogits2 = dlogits.view().insert_axis(Axis(0)).to_owned();
    let dinput = params
        .classifier
        .backward(input.view().insert_axis(Axis(0)), &dlogits2, &mut grad.classifier)
        .row(0)
        .to_owned();
    let dfeature = match &trace.mask {
        Some(m) => dinput * m,
        None => dinput,
    };

    let h = trace.encoder.output();
    let width = h.ncols();
    let mut dh = Array2::zeros(h.dim());
    for (span, part) in [(trace.aspect, 0), (trace.opinion, 1)] {
        let scale = 1.0 / span.len() as f64;
        let piece = dfeature.slice(s![part * width..(part + 1) * width]);
        for t in span.indices() {
            dh.row_mut(t).scaled_add(scale, &piece);
        }
    }
    let dx = params.encoder.backward_pass(&trace.encoder, dh.view(), &mut grad.encoder);
    let word_dim = dx.ncols() - params.pos_dim();
    let cap = params.pos_cap();
    for (t, &d) in trace.positions.iter().enumerate() {
        if d > 0 {
            grad.position
                .row_mut(d.min(cap))
                .scaled_add(1.0, &dx.slice(s![t, word_dim..]));
        }
    }
    (grad, dx.slice(s![.., ..word_dim]).to_owned())
}

/// A candidate with its validity probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPair {
    pub pair: CandidatePair,
    pub score: f64,
}

/// Parameters, hyperparameters and the shared frozen word vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Model {
    pub hyper: Stage2Hyper,
    pub params: Stage2Params,
    pub embeddings: EmbeddingTable,
}

impl Stage2Model {
    pub fn new<R: Rng>(rng: &mut R, hyper: Stage2Hyper, embeddings: EmbeddingTable) -> Result<Self> {
        hyper.validate()?;
        let params = Stage2Params::new(rng, embeddings.dim(), &hyper);
        Ok(Stage2Model {
            hyper,
            params,
            embeddings,
        })
    }

    pub fn word_vectors(&self, tokens: &[String]) -> Array2<f64> {
        self.embeddings.embed(&self.embeddings.indices(tokens))
    }

    /// Inference-mode probability.
    pub fn probability(&self, words: ArrayView2<'_, f64>, pair: &CandidatePair) -> Result<f64> {
        Ok(pair_forward::<rand_chacha::ChaCha8Rng>(&self.params, &self.hyper, words, pair, None)?.0)
    }

    pub fn loss_and_gradient<R: Rng>(
        &self,
        words: ArrayView2<'_, f64>,
        pair: &CandidatePair,
        label: bool,
        dropout_rng: Option<&mut R>,
    ) -> Result<(f64, Stage2Params)> {
        let (_, trace) = pair_forward(&self.params, &self.hyper, words, pair, dropout_rng)?;
        let (grad, _) = pair_backward(&self.params, &trace, label);
        Ok((pair_loss(&trace, label), grad))
    }

    /// Scores every candidate of a stage-one decoding.
    pub fn score(&self, tokens: &[String], decoding: &Stage1Decoding) -> Result<(Vec<ScoredPair>, usize)> {
        let pool = generate_candidates(&decoding.aspects, &decoding.opinions, tokens.len());
        let words = self.word_vectors(tokens);
        let scored = pool
            .pairs
            .into_iter()
            .map(|pair| {
                let score = self.probability(words.view(), &pair)?;
                Ok(ScoredPair { pair, score })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((scored, pool.dropped))
    }

    /// Candidates whose probability reaches the threshold.
    pub fn select(&self, scored: Vec<ScoredPair>) -> Vec<ScoredPair> {
        scored
            .into_iter()
            .filter(|p| pair_decode(p.score, self.hyper.threshold))
            .collect()
    }
}
