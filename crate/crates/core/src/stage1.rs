//! Joint aspect/sentiment and opinion tagger.
//!
//! Data flow for a sentence of `L` tokens:
//!
//! ```text
//! x ─ BiLSTM_T ─ h_T ─ W_T ─ z_T ───────────── W_tr ─ z_S' ─┐
//!  │               └─ BiLSTM_S ─ h_S ─ gate ─ h~_S ─┐        ├─ fuse ─ z_TS
//!  │                                     [h~_S; h_OPT] ─ W_S ─ z_S ─┘
//!  └─ GCN ─ h_O ─ [h_T; h_O] ─ W_TG ─ z_TG
//!            └─ BiLSTM_OPT ─ h_OPT ─ W_OPT ─ z_OPT
//! ```
//!
//! The fusion weight is `α_t = ε (z_T · z_T)`, so a confident boundary tagger
//! leans harder on the transformed distribution `z_S'`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedSentence;
use crate::embeddings::EmbeddingTable;
use crate::error::{AsteError, Result};
use crate::graph::DependencyGraph;
use crate::nn::{dropout_mask, prefixed, sigmoid, softmax_backward, softmax_rows, BiLstm, BiLstmTrace, Gcn, GcnTrace, Linear, Parameters};
use crate::tags::{tags_to_spans, Boundary, Polarity, SpanTag, Span, UnifiedTag};

pub const BOUNDARY_TAGS: usize = Boundary::COUNT;
pub const UNIFIED_TAGS: usize = UnifiedTag::COUNT;
pub const OPINION_TAGS: usize = Boundary::COUNT;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Hyper {
    /// Hidden units per LSTM direction.
    pub hidden: usize,
    pub gcn_layers: usize,
    pub dropout: f64,
    pub epsilon: f64,
    pub train_embeddings: bool,
}

impl Default for Stage1Hyper {
    fn default() -> Self {
        Stage1Hyper {
            hidden: 50,
            gcn_layers: 1,
            dropout: 0.5,
            epsilon: 0.5,
            train_embeddings: false,
        }
    }
}

impl Stage1Hyper {
    pub fn gcn_output(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.gcn_layers == 0 {
            return Err(AsteError::Config("hidden size and GCN depth must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(AsteError::Config(format!("epsilon {} not in (0, 1)", self.epsilon)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AsteError::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Constant boundary-to-unified transition matrix (`5 x 13`).
///
/// Row `b` spreads its mass evenly over `b-POS`, `b-NEG`, `b-NEU`; row `O`
/// maps to `O` only. Every other entry is zero.
pub fn transition_matrix() -> Array2<f64> {
    let mut m = Array2::zeros((BOUNDARY_TAGS, UNIFIED_TAGS));
    for b in Boundary::ALL {
        if b == Boundary::O {
            m[[b.index(), UnifiedTag::Outside.index()]] = 1.0;
        } else {
            for p in Polarity::ALL {
                m[[b.index(), UnifiedTag::Aspect(b, p).index()]] = 1.0 / 3.0;
            }
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Params {
    /// Word vectors to `h_T`.
    pub boundary_encoder: BiLstm,
    /// `h_T` to `h_S`.
    pub sentiment_encoder: BiLstm,
    /// Sentiment-consistency gate `W_g, b_g`.
    pub gate: Linear,
    pub boundary_head: Linear,
    /// Reads `[h~_S; h_OPT]`.
    pub unified_head: Linear,
    pub gcn: Gcn,
    /// Reads `[h_T; h_O]`.
    pub guidance_head: Linear,
    pub opinion_encoder: BiLstm,
    pub opinion_head: Linear,
}

impl Stage1Params {
    pub fn new<R: Rng>(rng: &mut R, input: usize, hyper: &Stage1Hyper) -> Self {
        let h = hyper.hidden;
        let g = hyper.gcn_output();
        Stage1Params {
            boundary_encoder: BiLstm::new(rng, input, h),
            sentiment_encoder: BiLstm::new(rng, 2 * h, h),
            gate: Linear::new(rng, 2 * h, 2 * h),
            boundary_head: Linear::new(rng, 2 * h, BOUNDARY_TAGS),
            unified_head: Linear::new(rng, 4 * h, UNIFIED_TAGS),
            gcn: Gcn::new(rng, input, g, hyper.gcn_layers),
            guidance_head: Linear::new(rng, 2 * h + g, OPINION_TAGS),
            opinion_encoder: BiLstm::new(rng, g, h),
            opinion_head: Linear::new(rng, 2 * h, OPINION_TAGS),
        }
    }

    pub fn hidden(&self) -> usize {
        self.boundary_encoder.hidden_size()
    }
}

impl Parameters for Stage1Params {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        prefixed("boundary_encoder", self.boundary_encoder.tensors())
            .chain(prefixed("sentiment_encoder", self.sentiment_encoder.tensors()))
            .chain(prefixed("gate", self.gate.tensors()))
            .chain(prefixed("boundary_head", self.boundary_head.tensors()))
            .chain(prefixed("unified_head", self.unified_head.tensors()))
            .chain(prefixed("gcn", self.gcn.tensors()))
            .chain(prefixed("guidance_head", self.guidance_head.tensors()))
            .chain(prefixed("opinion_encoder", self.opinion_encoder.tensors()))
            .chain(prefixed("opinion_head", self.opinion_head.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let Stage1Params {
            boundary_encoder,
            sentiment_encoder,
            gate,
            boundary_head,
            unified_head,
            gcn,
            guidance_head,
            opinion_encoder,
            opinion_head,
        } = self;
        prefixed("boundary_encoder", boundary_encoder.tensors_mut())
            .chain(prefixed("sentiment_encoder", sentiment_encoder.tensors_mut()))
            .chain(prefixed("gate", gate.tensors_mut()))
            .chain(prefixed("boundary_head", boundary_head.tensors_mut()))
            .chain(prefixed("unified_head", unified_head.tensors_mut()))
            .chain(prefixed("gcn", gcn.tensors_mut()))
            .chain(prefixed("guidance_head", guidance_head.tensors_mut()))
            .chain(prefixed("opinion_encoder", opinion_encoder.tensors_mut()))
            .chain(prefixed("opinion_head", opinion_head.tensors_mut()))
            .collect()
    }
}

/// Sentiment-consistency gate state for one sentence.
#[derive(Clone, Debug)]
pub struct ConsistencyTrace {
    input: Array2<f64>,
    gates: Array2<f64>,
    output: Array2<f64>,
}

impl ConsistencyTrace {
    pub fn gates(&self) -> &Array2<f64> {
        &self.gates
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// `g_t = σ(W_g h_t + b_g)`, `h~_t = g_t ⊙ h_t + (1 - g_t) ⊙ h~_{t-1}`, with a
/// zero carry before the first token.
pub fn sentiment_consistency(gate: &Linear, h: &Array2<f64>) -> ConsistencyTrace {
    let gates = gate.forward(h.view()).mapv(sigmoid);
    let mut output = Array2::zeros(h.raw_dim());
    let mut carry = Array1::zeros(h.ncols());
    for t in 0..h.nrows() {
        let g = gates.row(t);
        let next = &g * &h.row(t) + &(g.mapv(|v| 1.0 - v) * &carry);
        output.row_mut(t).assign(&next);
        carry = next;
    }
    ConsistencyTrace {
        input: h.clone(),
        gates,
        output,
    }
}

fn sentiment_consistency_backward(gate: &Linear, trace: &ConsistencyTrace, dout: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
    let (len, dim) = trace.input.dim();
    let mut dh = Array2::zeros((len, dim));
    let mut dpre = Array2::zeros((len, dim));
    let mut carry = Array1::<f64>::zeros(dim);
    for t in (0..len).rev() {
        let total = &dout.row(t) + &carry;
        for k in 0..dim {
            let g = trace.gates[[t, k]];
            let prev = if t > 0 { trace.output[[t - 1, k]] } else { 0.0 };
            dh[[t, k]] = g * total[k];
            dpre[[t, k]] = total[k] * (trace.input[[t, k]] - prev) * g * (1.0 - g);
            carry[k] = (1.0 - g) * total[k];
        }
    }
    dh + gate.backward(trace.input.view(), &dpre, grad)
}

/// `z_S' = W_tr^T z_T`, row-wise.
pub fn boundary_guidance(z_boundary: &Array2<f64>) -> Array2<f64> {
    z_boundary.dot(&transition_matrix())
}

/// `c_t = z_T · z_T` per row.
pub fn concentration(z_boundary: &Array2<f64>) -> Array1<f64> {
    z_boundary.rows().into_iter().map(|r| r.dot(&r)).collect()
}

/// Returns `(z_TS, α)` with `z_TS = α z_S' + (1 - α) z_S`.
pub fn fuse(z_boundary: &Array2<f64>, z_transformed: &Array2<f64>, z_reinforced: &Array2<f64>, epsilon: f64) -> (Array2<f64>, Array1<f64>) {
    let alpha = concentration(z_boundary) * epsilon;
    let mut fused = z_reinforced.clone();
    for ((mut row, a), zt) in fused.rows_mut().into_iter().zip(&alpha).zip(z_transformed.rows()) {
        row.mapv_inplace(|v| (1.0 - a) * v);
        row.scaled_add(*a, &zt);
    }
    (fused, alpha)
}

/// `softmax(W_S [h~_S; h_OPT])`.
pub fn reinforced_prediction(head: &Linear, h_consistent: &Array2<f64>, h_opinion: &Array2<f64>) -> Array2<f64> {
    let joined = concat(h_consistent, h_opinion);
    softmax_rows(&head.forward(joined.view()))
}

/// `softmax(W_TG [h_T; h_O])`.
pub fn target_guidance(head: &Linear, h_boundary: &Array2<f64>, h_graph: &Array2<f64>) -> Array2<f64> {
    let joined = concat(h_boundary, h_graph);
    softmax_rows(&head.forward(joined.view()))
}

fn concat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("equal row counts")
}

/// Everything the forward pass exposes.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Output {
    pub h_boundary: Array2<f64>,
    pub z_boundary: Array2<f64>,
    pub h_sentiment: Array2<f64>,
    pub h_consistent: Array2<f64>,
    pub z_transformed: Array2<f64>,
    pub z_reinforced: Array2<f64>,
    pub z_unified: Array2<f64>,
    pub alpha: Array1<f64>,
    pub h_graph: Array2<f64>,
    pub z_guidance: Array2<f64>,
    pub h_opinion: Array2<f64>,
    pub z_opinion: Array2<f64>,
}

/// Intermediate state kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Stage1Trace {
    boundary: BiLstmTrace,
    sentiment: BiLstmTrace,
    consistency: ConsistencyTrace,
    graph: GcnTrace,
    opinion: BiLstmTrace,
    adjacency: Array2<f64>,
    /// Head inputs after dropout.
    boundary_in: Array2<f64>,
    unified_in: Array2<f64>,
    guidance_in: Array2<f64>,
    opinion_in: Array2<f64>,
    masks: Option<[Array2<f64>; 4]>,
}

/// Gold label indices for the four heads. The guidance and opinion heads
/// share the opinion sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Gold {
    pub boundary: Vec<usize>,
    pub unified: Vec<usize>,
    pub opinion: Vec<usize>,
}

impl Stage1Gold {
    pub fn from_sentence(s: &AnnotatedSentence) -> Self {
        Stage1Gold {
            boundary: s.boundary_tags().iter().map(|t| t.index()).collect(),
            unified: s.unified_tags.iter().map(|t| t.index()).collect(),
            opinion: s.opinion_tags.iter().map(|t| t.index()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.unified.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unified.is_empty()
    }
}

/// Runs the full tagger. Dropout is applied only when `dropout_rng` is given.
pub fn stage1_forward<R: Rng>(
    params: &Stage1Params,
    hyper: &Stage1Hyper,
    x: ArrayView2<'_, f64>,
    adjacency: ArrayView2<'_, f64>,
    dropout_rng: Option<&mut R>,
) -> Result<(Stage1Output, Stage1Trace)> {
    let len = x.nrows();
    if len == 0 {
        return Err(AsteError::Shape("empty sentence".into()));
    }
    if adjacency.dim() != (len, len) {
        return Err(AsteError::Shape(format!(
            "adjacency {:?} for sentence of length {len}",
            adjacency.dim()
        )));
    }
    let h = params.hidden();

    let boundary = params.boundary_encoder.run(x);
    let h_boundary = boundary.output().clone();
    let sentiment = params.sentiment_encoder.run(h_boundary.view());
    let h_sentiment = sentiment.output().clone();
    let consistency = sentiment_consistency(&params.gate, &h_sentiment);
    let graph = params.gcn.forward(adjacency, x);
    let h_graph = graph.output().clone();
    let opinion = params.opinion_encoder.run(h_graph.view());
    let h_opinion = opinion.output().clone();

    let mut boundary_in = h_boundary.clone();
    let mut unified_in = concat(consistency.output(), &h_opinion);
    let mut guidance_in = concat(&h_boundary, &h_graph);
    let mut opinion_in = h_opinion.clone();
    let masks = dropout_rng.filter(|_| hyper.dropout > 0.0).map(|rng| {
        let p = hyper.dropout;
        let m = [
            dropout_mask(rng, boundary_in.dim(), p),
            dropout_mask(rng, unified_in.dim(), p),
            dropout_mask(rng, guidance_in.dim(), p),
            dropout_mask(rng, opinion_in.dim(), p),
        ];
        boundary_in *= &m[0];
        unified_in *= &m[1];
        guidance_in *= &m[2];
        opinion_in *= &m[3];
        m
    });

    let z_boundary = softmax_rows(&params.boundary_head.forward(boundary_in.view()));
    let z_transformed = boundary_guidance(&z_boundary);
    let z_reinforced = softmax_rows(&params.unified_head.forward(unified_in.view()));
    let (z_unified, alpha) = fuse(&z_boundary, &z_transformed, &z_reinforced, hyper.epsilon);
    let z_guidance = softmax_rows(&params.guidance_head.forward(guidance_in.view()));
    let z_opinion = softmax_rows(&params.opinion_head.forward(opinion_in.view()));
    debug_assert_eq!(h_opinion.ncols(), 2 * h);

    let output = Stage1Output {
        h_boundary,
        z_boundary,
        h_sentiment,
        h_consistent: consistency.output().clone(),
        z_transformed,
        z_reinforced,
        z_unified,
        alpha,
        h_graph,
        z_guidance,
        h_opinion,
        z_opinion,
    };
    let trace = Stage1Trace {
        boundary,
        sentiment,
        consistency,
        graph,
        opinion,
        adjacency: adjacency.to_owned(),
        boundary_in,
        unified_in,
        guidance_in,
        opinion_in,
        masks,
    };
    Ok((output, trace))
}

fn mean_nll(z: &Array2<f64>, gold: &[usize]) -> f64 {
    -gold
        .iter()
        .enumerate()
        .map(|(t, &y)| z[[t, y]].ln())
        .sum::<f64>()
        / gold.len() as f64
}

/// Per-head losses `[L_T, L_TS, L_TG, L_OPT]`.
pub fn stage1_head_losses(output: &Stage1Output, gold: &Stage1Gold) -> Result<[f64; 4]> {
    let len = output.z_unified.nrows();
    if gold.boundary.len() != len || gold.unified.len() != len || gold.opinion.len() != len {
        return Err(AsteError::Shape(format!(
            "gold length {} for output length {len}",
            gold.len()
        )));
    }
    Ok([
        mean_nll(&output.z_boundary, &gold.boundary),
        mean_nll(&output.z_unified, &gold.unified),
        mean_nll(&output.z_guidance, &gold.opinion),
        mean_nll(&output.z_opinion, &gold.opinion),
    ])
}

/// `J = L_T + L_TS + L_TG + L_OPT`.
pub fn stage1_loss(output: &Stage1Output, gold: &Stage1Gold) -> Result<f64> {
    Ok(stage1_head_losses(output, gold)?.iter().sum())
}

/// `(p - onehot) / L`: gradient of mean cross-entropy w.r.t. logits.
fn cross_entropy_logit_grad(z: &Array2<f64>, gold: &[usize]) -> Array2<f64> {
    let n = gold.len() as f64;
    let mut d = z.clone();
    for (t, &y) in gold.iter().enumerate() {
        d[[t, y]] -= 1.0;
    }
    d / n
}

fn apply_mask(d: Array2<f64>, masks: &Option<[Array2<f64>; 4]>, which: usize) -> Array2<f64> {
    match masks {
        Some(m) => d * &m[which],
        None => d,
    }
}

/// Gradient of `J` w.r.t. every parameter, plus `dJ/dx` for the word vectors.
pub fn stage1_backward(
    params: &Stage1Params,
    hyper: &Stage1Hyper,
    output: &Stage1Output,
    trace: &Stage1Trace,
    gold: &Stage1Gold,
) -> Result<(Stage1Params, Array2<f64>)> {
    stage1_head_losses(output, gold)?;
    let mut grad = params.zeroed();
    let len = gold.len();
    let n = len as f64;
    let h2 = 2 * params.hidden();

    // Fused unified head: z_TS depends on z_T (through z_S' and α) and z_S.
    let mut d_fused = Array2::zeros(output.z_unified.raw_dim());
    for (t, &y) in gold.unified.iter().enumerate() {
        d_fused[[t, y]] = -1.0 / (n * output.z_unified[[t, y]]);
    }
    let mut d_reinforced = d_fused.clone();
    let mut d_transformed = d_fused.clone();
    let mut d_alpha = Array1::zeros(len);
    for t in 0..len {
        let a = output.alpha[t];
        d_reinforced.row_mut(t).mapv_inplace(|v| v * (1.0 - a));
        d_transformed.row_mut(t).mapv_inplace(|v| v * a);
        d_alpha[t] = d_fused
            .row(t)
            .dot(&(&output.z_transformed.row(t) - &output.z_reinforced.row(t)));
    }
    let mut d_zb = d_transformed.dot(&transition_matrix().t());
    for t in 0..len {
        let scale = 2.0 * hyper.epsilon * d_alpha[t];
        d_zb.row_mut(t).scaled_add(scale, &output.z_boundary.row(t));
    }
    let d_logit_boundary = softmax_backward(&output.z_boundary, &d_zb)
        + cross_entropy_logit_grad(&output.z_boundary, &gold.boundary);
    let d_logit_unified = softmax_backward(&output.z_reinforced, &d_reinforced);
    let d_logit_guidance = cross_entropy_logit_grad(&output.z_guidance, &gold.opinion);
    let d_logit_opinion = cross_entropy_logit_grad(&output.z_opinion, &gold.opinion);

    // Unified head -> [h~_S; h_OPT].
    let d_unified_in = params
        .unified_head
        .backward(trace.unified_in.view(), &d_logit_unified, &mut grad.unified_head);
    let d_unified_in = apply_mask(d_unified_in, &trace.masks, 1);
    let d_consistent = d_unified_in.slice(s![.., ..h2]).to_owned();
    let mut d_opinion = d_unified_in.slice(s![.., h2..]).to_owned();

    let d_sentiment = sentiment_consistency_backward(&params.gate, &trace.consistency, &d_consistent, &mut grad.gate);
    let mut d_boundary = params.sentiment_encoder.backward_pass(
        &trace.sentiment,
        d_sentiment.view(),
        &mut grad.sentiment_encoder,
    );

    let d_opinion_in = params
        .opinion_head
        .backward(trace.opinion_in.view(), &d_logit_opinion, &mut grad.opinion_head);
    d_opinion += &apply_mask(d_opinion_in, &trace.masks, 3);
    let mut d_graph = params
        .opinion_encoder
        .backward_pass(&trace.opinion, d_opinion.view(), &mut grad.opinion_encoder);

    let d_guidance_in = params
        .guidance_head
        .backward(trace.guidance_in.view(), &d_logit_guidance, &mut grad.guidance_head);
    let d_guidance_in = apply_mask(d_guidance_in, &trace.masks, 2);
    d_boundary += &d_guidance_in.slice(s![.., ..h2]);
    d_graph += &d_guidance_in.slice(s![.., h2..]);

    let d_boundary_in = params
        .boundary_head
        .backward(trace.boundary_in.view(), &d_logit_boundary, &mut grad.boundary_head);
    d_boundary += &apply_mask(d_boundary_in, &trace.masks, 0);

    let dx = params
        .gcn
        .backward(trace.adjacency.view(), &trace.graph, &d_graph, &mut grad.gcn)
        + params
            .boundary_encoder
            .backward_pass(&trace.boundary, d_boundary.view(), &mut grad.boundary_encoder);
    Ok((grad, dx))
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(z: &Array2<f64>) -> Vec<usize> {
    z.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Decoded aspects (with polarity) and opinions for one sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stage1Decoding {
    pub aspects: Vec<(Span, Polarity)>,
    pub opinions: Vec<Span>,
}

/// Argmax tags, then lenient span decoding. A multi-token aspect takes the
/// polarity of its first token.
pub fn stage1_decode(z_unified: &Array2<f64>, z_opinion: &Array2<f64>) -> Stage1Decoding {
    let unified: Vec<UnifiedTag> = argmax_rows(z_unified)
        .into_iter()
        .map(|i| UnifiedTag::from_index(i).expect("13-way distribution"))
        .collect();
    let opinion: Vec<Boundary> = argmax_rows(z_opinion)
        .into_iter()
        .map(|i| Boundary::from_index(i).expect("5-way distribution"))
        .collect();
    Stage1Decoding {
        aspects: tags_to_spans(&unified),
        opinions: tags_to_spans(&opinion).into_iter().map(|(s, _)| s).collect(),
    }
}

/// Parameters, hyperparameters and the frozen word vectors they read.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Model {
    pub hyper: Stage1Hyper,
    pub params: Stage1Params,
    pub embeddings: EmbeddingTable,
}

/// Model input for one sentence.
#[derive(Clone, Debug)]
pub struct Stage1Input {
    pub indices: Vec<usize>,
    pub vectors: Array2<f64>,
    pub adjacency: Array2<f64>,
}

impl Stage1Model {
    pub fn new<R: Rng>(rng: &mut R, hyper: Stage1Hyper, embeddings: EmbeddingTable) -> Result<Self> {
        hyper.validate()?;
        let params = Stage1Params::new(rng, embeddings.dim(), &hyper);
        Ok(Stage1Model {
            hyper,
            params,
            embeddings,
        })
    }

    /// Sentences without a parse get a self-loop-only graph.
    pub fn input(&self, tokens: &[String], graph: Option<&DependencyGraph>) -> Result<Stage1Input> {
        let indices = self.embeddings.indices(tokens);
        let adjacency = match graph {
            Some(g) if g.len() != tokens.len() => {
                return Err(AsteError::Shape(format!(
                    "dependency graph of size {} for {} tokens",
                    g.len(),
                    tokens.len()
                )))
            }
            Some(g) => g.normalized().clone(),
            None => DependencyGraph::identity(tokens.len()).normalized().clone(),
        };
        Ok(Stage1Input {
            vectors: self.embeddings.embed(&indices),
            indices,
            adjacency,
        })
    }

    pub fn sentence_input(&self, s: &AnnotatedSentence) -> Result<Stage1Input> {
        self.input(&s.tokens, s.dep_graph.as_ref())
    }

    pub fn forward<R: Rng>(&self, input: &Stage1Input, dropout_rng: Option<&mut R>) -> Result<(Stage1Output, Stage1Trace)> {
        stage1_forward(
            &self.params,
            &self.hyper,
            input.vectors.view(),
            input.adjacency.view(),
            dropout_rng,
        )
    }

    /// Inference-mode output.
    pub fn infer(&self, input: &Stage1Input) -> Result<Stage1Output> {
        Ok(self.forward::<rand_chacha::ChaCha8Rng>(input, None)?.0)
    }

    pub fn predict(&self, input: &Stage1Input) -> Result<Stage1Decoding> {
        let out = self.infer(input)?;
        Ok(stage1_decode(&out.z_unified, &out.z_opinion))
    }

    /// Loss and gradients for one sentence.
    pub fn loss_and_gradient<R: Rng>(
        &self,
        input: &Stage1Input,
        gold: &Stage1Gold,
        dropout_rng: Option<&mut R>,
    ) -> Result<(f64, Stage1Params, Array2<f64>)> {
        let (out, trace) = self.forward(input, dropout_rng)?;
        let loss = stage1_loss(&out, gold)?;
        let (grad, dx) = stage1_backward(&self.params, &self.hyper, &out, &trace, gold)?;
        Ok((loss, grad, dx))
    }
}
