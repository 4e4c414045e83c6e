//! SGD training loops with best-validation-epoch selection.

use std::fmt;
use std::ops::ControlFlow;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Selection, TrainConfig};
use crate::corpus::AnnotatedSentence;
use crate::embeddings::{EmbeddingTable, PAD_INDEX};
use crate::error::{AsteError, Result};
use crate::eval::{evaluate, AspectRecord, EvalMode, EvalReport, SentenceRecord};
use crate::nn::Parameters;
use crate::stage1::{Stage1Gold, Stage1Input, Stage1Model};
use crate::stage2::{build_training_pairs, pair_decode, CandidatePair, Stage2Model, Stage2Params};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_metric: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {} lr {:.6} loss {:.6} valid {:.4}",
            self.epoch, self.lr, self.train_loss, self.valid_metric
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Model as of the best validation epoch.
    pub model: M,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub log: Vec<EpochLog>,
}

/// Keeps the earliest epoch with the highest metric.
struct BestTracker<M> {
    best: Option<(usize, f64, M)>,
}

impl<M: Clone> BestTracker<M> {
    fn offer(&mut self, epoch: usize, metric: f64, model: &M) {
        if self.best.as_ref().is_none_or(|(_, m, _)| metric > *m) {
            self.best = Some((epoch, metric, model.clone()));
        }
    }

    fn finish(self, log: Vec<EpochLog>) -> TrainOutcome<M> {
        let (best_epoch, best_metric, model) = self.best.expect("at least one epoch ran");
        TrainOutcome {
            model,
            best_epoch,
            best_metric,
            log,
        }
    }
}

/// One descent step, with optional L2 shrinkage.
pub fn sgd_step<P: Parameters>(params: &mut P, grad: &P, lr: f64, weight_decay: f64) {
    if weight_decay > 0.0 {
        params.scale(1.0 - lr * weight_decay);
    }
    params.add_scaled(-lr, grad);
}

/// Unified and opinion reports of a stage-one model on annotated sentences.
pub fn stage1_reports(model: &Stage1Model, sentences: &[AnnotatedSentence]) -> Result<(EvalReport, EvalReport)> {
    let mut pred = Vec::with_capacity(sentences.len());
    let mut gold = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        let d = model.predict(&model.sentence_input(s)?)?;
        pred.push(SentenceRecord {
            id: i,
            tokens: s.tokens.clone(),
            triplets: Vec::new(),
            aspects: Some(
                d.aspects
                    .into_iter()
                    .map(|(span, polarity)| AspectRecord { span, polarity })
                    .collect(),
            ),
            opinions: Some(d.opinions),
        });
        gold.push(SentenceRecord::from_gold(i, s));
    }
    Ok((
        evaluate(&pred, &gold, EvalMode::Unified)?,
        evaluate(&pred, &gold, EvalMode::Opinion)?,
    ))
}

/// Validation metric for stage-one model selection.
pub fn stage1_metric(model: &Stage1Model, sentences: &[AnnotatedSentence], selection: Selection) -> Result<f64> {
    let (unified, opinion) = stage1_reports(model, sentences)?;
    Ok(match selection {
        Selection::Mean => (unified.f1 + opinion.f1) / 2.0,
        Selection::Unified => unified.f1,
        Selection::Opinion => opinion.f1,
    })
}

/// Trains the tagger. When `valid` is empty the training set is used for
/// selection. `observer` sees every epoch and may stop training early.
pub fn train_stage1(
    config: &TrainConfig,
    train: &[AnnotatedSentence],
    valid: &[AnnotatedSentence],
    embeddings: EmbeddingTable,
    mut observer: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainOutcome<Stage1Model>> {
    config.validate()?;
    if train.is_empty() {
        return Err(AsteError::Config("empty training set".into()));
    }
    if embeddings.dim() != config.emb_dim {
        return Err(AsteError::Dimension {
            expected: config.emb_dim,
            found: embeddings.dim(),
            context: "word vectors".into(),
        });
    }
    let valid = if valid.is_empty() { train } else { valid };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Stage1Model::new(&mut rng, config.stage1_hyper(), embeddings)?;
    let golds: Vec<Stage1Gold> = train.iter().map(Stage1Gold::from_sentence).collect();
    let mut inputs: Vec<Stage1Input> = train.iter().map(|s| model.sentence_input(s)).collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = BestTracker { best: None };
    let mut log = Vec::new();
    for epoch in 0..config.max_epochs {
        let lr = config.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = model.params.zeroed();
            let mut word_grads: Vec<(usize, Array2<f64>)> = Vec::new();
            for &i in batch {
                let (loss, g, dx) = model.loss_and_gradient(&inputs[i], &golds[i], Some(&mut rng))?;
                total += loss;
                grad.add_scaled(1.0, &g);
                if model.hyper.train_embeddings {
                    word_grads.push((i, dx));
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.scale(scale);
            sgd_step(&mut model.params, &grad, lr, config.weight_decay());
            if !word_grads.is_empty() {
                let table = model.embeddings.vectors_mut();
                for (i, dx) in &word_grads {
                    for (&w, row) in inputs[*i].indices.iter().zip(dx.rows()) {
                        if w != PAD_INDEX {
                            table.row_mut(w).scaled_add(-lr * scale, &row);
                        }
                    }
                }
                for input in inputs.iter_mut() {
                    input.vectors = model.embeddings.embed(&input.indices);
                }
            }
        }
        let entry = EpochLog {
            epoch,
            lr,
            train_loss: total / train.len() as f64,
            valid_metric: stage1_metric(&model, valid, config.selection)?,
        };
        best.offer(epoch, entry.valid_metric, &model);
        let stop = observer(&entry).is_break();
        log.push(entry);
        if stop {
            break;
        }
    }
    Ok(best.finish(log))
}

/// Gold-pair classification examples: sentence index, candidate, label.
pub type PairExample = (usize, CandidatePair, bool);

pub fn pair_examples(sentences: &[AnnotatedSentence]) -> Vec<PairExample> {
    sentences
        .iter()
        .enumerate()
        .flat_map(|(i, s)| build_training_pairs(s).into_iter().map(move |(c, y)| (i, c, y)))
        .collect()
}

/// Binary F1 of the valid-pair class over gold-pair examples.
pub fn pair_report(
    model: &Stage2Model,
    sentences: &[AnnotatedSentence],
    examples: &[PairExample],
) -> Result<EvalReport> {
    let words: Vec<Array2<f64>> = sentences.iter().map(|s| model.word_vectors(&s.tokens)).collect();
    let (mut np, mut ng, mut nc) = (0, 0, 0);
    for (i, pair, label) in examples {
        let predicted = pair_decode(model.probability(words[*i].view(), pair)?, model.hyper.threshold);
        np += usize::from(predicted);
        ng += usize::from(*label);
        nc += usize::from(predicted && *label);
    }
    Ok(EvalReport::from_counts(EvalMode::Pair, np, ng, nc))
}

/// Trains the pair classifier on gold pairs with frozen word vectors,
/// selecting by validation classifier F1 (training pairs if `valid` is
/// empty). Batches are counted in pairs.
pub fn train_stage2(
    config: &TrainConfig,
    train: &[AnnotatedSentence],
    valid: &[AnnotatedSentence],
    embeddings: EmbeddingTable,
    mut observer: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainOutcome<Stage2Model>> {
    config.validate()?;
    let examples = pair_examples(train);
    if !examples.iter().any(|(_, _, y)| *y) {
        return Err(AsteError::Config("no positive pairs in training data".into()));
    }
    let (valid_sentences, valid_examples) = if valid.is_empty() {
        (train, examples.clone())
    } else {
        (valid, pair_examples(valid))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Stage2Model::new(&mut rng, config.stage2_hyper(), embeddings)?;
    let words: Vec<Array2<f64>> = train.iter().map(|s| model.word_vectors(&s.tokens)).collect();

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut best = BestTracker { best: None };
    let mut log = Vec::new();
    for epoch in 0..config.max_epochs {
        let lr = config.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad: Stage2Params = model.params.zeroed();
            for &k in batch {
                let (i, pair, label) = &examples[k];
                let (loss, g) = model.loss_and_gradient(words[*i].view(), pair, *label, Some(&mut rng))?;
                total += loss;
                grad.add_scaled(1.0, &g);
            }
            grad.scale(1.0 / batch.len() as f64);
            sgd_step(&mut model.params, &grad, lr, config.weight_decay());
            model.params.position.row_mut(0).fill(0.0);
        }
        let entry = EpochLog {
            epoch,
            lr,
            train_loss: total / examples.len() as f64,
            valid_metric: pair_report(&model, valid_sentences, &valid_examples)?.f1,
        };
        best.offer(epoch, entry.valid_metric, &model);
        let stop = observer(&entry).is_break();
        log.push(entry);
        if stop {
            break;
        }
    }
    Ok(best.finish(log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Triplet;
    use crate::embeddings::Vocabulary;
    use crate::tags::{Polarity, Span};

    fn tiny_corpus() -> Vec<AnnotatedSentence> {
        let s = |text: &str, t: Vec<Triplet>| {
            AnnotatedSentence::from_triplets(text.split(' ').map(String::from).collect(), t).unwrap()
        };
        let t = |a: usize, p, o: usize| Triplet {
            aspect: Span::single(a),
            polarity: p,
            opinion: Span::single(o),
        };
        vec![
            s("great food here", vec![t(1, Polarity::Positive, 0)]),
            s("the service was slow", vec![t(1, Polarity::Negative, 3)]),
        ]
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            hidden: 3,
            stage2_hidden: 3,
            emb_dim: 4,
            pos_dim: 2,
            max_epochs: 3,
            ..TrainConfig::default()
        }
    }

    fn table(corpus: &[AnnotatedSentence]) -> EmbeddingTable {
        EmbeddingTable::random(Vocabulary::build([corpus]), 4, 3)
    }

    #[test]
    fn empty_inputs_are_config_errors() {
        let c = tiny_config();
        let corpus = tiny_corpus();
        let err = train_stage1(&c, &[], &corpus, table(&corpus), |_| ControlFlow::Continue(())).unwrap_err();
        assert_eq!(err.name(), "ConfigError");
        let no_pairs: Vec<AnnotatedSentence> = vec![AnnotatedSentence::from_triplets(vec!["ok".into()], vec![]).unwrap()];
        let err = train_stage2(&c, &no_pairs, &[], table(&corpus), |_| ControlFlow::Continue(())).unwrap_err();
        assert_eq!(err.name(), "ConfigError");
    }

    #[test]
    fn deterministic_under_seed() {
        let c = tiny_config();
        let corpus = tiny_corpus();
        let run = || train_stage1(&c, &corpus, &corpus, table(&corpus), |_| ControlFlow::Continue(())).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.best_epoch, b.best_epoch);
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 3);

        let run2 = || train_stage2(&c, &corpus, &corpus, table(&corpus), |_| ControlFlow::Continue(())).unwrap();
        let (a, b) = (run2(), run2());
        assert_eq!(a.best_epoch, b.best_epoch);
        assert_eq!(a.model, b.model);
        assert_eq!(a.model.params.position.row(0).sum(), 0.0);
    }

    #[test]
    fn observer_can_stop() {
        let c = tiny_config();
        let corpus = tiny_corpus();
        let out = train_stage1(&c, &corpus, &[], table(&corpus), |_| ControlFlow::Break(())).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn weight_decay_step() {
        let mut p = crate::nn::Linear {
            weight: ndarray::array![[1.0, -2.0]],
            bias: ndarray::array![0.5],
        };
        let g = p.zeroed();
        sgd_step(&mut p, &g, 0.1, 0.5);
        assert_eq!(p.weight, ndarray::array![[0.95, -1.9]]);
        let before = p.clone();
        sgd_step(&mut p, &g, 0.1, 0.0);
        assert_eq!(p, before);
    }

    #[test]
    fn log_line_format() {
        let e = EpochLog {
            epoch: 2,
            lr: 0.1 / 1.002,
            train_loss: 1.5,
            valid_metric: 0.25,
        };
        assert_eq!(e.to_string(), "epoch 2 lr 0.099800 loss 1.500000 valid 0.2500");
    }
}
