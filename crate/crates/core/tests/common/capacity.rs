//! Overfitting runs on small fixture subsets.

use std::cell::Cell;
use std::ops::ControlFlow;

use aste::config::TrainConfig;
use aste::corpus::AnnotatedSentence;
use aste::trainer::{pair_examples, pair_report, stage1_reports, train_stage1, train_stage2};

use super::{fixture_embeddings, split, FIXTURE_DIM};

pub const EPOCHS: usize = 400;

#[derive(Clone, Debug)]
pub struct Stage1Fit {
    /// First epoch whose selection metric reached 1.
    pub fit_epoch: Option<usize>,
    pub unified_f1: f64,
    pub opinion_f1: f64,
    /// Lowest per-epoch mean training loss J.
    pub min_loss: f64,
    pub epochs_run: usize,
}

pub fn first_ten() -> Vec<AnnotatedSentence> {
    split("train").into_iter().take(10).collect()
}

/// Stage one on the first ten training sentences, dropout off. With
/// `stop_at_fit` the run ends at the first perfect epoch.
pub fn stage1_fit(epsilon: f64, stop_at_fit: bool) -> Stage1Fit {
    let train = first_ten();
    let config = TrainConfig {
        emb_dim: FIXTURE_DIM,
        max_epochs: EPOCHS,
        dropout: 0.0,
        epsilon,
        ..TrainConfig::default()
    };
    let fit_epoch = Cell::new(None);
    let min_loss = Cell::new(f64::INFINITY);
    let out = train_stage1(&config, &train, &train, fixture_embeddings(), |e| {
        min_loss.set(min_loss.get().min(e.train_loss));
        if e.valid_metric == 1.0 && fit_epoch.get().is_none() {
            fit_epoch.set(Some(e.epoch));
        }
        if stop_at_fit && fit_epoch.get().is_some() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .expect("training runs");
    let (unified, opinion) = stage1_reports(&out.model, &train).expect("evaluation runs");
    Stage1Fit {
        fit_epoch: fit_epoch.get(),
        unified_f1: unified.f1,
        opinion_f1: opinion.f1,
        min_loss: min_loss.get(),
        epochs_run: out.log.len(),
    }
}

/// Leading training sentences holding exactly 20 gold pairs.
pub fn twenty_pairs() -> Vec<AnnotatedSentence> {
    let mut train = Vec::new();
    let mut pairs = 0;
    for s in split("train") {
        if pairs + s.triplets.len() <= 20 {
            pairs += s.triplets.len();
            train.push(s);
        }
    }
    assert_eq!(pairs, 20, "fixture has a 20-pair prefix");
    train
}

/// Stage two with default settings on 20 gold pairs; returns the pair F1 and
/// the number of epochs run.
pub fn stage2_fit() -> (f64, usize) {
    let train = twenty_pairs();
    let config = TrainConfig {
        emb_dim: FIXTURE_DIM,
        max_epochs: EPOCHS,
        ..TrainConfig::default()
    };
    let out = train_stage2(&config, &train, &train, fixture_embeddings(), |e| {
        if e.valid_metric == 1.0 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .expect("training runs");
    let report = pair_report(&out.model, &train, &pair_examples(&train)).expect("evaluation runs");
    (report.f1, out.log.len())
}
