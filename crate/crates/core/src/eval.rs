//! Prediction records and micro-averaged exact-match scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, Triplet};
use crate::error::{AsteError, Result};
use crate::tags::{Polarity, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Aspect span and polarity.
    Unified,
    /// Aspect span only.
    AspectOnly,
    Opinion,
    /// Aspect and opinion spans.
    Pair,
    Triplet,
}

impl EvalMode {
    pub const ALL: [EvalMode; 5] = [
        EvalMode::Unified,
        EvalMode::AspectOnly,
        EvalMode::Opinion,
        EvalMode::Pair,
        EvalMode::Triplet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Unified => "unified",
            EvalMode::AspectOnly => "aspect_only",
            EvalMode::Opinion => "opinion",
            EvalMode::Pair => "pair",
            EvalMode::Triplet => "triplet",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = AsteError;

    fn from_str(s: &str) -> Result<Self> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AsteError::Config(format!("unknown evaluation mode {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AspectRecord {
    pub span: Span,
    pub polarity: Polarity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriplet {
    pub aspect: Span,
    pub polarity: Polarity,
    pub opinion: Span,
    pub score: f64,
}

impl ScoredTriplet {
    pub fn triplet(&self) -> Triplet {
        Triplet {
            aspect: self.aspect,
            polarity: self.polarity,
            opinion: self.opinion,
        }
    }
}

/// One line of a prediction (or gold) file.
///
/// `aspects` and `opinions` hold the stage-one spans, including those that
/// ended up in no triplet. When absent they are read off the triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: usize,
    pub tokens: Vec<String>,
    pub triplets: Vec<ScoredTriplet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspects: Option<Vec<AspectRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinions: Option<Vec<Span>>,
}

impl SentenceRecord {
    /// Gold record with score 1 on every triplet.
    pub fn from_gold(id: usize, sentence: &AnnotatedSentence) -> Self {
        SentenceRecord {
            id,
            tokens: sentence.tokens.clone(),
            triplets: sentence
                .triplets
                .iter()
                .map(|t| ScoredTriplet {
                    aspect: t.aspect,
                    polarity: t.polarity,
                    opinion: t.opinion,
                    score: 1.0,
                })
                .collect(),
            aspects: Some(
                sentence
                    .aspects()
                    .into_iter()
                    .map(|(span, polarity)| AspectRecord { span, polarity })
                    .collect(),
            ),
            opinions: Some(sentence.opinions()),
        }
    }

    pub fn aspect_list(&self) -> Vec<AspectRecord> {
        match &self.aspects {
            Some(a) => a.clone(),
            None => self
                .triplets
                .iter()
                .map(|t| AspectRecord {
                    span: t.aspect,
                    polarity: t.polarity,
                })
                .collect(),
        }
    }

    pub fn opinion_list(&self) -> Vec<Span> {
        match &self.opinions {
            Some(o) => o.clone(),
            None => self.triplets.iter().map(|t| t.opinion).collect(),
        }
    }
}

/// Comparable unit for one evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Item {
    pub aspect: Option<Span>,
    pub polarity: Option<Polarity>,
    pub opinion: Option<Span>,
}

/// Deduplicated items of one sentence under `mode`.
pub fn items(record: &SentenceRecord, mode: EvalMode) -> BTreeSet<Item> {
    let item = |aspect, polarity, opinion| Item {
        aspect,
        polarity,
        opinion,
    };
    match mode {
        EvalMode::Unified => record
            .aspect_list()
            .into_iter()
            .map(|a| item(Some(a.span), Some(a.polarity), None))
            .collect(),
        EvalMode::AspectOnly => record
            .aspect_list()
            .into_iter()
            .map(|a| item(Some(a.span), None, None))
            .collect(),
        EvalMode::Opinion => record
            .opinion_list()
            .into_iter()
            .map(|o| item(None, None, Some(o)))
            .collect(),
        EvalMode::Pair => record
            .triplets
            .iter()
            .map(|t| item(Some(t.aspect), None, Some(t.opinion)))
            .collect(),
        EvalMode::Triplet => record
            .triplets
            .iter()
            .map(|t| item(Some(t.aspect), Some(t.polarity), Some(t.opinion)))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub num_pred: usize,
    pub num_gold: usize,
    pub num_correct: usize,
}

impl EvalReport {
    pub fn from_counts(mode: EvalMode, num_pred: usize, num_gold: usize, num_correct: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(num_correct, num_pred);
        let recall = ratio(num_correct, num_gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            mode,
            precision,
            recall,
            f1,
            num_pred,
            num_gold,
            num_correct,
        }
    }
}

fn index_by_id(records: &[SentenceRecord], side: &str) -> Result<BTreeMap<usize, usize>> {
    let mut map = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if map.insert(r.id, i).is_some() {
            return Err(AsteError::Alignment(format!("duplicate {side} id {}", r.id)));
        }
    }
    Ok(map)
}

/// Pairs up prediction and gold records by id.
pub fn align<'a>(
    pred: &'a [SentenceRecord],
    gold: &'a [SentenceRecord],
) -> Result<Vec<(&'a SentenceRecord, &'a SentenceRecord)>> {
    let p = index_by_id(pred, "prediction")?;
    let g = index_by_id(gold, "gold")?;
    if let Some(id) = p.keys().find(|id| !g.contains_key(id)) {
        return Err(AsteError::Alignment(format!("prediction id {id} has no gold sentence")));
    }
    if let Some(id) = g.keys().find(|id| !p.contains_key(id)) {
        return Err(AsteError::Alignment(format!("gold id {id} has no prediction")));
    }
    g.iter()
        .map(|(id, &gi)| {
            let (pr, gr) = (&pred[p[id]], &gold[gi]);
            if pr.tokens != gr.tokens {
                return Err(AsteError::Alignment(format!("sentence {id}: token lists differ")));
            }
            Ok((pr, gr))
        })
        .collect()
}

/// Micro-averaged exact match under one mode.
pub fn evaluate(pred: &[SentenceRecord], gold: &[SentenceRecord], mode: EvalMode) -> Result<EvalReport> {
    let (mut np, mut ng, mut nc) = (0, 0, 0);
    for (p, g) in align(pred, gold)? {
        let (ps, gs) = (items(p, mode), items(g, mode));
        np += ps.len();
        ng += gs.len();
        nc += ps.intersection(&gs).count();
    }
    Ok(EvalReport::from_counts(mode, np, ng, nc))
}

pub fn evaluate_all(pred: &[SentenceRecord], gold: &[SentenceRecord]) -> Result<Vec<EvalReport>> {
    EvalMode::ALL.into_iter().map(|m| evaluate(pred, gold, m)).collect()
}

/// Line-delimited JSON, one record per line.
pub fn write_records(records: &[SentenceRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_records(text: &str) -> Result<Vec<SentenceRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| AsteError::format(i + 1, e.to_string())))
        .collect()
}

/// Reads records from a JSONL prediction file, or from an annotated corpus
/// (ids are then corpus positions).
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<SentenceRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AsteError::io(path, e))?;
    if text.trim_start().starts_with('{') {
        parse_records(&text)
    } else {
        Ok(crate::corpus::parse_corpus(&text)?
            .iter()
            .enumerate()
            .map(|(i, s)| SentenceRecord::from_gold(i, s))
            .collect())
    }
}
