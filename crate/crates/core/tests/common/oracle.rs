//! Brute-force evaluation oracle and random prediction/gold corpora.

use aste::eval::{AspectRecord, EvalMode, ScoredTriplet, SentenceRecord};
use aste::tags::{Polarity, Span};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{random_polarity, random_spans};

/// One comparable unit: aspect start/end, polarity, opinion start/end; -1
/// where a mode ignores the field.
pub type Key = [i64; 5];

fn span_key(s: Option<Span>) -> [i64; 2] {
    s.map_or([-1, -1], |s| [s.start as i64, s.end as i64])
}

fn pol_key(p: Option<Polarity>) -> i64 {
    p.map_or(-1, |p| Polarity::ALL.iter().position(|&q| q == p).unwrap() as i64)
}

fn key(aspect: Option<Span>, polarity: Option<Polarity>, opinion: Option<Span>) -> Key {
    let [a0, a1] = span_key(aspect);
    let [o0, o1] = span_key(opinion);
    [a0, a1, pol_key(polarity), o0, o1]
}

/// Keys of one record, duplicates removed by pairwise comparison.
pub fn keys(r: &SentenceRecord, mode: EvalMode) -> Vec<Key> {
    let aspects: Vec<(Span, Polarity)> = match &r.aspects {
        Some(list) => list.iter().map(|a| (a.span, a.polarity)).collect(),
        None => r.triplets.iter().map(|t| (t.aspect, t.polarity)).collect(),
    };
    let opinions: Vec<Span> = match &r.opinions {
        Some(list) => list.clone(),
        None => r.triplets.iter().map(|t| t.opinion).collect(),
    };
    let raw: Vec<Key> = match mode {
        EvalMode::Unified => aspects.iter().map(|&(a, p)| key(Some(a), Some(p), None)).collect(),
        EvalMode::AspectOnly => aspects.iter().map(|&(a, _)| key(Some(a), None, None)).collect(),
        EvalMode::Opinion => opinions.iter().map(|&o| key(None, None, Some(o))).collect(),
        EvalMode::Pair => r
            .triplets
            .iter()
            .map(|t| key(Some(t.aspect), None, Some(t.opinion)))
            .collect(),
        EvalMode::Triplet => r
            .triplets
            .iter()
            .map(|t| key(Some(t.aspect), Some(t.polarity), Some(t.opinion)))
            .collect(),
    };
    let mut unique: Vec<Key> = Vec::new();
    for k in raw {
        if !unique.iter().any(|u| *u == k) {
            unique.push(k);
        }
    }
    unique
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleReport {
    pub num_pred: usize,
    pub num_gold: usize,
    pub num_correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Micro P/R/F by nested loops over ids and items.
pub fn oracle(pred: &[SentenceRecord], gold: &[SentenceRecord], mode: EvalMode) -> OracleReport {
    let (mut np, mut ng, mut nc) = (0, 0, 0);
    for g in gold {
        let p = pred.iter().find(|p| p.id == g.id).expect("aligned corpora");
        let (pk, gk) = (keys(p, mode), keys(g, mode));
        np += pk.len();
        ng += gk.len();
        for a in &pk {
            for b in &gk {
                if a == b {
                    nc += 1;
                }
            }
        }
    }
    let precision = if np > 0 { nc as f64 / np as f64 } else { 0.0 };
    let recall = if ng > 0 { nc as f64 / ng as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    OracleReport {
        num_pred: np,
        num_gold: ng,
        num_correct: nc,
        precision,
        recall,
        f1,
    }
}

fn triplet(aspect: Span, polarity: Polarity, opinion: Span) -> ScoredTriplet {
    ScoredTriplet {
        aspect,
        polarity,
        opinion,
        score: 1.0,
    }
}

fn random_gold<R: Rng>(rng: &mut R, id: usize) -> SentenceRecord {
    let len = rng.gen_range(1..=10);
    let tokens: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
    let spans = random_spans(rng, len);
    let mut aspects = Vec::new();
    let mut opinions = Vec::new();
    for s in spans {
        if rng.gen_bool(0.5) {
            aspects.push(AspectRecord {
                span: s,
                polarity: random_polarity(rng),
            });
        } else {
            opinions.push(s);
        }
    }
    let mut triplets = Vec::new();
    for a in &aspects {
        for &o in &opinions {
            if rng.gen_bool(0.6) {
                triplets.push(triplet(a.span, a.polarity, o));
            }
        }
    }
    SentenceRecord {
        id,
        tokens,
        triplets,
        aspects: Some(aspects),
        opinions: Some(opinions),
    }
}

fn random_span<R: Rng>(rng: &mut R, len: usize) -> Span {
    let start = rng.gen_range(0..len);
    Span::new(start, rng.gen_range(start..len.min(start + 3)))
}

/// Perturbs a gold record: drops, relabels, shifts, duplicates and invents
/// items, and sometimes leaves the aspect/opinion lists implicit.
fn perturb<R: Rng>(rng: &mut R, gold: &SentenceRecord) -> SentenceRecord {
    let len = gold.tokens.len();
    let mut triplets = Vec::new();
    for t in &gold.triplets {
        match rng.gen_range(0..6) {
            0 => {}
            1 => triplets.push(triplet(t.aspect, random_polarity(rng), t.opinion)),
            2 => triplets.push(triplet(random_span(rng, len), t.polarity, t.opinion)),
            3 => {
                triplets.push(*t);
                triplets.push(*t);
            }
            _ => triplets.push(*t),
        }
    }
    for _ in 0..rng.gen_range(0..3) {
        triplets.push(triplet(random_span(rng, len), random_polarity(rng), random_span(rng, len)));
    }
    triplets.shuffle(rng);
    let explicit = rng.gen_bool(0.7);
    let aspects = explicit.then(|| {
        let mut a = Vec::new();
        for x in gold.aspect_list() {
            if rng.gen_bool(0.8) {
                let polarity = if rng.gen_bool(0.8) { x.polarity } else { random_polarity(rng) };
                a.push(AspectRecord { span: x.span, polarity });
            }
        }
        if rng.gen_bool(0.3) {
            a.push(AspectRecord {
                span: random_span(rng, len),
                polarity: random_polarity(rng),
            });
        }
        a
    });
    let opinions = explicit.then(|| {
        let mut o = Vec::new();
        for x in gold.opinion_list() {
            if rng.gen_bool(0.8) {
                o.push(x);
            }
        }
        if rng.gen_bool(0.3) {
            o.push(random_span(rng, len));
        }
        o
    });
    SentenceRecord {
        id: gold.id,
        tokens: gold.tokens.clone(),
        triplets,
        aspects,
        opinions,
    }
}

/// A random corpus of at most 20 sentences and a noisy prediction of it, in
/// shuffled order.
pub fn random_corpora(seed: u64) -> (Vec<SentenceRecord>, Vec<SentenceRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=20);
    let gold: Vec<SentenceRecord> = (0..n).map(|i| random_gold(&mut rng, i * 3 + 1)).collect();
    let mut pred: Vec<SentenceRecord> = gold.iter().map(|g| perturb(&mut rng, g)).collect();
    pred.shuffle(&mut rng);
    (pred, gold)
}
