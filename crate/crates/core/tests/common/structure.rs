//! Structural invariants of both stages on random instances.

use aste::graph::DependencyGraph;
use aste::stage1::{stage1_forward, transition_matrix, Stage1Hyper, Stage1Params, UNIFIED_TAGS};
use aste::stage2::{pair_forward, position_indices, CandidatePair, Stage2Hyper, Stage2Params};
use aste::tags::{Boundary, Polarity, Span, SpanTag, UnifiedTag};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::random_spans;

const ROW_TOLERANCE: f64 = 1e-5;

fn check_rows(name: &str, z: &Array2<f64>) -> Result<(), String> {
    for (t, row) in z.rows().into_iter().enumerate() {
        if row.iter().any(|&v| !(v >= 0.0)) {
            return Err(format!("{name} row {t} has a negative entry"));
        }
        if (row.sum() - 1.0).abs() > ROW_TOLERANCE {
            return Err(format!("{name} row {t} sums to {}", row.sum()));
        }
    }
    Ok(())
}

/// Rows are distributions and the zeros are exactly the illegal
/// boundary-to-unified transitions.
pub fn transition_legality() -> Result<(), String> {
    let w = transition_matrix();
    if w.dim() != (Boundary::COUNT, UNIFIED_TAGS) {
        return Err(format!("transition matrix is {:?}", w.dim()));
    }
    check_rows("transition", &w)?;
    for (b, row) in Boundary::ALL.iter().zip(w.rows()) {
        for (u, &v) in row.iter().enumerate() {
            let legal = UnifiedTag::from_index(u).unwrap().boundary() == *b;
            if legal == (v == 0.0) {
                return Err(format!("transition[{b}, {u}] = {v}"));
            }
        }
    }
    Ok(())
}

/// Random stage-one forward passes: every head is a distribution, the
/// transformed unified distribution respects the legality zeros, and the
/// fusion weight stays within [ε/5, ε].
pub fn stage1_heads(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(1..=9);
    let dim = rng.gen_range(2..=8);
    let hyper = Stage1Hyper {
        hidden: rng.gen_range(1..=6),
        gcn_layers: rng.gen_range(1..=2),
        dropout: 0.0,
        epsilon: rng.gen_range(0.01..0.99),
        train_embeddings: false,
    };
    let params = Stage1Params::new(&mut rng, dim, &hyper);
    let scale = rng.gen_range(0.1..5.0);
    let x = Array2::from_shape_fn((len, dim), |_| rng.gen_range(-scale..scale));
    let heads: Vec<usize> = (0..len).map(|i| if i == 0 { 0 } else { rng.gen_range(1..=i) }).collect();
    let adj = DependencyGraph::from_heads(&heads).map_err(|e| e.to_string())?.normalized().clone();
    let (out, _) =
        stage1_forward::<ChaCha8Rng>(&params, &hyper, x.view(), adj.view(), None).map_err(|e| e.to_string())?;
    for (name, z) in [
        ("boundary", &out.z_boundary),
        ("transformed", &out.z_transformed),
        ("reinforced", &out.z_reinforced),
        ("unified", &out.z_unified),
        ("guidance", &out.z_guidance),
        ("opinion", &out.z_opinion),
    ] {
        check_rows(name, z)?;
    }
    // Each unified column draws mass only from its own boundary tag.
    let w = transition_matrix();
    for t in 0..len {
        for u in 0..UNIFIED_TAGS {
            let b = UnifiedTag::from_index(u).unwrap().boundary().index();
            let legal_only = out.z_boundary[[t, b]] * w[[b, u]];
            if (out.z_transformed[[t, u]] - legal_only).abs() > 1e-12 {
                return Err(format!("transformed[{t}, {u}] has mass from another boundary tag"));
            }
        }
    }
    for (t, &a) in out.alpha.iter().enumerate() {
        let eps = hyper.epsilon;
        if a < eps / 5.0 - 1e-12 || a > eps + 1e-12 {
            return Err(format!("alpha[{t}] = {a} outside [{}, {eps}]", eps / 5.0));
        }
    }
    Ok(())
}

/// Stage-two class probabilities form a distribution.
pub fn stage2_probabilities(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(2..=12);
    let dim = rng.gen_range(2..=8);
    let hyper = Stage2Hyper {
        pos_dim: rng.gen_range(1..=6),
        pos_cap: rng.gen_range(1..=50),
        hidden: rng.gen_range(1..=6),
        dropout: 0.0,
        threshold: 0.5,
    };
    let params = Stage2Params::new(&mut rng, dim, &hyper);
    let x = Array2::from_shape_fn((len, dim), |_| rng.gen_range(-2.0..2.0));
    let spans = random_spans(&mut rng, len);
    if spans.len() < 2 {
        return Ok(());
    }
    let pair = CandidatePair::new(spans[0], Polarity::Positive, spans[spans.len() - 1], len).map_err(|e| e.to_string())?;
    let (p, trace) = pair_forward::<ChaCha8Rng>(&params, &hyper, x.view(), &pair, None).map_err(|e| e.to_string())?;
    let probs = trace.probs();
    if probs.iter().any(|&v| !(v >= 0.0)) || (probs.sum() - 1.0).abs() > ROW_TOLERANCE || p != probs[1] {
        return Err(format!("stage-two probabilities {probs:?}"));
    }
    Ok(())
}

/// Position rows of the pairs (Waiters, friendly) and (fugu sashimi,
/// friendly) in the 13-token example sentence.
pub fn example_position_rows() -> Result<(), String> {
    let rows = [
        (Span::single(0), Span::single(2), [2, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]),
        (Span::new(5, 6), Span::single(2), [0, 0, 3, 0, 0, 3, 3, 0, 0, 0, 0, 0, 0]),
    ];
    for (aspect, opinion, expected) in rows {
        let got = position_indices(aspect, opinion, 13).map_err(|e| e.to_string())?;
        if got != expected {
            return Err(format!("({aspect:?}, {opinion:?}) gives {got:?}"));
        }
    }
    Ok(())
}

pub fn structural_invariants() -> Result<String, String> {
    transition_legality()?;
    const INSTANCES: u64 = 200;
    for seed in 0..INSTANCES {
        stage1_heads(seed).map_err(|e| format!("stage one seed {seed}: {e}"))?;
        stage2_probabilities(seed).map_err(|e| format!("stage two seed {seed}: {e}"))?;
    }
    example_position_rows()?;
    Ok(format!("transition zeros, {INSTANCES} random instances per stage, both example position rows"))
}
