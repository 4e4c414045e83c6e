//! Central finite-difference oracle for the hand-written backward passes.

use aste::graph::DependencyGraph;
use aste::nn::Parameters;
use aste::stage1::{stage1_backward, stage1_forward, stage1_loss, Stage1Gold, Stage1Hyper, Stage1Params};
use aste::stage2::{pair_backward, pair_forward, pair_loss, CandidatePair, Stage2Hyper, Stage2Params};
use aste::tags::{spans_to_tags, Boundary, Polarity, Span, SpanTag, UnifiedTag};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fourth-order central stencil; a larger step keeps cancellation error well
/// below the tolerance for entries near the floor.
pub const STEP: f64 = 1e-4;
/// Denominator floor: entries whose true gradient is below this are compared
/// absolutely against it.
pub const FLOOR: f64 = 1e-6;

/// Worst elementwise relative error over one instance.
#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

impl GradCheck {
    fn record(&mut self, what: String, analytic: f64, numeric: f64) {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        self.checked += 1;
        if rel > self.max_rel {
            self.max_rel = rel;
            self.worst = format!("{what}: analytic {analytic:.9e}, numeric {numeric:.9e}");
        }
    }

    pub fn merge(&mut self, other: GradCheck) {
        self.checked += other.checked;
        if other.max_rel > self.max_rel {
            self.max_rel = other.max_rel;
            self.worst = other.worst;
        }
    }
}

/// Derivative at 0 of `f(dv)` from the five-point central stencil.
pub fn central(mut f: impl FnMut(f64) -> f64) -> f64 {
    let (p1, m1, p2, m2) = (f(STEP), f(-STEP), f(2.0 * STEP), f(-2.0 * STEP));
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * STEP)
}

/// Compares `analytic` with central differences of `loss` around `params`.
/// `skip(k, j)` excludes element `j` of tensor `k`.
pub fn check_parameters<P: Parameters>(
    params: &P,
    analytic: &P,
    loss: impl Fn(&P) -> f64,
    skip: impl Fn(usize, usize) -> bool,
    out: &mut GradCheck,
) {
    let mut probe = params.clone();
    let grads: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();
    for (k, (name, grad)) in grads.iter().enumerate() {
        for (j, &a) in grad.iter().enumerate() {
            if skip(k, j) {
                continue;
            }
            let nudge = |p: &mut P, v: Option<f64>| -> f64 {
                let mut tensors = p.tensors_mut();
                let cell = tensors[k].1.iter_mut().nth(j).expect("element exists");
                let old = *cell;
                if let Some(v) = v {
                    *cell = v;
                }
                old
            };
            let orig = nudge(&mut probe, None);
            let numeric = central(|dv| {
                nudge(&mut probe, Some(orig + dv));
                loss(&probe)
            });
            nudge(&mut probe, Some(orig));
            out.record(format!("{name}[{j}]"), a, numeric);
        }
    }
}

pub fn check_input(x: &Array2<f64>, analytic: &Array2<f64>, loss: impl Fn(&Array2<f64>) -> f64, out: &mut GradCheck) {
    let mut probe = x.clone();
    for ((i, j), &a) in analytic.indexed_iter() {
        let orig = probe[[i, j]];
        let numeric = central(|dv| {
            probe[[i, j]] = orig + dv;
            loss(&probe)
        });
        probe[[i, j]] = orig;
        out.record(format!("input[{i},{j}]"), a, numeric);
    }
}

/// Random non-overlapping spans over `len` tokens.
pub fn random_spans<R: Rng>(rng: &mut R, len: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut t = 0;
    while t < len {
        if rng.gen_bool(0.5) {
            let end = rng.gen_range(t..len.min(t + 3));
            spans.push(Span::new(t, end));
            t = end + 1;
        } else {
            t += 1;
        }
    }
    spans
}

pub fn random_polarity<R: Rng>(rng: &mut R) -> Polarity {
    *Polarity::ALL.choose(rng).expect("three polarities")
}

fn random_graph<R: Rng>(rng: &mut R, len: usize) -> Array2<f64> {
    let heads: Vec<usize> = (0..len)
        .map(|i| {
            let j = rng.gen_range(0..len);
            if j == i || rng.gen_bool(0.3) {
                0
            } else {
                j + 1
            }
        })
        .collect();
    DependencyGraph::from_heads(&heads).expect("heads in range").normalized().clone()
}

/// Stage one on a random tiny instance (L ≤ 4, H ≤ 3, dropout off).
pub fn stage1_instance(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(1..=4);
    let dim = rng.gen_range(2..=5);
    let hyper = Stage1Hyper {
        hidden: rng.gen_range(1..=3),
        gcn_layers: rng.gen_range(1..=2),
        dropout: 0.0,
        epsilon: rng.gen_range(0.05..0.95),
        train_embeddings: false,
    };
    let params = Stage1Params::new(&mut rng, dim, &hyper);
    let x = Array2::from_shape_fn((len, dim), |_| rng.gen_range(-1.0..1.0));
    let adj = random_graph(&mut rng, len);

    let aspects: Vec<(Span, Polarity)> = random_spans(&mut rng, len)
        .into_iter()
        .map(|s| (s, random_polarity(&mut rng)))
        .collect();
    let unified: Vec<UnifiedTag> = spans_to_tags(&aspects, len).expect("valid spans");
    let opinion: Vec<Boundary> = spans_to_tags(
        &random_spans(&mut rng, len).into_iter().map(|s| (s, ())).collect::<Vec<_>>(),
        len,
    )
    .expect("valid spans");
    let gold = Stage1Gold {
        boundary: unified.iter().map(|t| t.boundary().index()).collect(),
        unified: unified.iter().map(|t| t.index()).collect(),
        opinion: opinion.iter().map(|t| t.index()).collect(),
    };

    let loss = |p: &Stage1Params, x: &Array2<f64>| {
        let (out, _) = stage1_forward::<ChaCha8Rng>(p, &hyper, x.view(), adj.view(), None).expect("forward");
        stage1_loss(&out, &gold).expect("loss")
    };
    let (out, trace) = stage1_forward::<ChaCha8Rng>(&params, &hyper, x.view(), adj.view(), None).expect("forward");
    let (grad, dx) = stage1_backward(&params, &hyper, &out, &trace, &gold).expect("backward");
    let mut report = GradCheck::default();
    check_parameters(&params, &grad, |p| loss(p, &x), |_, _| false, &mut report);
    check_input(&x, &dx, |x| loss(&params, x), &mut report);
    report
}

/// Stage two on a random tiny instance (L ≤ 4, H ≤ 3, dropout off). The
/// pinned zero row of the position table is not a parameter and is skipped.
pub fn stage2_instance(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(2..=4);
    let dim = rng.gen_range(2..=5);
    let hyper = Stage2Hyper {
        pos_dim: rng.gen_range(1..=4),
        pos_cap: rng.gen_range(1..=3),
        hidden: rng.gen_range(1..=3),
        dropout: 0.0,
        threshold: 0.5,
    };
    let params = Stage2Params::new(&mut rng, dim, &hyper);
    let x = Array2::from_shape_fn((len, dim), |_| rng.gen_range(-1.0..1.0));
    let pair = loop {
        let spans = random_spans(&mut rng, len);
        if spans.len() >= 2 {
            let (a, o) = if rng.gen_bool(0.5) { (spans[0], spans[1]) } else { (spans[1], spans[0]) };
            break CandidatePair::new(a, random_polarity(&mut rng), o, len).expect("disjoint spans");
        }
    };
    let label = rng.gen_bool(0.5);

    let loss = |p: &Stage2Params, x: &Array2<f64>| {
        let (_, trace) = pair_forward::<ChaCha8Rng>(p, &hyper, x.view(), &pair, None).expect("forward");
        pair_loss(&trace, label)
    };
    let (_, trace) = pair_forward::<ChaCha8Rng>(&params, &hyper, x.view(), &pair, None).expect("forward");
    let (grad, dx) = pair_backward(&params, &trace, label);
    let pos_dim = hyper.pos_dim;
    let mut report = GradCheck::default();
    check_parameters(&params, &grad, |p| loss(p, &x), |k, j| k == 0 && j < pos_dim, &mut report);
    check_input(&x, &dx, |x| loss(&params, x), &mut report);
    report
}
