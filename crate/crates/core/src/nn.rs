//! Layers with explicit forward traces and hand-written backward passes.
//!
//! All arithmetic is `f64`. A forward pass returns a trace holding whatever
//! the backward pass needs; gradients accumulate into a zeroed copy of the
//! layer (same type, same shapes).

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

/// Named access to every learnable tensor.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)>;

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)>;

    /// Same shapes, all zeros.
    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `self += alpha * other`.
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        let theirs = other.tensors();
        for ((name, mut mine), (other_name, t)) in self.tensors_mut().into_iter().zip(theirs) {
            debug_assert_eq!(name, other_name);
            mine.scaled_add(alpha, &t);
        }
    }

    fn scale(&mut self, alpha: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * alpha);
        }
    }

    fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn prefixed<'a, T>(prefix: &str, items: Vec<(String, T)>) -> impl Iterator<Item = (String, T)> + 'a
where
    T: 'a,
{
    let prefix = prefix.to_owned();
    items.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-bound, bound);
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

fn uniform_vector<R: Rng>(rng: &mut R, len: usize, bound: f64) -> Array1<f64> {
    let dist = Uniform::new_inclusive(-bound, bound);
    Array1::from_shape_simple_fn(len, || dist.sample(rng))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax, max-shifted.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Backward through row-wise softmax: `dz ⊙ p - p (p · dz)`.
pub fn softmax_backward(probs: &Array2<f64>, dprobs: &Array2<f64>) -> Array2<f64> {
    let mut out = probs * dprobs;
    for (mut row, p) in out.rows_mut().into_iter().zip(probs.rows()) {
        let dot = row.sum();
        row.zip_mut_with(&p, |r, &pv| *r -= pv * dot);
    }
    out
}

/// Inverted dropout mask: entries are `0` or `1 / (1 - p)`.
pub fn dropout_mask<R: Rng>(rng: &mut R, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 - p;
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

/// Affine map `y = x W^T + b` applied to each row.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Linear {
            weight: uniform_matrix(rng, outputs, inputs, bound),
            bias: uniform_vector(rng, outputs, bound),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn forward_row(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Accumulates into `grad`, returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<'_, f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(&x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }
}

impl Parameters for Linear {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("weight".into(), self.weight.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        vec![
            ("weight".into(), self.weight.view_mut().into_dyn()),
            ("bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}

/// Unidirectional LSTM. Gate blocks are stacked in the order input, forget,
/// cell candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    /// `4H x in`.
    pub w_input: Array2<f64>,
    /// `4H x H`.
    pub w_hidden: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct LstmTrace {
    x: Array2<f64>,
    /// Post-activation gates, `L x 4H`.
    gates: Array2<f64>,
    cells: Array2<f64>,
    hidden: Array2<f64>,
    reverse: bool,
}

impl LstmTrace {
    pub fn hidden(&self) -> &Array2<f64> {
        &self.hidden
    }
}

impl Lstm {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, hidden: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Lstm {
            w_input: uniform_matrix(rng, 4 * hidden, inputs, bound),
            w_hidden: uniform_matrix(rng, 4 * hidden, hidden, bound),
            bias: uniform_vector(rng, 4 * hidden, bound),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hidden.ncols()
    }

    fn order(len: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
        if reverse {
            Box::new((0..len).rev())
        } else {
            Box::new(0..len)
        }
    }

    /// Runs left-to-right, or right-to-left when `reverse`; outputs stay at
    /// their token positions.
    pub fn forward(&self, x: ArrayView2<'_, f64>, reverse: bool) -> LstmTrace {
        let len = x.nrows();
        let h = self.hidden_size();
        let projected = x.dot(&self.w_input.t()) + &self.bias;
        let mut gates = Array2::zeros((len, 4 * h));
        let mut cells = Array2::zeros((len, h));
        let mut hidden = Array2::zeros((len, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in Self::order(len, reverse) {
            let pre = &projected.row(t) + &self.w_hidden.dot(&h_prev);
            let mut g = gates.row_mut(t);
            for k in 0..h {
                let i = sigmoid(pre[k]);
                let f = sigmoid(pre[h + k]);
                let cand = pre[2 * h + k].tanh();
                let o = sigmoid(pre[3 * h + k]);
                g[k] = i;
                g[h + k] = f;
                g[2 * h + k] = cand;
                g[3 * h + k] = o;
                let c = f * c_prev[k] + i * cand;
                cells[[t, k]] = c;
                hidden[[t, k]] = o * c.tanh();
            }
            h_prev = hidden.row(t).to_owned();
            c_prev = cells.row(t).to_owned();
        }
        LstmTrace {
            x: x.to_owned(),
            gates,
            cells,
            hidden,
            reverse,
        }
    }

    /// Backpropagation through time; returns `dL/dx`.
    pub fn backward(&self, trace: &LstmTrace, dh: ArrayView2<'_, f64>, grad: &mut Lstm) -> Array2<f64> {
        let len = trace.x.nrows();
        let h = self.hidden_size();
        let mut dpre_all = Array2::zeros((len, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        let steps: Vec<usize> = Self::order(len, trace.reverse).collect();
        for (n, &t) in steps.iter().enumerate().rev() {
            let prev = n.checked_sub(1).map(|p| steps[p]);
            let g = trace.gates.row(t);
            let mut dpre = dpre_all.row_mut(t);
            let mut dc_prev = Array1::zeros(h);
            for k in 0..h {
                let (i, f, cand, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let c = trace.cells[[t, k]];
                let c_prev = prev.map_or(0.0, |p| trace.cells[[p, k]]);
                let tc = c.tanh();
                let dht = dh[[t, k]] + dh_next[k];
                let dc = dc_next[k] + dht * o * (1.0 - tc * tc);
                dpre[k] = dc * cand * i * (1.0 - i);
                dpre[h + k] = dc * c_prev * f * (1.0 - f);
                dpre[2 * h + k] = dc * i * (1.0 - cand * cand);
                dpre[3 * h + k] = dht * tc * o * (1.0 - o);
                dc_prev[k] = dc * f;
            }
            if let Some(p) = prev {
                let h_prev = trace.hidden.row(p);
                let dpre = dpre_all.row(t);
                for (r, &d) in dpre.iter().enumerate() {
                    if d != 0.0 {
                        grad.w_hidden.row_mut(r).scaled_add(d, &h_prev);
                    }
                }
                dh_next = self.w_hidden.t().dot(&dpre);
            } else {
                dh_next.fill(0.0);
            }
            dc_next = dc_prev;
        }
        grad.w_input += &dpre_all.t().dot(&trace.x);
        grad.bias += &dpre_all.sum_axis(Axis(0));
        dpre_all.dot(&self.w_input)
    }
}

impl Parameters for Lstm {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("w_input".into(), self.w_input.view().into_dyn()),
            ("w_hidden".into(), self.w_hidden.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        vec![
            ("w_input".into(), self.w_input.view_mut().into_dyn()),
            ("w_hidden".into(), self.w_hidden.view_mut().into_dyn()),
            ("bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}

/// Bidirectional LSTM; output rows are `[forward; backward]`, width `2H`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Clone, Debug)]
pub struct BiLstmTrace {
    forward: LstmTrace,
    backward: LstmTrace,
    output: Array2<f64>,
}

impl BiLstmTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl BiLstm {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, hidden: usize) -> Self {
        BiLstm {
            forward: Lstm::new(rng, inputs, hidden),
            backward: Lstm::new(rng, inputs, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn output_size(&self) -> usize {
        2 * self.hidden_size()
    }

    pub fn run(&self, x: ArrayView2<'_, f64>) -> BiLstmTrace {
        let forward = self.forward.forward(x, false);
        let backward = self.backward.forward(x, true);
        let output = concatenate(Axis(1), &[forward.hidden.view(), backward.hidden.view()])
            .expect("equal row counts");
        BiLstmTrace {
            forward,
            backward,
            output,
        }
    }

    pub fn backward_pass(&self, trace: &BiLstmTrace, dout: ArrayView2<'_, f64>, grad: &mut BiLstm) -> Array2<f64> {
        let h = self.hidden_size();
        let dx_f = self
            .forward
            .backward(&trace.forward, dout.slice(s![.., ..h]), &mut grad.forward);
        let dx_b = self
            .backward
            .backward(&trace.backward, dout.slice(s![.., h..]), &mut grad.backward);
        dx_f + dx_b
    }
}

impl Parameters for BiLstm {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        prefixed("forward", self.forward.tensors())
            .chain(prefixed("backward", self.backward.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let (f, b) = (&mut self.forward, &mut self.backward);
        prefixed("forward", f.tensors_mut())
            .chain(prefixed("backward", b.tensors_mut()))
            .collect()
    }
}

/// Stack of graph convolutions `H' = ReLU(Â H W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gcn {
    /// Each `in x out`.
    pub weights: Vec<Array2<f64>>,
}

#[derive(Clone, Debug)]
pub struct GcnTrace {
    /// `Â H` for each layer.
    propagated: Vec<Array2<f64>>,
    /// Pre-activation for each layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl GcnTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Gcn {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, outputs: usize, layers: usize) -> Self {
        let weights = (0..layers)
            .map(|l| {
                let fan_in = if l == 0 { inputs } else { outputs };
                let bound = (6.0 / (fan_in + outputs) as f64).sqrt();
                uniform_matrix(rng, fan_in, outputs, bound)
            })
            .collect();
        Gcn { weights }
    }

    pub fn output_size(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    pub fn forward(&self, adjacency: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>) -> GcnTrace {
        let mut propagated = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h = x.to_owned();
        for w in &self.weights {
            let ah = adjacency.dot(&h);
            let z = ah.dot(w);
            h = z.mapv(|v| v.max(0.0));
            propagated.push(ah);
            pre.push(z);
        }
        GcnTrace {
            propagated,
            pre,
            output: h,
        }
    }

    pub fn backward(
        &self,
        adjacency: ArrayView2<'_, f64>,
        trace: &GcnTrace,
        dout: &Array2<f64>,
        grad: &mut Gcn,
    ) -> Array2<f64> {
        let mut d = dout.clone();
        for l in (0..self.weights.len()).rev() {
            let dz = &d * &trace.pre[l].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            grad.weights[l] += &trace.propagated[l].t().dot(&dz);
            d = adjacency.t().dot(&dz.dot(&self.weights[l].t()));
        }
        d
    }
}

impl Parameters for Gcn {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| (format!("weight{i}"), w.view().into_dyn()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        self.weights
            .iter_mut()
            .enumerate()
            .map(|(i, w)| (format!("weight{i}"), w.view_mut().into_dyn()))
            .collect()
    }
}
