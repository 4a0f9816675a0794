//! Parameter bundles for the two architectures, initialization, and the
//! gradient container shared by both backward passes.

use std::collections::BTreeMap;

use crate::embedding::EmbeddingTable;
use crate::math::{Matrix, Vector};
use crate::rng::RandomSource;

/// Layer sizes. `window` and `hidden` are ignored by the tree model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub embed: usize,
    pub window: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn cnn(embed: usize, window: usize, hidden: usize, classes: usize) -> Self {
        ModelDims { embed, window, hidden, classes }
    }

    pub fn rnn(embed: usize, classes: usize) -> Self {
        ModelDims { embed, window: 0, hidden: embed, classes }
    }
}

/// Fixed-window convolutional classifier: conv → max-pool → tanh hidden →
/// softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCnnParams {
    pub w_conv: Matrix, // hidden × (window·embed)
    pub b_conv: Vector,
    pub w_hid: Matrix, // hidden × hidden
    pub b_hid: Vector,
    pub w_out: Matrix, // classes × hidden
    pub b_out: Vector,
    pub dims: ModelDims,
}

/// Recursive tree composer: tanh(W·[left; right] + b) bottom-up, softmax on
/// the root vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRnnParams {
    pub w_comp: Matrix, // embed × 2·embed
    pub b_comp: Vector,
    pub w_out: Matrix, // classes × embed
    pub b_out: Vector,
    pub dims: ModelDims,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cnn(WindowCnnParams),
    Rnn(TreeRnnParams),
}

fn glorot(rows: usize, cols: usize, rng: &mut RandomSource) -> Matrix {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = rng.uniform(-r, r);
    }
    m
}

pub fn init_cnn(dims: ModelDims, rng: &mut RandomSource) -> WindowCnnParams {
    let kd = dims.window * dims.embed;
    WindowCnnParams {
        w_conv: glorot(dims.hidden, kd, rng),
        b_conv: vec![0.0; dims.hidden],
        w_hid: glorot(dims.hidden, dims.hidden, rng),
        b_hid: vec![0.0; dims.hidden],
        w_out: glorot(dims.classes, dims.hidden, rng),
        b_out: vec![0.0; dims.classes],
        dims,
    }
}

pub fn init_rnn(dims: ModelDims, rng: &mut RandomSource) -> TreeRnnParams {
    TreeRnnParams {
        w_comp: glorot(dims.embed, 2 * dims.embed, rng),
        b_comp: vec![0.0; dims.embed],
        w_out: glorot(dims.classes, dims.embed, rng),
        b_out: vec![0.0; dims.classes],
        dims,
    }
}

impl Model {
    pub fn dims(&self) -> ModelDims {
        match self {
            Model::Cnn(p) => p.dims,
            Model::Rnn(p) => p.dims,
        }
    }

    /// Weight matrices in a fixed order (used by penalties, updates, and the
    /// gradient checker).
    pub fn weights(&self) -> Vec<&Matrix> {
        match self {
            Model::Cnn(p) => vec![&p.w_conv, &p.w_hid, &p.w_out],
            Model::Rnn(p) => vec![&p.w_comp, &p.w_out],
        }
    }

    pub fn weights_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Model::Cnn(p) => vec![&mut p.w_conv, &mut p.w_hid, &mut p.w_out],
            Model::Rnn(p) => vec![&mut p.w_comp, &mut p.w_out],
        }
    }

    pub fn biases(&self) -> Vec<&Vector> {
        match self {
            Model::Cnn(p) => vec![&p.b_conv, &p.b_hid, &p.b_out],
            Model::Rnn(p) => vec![&p.b_comp, &p.b_out],
        }
    }

    pub fn biases_mut(&mut self) -> Vec<&mut Vector> {
        match self {
            Model::Cnn(p) => vec![&mut p.b_conv, &mut p.b_hid, &mut p.b_out],
            Model::Rnn(p) => vec![&mut p.b_comp, &mut p.b_out],
        }
    }

    pub fn weight_names(&self) -> &'static [&'static str] {
        match self {
            Model::Cnn(_) => &["w_conv", "w_hid", "w_out"],
            Model::Rnn(_) => &["w_comp", "w_out"],
        }
    }

    pub fn bias_names(&self) -> &'static [&'static str] {
        match self {
            Model::Cnn(_) => &["b_conv", "b_hid", "b_out"],
            Model::Rnn(_) => &["b_comp", "b_out"],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights().iter().all(|m| m.is_finite())
            && self
                .biases()
                .iter()
                .all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Gradient accumulator mirroring a model's weight/bias layout, plus sparse
/// embedding-row gradients. BTreeMap keeps the row iteration order
/// deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
    pub emb_rows: BTreeMap<usize, Vector>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients {
            weights: model
                .weights()
                .iter()
                .map(|m| Matrix::zeros(m.rows, m.cols))
                .collect(),
            biases: model.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
            emb_rows: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (row, g) in &other.emb_rows {
            let acc = self
                .emb_rows
                .entry(*row)
                .or_insert_with(|| vec![0.0; g.len()]);
            for (x, y) in acc.iter_mut().zip(g) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.weights {
            for v in &mut m.data {
                *v *= s;
            }
        }
        for b in &mut self.biases {
            for v in b.iter_mut() {
                *v *= s;
            }
        }
        for g in self.emb_rows.values_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn add_emb_row(&mut self, row: usize, grad: &[f64]) {
        if row == crate::data::PAD_INDEX {
            return;
        }
        let acc = self
            .emb_rows
            .entry(row)
            .or_insert_with(|| vec![0.0; grad.len()]);
        for (x, y) in acc.iter_mut().zip(grad) {
            *x += y;
        }
    }
}

/// What happens to the hidden activation (CNN) or root vector (RNN) before
/// the output layer: nothing, a training-time dropout mask, or the
/// test-time 1−p scale.
#[derive(Debug, Clone, Copy)]
pub enum HiddenOp<'a> {
    None,
    Mask(&'a [f64]),
    Scale(f64),
}

impl HiddenOp<'_> {
    pub fn apply(&self, v: &[f64]) -> Vector {
        match self {
            HiddenOp::None => v.to_vec(),
            HiddenOp::Mask(m) => v.iter().zip(*m).map(|(a, b)| a * b).collect(),
            HiddenOp::Scale(s) => v.iter().map(|a| a * s).collect(),
        }
    }
}

/// Apply one plain gradient-descent step `θ ← θ − lr·g` to the model and the
/// embedding rows named in `g`. PAD is never in `g` by construction.
pub fn apply_gradients(model: &mut Model, emb: &mut EmbeddingTable, g: &Gradients, lr: f64) {
    for (w, gw) in model.weights_mut().into_iter().zip(&g.weights) {
        for (x, y) in w.data.iter_mut().zip(&gw.data) {
            *x -= lr * y;
        }
    }
    for (b, gb) in model.biases_mut().into_iter().zip(&g.biases) {
        for (x, y) in b.iter_mut().zip(gb) {
            *x -= lr * y;
        }
    }
    for (row, grad) in &g.emb_rows {
        let r = emb.phi.row_mut(*row);
        for (x, y) in r.iter_mut().zip(grad) {
            *x -= lr * y;
        }
    }
}
