//! Dense matrices, vectors, activations, and the softmax/cross-entropy head.
//!
//! Everything is `f64` and row-major. Sizes here are desk-scale (tens to a few
//! hundred per axis), so plain index loops are fast enough and keep the
//! arithmetic easy to audit against the gradient checker.

use crate::error::{Error, Result};

pub type Vector = Vec<f64>;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared Frobenius norm.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// `m · v`, checking shapes.
pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vector> {
    if m.cols != v.len() {
        return Err(Error::DimensionMismatch {
            op: "matvec",
            expected: format!("vector of length {} for a {}x{} matrix", m.cols, m.rows, m.cols),
            got: format!("vector of length {}", v.len()),
        });
    }
    let mut out = vec![0.0; m.rows];
    for i in 0..m.rows {
        let row = m.row(i);
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        out[i] = acc;
    }
    Ok(out)
}

/// `m^T · v` without materializing the transpose.
pub fn matvec_t(m: &Matrix, v: &[f64]) -> Result<Vector> {
    if m.rows != v.len() {
        return Err(Error::DimensionMismatch {
            op: "matvec_t",
            expected: format!("vector of length {} for a {}x{} matrix", m.rows, m.rows, m.cols),
            got: format!("vector of length {}", v.len()),
        });
    }
    let mut out = vec![0.0; m.cols];
    for i in 0..m.rows {
        let row = m.row(i);
        let vi = v[i];
        for (o, a) in out.iter_mut().zip(row) {
            *o += vi * a;
        }
    }
    Ok(out)
}

/// Accumulate the outer product `a ⊗ b` into `acc` (shape len(a) × len(b)).
pub fn add_outer(acc: &mut Matrix, a: &[f64], b: &[f64]) {
    debug_assert_eq!(acc.rows, a.len());
    debug_assert_eq!(acc.cols, b.len());
    for i in 0..a.len() {
        let ai = a[i];
        let row = acc.row_mut(i);
        for (r, bj) in row.iter_mut().zip(b) {
            *r += ai * bj;
        }
    }
}

pub fn add_scaled(acc: &mut [f64], x: &[f64], s: f64) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, v) in acc.iter_mut().zip(x) {
        *a += s * v;
    }
}

pub fn tanh_forward(v: &[f64]) -> Vector {
    v.iter().map(|x| x.tanh()).collect()
}

/// Backward through tanh given the forward *output* `y`: `dy ⊙ (1 − y²)`.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vector {
    debug_assert_eq!(y.len(), dy.len());
    y.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect()
}

/// Stabilized softmax + cross-entropy.
///
/// Returns `(loss, probs, dlogits)` with `dlogits = probs − onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vector, Vector)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vector = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vector = exps.iter().map(|e| e / sum).collect();
    // -log p computed from the shifted logits directly so the p≈0 case stays finite
    let loss = sum.ln() - (logits[label] - max);
    let mut dlogits = probs.clone();
    dlogits[label] -= 1.0;
    Ok((loss, probs, dlogits))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
