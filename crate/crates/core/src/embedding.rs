//! The word-embedding table: the fine-tuned matrix Φ plus the frozen
//! pretrained snapshot Φ₀ that the re-embedding penalty pulls toward.

use std::fs;
use std::path::Path;

use crate::data::{Vocabulary, PAD_INDEX};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::RandomSource;

/// Spread used for rows with no pretrained vector.
pub const FALLBACK_INIT: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    /// Current, fine-tuned embeddings (V×d). The PAD row stays zero.
    pub phi: Matrix,
    /// Snapshot taken at construction; never updated.
    pub phi0: Matrix,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.phi.cols
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.rows
    }

    fn finish(mut phi: Matrix) -> Self {
        for v in phi.row_mut(PAD_INDEX) {
            *v = 0.0;
        }
        let phi0 = phi.clone();
        EmbeddingTable { phi, phi0 }
    }

    /// Random table with no pretrained file: every non-PAD row uniform in
    /// (−0.01, 0.01).
    pub fn random(vocab_size: usize, dim: usize, rng: &mut RandomSource) -> Self {
        let mut phi = Matrix::zeros(vocab_size, dim);
        for i in 0..vocab_size {
            if i == PAD_INDEX {
                continue;
            }
            for v in phi.row_mut(i) {
                *v = rng.uniform(-FALLBACK_INIT, FALLBACK_INIT);
            }
        }
        Self::finish(phi)
    }

    /// Build from a pretrained embedding file (`token v1 ... vd` per line).
    /// Vocabulary words missing from the file get small random rows; the PAD
    /// row is forced to zero; Φ₀ is snapshotted immediately.
    pub fn load(
        path: impl AsRef<Path>,
        vocab: &Vocabulary,
        dim: usize,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut phi = Matrix::zeros(vocab.len(), dim);
        let mut found = vec![false; vocab.len()];
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap();
            let values: Vec<f64> = parts
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        msg: format!("bad number in vector for token {token:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!(
                        "token {token:?} has a {}-dimensional vector, expected {dim}",
                        values.len()
                    ),
                });
            }
            let idx = vocab.lookup(&token.to_lowercase());
            if idx != crate::data::UNK_INDEX || token.to_lowercase() == crate::data::UNK_TOKEN {
                phi.row_mut(idx).copy_from_slice(&values);
                found[idx] = true;
            }
        }
        // deterministic fill order for words without pretrained vectors
        for i in 0..vocab.len() {
            if i == PAD_INDEX || found[i] {
                continue;
            }
            for v in phi.row_mut(i) {
                *v = rng.uniform(-FALLBACK_INIT, FALLBACK_INIT);
            }
        }
        Ok(Self::finish(phi))
    }

    /// Max per-coordinate |Φ − Φ₀| over non-PAD rows.
    pub fn max_drift(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.phi.rows {
            if i == PAD_INDEX {
                continue;
            }
            for (a, b) in self.phi.row(i).iter().zip(self.phi0.row(i)) {
                m = m.max((a - b).abs());
            }
        }
        m
    }
}
