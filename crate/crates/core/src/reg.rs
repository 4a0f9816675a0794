//! The four regularization strategies as composable plug-ins.
//!
//! Three are penalties added to the objective J = E + λR: the squared
//! Frobenius norm of connection weights, of the embedding table, and of the
//! embedding drift Φ−Φ₀. The fourth is dropout on the hidden activation.
//! Every spec carries an activation epoch so penalties can be switched on
//! partway through training.

use crate::data::PAD_INDEX;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math::Vector;
use crate::model::{Gradients, Model};
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegularizerKind {
    L2Weights,
    L2Embeddings,
    ReEmbed,
    Dropout,
}

impl RegularizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegularizerKind::L2Weights => "l2_weights",
            RegularizerKind::L2Embeddings => "l2_embeddings",
            RegularizerKind::ReEmbed => "reembed",
            RegularizerKind::Dropout => "dropout",
        }
    }

    pub fn is_penalty(&self) -> bool {
        !matches!(self, RegularizerKind::Dropout)
    }
}

/// One strategy instance: a coefficient λ (penalties) or rate p (dropout),
/// plus the epoch at which it switches on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    /// λ for penalties, p for dropout.
    pub value: f64,
    pub activation_epoch: usize,
}

impl RegularizerSpec {
    pub fn penalty(kind: RegularizerKind, lambda: f64) -> Self {
        assert!(kind.is_penalty());
        RegularizerSpec { kind, value: lambda, activation_epoch: 0 }
    }

    pub fn dropout(p: f64) -> Self {
        RegularizerSpec {
            kind: RegularizerKind::Dropout,
            value: p,
            activation_epoch: 0,
        }
    }

    pub fn at_epoch(mut self, epoch: usize) -> Self {
        self.activation_epoch = epoch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            RegularizerKind::Dropout => {
                if !(0.0..1.0).contains(&self.value) {
                    return Err(Error::BadDropoutRate(self.value));
                }
            }
            _ => {
                if self.value < 0.0 || !self.value.is_finite() {
                    return Err(Error::Config(format!(
                        "{} coefficient must be nonnegative, got {}",
                        self.kind.name(),
                        self.value
                    )));
                }
            }
        }
        Ok(())
    }
}

/// At most one spec of each kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegularizerSet {
    specs: Vec<RegularizerSpec>,
}

impl RegularizerSet {
    pub fn new(specs: Vec<RegularizerSpec>) -> Result<Self> {
        for (i, a) in specs.iter().enumerate() {
            a.validate()?;
            if specs[i + 1..].iter().any(|b| b.kind == a.kind) {
                return Err(Error::Config(format!(
                    "duplicate regularizer kind {}",
                    a.kind.name()
                )));
            }
        }
        Ok(RegularizerSet { specs })
    }

    pub fn empty() -> Self {
        RegularizerSet::default()
    }

    pub fn specs(&self) -> &[RegularizerSpec] {
        &self.specs
    }

    /// Specs whose activation epoch has been reached. Once active, a spec
    /// stays active.
    pub fn active_at(&self, epoch: usize) -> Vec<RegularizerSpec> {
        self.specs
            .iter()
            .copied()
            .filter(|s| s.activation_epoch <= epoch)
            .collect()
    }

    pub fn get(&self, kind: RegularizerKind) -> Option<RegularizerSpec> {
        self.specs.iter().copied().find(|s| s.kind == kind)
    }

    /// Replace-or-insert, keeping the one-per-kind invariant.
    pub fn with(&self, spec: RegularizerSpec) -> Result<Self> {
        let mut specs: Vec<RegularizerSpec> =
            self.specs.iter().copied().filter(|s| s.kind != spec.kind).collect();
        if spec.value != 0.0 || spec.kind == RegularizerKind::Dropout {
            specs.push(spec);
        }
        RegularizerSet::new(specs)
    }
}

/// Whether bias vectors join the weights penalty. Off by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PenaltyOptions {
    pub include_biases: bool,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        PenaltyOptions { include_biases: false }
    }
}

/// The bare value of R for a penalty spec (λ not applied).
pub fn penalty_value(
    spec: &RegularizerSpec,
    model: &Model,
    emb: &EmbeddingTable,
    opts: PenaltyOptions,
) -> Result<f64> {
    match spec.kind {
        RegularizerKind::L2Weights => {
            let mut r: f64 = model.weights().iter().map(|w| w.sq_norm()).sum();
            if opts.include_biases {
                r += model
                    .biases()
                    .iter()
                    .map(|b| b.iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>();
            }
            Ok(r)
        }
        RegularizerKind::L2Embeddings => {
            let mut r = 0.0;
            for i in 0..emb.phi.rows {
                if i == PAD_INDEX {
                    continue;
                }
                r += emb.phi.row(i).iter().map(|v| v * v).sum::<f64>();
            }
            Ok(r)
        }
        RegularizerKind::ReEmbed => {
            let mut r = 0.0;
            for i in 0..emb.phi.rows {
                if i == PAD_INDEX {
                    continue;
                }
                for (a, b) in emb.phi.row(i).iter().zip(emb.phi0.row(i)) {
                    let d = a - b;
                    r += d * d;
                }
            }
            Ok(r)
        }
        RegularizerKind::Dropout => Err(Error::NotAPenalty),
    }
}

/// Add λ·∂R/∂θ into the accumulator: 2λW, 2λΦ, or 2λ(Φ−Φ₀). The PAD row is
/// never touched.
pub fn penalty_gradient(
    spec: &RegularizerSpec,
    model: &Model,
    emb: &EmbeddingTable,
    grads: &mut Gradients,
    opts: PenaltyOptions,
) -> Result<()> {
    let two_lambda = 2.0 * spec.value;
    match spec.kind {
        RegularizerKind::L2Weights => {
            for (acc, w) in grads.weights.iter_mut().zip(model.weights()) {
                for (g, v) in acc.data.iter_mut().zip(&w.data) {
                    *g += two_lambda * v;
                }
            }
            if opts.include_biases {
                for (acc, b) in grads.biases.iter_mut().zip(model.biases()) {
                    for (g, v) in acc.iter_mut().zip(b.iter()) {
                        *g += two_lambda * v;
                    }
                }
            }
            Ok(())
        }
        RegularizerKind::L2Embeddings => {
            for i in 0..emb.phi.rows {
                if i == PAD_INDEX {
                    continue;
                }
                let row: Vector = emb.phi.row(i).iter().map(|v| two_lambda * v).collect();
                grads.add_emb_row(i, &row);
            }
            Ok(())
        }
        RegularizerKind::ReEmbed => {
            for i in 0..emb.phi.rows {
                if i == PAD_INDEX {
                    continue;
                }
                let row: Vector = emb
                    .phi
                    .row(i)
                    .iter()
                    .zip(emb.phi0.row(i))
                    .map(|(a, b)| two_lambda * (a - b))
                    .collect();
                grads.add_emb_row(i, &row);
            }
            Ok(())
        }
        RegularizerKind::Dropout => Err(Error::NotAPenalty),
    }
}

/// Proximal (implicit) penalty step with step size η, applied once per
/// optimizer step. First-order equivalent to the explicit step
/// θ ← θ − η·2λ·∂R-direction, but contractive for any λ, so the λ→∞ limit
/// cleanly freezes the penalized quantity instead of blowing up.
pub fn penalty_prox_step(
    spec: &RegularizerSpec,
    model: &mut Model,
    emb: &mut EmbeddingTable,
    eta: f64,
    opts: PenaltyOptions,
) -> Result<()> {
    let shrink = 1.0 / (1.0 + 2.0 * eta * spec.value);
    match spec.kind {
        RegularizerKind::L2Weights => {
            for w in model.weights_mut() {
                for v in &mut w.data {
                    *v *= shrink;
                }
            }
            if opts.include_biases {
                for b in model.biases_mut() {
                    for v in b.iter_mut() {
                        *v *= shrink;
                    }
                }
            }
            Ok(())
        }
        RegularizerKind::L2Embeddings => {
            for i in 0..emb.phi.rows {
                if i == PAD_INDEX {
                    continue;
                }
                for v in emb.phi.row_mut(i) {
                    *v *= shrink;
                }
            }
            Ok(())
        }
        RegularizerKind::ReEmbed => {
            // Φ ← Φ₀ + (Φ − Φ₀)/(1 + 2ηλ)
            for i in 0..emb.phi.rows {
                if i == PAD_INDEX {
                    continue;
                }
                let anchor: Vector = emb.phi0.row(i).to_vec();
                for (v, a) in emb.phi.row_mut(i).iter_mut().zip(&anchor) {
                    *v = a + (*v - a) * shrink;
                }
            }
            Ok(())
        }
        RegularizerKind::Dropout => Err(Error::NotAPenalty),
    }
}

/// Fresh Bernoulli(1−p) keep mask of {0, 1} entries.
pub fn dropout_mask(len: usize, p: f64, rng: &mut RandomSource) -> Result<Vector> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::BadDropoutRate(p));
    }
    Ok((0..len)
        .map(|_| if rng.bernoulli(p) { 0.0 } else { 1.0 })
        .collect())
}

/// Test-time dropout compensation: every activation multiplied by 1−p.
pub fn test_scale(activations: &[f64], p: f64) -> Result<Vector> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::BadDropoutRate(p));
    }
    Ok(activations.iter().map(|a| a * (1.0 - p)).collect())
}
