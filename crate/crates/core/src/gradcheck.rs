//! Central finite-difference verification of the full objective gradient
//! J = E + Σ λR, for both architectures and any regularizer combination.
//!
//! Dropout joins the check as a fixed, pre-drawn mask per example so the
//! objective stays deterministic under perturbation.

use crate::cnn::{cnn_backward, cnn_forward};
use crate::data::PAD_INDEX;
use crate::embedding::EmbeddingTable;
use crate::error::Result;
use crate::math::{softmax_cross_entropy, Vector};
use crate::model::{init_cnn, init_rnn, Gradients, HiddenOp, Model, ModelDims};
use crate::reg::{
    dropout_mask, penalty_gradient, penalty_value, PenaltyOptions, RegularizerKind,
    RegularizerSet, RegularizerSpec,
};
use crate::rnn::{rnn_backward, rnn_forward};
use crate::rng::RandomSource;
use crate::synth;
use crate::train::Dataset;

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Max relative error per named parameter component.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub label: String,
    pub components: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_err(&self) -> f64 {
        self.components
            .iter()
            .map(|(_, e)| *e)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.components
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_err() < tol
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn example_op<'a>(mask: &'a Option<Vector>) -> HiddenOp<'a> {
    match mask {
        Some(m) => HiddenOp::Mask(m),
        None => HiddenOp::None,
    }
}

fn data_loss(
    model: &Model,
    emb: &EmbeddingTable,
    data: &Dataset,
    masks: &[Option<Vector>],
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.len() {
        let op = example_op(&masks[i]);
        let (logits, label) = match (model, data) {
            (Model::Cnn(p), Dataset::Sentences(xs)) => {
                (cnn_forward(p, emb, &xs[i], op)?.1.logits, xs[i].label)
            }
            (Model::Rnn(p), Dataset::Trees(xs)) => {
                (rnn_forward(p, emb, &xs[i], op)?.1.logits, xs[i].label)
            }
            _ => unreachable!("callers pair model and dataset kinds"),
        };
        total += softmax_cross_entropy(&logits, label)?.0;
    }
    Ok(total / data.len() as f64)
}

fn objective(
    model: &Model,
    emb: &EmbeddingTable,
    data: &Dataset,
    masks: &[Option<Vector>],
    penalties: &[RegularizerSpec],
    opts: PenaltyOptions,
) -> Result<f64> {
    let mut j = data_loss(model, emb, data, masks)?;
    for p in penalties {
        j += p.value * penalty_value(p, model, emb, opts)?;
    }
    Ok(j)
}

fn analytic_gradient(
    model: &Model,
    emb: &EmbeddingTable,
    data: &Dataset,
    masks: &[Option<Vector>],
    penalties: &[RegularizerSpec],
    opts: PenaltyOptions,
) -> Result<Gradients> {
    let mut total = Gradients::zeros_like(model);
    for i in 0..data.len() {
        let op = example_op(&masks[i]);
        let g = match (model, data) {
            (Model::Cnn(p), Dataset::Sentences(xs)) => {
                let (_, cache) = cnn_forward(p, emb, &xs[i], op)?;
                cnn_backward(p, &cache, xs[i].label)?
            }
            (Model::Rnn(p), Dataset::Trees(xs)) => {
                let (_, cache) = rnn_forward(p, emb, &xs[i], op)?;
                rnn_backward(p, &cache, xs[i].label)?
            }
            _ => unreachable!(),
        };
        total.add(&g);
    }
    total.scale(1.0 / data.len() as f64);
    for p in penalties {
        penalty_gradient(p, model, emb, &mut total, opts)?;
    }
    Ok(total)
}

/// Check one model/dataset instance against central differences.
///
/// `fault` is a test hook: a nonzero value is added to the first analytic
/// gradient entry so negative controls can confirm the check actually bites.
pub fn check_instance(
    model: &Model,
    emb: &EmbeddingTable,
    data: &Dataset,
    regs: &RegularizerSet,
    opts: PenaltyOptions,
    label: String,
    rng: &mut RandomSource,
    fault: f64,
) -> Result<GradCheckReport> {
    let penalties: Vec<RegularizerSpec> = regs
        .specs()
        .iter()
        .copied()
        .filter(|s| s.kind.is_penalty())
        .collect();
    let dropout = regs.get(RegularizerKind::Dropout);
    let h = match model {
        Model::Cnn(p) => p.dims.hidden,
        Model::Rnn(p) => p.dims.embed,
    };
    let masks: Vec<Option<Vector>> = (0..data.len())
        .map(|_| match dropout {
            Some(s) => dropout_mask(h, s.value, rng).map(Some),
            None => Ok(None),
        })
        .collect::<Result<_>>()?;

    let mut analytic = analytic_gradient(model, emb, data, &masks, &penalties, opts)?;
    if fault != 0.0 {
        analytic.weights[0].data[0] += fault;
    }

    let mut model = model.clone();
    let mut emb = emb.clone();
    let eps = GRADCHECK_EPS;
    let mut components = Vec::new();

    let n_weights = analytic.weights.len();
    for wi in 0..n_weights {
        let mut worst = 0.0f64;
        let len = analytic.weights[wi].data.len();
        for k in 0..len {
            let orig = model.weights_mut()[wi].data[k];
            model.weights_mut()[wi].data[k] = orig + eps;
            let fp = objective(&model, &emb, data, &masks, &penalties, opts)?;
            model.weights_mut()[wi].data[k] = orig - eps;
            let fm = objective(&model, &emb, data, &masks, &penalties, opts)?;
            model.weights_mut()[wi].data[k] = orig;
            let num = (fp - fm) / (2.0 * eps);
            worst = worst.max(rel_err(analytic.weights[wi].data[k], num));
        }
        components.push((model.weight_names()[wi].to_string(), worst));
    }

    let n_biases = analytic.biases.len();
    for bi in 0..n_biases {
        let mut worst = 0.0f64;
        let len = analytic.biases[bi].len();
        for k in 0..len {
            let orig = model.biases_mut()[bi][k];
            model.biases_mut()[bi][k] = orig + eps;
            let fp = objective(&model, &emb, data, &masks, &penalties, opts)?;
            model.biases_mut()[bi][k] = orig - eps;
            let fm = objective(&model, &emb, data, &masks, &penalties, opts)?;
            model.biases_mut()[bi][k] = orig;
            let num = (fp - fm) / (2.0 * eps);
            worst = worst.max(rel_err(analytic.biases[bi][k], num));
        }
        components.push((model.bias_names()[bi].to_string(), worst));
    }

    // embeddings: PAD is frozen by contract, so it is not a free parameter
    let mut worst = 0.0f64;
    let dim = emb.dim();
    for row in 0..emb.vocab_size() {
        if row == PAD_INDEX {
            continue;
        }
        for col in 0..dim {
            let orig = emb.phi.get(row, col);
            emb.phi.set(row, col, orig + eps);
            let fp = objective(&model, &emb, data, &masks, &penalties, opts)?;
            emb.phi.set(row, col, orig - eps);
            let fm = objective(&model, &emb, data, &masks, &penalties, opts)?;
            emb.phi.set(row, col, orig);
            let num = (fp - fm) / (2.0 * eps);
            let a = analytic.emb_rows.get(&row).map_or(0.0, |r| r[col]);
            worst = worst.max(rel_err(a, num));
        }
    }
    components.push(("embeddings".to_string(), worst));

    Ok(GradCheckReport { label, components })
}

/// Every subset of the four strategies, coefficient/rate fixed per kind.
fn all_combinations() -> Vec<RegularizerSet> {
    let choices = [
        RegularizerSpec::penalty(RegularizerKind::L2Weights, 3e-3),
        RegularizerSpec::penalty(RegularizerKind::L2Embeddings, 2e-3),
        RegularizerSpec::penalty(RegularizerKind::ReEmbed, 4e-3),
        RegularizerSpec::dropout(0.4),
    ];
    (0..16usize)
        .map(|bits| {
            let specs = choices
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, s)| *s)
                .collect();
            RegularizerSet::new(specs).expect("distinct kinds")
        })
        .collect()
}

fn set_label(regs: &RegularizerSet) -> String {
    if regs.specs().is_empty() {
        return "none".to_string();
    }
    regs.specs()
        .iter()
        .map(|s| s.kind.name())
        .collect::<Vec<_>>()
        .join("+")
}

/// Run the full suite: both models × every regularizer combination on tiny
/// random instances (V=20, d=5, h=4). Deterministic under `seed`.
pub fn full_suite(seed: u64, opts: PenaltyOptions) -> Result<Vec<GradCheckReport>> {
    let mut rng = RandomSource::new(seed);

    let (sentences, svocab) = synth::separable_sentences(3, 3, 6, 4, seed ^ 0x5ca1e);
    let cnn_dims = ModelDims::cnn(5, 5, 4, 3);
    let cnn_data = Dataset::Sentences(sentences);
    debug_assert!(svocab.len() <= 20);

    let (trees, tvocab) = synth::separable_trees(3, seed ^ 0x7ee);
    let rnn_dims = ModelDims::rnn(5, 5);
    let rnn_data = Dataset::Trees(trees);

    let mut reports = Vec::new();
    for regs in all_combinations() {
        let model = Model::Cnn(init_cnn(cnn_dims, &mut rng));
        let mut emb = EmbeddingTable::random(svocab.len().max(20), 5, &mut rng);
        // nonzero drift so the re-embedding penalty has a live gradient
        for v in emb.phi.row_mut(2) {
            *v += 0.15;
        }
        reports.push(check_instance(
            &model,
            &emb,
            &cnn_data,
            &regs,
            opts,
            format!("cnn/{}", set_label(&regs)),
            &mut rng,
            0.0,
        )?);

        let model = Model::Rnn(init_rnn(rnn_dims, &mut rng));
        let mut emb = EmbeddingTable::random(tvocab.len().max(20), 5, &mut rng);
        for v in emb.phi.row_mut(2) {
            *v += 0.15;
        }
        reports.push(check_instance(
            &model,
            &emb,
            &rnn_data,
            &regs,
            opts,
            format!("rnn/{}", set_label(&regs)),
            &mut rng,
            0.0,
        )?);
    }
    Ok(reports)
}
