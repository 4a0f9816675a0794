//! Mini-batch SGD with learning-rate schedules, incremental penalty
//! activation, per-epoch evaluation, and learning-curve recording.

use crate::cnn::{cnn_backward, cnn_forward};
use crate::data::SentenceExample;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math::{argmax, softmax_cross_entropy};
use crate::model::{apply_gradients, Gradients, HiddenOp, Model};
use crate::reg::{
    dropout_mask, penalty_prox_step, penalty_value, PenaltyOptions, RegularizerKind,
    RegularizerSet, RegularizerSpec,
};
use crate::rnn::{rnn_backward, rnn_forward};
use crate::rng::RandomSource;
use crate::tree::TreeExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Relation,
    Sentiment,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Relation => "relation",
            Task::Sentiment => "sentiment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Fixed,
    /// η₀·(1+epoch)⁻¹
    PowerDecay,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub task: Task,
    pub eta0: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub regularizers: RegularizerSet,
    pub penalty_opts: PenaltyOptions,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.eta0
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub seed: u64,
    pub records: Vec<EpochRecord>,
}

impl LearningCurve {
    pub fn final_val_acc(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.val_acc)
    }

    pub fn best_val_acc(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.val_acc)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub enum Dataset {
    Sentences(Vec<SentenceExample>),
    Trees(Vec<TreeExample>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Sentences(v) => v.len(),
            Dataset::Trees(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Learning rate at the given epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    match cfg.schedule {
        Schedule::Fixed => cfg.eta0,
        Schedule::PowerDecay => cfg.eta0 / (1.0 + epoch as f64),
    }
}

fn hidden_len(model: &Model) -> usize {
    match model {
        Model::Cnn(p) => p.dims.hidden,
        Model::Rnn(p) => p.dims.embed,
    }
}

/// Loss and gradient of one example under the given hidden-layer op.
fn example_grad(
    model: &Model,
    emb: &EmbeddingTable,
    data: &Dataset,
    index: usize,
    op: HiddenOp,
) -> Result<(f64, Gradients)> {
    match (model, data) {
        (Model::Cnn(p), Dataset::Sentences(xs)) => {
            let x = &xs[index];
            let (_, cache) = cnn_forward(p, emb, x, op)?;
            let (loss, _, _) = softmax_cross_entropy(&cache.logits, x.label)?;
            let g = cnn_backward(p, &cache, x.label)?;
            Ok((loss, g))
        }
        (Model::Rnn(p), Dataset::Trees(xs)) => {
            let x = &xs[index];
            let (_, cache) = rnn_forward(p, emb, x, op)?;
            let (loss, _, _) = softmax_cross_entropy(&cache.logits, x.label)?;
            let g = rnn_backward(p, &cache, x.label)?;
            Ok((loss, g))
        }
        _ => Err(Error::Config(
            "model and dataset kinds do not match".into(),
        )),
    }
}

fn predict(model: &Model, emb: &EmbeddingTable, data: &Dataset, index: usize, op: HiddenOp) -> Result<usize> {
    let probs = match (model, data) {
        (Model::Cnn(p), Dataset::Sentences(xs)) => cnn_forward(p, emb, &xs[index], op)?.0,
        (Model::Rnn(p), Dataset::Trees(xs)) => rnn_forward(p, emb, &xs[index], op)?.0,
        _ => {
            return Err(Error::Config(
                "model and dataset kinds do not match".into(),
            ))
        }
    };
    Ok(argmax(&probs))
}

fn label_of(data: &Dataset, index: usize) -> usize {
    match data {
        Dataset::Sentences(xs) => xs[index].label,
        Dataset::Trees(xs) => xs[index].label,
    }
}

/// Fraction of examples whose argmax class equals the label. Deterministic:
/// dropout is applied in test mode (activations scaled by 1−p) when a rate
/// is given.
pub fn evaluate(
    model: &Model,
    emb: &EmbeddingTable,
    data: &Dataset,
    dropout_p: Option<f64>,
) -> Result<f64> {
    let op = match dropout_p {
        Some(p) if p > 0.0 => HiddenOp::Scale(1.0 - p),
        _ => HiddenOp::None,
    };
    let mut correct = 0usize;
    for i in 0..data.len() {
        if predict(model, emb, data, i, op)? == label_of(data, i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

// Penalties applied in a fixed kind order so runs are reproducible.
fn sorted_penalties(active: &[RegularizerSpec]) -> Vec<RegularizerSpec> {
    let mut ps: Vec<RegularizerSpec> = active
        .iter()
        .copied()
        .filter(|s| s.kind.is_penalty())
        .collect();
    ps.sort_by_key(|s| s.kind);
    ps
}

/// Run mini-batch SGD for `cfg.epochs` epochs.
///
/// Per optimizer step: the data gradient (mean over the batch, fresh dropout
/// mask per example when active) is applied at the epoch's learning rate,
/// then each active penalty is applied once at full strength λ via its
/// proximal shrink. A non-finite loss or parameter aborts the run with a
/// divergence error naming the epoch.
pub fn train(
    cfg: &TrainConfig,
    model: &mut Model,
    emb: &mut EmbeddingTable,
    train_set: &Dataset,
    val_set: &Dataset,
    rng: &mut RandomSource,
) -> Result<LearningCurve> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("datasets must be nonempty".into()));
    }
    let mut records = Vec::with_capacity(cfg.epochs);
    let h = hidden_len(model);

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let active = cfg.regularizers.active_at(epoch);
        let penalties = sorted_penalties(&active);
        let dropout = active
            .iter()
            .find(|s| s.kind == RegularizerKind::Dropout)
            .map(|s| s.value)
            .filter(|p| *p > 0.0);

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        rng.shuffle(&mut order);

        let mut obj_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(model);
            let mut loss_sum = 0.0;
            for &i in batch {
                let mask;
                let op = match dropout {
                    Some(p) => {
                        mask = dropout_mask(h, p, rng)?;
                        HiddenOp::Mask(&mask)
                    }
                    None => HiddenOp::None,
                };
                let (loss, g) = example_grad(model, emb, train_set, i, op)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("non-finite loss on example {i}"),
                    });
                }
                loss_sum += loss;
                grads.add(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            apply_gradients(model, emb, &grads, lr);

            let mut j = loss_sum / batch.len() as f64;
            for p in &penalties {
                j += p.value * penalty_value(p, model, emb, cfg.penalty_opts)?;
                penalty_prox_step(p, model, emb, lr, cfg.penalty_opts)?;
            }
            obj_sum += j;
            batches += 1;
        }

        if !model.is_finite() || !emb.phi.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "non-finite parameter after update".into(),
            });
        }

        let train_acc = evaluate(model, emb, train_set, dropout)?;
        let val_acc = evaluate(model, emb, val_set, dropout)?;
        records.push(EpochRecord {
            epoch,
            train_acc,
            val_acc,
            objective: obj_sum / batches as f64,
        });
    }

    Ok(LearningCurve {
        seed: cfg.seed,
        records,
    })
}
