//! Forward and backward passes for the fixed-window convolutional model.
//!
//! A sentence of n tokens yields exactly n windows: window i covers tokens
//! i..i+k−1, with positions past the end filled by PAD's zero embedding.
//! Convolution is linear; tanh appears only at the hidden layer. Max pooling
//! ties break toward the lowest position index.

use crate::data::{SentenceExample, PAD_INDEX};
use crate::embedding::EmbeddingTable;
use crate::error::Result;
use crate::math::{self, Vector};
use crate::model::{Gradients, HiddenOp, Model, WindowCnnParams};

#[derive(Debug, Clone)]
pub struct CnnCache {
    /// Token index per window slot, n × k.
    pub window_tokens: Vec<Vec<usize>>,
    /// Concatenated window embeddings, n × (k·d).
    pub windows: Vec<Vector>,
    /// Winning position per pooled dimension.
    pub argmax: Vec<usize>,
    pub pooled: Vector,
    /// Post-tanh hidden activation, before any dropout mask.
    pub hidden: Vector,
    /// Hidden after the HiddenOp (what the output layer saw).
    pub hidden_used: Vector,
    /// The mask if one was applied (needed to route the backward pass).
    pub mask: Option<Vector>,
    pub logits: Vector,
    pub probs: Vector,
}

pub fn cnn_forward(
    params: &WindowCnnParams,
    emb: &EmbeddingTable,
    x: &SentenceExample,
    hidden_op: HiddenOp,
) -> Result<(Vector, CnnCache)> {
    let d = params.dims.embed;
    let k = params.dims.window;
    let h = params.dims.hidden;
    let n = x.tokens.len();

    let mut window_tokens = Vec::with_capacity(n);
    let mut windows = Vec::with_capacity(n);
    let mut argmax = vec![0usize; h];
    let mut pooled = vec![f64::NEG_INFINITY; h];
    for i in 0..n {
        let mut toks = Vec::with_capacity(k);
        let mut win = Vec::with_capacity(k * d);
        for s in 0..k {
            let tok = if i + s < n { x.tokens[i + s] } else { PAD_INDEX };
            toks.push(tok);
            win.extend_from_slice(emb.phi.row(tok));
        }
        let mut z = math::matvec(&params.w_conv, &win)?;
        for (zj, bj) in z.iter_mut().zip(&params.b_conv) {
            *zj += bj;
        }
        for j in 0..h {
            if z[j] > pooled[j] {
                pooled[j] = z[j];
                argmax[j] = i;
            }
        }
        window_tokens.push(toks);
        windows.push(win);
    }

    let mut pre_hidden = math::matvec(&params.w_hid, &pooled)?;
    for (a, b) in pre_hidden.iter_mut().zip(&params.b_hid) {
        *a += b;
    }
    let hidden = math::tanh_forward(&pre_hidden);
    let hidden_used = hidden_op.apply(&hidden);

    let mut logits = math::matvec(&params.w_out, &hidden_used)?;
    for (a, b) in logits.iter_mut().zip(&params.b_out) {
        *a += b;
    }
    // probs only; the loss needs a label and is taken in the trainer
    let (_, probs, _) = math::softmax_cross_entropy(&logits, 0)?;

    let mask = match hidden_op {
        HiddenOp::Mask(m) => Some(m.to_vec()),
        _ => None,
    };
    let cache = CnnCache {
        window_tokens,
        windows,
        argmax,
        pooled,
        hidden,
        hidden_used,
        mask,
        logits,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Cross-entropy gradient for every parameter and every embedding row that
/// appeared in a window. Max pooling routes gradient only to each
/// dimension's argmax position; the PAD row is discarded.
pub fn cnn_backward(
    params: &WindowCnnParams,
    cache: &CnnCache,
    label: usize,
) -> Result<Gradients> {
    let d = params.dims.embed;
    let h = params.dims.hidden;

    let mut g = Gradients::zeros_like(&Model::Cnn(params.clone()));
    // order matches Model::weights()/biases(): conv, hid, out
    let mut dlogits = cache.probs.clone();
    dlogits[label] -= 1.0;

    math::add_outer(&mut g.weights[2], &dlogits, &cache.hidden_used);
    math::add_scaled(&mut g.biases[2], &dlogits, 1.0);

    let dhidden_used = math::matvec_t(&params.w_out, &dlogits)?;
    let dhidden: Vector = match &cache.mask {
        Some(m) => dhidden_used.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => dhidden_used,
    };
    let dpre_hidden = math::tanh_backward(&cache.hidden, &dhidden);

    math::add_outer(&mut g.weights[1], &dpre_hidden, &cache.pooled);
    math::add_scaled(&mut g.biases[1], &dpre_hidden, 1.0);

    let dpooled = math::matvec_t(&params.w_hid, &dpre_hidden)?;

    // route through the pool: dimension j flows to window argmax[j]
    let mut dwindows: Vec<Vector> = vec![Vec::new(); cache.windows.len()];
    for j in 0..h {
        let i = cache.argmax[j];
        let dj = dpooled[j];
        math::add_scaled(g.weights[0].row_mut(j), &cache.windows[i], dj);
        g.biases[0][j] += dj;
        if dwindows[i].is_empty() {
            dwindows[i] = vec![0.0; cache.windows[i].len()];
        }
        math::add_scaled(&mut dwindows[i], params.w_conv.row(j), dj);
    }

    for (i, dwin) in dwindows.iter().enumerate() {
        if dwin.is_empty() {
            continue;
        }
        for (s, tok) in cache.window_tokens[i].iter().enumerate() {
            g.add_emb_row(*tok, &dwin[s * d..(s + 1) * d]);
        }
    }
    Ok(g)
}
