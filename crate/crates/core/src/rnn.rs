//! Forward and backward passes for the recursive tree model.
//!
//! Leaves take their embedding row; each internal node is
//! tanh(W_comp·[left; right] + b_comp); the root vector feeds the softmax
//! output layer. A single-leaf tree skips composition entirely.

use crate::embedding::EmbeddingTable;
use crate::error::Result;
use crate::math::{self, Vector};
use crate::model::{Gradients, HiddenOp, Model, TreeRnnParams};
use crate::tree::{TreeExample, TreeNode};

#[derive(Debug, Clone)]
pub enum NodeKind {
    Leaf(usize),
    Internal { left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct RnnCache {
    /// Nodes in evaluation (post) order; the root is last.
    pub kinds: Vec<NodeKind>,
    pub vectors: Vec<Vector>,
    /// Root after the HiddenOp (what the output layer saw).
    pub root_used: Vector,
    pub mask: Option<Vector>,
    pub logits: Vector,
    pub probs: Vector,
}

fn eval_node(
    node: &TreeNode,
    params: &TreeRnnParams,
    emb: &EmbeddingTable,
    kinds: &mut Vec<NodeKind>,
    vectors: &mut Vec<Vector>,
) -> Result<usize> {
    match node {
        TreeNode::Leaf(tok) => {
            kinds.push(NodeKind::Leaf(*tok));
            vectors.push(emb.phi.row(*tok).to_vec());
        }
        TreeNode::Internal(l, r) => {
            let li = eval_node(l, params, emb, kinds, vectors)?;
            let ri = eval_node(r, params, emb, kinds, vectors)?;
            let mut joined = Vec::with_capacity(2 * params.dims.embed);
            joined.extend_from_slice(&vectors[li]);
            joined.extend_from_slice(&vectors[ri]);
            let mut pre = math::matvec(&params.w_comp, &joined)?;
            for (a, b) in pre.iter_mut().zip(&params.b_comp) {
                *a += b;
            }
            kinds.push(NodeKind::Internal { left: li, right: ri });
            vectors.push(math::tanh_forward(&pre));
        }
    }
    Ok(kinds.len() - 1)
}

pub fn rnn_forward(
    params: &TreeRnnParams,
    emb: &EmbeddingTable,
    x: &TreeExample,
    hidden_op: HiddenOp,
) -> Result<(Vector, RnnCache)> {
    let mut kinds = Vec::new();
    let mut vectors = Vec::new();
    eval_node(&x.root, params, emb, &mut kinds, &mut vectors)?;
    let root = vectors.last().unwrap();
    let root_used = hidden_op.apply(root);

    let mut logits = math::matvec(&params.w_out, &root_used)?;
    for (a, b) in logits.iter_mut().zip(&params.b_out) {
        *a += b;
    }
    let (_, probs, _) = math::softmax_cross_entropy(&logits, 0)?;

    let mask = match hidden_op {
        HiddenOp::Mask(m) => Some(m.to_vec()),
        _ => None,
    };
    let cache = RnnCache {
        kinds,
        vectors,
        root_used,
        mask,
        logits,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Backpropagation through structure. Each internal node splits its gradient
/// to its two children through W_comp; leaf gradients accumulate into sparse
/// embedding rows (repeated tokens accumulate).
pub fn rnn_backward(
    params: &TreeRnnParams,
    cache: &RnnCache,
    label: usize,
) -> Result<Gradients> {
    let d = params.dims.embed;
    let mut g = Gradients::zeros_like(&Model::Rnn(params.clone()));
    // order matches Model::weights()/biases(): comp, out

    let mut dlogits = cache.probs.clone();
    dlogits[label] -= 1.0;

    math::add_outer(&mut g.weights[1], &dlogits, &cache.root_used);
    math::add_scaled(&mut g.biases[1], &dlogits, 1.0);

    let droot_used = math::matvec_t(&params.w_out, &dlogits)?;
    let droot: Vector = match &cache.mask {
        Some(m) => droot_used.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => droot_used,
    };

    let n = cache.kinds.len();
    let mut dnodes: Vec<Vector> = vec![vec![0.0; d]; n];
    dnodes[n - 1] = droot;

    for i in (0..n).rev() {
        match &cache.kinds[i] {
            NodeKind::Leaf(tok) => {
                g.add_emb_row(*tok, &dnodes[i]);
            }
            NodeKind::Internal { left, right } => {
                let dpre = math::tanh_backward(&cache.vectors[i], &dnodes[i]);
                let mut joined = Vec::with_capacity(2 * d);
                joined.extend_from_slice(&cache.vectors[*left]);
                joined.extend_from_slice(&cache.vectors[*right]);
                math::add_outer(&mut g.weights[0], &dpre, &joined);
                math::add_scaled(&mut g.biases[0], &dpre, 1.0);
                let dchildren = math::matvec_t(&params.w_comp, &dpre)?;
                math::add_scaled(&mut dnodes[*left], &dchildren[..d], 1.0);
                math::add_scaled(&mut dnodes[*right], &dchildren[d..], 1.0);
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_rnn, ModelDims};
    use crate::rng::RandomSource;

    fn leaf(t: usize) -> TreeNode {
        TreeNode::Leaf(t)
    }

    fn node(l: TreeNode, r: TreeNode) -> TreeNode {
        TreeNode::Internal(Box::new(l), Box::new(r))
    }

    #[test]
    fn single_leaf_zero_output_layer_gives_uniform() {
        let dims = ModelDims::rnn(4, 5);
        let mut params = init_rnn(dims, &mut RandomSource::new(0));
        for v in &mut params.w_out.data {
            *v = 0.0;
        }
        let emb = EmbeddingTable::random(6, 4, &mut RandomSource::new(1));
        let x = TreeExample { root: leaf(3), label: 2 };
        let (probs, _) = rnn_forward(&params, &emb, &x, HiddenOp::None).unwrap();
        for p in &probs {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_composition_gives_zero_root() {
        let dims = ModelDims::rnn(4, 5);
        let mut params = init_rnn(dims, &mut RandomSource::new(2));
        for v in &mut params.w_comp.data {
            *v = 0.0;
        }
        let emb = EmbeddingTable::random(6, 4, &mut RandomSource::new(3));
        let x = TreeExample { root: node(leaf(2), leaf(4)), label: 0 };
        let (_, cache) = rnn_forward(&params, &emb, &x, HiddenOp::None).unwrap();
        assert!(cache.vectors.last().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn node_vectors_match_independent_recursion() {
        let dims = ModelDims::rnn(3, 5);
        let params = init_rnn(dims, &mut RandomSource::new(4));
        let emb = EmbeddingTable::random(12, 3, &mut RandomSource::new(5));
        // 7-leaf tree
        let tree = node(
            node(node(leaf(2), leaf(3)), node(leaf(4), leaf(5))),
            node(leaf(6), node(leaf(7), leaf(8))),
        );
        let x = TreeExample { root: tree.clone(), label: 1 };
        let (_, cache) = rnn_forward(&params, &emb, &x, HiddenOp::None).unwrap();

        fn recompute(t: &TreeNode, p: &TreeRnnParams, e: &EmbeddingTable) -> Vector {
            match t {
                TreeNode::Leaf(tok) => e.phi.row(*tok).to_vec(),
                TreeNode::Internal(l, r) => {
                    let lv = recompute(l, p, e);
                    let rv = recompute(r, p, e);
                    let d = p.dims.embed;
                    (0..d)
                        .map(|i| {
                            let mut z = p.b_comp[i];
                            for j in 0..d {
                                z += p.w_comp.get(i, j) * lv[j];
                                z += p.w_comp.get(i, d + j) * rv[j];
                            }
                            z.tanh()
                        })
                        .collect()
                }
            }
        }
        let want = recompute(&tree, &params, &emb);
        let got = cache.vectors.last().unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_token_gradient_accumulates() {
        let dims = ModelDims::rnn(3, 5);
        let params = init_rnn(dims, &mut RandomSource::new(6));
        let emb = EmbeddingTable::random(8, 3, &mut RandomSource::new(7));
        let x = TreeExample { root: node(leaf(4), leaf(4)), label: 3 };
        let (_, cache) = rnn_forward(&params, &emb, &x, HiddenOp::None).unwrap();
        let g = rnn_backward(&params, &cache, x.label).unwrap();

        // per-leaf gradients computed by hand from the cached structure
        let dlogits = {
            let mut d = cache.probs.clone();
            d[x.label] -= 1.0;
            d
        };
        let droot = math::matvec_t(&params.w_out, &dlogits).unwrap();
        let dpre = math::tanh_backward(cache.vectors.last().unwrap(), &droot);
        let dchildren = math::matvec_t(&params.w_comp, &dpre).unwrap();
        let d = dims.embed;
        let want: Vector = (0..d).map(|i| dchildren[i] + dchildren[d + i]).collect();
        let got = g.emb_rows.get(&4).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_everywhere() {
        // predicting the exact one-hot makes dlogits zero
        let dims = ModelDims::rnn(3, 2);
        let params = init_rnn(dims, &mut RandomSource::new(8));
        let emb = EmbeddingTable::random(8, 3, &mut RandomSource::new(9));
        let x = TreeExample { root: node(leaf(2), leaf(3)), label: 0 };
        let (_, mut cache) = rnn_forward(&params, &emb, &x, HiddenOp::None).unwrap();
        cache.probs = vec![1.0, 0.0];
        let g = rnn_backward(&params, &cache, 0).unwrap();
        assert!(g.weights.iter().all(|m| m.data.iter().all(|v| *v == 0.0)));
        assert!(g.emb_rows.values().all(|r| r.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn probs_sum_to_one() {
        let dims = ModelDims::rnn(4, 5);
        let params = init_rnn(dims, &mut RandomSource::new(10));
        let emb = EmbeddingTable::random(9, 4, &mut RandomSource::new(11));
        let x = TreeExample {
            root: node(node(leaf(2), leaf(5)), leaf(8)),
            label: 4,
        };
        let (probs, _) = rnn_forward(&params, &emb, &x, HiddenOp::None).unwrap();
        let s: f64 = probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
