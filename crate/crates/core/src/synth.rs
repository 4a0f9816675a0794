//! Synthetic task generators for tests, demos, and the verification suite.
//!
//! These build desk-scale classification problems with known structure:
//! a linearly separable sentence task (each class has its own token pool),
//! a noisy-label variant for studying overfitting, and small labeled trees.

use crate::data::{SentenceExample, Vocabulary, RELATION_CLASSES};
use crate::rng::RandomSource;
use crate::tree::{TreeExample, TreeNode};

/// Vocabulary of `classes · tokens_per_class` content words named by class.
fn class_vocab(classes: usize, tokens_per_class: usize) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for c in 0..classes {
        for t in 0..tokens_per_class {
            vocab.intern(&format!("c{c}t{t}"));
        }
    }
    vocab
}

fn class_token(vocab: &Vocabulary, c: usize, t: usize) -> usize {
    vocab.lookup(&format!("c{c}t{t}"))
}

/// Separable sentences: every token of an example is drawn from its label's
/// own pool, so token identity fully determines the class.
pub fn separable_sentences(
    n: usize,
    classes: usize,
    tokens_per_class: usize,
    sentence_len: usize,
    seed: u64,
) -> (Vec<SentenceExample>, Vocabulary) {
    assert!(classes <= RELATION_CLASSES);
    let vocab = class_vocab(classes, tokens_per_class);
    let mut rng = RandomSource::new(seed);
    let examples = (0..n)
        .map(|i| {
            let label = i % classes;
            let tokens = (0..sentence_len)
                .map(|_| class_token(&vocab, label, rng.below(tokens_per_class)))
                .collect();
            SentenceExample { tokens, label }
        })
        .collect();
    (examples, vocab)
}

/// Noisy-label task: sentences mix mostly-indicative tokens with shared
/// distractors; a fraction of *training* labels is flipped while the
/// validation split stays clean. Built for overfitting studies.
pub fn noisy_sentences(
    n_train: usize,
    n_val: usize,
    classes: usize,
    tokens_per_class: usize,
    sentence_len: usize,
    noise: f64,
    seed: u64,
) -> (Vec<SentenceExample>, Vec<SentenceExample>, Vocabulary) {
    assert!(classes <= RELATION_CLASSES);
    let mut vocab = class_vocab(classes, tokens_per_class);
    let distractors: Vec<usize> = (0..tokens_per_class)
        .map(|t| vocab.intern(&format!("noise{t}")))
        .collect();
    let mut rng = RandomSource::new(seed);

    let gen = |n: usize, flip: bool, rng: &mut RandomSource| {
        (0..n)
            .map(|i| {
                let true_label = i % classes;
                let tokens = (0..sentence_len)
                    .map(|_| {
                        if rng.bernoulli(0.5) {
                            distractors[rng.below(distractors.len())]
                        } else {
                            class_token(&vocab, true_label, rng.below(tokens_per_class))
                        }
                    })
                    .collect();
                let label = if flip && rng.bernoulli(noise) {
                    rng.below(classes)
                } else {
                    true_label
                };
                SentenceExample { tokens, label }
            })
            .collect::<Vec<_>>()
    };

    let train = gen(n_train, true, &mut rng);
    let val = gen(n_val, false, &mut rng);
    (train, val, vocab)
}

/// Small labeled trees: 2–4 leaves drawn from the label's pool, strictly
/// binary (right-branching), root label = class.
pub fn separable_trees(n: usize, seed: u64) -> (Vec<TreeExample>, Vocabulary) {
    let classes = 5;
    let tokens_per_class = 4;
    let vocab = class_vocab(classes, tokens_per_class);
    let mut rng = RandomSource::new(seed);
    let examples = (0..n)
        .map(|i| {
            let label = i % classes;
            let leaves = 2 + rng.below(3);
            let mut nodes: Vec<TreeNode> = (0..leaves)
                .map(|_| TreeNode::Leaf(class_token(&vocab, label, rng.below(tokens_per_class))))
                .collect();
            let mut root = nodes.pop().unwrap();
            while let Some(left) = nodes.pop() {
                root = TreeNode::Internal(Box::new(left), Box::new(root));
            }
            TreeExample { root, label }
        })
        .collect();
    (examples, vocab)
}
