//! PTB-style labeled s-expression parsing and tree binarization for the
//! sentiment task.
//!
//! Input is one s-expression per line, `(3 (2 good) (2 movie))`, with an
//! integer label in [0, 5) on every node. Only the root label is kept for
//! supervision; n-ary nodes are binarized right-branching.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{Vocabulary, SENTIMENT_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Leaf(usize),
    Internal(Box<TreeNode>, Box<TreeNode>),
}

impl TreeNode {
    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Internal(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    pub fn for_each_leaf(&self, f: &mut impl FnMut(usize)) {
        match self {
            TreeNode::Leaf(t) => f(*t),
            TreeNode::Internal(l, r) => {
                l.for_each_leaf(f);
                r.for_each_leaf(f);
            }
        }
    }
}

/// One sentiment example: a strictly binary tree plus the root label in
/// [0, 5).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeExample {
    pub root: TreeNode,
    pub label: usize,
}

// raw parse before binarization
enum Raw {
    Leaf(String),
    Node(Vec<Raw>),
}

struct Parser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    path: &'a str,
    line: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn atom(&mut self) -> String {
        let mut s = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            s.push(c);
            self.chars.next();
        }
        s
    }

    // `(LABEL child...)` where each child is a nested node or a bare token
    fn node(&mut self) -> Result<Raw> {
        self.skip_ws();
        if self.chars.peek() != Some(&'(') {
            return Err(self.err("expected '('"));
        }
        self.chars.next();
        self.skip_ws();
        let label_str = self.atom();
        let label: i64 = label_str
            .parse()
            .map_err(|_| self.err(format!("non-integer label {label_str:?}")))?;
        if !(0..SENTIMENT_CLASSES as i64).contains(&label) {
            return Err(self.err(format!("label {label} outside [0, {SENTIMENT_CLASSES})")));
        }
        let mut children = Vec::new();
        let mut leaf_token: Option<String> = None;
        loop {
            self.skip_ws();
            match self.chars.peek() {
                Some(')') => {
                    self.chars.next();
                    break;
                }
                Some('(') => children.push(self.node()?),
                Some(_) => {
                    let tok = self.atom();
                    if leaf_token.is_some() || !children.is_empty() {
                        return Err(self.err("mixed token and subtree children"));
                    }
                    leaf_token = Some(tok);
                }
                None => return Err(self.err("unbalanced parentheses")),
            }
        }
        match leaf_token {
            Some(tok) => Ok(Raw::Leaf(tok)),
            None if children.is_empty() => Err(self.err("empty node")),
            None => Ok(Raw::Node(children)),
        }
    }
}

fn root_label(path: &str, line: usize, text: &str) -> Result<usize> {
    // the outermost node's label; re-scanned here because Raw drops labels
    let inner = text.trim();
    let inner = inner.strip_prefix('(').ok_or_else(|| Error::Parse {
        path: path.to_string(),
        line,
        msg: "expected '('".to_string(),
    })?;
    let label_str: String = inner
        .trim_start()
        .chars()
        .take_while(|c| !c.is_whitespace() && *c != '(' && *c != ')')
        .collect();
    label_str.parse::<usize>().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        msg: format!("non-integer root label {label_str:?}"),
    })
}

/// Right-branching composition: children c1..cn become (c1, (c2, (... cn))).
fn binarize(raw: Raw, vocab: &mut Vocabulary, frozen: bool) -> TreeNode {
    match raw {
        Raw::Leaf(tok) => {
            let lower = tok.to_lowercase();
            let idx = if frozen {
                vocab.lookup(&lower)
            } else {
                vocab.intern(&lower)
            };
            TreeNode::Leaf(idx)
        }
        Raw::Node(children) => {
            let mut nodes: Vec<TreeNode> = children
                .into_iter()
                .map(|c| binarize(c, vocab, frozen))
                .collect();
            let mut acc = nodes.pop().expect("parser rejects empty nodes");
            while let Some(left) = nodes.pop() {
                acc = TreeNode::Internal(Box::new(left), Box::new(acc));
            }
            acc
        }
    }
}

fn parse_line(
    path: &str,
    lineno: usize,
    line: &str,
    vocab: &mut Vocabulary,
    frozen: bool,
) -> Result<TreeExample> {
    let mut parser = Parser {
        chars: line.chars().peekable(),
        path,
        line: lineno,
    };
    let raw = parser.node()?;
    parser.skip_ws();
    if parser.chars.next().is_some() {
        return Err(parser.err("trailing text after the root node"));
    }
    let label = root_label(path, lineno, line)?;
    Ok(TreeExample {
        root: binarize(raw, vocab, frozen),
        label,
    })
}

/// Load a tree training split, building the vocabulary from its leaves.
pub fn load_tree_dataset(path: impl AsRef<Path>) -> Result<(Vec<TreeExample>, Vocabulary)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut vocab = Vocabulary::new();
    let examples = parse_tree_text(&path.display().to_string(), &text, &mut vocab, false)?;
    Ok((examples, vocab))
}

/// Load an evaluation split against an existing vocabulary.
pub fn load_tree_dataset_with_vocab(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
) -> Result<Vec<TreeExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut v = vocab.clone();
    parse_tree_text(&path.display().to_string(), &text, &mut v, true)
}

/// Serialize examples back to the s-expression format. Supervision only uses
/// root labels, so interior and leaf nodes are written with a neutral 2.
pub fn write_tree_dataset(
    path: impl AsRef<Path>,
    examples: &[TreeExample],
    vocab: &Vocabulary,
) -> Result<()> {
    fn node(out: &mut String, t: &TreeNode, vocab: &Vocabulary, label: usize) {
        match t {
            TreeNode::Leaf(i) => {
                let _ = write!(out, "({label} {})", vocab.token(*i));
            }
            TreeNode::Internal(l, r) => {
                let _ = write!(out, "({label} ");
                node(out, l, vocab, 2);
                out.push(' ');
                node(out, r, vocab, 2);
                out.push(')');
            }
        }
    }
    let path = path.as_ref();
    let mut out = String::new();
    for ex in examples {
        node(&mut out, &ex.root, vocab, ex.label);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_tree_text(
    path: &str,
    text: &str,
    vocab: &mut Vocabulary,
    frozen: bool,
) -> Result<Vec<TreeExample>> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        examples.push(parse_line(path, i + 1, line, vocab, frozen)?);
    }
    if examples.is_empty() {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 0,
            msg: "no examples".to_string(),
        });
    }
    Ok(examples)
}
