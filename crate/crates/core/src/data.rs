//! Vocabulary and the labeled-sentence dataset loader.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// The ten relation labels (nine relations plus a default other).
/// Entity order is not distinguished, so the bare relation name is the label.
pub const RELATION_LABELS: [&str; 10] = [
    "Cause-Effect",
    "Instrument-Agency",
    "Product-Producer",
    "Content-Container",
    "Entity-Origin",
    "Entity-Destination",
    "Component-Whole",
    "Member-Collection",
    "Message-Topic",
    "Other",
];

pub const RELATION_CLASSES: usize = 10;
pub const SENTIMENT_CLASSES: usize = 5;

/// Token ↔ dense index mapping with reserved PAD and UNK slots.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
        };
        v.intern(PAD_TOKEN);
        v.intern(UNK_TOKEN);
        v
    }

    /// Index of `token`, inserting it if unseen. Used while building from a
    /// training split.
    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    /// Index of `token`, falling back to UNK. Used at evaluation time.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // PAD and UNK are always present
    }

    pub fn tokens(&self) -> impl Iterator<Item = (&str, usize)> {
        self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i))
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// One relation-classification example: lowercased token indices plus a label
/// in [0, 10).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceExample {
    pub tokens: Vec<usize>,
    pub label: usize,
}

pub fn relation_label_index(name: &str) -> Option<usize> {
    RELATION_LABELS.iter().position(|l| *l == name)
}

fn is_entity_marker(token: &str) -> bool {
    matches!(token, "<e1>" | "</e1>" | "<e2>" | "</e2>")
}

fn parse_sentence_line(
    path: &str,
    lineno: usize,
    line: &str,
    vocab: &mut Vocabulary,
    frozen: bool,
) -> Result<SentenceExample> {
    let (label_str, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
        path: path.to_string(),
        line: lineno,
        msg: "missing tab between label and tokens".to_string(),
    })?;
    let label = relation_label_index(label_str.trim()).ok_or_else(|| Error::Parse {
        path: path.to_string(),
        line: lineno,
        msg: format!("unknown label string {label_str:?}"),
    })?;
    let mut tokens = Vec::new();
    for tok in text.split_whitespace() {
        if is_entity_marker(tok) {
            continue;
        }
        let lower = tok.to_lowercase();
        let idx = if frozen {
            vocab.lookup(&lower)
        } else {
            vocab.intern(&lower)
        };
        tokens.push(idx);
    }
    if tokens.is_empty() {
        return Err(Error::Parse {
            path: path.to_string(),
            line: lineno,
            msg: "no tokens after the label".to_string(),
        });
    }
    Ok(SentenceExample { tokens, label })
}

/// Load a training split and build its vocabulary.
///
/// Format: UTF-8, one example per line, `LABEL<TAB>token token ...`.
pub fn load_sentence_dataset(path: impl AsRef<Path>) -> Result<(Vec<SentenceExample>, Vocabulary)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut vocab = Vocabulary::new();
    let examples = parse_sentence_text(&path.display().to_string(), &text, &mut vocab, false)?;
    Ok((examples, vocab))
}

/// Load an evaluation split against an existing vocabulary (unseen tokens map
/// to UNK).
pub fn load_sentence_dataset_with_vocab(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
) -> Result<Vec<SentenceExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut v = vocab.clone();
    parse_sentence_text(&path.display().to_string(), &text, &mut v, true)
}

fn parse_sentence_text(
    path: &str,
    text: &str,
    vocab: &mut Vocabulary,
    frozen: bool,
) -> Result<Vec<SentenceExample>> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        examples.push(parse_sentence_line(path, i + 1, line, vocab, frozen)?);
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

/// Serialize examples back to the sentence file format (used by tests and the
/// synthetic-task generators).
pub fn write_sentence_dataset(
    path: impl AsRef<Path>,
    examples: &[SentenceExample],
    vocab: &Vocabulary,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for ex in examples {
        out.push_str(RELATION_LABELS[ex.label]);
        out.push('\t');
        for (i, &t) in ex.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", vocab.token(t));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use proptest::prelude::*;
    use std::io::Write;

    fn tmp_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_label_and_tokens() {
        let f = tmp_file("Cause-Effect\tthe burst was caused by pressure\n");
        let (ex, vocab) = load_sentence_dataset(f.path()).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].tokens.len(), 6);
        assert_eq!(ex[0].label, 0);
        assert_eq!(vocab.lookup("burst"), ex[0].tokens[1]);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = tmp_file("");
        let err = load_sentence_dataset(f.path()).unwrap_err();
        assert!(err.to_string().contains("no examples"));
    }

    #[test]
    fn missing_tab_reports_line_number() {
        let f = tmp_file("Other\tfine line\nCause-Effect no tab here\n");
        let err = load_sentence_dataset(f.path()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn unknown_label_is_an_error() {
        let f = tmp_file("Not-A-Label\tsome words\n");
        let err = load_sentence_dataset(f.path()).unwrap_err();
        assert!(err.to_string().contains("unknown label"), "{err}");
    }

    #[test]
    fn entity_markers_are_stripped_and_text_lowercased() {
        let f = tmp_file("Other\t<e1> The Burst </e1> was Caused\n");
        let (ex, vocab) = load_sentence_dataset(f.path()).unwrap();
        assert_eq!(ex[0].tokens.len(), 4);
        assert_eq!(vocab.token(ex[0].tokens[0]), "the");
    }

    #[test]
    fn eval_split_maps_unseen_tokens_to_unk() {
        let train = tmp_file("Other\tknown words\n");
        let (_, vocab) = load_sentence_dataset(train.path()).unwrap();
        let eval = tmp_file("Other\tknown mystery\n");
        let ex = load_sentence_dataset_with_vocab(eval.path(), &vocab).unwrap();
        assert_eq!(ex[0].tokens[1], UNK_INDEX);
    }

    #[test]
    fn roundtrip_random_examples() {
        let mut rng = RandomSource::new(17);
        let mut vocab = Vocabulary::new();
        let words: Vec<usize> = (0..50)
            .map(|i| vocab.intern(&format!("w{i}")))
            .collect();
        let examples: Vec<SentenceExample> = (0..100)
            .map(|_| {
                let len = 1 + rng.below(12);
                SentenceExample {
                    tokens: (0..len).map(|_| words[rng.below(words.len())]).collect(),
                    label: rng.below(10),
                }
            })
            .collect();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_sentence_dataset(f.path(), &examples, &vocab).unwrap();
        let reloaded = load_sentence_dataset_with_vocab(f.path(), &vocab).unwrap();
        assert_eq!(reloaded, examples);
    }

    proptest! {
        #[test]
        fn vocabulary_is_a_bijection(tokens in proptest::collection::vec("[a-z]{1,6}", 0..40)) {
            let mut vocab = Vocabulary::new();
            for t in &tokens {
                vocab.intern(t);
            }
            for i in 0..vocab.len() {
                prop_assert_eq!(vocab.lookup(vocab.token(i)), i);
            }
        }
    }
}
