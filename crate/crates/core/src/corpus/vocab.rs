use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::LabeledDocument;
use crate::error::{invalid, Result};

/// Token ↔ index map with six reserved leading entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    min_freq: usize,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_tokens(r.tokens, r.min_freq)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            tokens: v.tokens,
            min_freq: v.min_freq,
        }
    }
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const SEP: usize = 2;
    pub const EOS: usize = 3;
    pub const LBL0: usize = 4;
    pub const LBL1: usize = 5;
    pub const RESERVED: [&'static str; 6] = ["<pad>", "<unk>", "<sep>", "<eos>", "<lbl0>", "<lbl1>"];

    /// Rebuilds a vocabulary from its full token list, reserved entries
    /// first.
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            min_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn label_token(label: u8) -> usize {
        if label == 0 {
            Self::LBL0
        } else {
            Self::LBL1
        }
    }

    /// Index of a content token; reserved spellings and unknown words map
    /// to UNK.
    pub fn id(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) if i >= Self::RESERVED.len() => i,
            _ => Self::UNK,
        }
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn is_reserved(id: usize) -> bool {
        id < Self::RESERVED.len()
    }

    /// Content-token ids of a document's text.
    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        super::tokenize(text).map(|t| self.id(&t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Keeps tokens seen at least `min_freq` times, ordered by descending
/// frequency then lexicographically.
pub fn build_vocab(docs: &[LabeledDocument], min_freq: usize) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    for doc in docs {
        for tok in doc.tokens() {
            *freq.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|(t, c)| *c >= min_freq.max(1) && !Vocabulary::RESERVED.contains(&t.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = Vocabulary::RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(t, _)| t))
        .collect();
    Ok(Vocabulary::from_tokens(tokens, min_freq))
}

/// `[LBL{y}, SEP, tokens…, EOS]`, with tokens truncated so the whole
/// sequence fits in `max_len`.
pub fn encode_labeled(doc: &LabeledDocument, vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>> {
    if max_len < 4 {
        return Err(invalid(format!("max_len {max_len} is below 4")));
    }
    let mut seq = vec![Vocabulary::label_token(doc.label), Vocabulary::SEP];
    seq.extend(doc.tokens().take(max_len - 3).map(|t| vocab.id(&t)));
    seq.push(Vocabulary::EOS);
    Ok(seq)
}
