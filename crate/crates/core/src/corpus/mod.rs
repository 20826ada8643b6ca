//! Labeled documents, vocabulary, splits and the synthetic benchmark.

mod bench;
mod jsonl;
mod split;
mod vocab;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use bench::{phrase_score, synth_benchmark, BenchLexicon, SynthBenchSpec};
pub use jsonl::{load_jsonl, save_jsonl};
pub use split::{make_split, undersample_balanced, SplitRatios};
pub use vocab::{build_vocab, encode_labeled, Vocabulary};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Original,
    Synthetic,
}

/// A text with a binary label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub id: String,
    pub label: u8,
    pub text: String,
    pub origin: Origin,
}

impl LabeledDocument {
    pub fn new(
        id: impl Into<String>,
        label: u8,
        text: impl Into<String>,
        origin: Origin,
    ) -> Result<Self> {
        let doc = Self {
            id: id.into(),
            label,
            text: text.into(),
            origin,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(invalid(format!("document {}: label {} is not 0/1", self.id, self.label)));
        }
        if self.tokens().next().is_none() {
            return Err(invalid(format!("document {}: empty text", self.id)));
        }
        Ok(())
    }

    /// Lowercased whitespace tokens.
    pub fn tokens(&self) -> impl Iterator<Item = String> + '_ {
        tokenize(&self.text)
    }

    pub fn is_synthetic(&self) -> bool {
        self.origin == Origin::Synthetic
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

/// Train/valid/test partitions plus the generated documents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<LabeledDocument>,
    pub valid: Vec<LabeledDocument>,
    pub test: Vec<LabeledDocument>,
    #[serde(default)]
    pub synthetic: Vec<LabeledDocument>,
}

impl CorpusSplit {
    /// Train followed by synthetic documents.
    pub fn combined(&self) -> Vec<LabeledDocument> {
        self.train.iter().chain(&self.synthetic).cloned().collect()
    }

    /// Checks that no id appears twice across all partitions and that
    /// evaluation partitions hold only original documents.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for doc in self.train.iter().chain(&self.valid).chain(&self.test).chain(&self.synthetic) {
            if !seen.insert(doc.id.as_str()) {
                return Err(invalid(format!("duplicate document id {}", doc.id)));
            }
        }
        for doc in self.valid.iter().chain(&self.test) {
            if doc.is_synthetic() {
                return Err(invalid(format!("synthetic document {} in an evaluation split", doc.id)));
            }
        }
        Ok(())
    }
}

pub(crate) fn class_counts(docs: &[LabeledDocument]) -> [usize; 2] {
    let mut c = [0, 0];
    for d in docs {
        c[usize::from(d.label)] += 1;
    }
    c
}

pub(crate) fn require_both_classes(docs: &[LabeledDocument], what: &str) -> Result<()> {
    let [neg, pos] = class_counts(docs);
    if neg == 0 || pos == 0 {
        return Err(invalid(format!(
            "{what} needs both classes (negatives {neg}, positives {pos})"
        )));
    }
    Ok(())
}
