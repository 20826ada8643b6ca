use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeneratorModel;
use crate::corpus::{LabeledDocument, Origin, Vocabulary};
use crate::error::{invalid, Result};
use crate::rng;

/// Temperatures at or below this decode greedily.
pub const GREEDY_TEMPERATURE: f64 = 1e-4;

/// Prompt `[LBL{label}, SEP, context…]` and decoding controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub label: u8,
    pub context: Vec<String>,
    pub temperature: f64,
    pub top_k: usize,
    /// Cap on the whole sequence length, prompt included.
    pub max_len: usize,
    pub seed: u64,
}

impl PromptSpec {
    pub fn new(label: u8, context: Vec<String>, seed: u64) -> Self {
        Self {
            label,
            context,
            temperature: 1.0,
            top_k: 40,
            max_len: 128,
            seed,
        }
    }

    pub fn validate(&self, model: &GeneratorModel) -> Result<()> {
        if self.label > 1 {
            return Err(invalid("prompt label must be 0 or 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(invalid("temperature must be positive"));
        }
        if self.top_k == 0 {
            return Err(invalid("top_k must be at least 1"));
        }
        if self.max_len > model.config.context {
            return Err(invalid(format!(
                "max_len {} exceeds model context {}",
                self.max_len, model.config.context
            )));
        }
        if self.context.len() + 2 >= self.max_len {
            return Err(invalid("prompt leaves no room for generation"));
        }
        Ok(())
    }
}

/// A generated body: context tokens followed by sampled tokens, without
/// the label/separator prefix or the end token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub label: u8,
    pub ids: Vec<usize>,
    pub text: String,
    pub finished: bool,
}

impl Sample {
    /// `None` when nothing was generated.
    pub fn into_document(self, id: impl Into<String>) -> Option<LabeledDocument> {
        if self.text.trim().is_empty() {
            return None;
        }
        Some(LabeledDocument {
            id: id.into(),
            label: self.label,
            text: self.text,
            origin: Origin::Synthetic,
        })
    }
}

/// Token ids that may never be sampled into a body.
fn banned(id: usize) -> bool {
    matches!(
        id,
        Vocabulary::PAD | Vocabulary::UNK | Vocabulary::SEP | Vocabulary::LBL0 | Vocabulary::LBL1
    )
}

/// Samples from top-k, temperature-scaled next-token distributions until
/// EOS or `max_len`.
pub fn sample(model: &GeneratorModel, prompt: &PromptSpec) -> Result<Sample> {
    prompt.validate(model)?;
    let vocab = &model.vocab;
    let mut r = rng::seeded(rng::derive(prompt.seed, "sample"));
    let mut dec = model.decoder();
    let mut prefix = vec![Vocabulary::label_token(prompt.label), Vocabulary::SEP];
    let context_ids: Vec<usize> = prompt.context.iter().map(|t| vocab.id(&t.to_lowercase())).collect();
    prefix.extend(&context_ids);
    let mut logits = Vec::new();
    for &t in &prefix {
        logits = dec.step(t)?;
    }
    let mut body = context_ids;
    let mut finished = false;
    while dec.len() < prompt.max_len {
        let next = pick(&logits, prompt.temperature, prompt.top_k, &mut r);
        if next == Vocabulary::EOS {
            finished = true;
            break;
        }
        body.push(next);
        if dec.len() + 1 >= prompt.max_len {
            break;
        }
        logits = dec.step(next)?;
    }
    let text = vocab.decode(&body);
    Ok(Sample {
        label: prompt.label,
        ids: body,
        text,
        finished,
    })
}

fn pick<R: Rng>(logits: &[f64], temperature: f64, top_k: usize, r: &mut R) -> usize {
    let mut cand: Vec<(usize, f64)> = logits
        .iter()
        .copied()
        .enumerate()
        .filter(|&(i, _)| !banned(i))
        .collect();
    cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if temperature <= GREEDY_TEMPERATURE {
        return cand[0].0;
    }
    cand.truncate(top_k);
    let max = cand[0].1;
    let weights: Vec<f64> = cand.iter().map(|&(_, l)| ((l - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = r.random::<f64>() * total;
    for (&(id, _), w) in cand.iter().zip(&weights) {
        if u < *w {
            return id;
        }
        u -= w;
    }
    cand[cand.len() - 1].0
}
