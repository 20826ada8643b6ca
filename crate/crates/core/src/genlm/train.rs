use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::GeneratorModel;
use crate::corpus::{class_counts, encode_labeled, undersample_balanced, LabeledDocument};
use crate::error::{invalid, Result};
use crate::rng;
use crate::tensor::{adam_step, AdamConfig, Graph, OptimizerState, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            lr: 3e-3,
            batch_size: 16,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub steps: Vec<f64>,
    pub epochs: Vec<f64>,
}

/// Minimises mean next-token cross-entropy over already-encoded
/// sequences. Deterministic for a given seed.
pub fn lm_train(model: &mut GeneratorModel, sequences: &[Vec<usize>], cfg: &LmTrainConfig) -> Result<LossHistory> {
    if sequences.is_empty() {
        return Err(invalid("no training sequences"));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(invalid("batch_size and lr must be positive"));
    }
    for s in sequences {
        if s.len() > model.config.context {
            return Err(invalid(format!(
                "sequence of length {} exceeds context {}",
                s.len(),
                model.config.context
            )));
        }
        if s.len() < 2 {
            return Err(invalid("sequences need at least two tokens"));
        }
    }
    let mut state = OptimizerState::new(&model.params, AdamConfig::with_lr(cfg.lr));
    let mut r = rng::seeded(rng::derive(cfg.seed, "lm-train"));
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut history = LossHistory::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut epoch_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[usize]> = chunk.iter().map(|&i| sequences[i].as_slice()).collect();
            let loss = train_step(model, &mut state, &batch, cfg.grad_clip)?;
            history.steps.push(loss);
            epoch_sum += loss;
            batches += 1;
        }
        history.epochs.push(epoch_sum / batches as f64);
    }
    Ok(history)
}

pub(crate) fn train_step(
    model: &mut GeneratorModel,
    state: &mut OptimizerState,
    batch: &[&[usize]],
    clip: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = model.params.iter().map(|p| g.param(p.clone())).collect();
    let loss = model.sequence_loss(&mut g, &vars, batch)?;
    g.backward(loss)?;
    let mut grads: Vec<Tensor> = vars.iter().map(|&v| g.grad(v)).collect();
    clip_global_norm(&mut grads, clip);
    adam_step(&mut model.params, &grads, state)?;
    Ok(g.value(loss).item())
}

pub(crate) fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads
        .iter()
        .flat_map(|t| t.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let f = max_norm / norm;
        for t in grads.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= f);
        }
    }
}

/// What a fine-tuning run actually trained on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub balanced: bool,
    pub docs_used: usize,
    pub negatives: usize,
    pub positives: usize,
    pub history: LossHistory,
}

/// Encodes `train_docs` as `[LBL, SEP, text…, EOS]` (after random
/// under-sampling when `balanced`) and trains on them.
pub fn lm_finetune(
    model: &mut GeneratorModel,
    train_docs: &[LabeledDocument],
    balanced: bool,
    cfg: &LmTrainConfig,
) -> Result<FinetuneReport> {
    if train_docs.iter().any(LabeledDocument::is_synthetic) {
        return Err(invalid("fine-tuning data must be original documents"));
    }
    let docs = if balanced {
        undersample_balanced(train_docs, cfg.seed)?
    } else {
        train_docs.to_vec()
    };
    let seqs = docs
        .iter()
        .map(|d| encode_labeled(d, &model.vocab, model.config.context))
        .collect::<Result<Vec<_>>>()?;
    let history = lm_train(model, &seqs, cfg)?;
    let [negatives, positives] = class_counts(&docs);
    Ok(FinetuneReport {
        balanced,
        docs_used: docs.len(),
        negatives,
        positives,
        history,
    })
}

/// `exp` of the mean next-token cross-entropy over all predicted tokens.
pub fn perplexity(model: &GeneratorModel, docs: &[LabeledDocument]) -> Result<f64> {
    let seqs = docs
        .iter()
        .map(|d| encode_labeled(d, &model.vocab, model.config.context))
        .collect::<Result<Vec<_>>>()?;
    perplexity_of_sequences(model, &seqs)
}

pub fn perplexity_of_sequences(model: &GeneratorModel, seqs: &[Vec<usize>]) -> Result<f64> {
    let mut total_nll = 0.0;
    let mut tokens = 0usize;
    for chunk in seqs.chunks(32) {
        let refs: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
        let mut g = Graph::new();
        let vars: Vec<Var> = model.params.iter().map(|p| g.constant(p.clone())).collect();
        let loss = model.sequence_loss(&mut g, &vars, &refs)?;
        let n: usize = chunk.iter().map(|s| s.len() - 1).sum();
        total_nll += g.value(loss).item() * n as f64;
        tokens += n;
    }
    if tokens == 0 {
        return Err(invalid("no tokens to score"));
    }
    Ok((total_nll / tokens as f64).exp())
}
