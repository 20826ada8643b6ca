//! Mean-pooled bag-of-embeddings classifier with a two-layer head.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::corpus::{require_both_classes, LabeledDocument, Vocabulary};
use crate::error::{invalid, Error, Result};
use crate::metrics::ScoredPredictions;
use crate::rng;
use crate::tensor::{adam_step, kernels, AdamConfig, Graph, KlDirection, OptimizerState, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClfConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Tokens beyond this are ignored.
    pub max_tokens: usize,
}

impl Default for ClfConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 32,
            max_tokens: 256,
        }
    }
}

impl ClfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.max_tokens == 0 {
            return Err(invalid("classifier dimensions must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClfTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClfTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            lr: 5e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// `total = student + tau * kl`; plain training has `kl = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub student: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClfHistory {
    pub batches: Vec<LossBreakdown>,
    pub epochs: Vec<LossBreakdown>,
}

/// Embedding table, mean pool, `tanh` hidden layer, two logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub(crate) vocab: Vocabulary,
    pub(crate) config: ClfConfig,
    pub(crate) params: Vec<Tensor>,
}

const PARAM_NAMES: [&str; 5] = ["emb", "w1", "b1", "w2", "b2"];

impl ClassifierModel {
    pub fn new(vocab: Vocabulary, config: ClfConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::seeded(rng::derive(seed, "clf-init"));
        let (v, e, h) = (vocab.len(), config.embed_dim, config.hidden_dim);
        let params = vec![
            Tensor::randn(&[v, e], 0.1, &mut r),
            Tensor::randn(&[e, h], 1.0 / (e as f64).sqrt(), &mut r),
            Tensor::zeros(&[h]),
            Tensor::randn(&[h, 2], 1.0 / (h as f64).sqrt(), &mut r),
            Tensor::zeros(&[2]),
        ];
        Ok(Self { vocab, config, params })
    }

    /// All parameters zero: predicts `[0.5, 0.5]` for every input.
    pub fn zeros(vocab: Vocabulary, config: ClfConfig) -> Result<Self> {
        let mut m = Self::new(vocab, config, 0)?;
        m.params.iter_mut().for_each(|p| p.data_mut().fill(0.0));
        Ok(m)
    }

    fn from_parts(vocab: Vocabulary, config: ClfConfig, params: Vec<Tensor>) -> Result<Self> {
        let template = Self::zeros(vocab.clone(), config)?;
        if template.params.len() != params.len()
            || template.params.iter().zip(&params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Checkpoint("parameter shapes do not match the hyperparameters".into()));
        }
        Ok(Self { vocab, config, params })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &ClfConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids = self.vocab.encode_text(text);
        ids.truncate(self.config.max_tokens);
        if ids.is_empty() {
            ids.push(Vocabulary::UNK);
        }
        ids
    }

    /// Logits `[batch × 2]` for encoded documents.
    pub fn forward(&self, g: &mut Graph, params: &[Var], docs: &[&[usize]]) -> Result<Var> {
        let mut ids = Vec::new();
        let mut segments = Vec::with_capacity(docs.len());
        for d in docs {
            segments.push((ids.len(), d.len()));
            ids.extend_from_slice(d);
        }
        let x = g.embedding(params[0], &ids)?;
        let pooled = g.segment_mean(x, &segments)?;
        let h = g.matmul(pooled, params[1])?;
        let h = g.add_bias(h, params[2])?;
        let h = g.tanh(h);
        let logits = g.matmul(h, params[3])?;
        g.add_bias(logits, params[4])
    }

    /// Weighted mean cross-entropy of a batch.
    pub fn loss(
        &self,
        g: &mut Graph,
        params: &[Var],
        docs: &[&[usize]],
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Var> {
        let logits = self.forward(g, params, docs)?;
        g.cross_entropy(logits, labels, weights)
    }

    /// `[p0, p1]` for encoded tokens. Invariant to token order.
    pub fn predict_ids(&self, ids: &[usize]) -> [f64; 2] {
        let (emb, e, h) = (&self.params[0], self.config.embed_dim, self.config.hidden_dim);
        let mut pooled = vec![0.0; e];
        for &id in ids {
            for (p, v) in pooled.iter_mut().zip(emb.row(id)) {
                *p += v;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        pooled.iter_mut().for_each(|p| *p *= inv);
        let mut hidden = vec![0.0; h];
        kernels::matmul(&pooled, self.params[1].data(), &mut hidden, 1, e, h);
        for (x, b) in hidden.iter_mut().zip(self.params[2].data()) {
            *x = (*x + b).tanh();
        }
        let mut logits = [0.0; 2];
        kernels::matmul(&hidden, self.params[3].data(), &mut logits, 1, h, 2);
        for (x, b) in logits.iter_mut().zip(self.params[4].data()) {
            *x += b;
        }
        kernels::softmax_in_place(&mut logits);
        logits
    }

    pub fn predict_proba(&self, doc: &LabeledDocument) -> [f64; 2] {
        self.predict_ids(&self.encode(&doc.text))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        Checkpoint {
            kind: ModelKind::Classifier,
            vocab: self.vocab.clone(),
            hyper: vec![
                ("embed_dim".into(), c.embed_dim as u64),
                ("hidden_dim".into(), c.hidden_dim as u64),
                ("max_tokens".into(), c.max_tokens as u64),
            ],
            tensors: PARAM_NAMES.iter().map(|n| n.to_string()).zip(self.params.iter().cloned()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let ckpt = ckpt.expect_kind(ModelKind::Classifier)?;
        let config = ClfConfig {
            embed_dim: ckpt.hyper("embed_dim")? as usize,
            hidden_dim: ckpt.hyper("hidden_dim")? as usize,
            max_tokens: ckpt.hyper("max_tokens")? as usize,
        };
        let params = ckpt.tensors.into_iter().map(|(_, t)| t).collect();
        Self::from_parts(ckpt.vocab, config, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }

    pub fn params_hash(&self) -> String {
        crate::checkpoint::params_hash(&self.params)
    }
}

/// Builds fresh classifiers sharing one vocabulary and shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierFactory {
    pub vocab: Vocabulary,
    pub config: ClfConfig,
}

impl ClassifierFactory {
    pub fn new(vocab: Vocabulary, config: ClfConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { vocab, config })
    }

    pub fn build(&self, seed: u64) -> ClassifierModel {
        ClassifierModel::new(self.vocab.clone(), self.config, seed).expect("validated config")
    }

    /// A fresh model initialised from `cfg.seed` and trained on `docs`.
    pub fn train(&self, docs: &[LabeledDocument], cfg: &ClfTrainConfig) -> Result<(ClassifierModel, ClfHistory)> {
        let mut m = self.build(cfg.seed);
        let h = clf_train(&mut m, docs, cfg, None)?;
        Ok((m, h))
    }
}

/// p1 for every document, in input order.
pub fn score_corpus(model: &ClassifierModel, docs: &[LabeledDocument]) -> Result<ScoredPredictions> {
    ScoredPredictions::new(
        docs.iter().map(|d| model.predict_proba(d)[1]).collect(),
        docs.iter().map(|d| d.label).collect(),
    )
}

/// Minimises weighted mean cross-entropy with Adam over seeded
/// minibatches.
pub fn clf_train(
    model: &mut ClassifierModel,
    docs: &[LabeledDocument],
    cfg: &ClfTrainConfig,
    sample_weights: Option<&[f64]>,
) -> Result<ClfHistory> {
    fit(model, docs, cfg, sample_weights, None)
}

/// Fixed reference distributions pulled towards during training.
pub(crate) struct Consistency<'a> {
    /// `[n × 2]` rows aligned with the training documents.
    pub target: &'a Tensor,
    pub in_scope: &'a [bool],
    pub tau: f64,
    pub direction: KlDirection,
}

pub(crate) fn fit(
    model: &mut ClassifierModel,
    docs: &[LabeledDocument],
    cfg: &ClfTrainConfig,
    sample_weights: Option<&[f64]>,
    consistency: Option<Consistency<'_>>,
) -> Result<ClfHistory> {
    require_both_classes(docs, "classifier training")?;
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(invalid("batch_size and lr must be positive"));
    }
    if let Some(w) = sample_weights {
        if w.len() != docs.len() {
            return Err(invalid(format!("{} weights for {} documents", w.len(), docs.len())));
        }
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("sample weights must be finite and nonnegative"));
        }
    }
    if let Some(c) = &consistency {
        if c.target.shape() != [docs.len(), 2] || c.in_scope.len() != docs.len() {
            return Err(invalid("consistency targets must align with the documents"));
        }
    }
    let encoded: Vec<Vec<usize>> = docs.iter().map(|d| model.encode(&d.text)).collect();
    let mut state = OptimizerState::new(&model.params, AdamConfig::with_lr(cfg.lr));
    let mut r = rng::seeded(rng::derive(cfg.seed, "clf-train"));
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut history = ClfHistory::default();
    let tau = consistency.as_ref().map_or(0.0, |c| c.tau);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        let (mut student_sum, mut kl_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[usize]> = chunk.iter().map(|&i| encoded[i].as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| usize::from(docs[i].label)).collect();
            let weights: Option<Vec<f64>> = sample_weights.map(|w| chunk.iter().map(|&i| w[i]).collect());
            let mut g = Graph::new();
            let vars: Vec<Var> = model.params.iter().map(|p| g.param(p.clone())).collect();
            let logits = model.forward(&mut g, &vars, &batch)?;
            let ce = g.cross_entropy(logits, &labels, weights.as_deref())?;
            let (loss, kl) = match &consistency {
                Some(c) => {
                    let mut target = Vec::with_capacity(chunk.len() * 2);
                    let mut rows = Vec::new();
                    for (k, &i) in chunk.iter().enumerate() {
                        target.extend_from_slice(c.target.row(i));
                        if c.in_scope[i] {
                            rows.push(k);
                        }
                    }
                    let target = Tensor::new(&[chunk.len(), 2], target)?;
                    let kl = g.kl_to_target(logits, &target, &rows, c.direction)?;
                    let weighted = g.scale(kl, c.tau);
                    (g.add(ce, weighted)?, g.value(kl).item())
                }
                None => (ce, 0.0),
            };
            g.backward(loss)?;
            let grads: Vec<Tensor> = vars.iter().map(|&v| g.grad(v)).collect();
            adam_step(&mut model.params, &grads, &mut state)?;
            let student = g.value(ce).item();
            history.batches.push(LossBreakdown {
                student,
                kl,
                total: g.value(loss).item(),
            });
            student_sum += student;
            kl_sum += kl;
            batches += 1;
        }
        let (student, kl) = (student_sum / batches as f64, kl_sum / batches as f64);
        history.epochs.push(LossBreakdown {
            student,
            kl,
            total: student + tau * kl,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Origin};

    fn docs() -> Vec<LabeledDocument> {
        (0..20)
            .map(|i| {
                let label = (i % 2) as u8;
                let text = if label == 1 { "alpha beta signal" } else { "alpha beta gamma" };
                LabeledDocument::new(format!("d{i}"), label, text, Origin::Original).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let d = docs();
        let m = ClassifierModel::zeros(build_vocab(&d, 1).unwrap(), ClfConfig::default()).unwrap();
        assert_eq!(m.predict_proba(&d[0]), [0.5, 0.5]);
    }

    #[test]
    fn batch_total_is_student_plus_weighted_kl() {
        let d = docs();
        let mut m = ClassifierModel::new(build_vocab(&d, 1).unwrap(), ClfConfig::default(), 1).unwrap();
        let target = Tensor::new(&[20, 2], [0.3, 0.7].repeat(20)).unwrap();
        let scope = vec![true; 20];
        let cfg = ClfTrainConfig { epochs: 2, batch_size: 7, ..Default::default() };
        let consistency = Consistency { target: &target, in_scope: &scope, tau: 0.37, direction: KlDirection::default() };
        let h = fit(&mut m, &d, &cfg, None, Some(consistency)).unwrap();
        for b in h.batches.iter().chain(&h.epochs) {
            assert!(b.kl >= 0.0);
            assert_eq!(b.total, b.student + 0.37 * b.kl);
        }
    }

    #[test]
    fn rejects_single_class_and_bad_weights() {
        let d = docs();
        let mut m = ClassifierModel::new(build_vocab(&d, 1).unwrap(), ClfConfig::default(), 1).unwrap();
        let pos: Vec<_> = d.iter().filter(|x| x.label == 1).cloned().collect();
        assert!(clf_train(&mut m, &pos, &ClfTrainConfig::default(), None).is_err());
        assert!(clf_train(&mut m, &d, &ClfTrainConfig::default(), Some(&[1.0; 3])).is_err());
        assert!(clf_train(&mut m, &d, &ClfTrainConfig::default(), Some(&[-1.0; 20])).is_err());
    }
}
