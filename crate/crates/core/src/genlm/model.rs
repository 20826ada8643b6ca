use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::tensor::{kernels, Graph, Tensor, Var};

pub(crate) const LN_EPS: f64 = 1e-5;
const PER_BLOCK: usize = 12;

/// Shape hyperparameters of the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    /// Maximum sequence length, label and separator included.
    pub context: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 2,
            layers: 2,
            context: 128,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(invalid(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.layers == 0 || self.context < 4 {
            return Err(invalid("need at least one layer and context >= 4"));
        }
        Ok(())
    }

    fn ffn(&self) -> usize {
        4 * self.d_model
    }
}

/// Decoder-only transformer: token and learned position embeddings,
/// pre-norm blocks of causal multi-head attention and a GELU MLP, a final
/// layer norm, and an output projection tied to the token embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    pub(crate) vocab: Vocabulary,
    pub(crate) config: GenConfig,
    pub(crate) params: Vec<Tensor>,
}

struct Block {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_fc: usize,
    b_fc: usize,
    w_proj: usize,
    b_proj: usize,
}

impl Block {
    fn at(layer: usize) -> Self {
        let b = 2 + layer * PER_BLOCK;
        Self {
            ln1_g: b,
            ln1_b: b + 1,
            w_qkv: b + 2,
            b_qkv: b + 3,
            w_o: b + 4,
            b_o: b + 5,
            ln2_g: b + 6,
            ln2_b: b + 7,
            w_fc: b + 8,
            b_fc: b + 9,
            w_proj: b + 10,
            b_proj: b + 11,
        }
    }
}

const TOK_EMB: usize = 0;
const POS_EMB: usize = 1;

impl GeneratorModel {
    /// Fresh model with small Gaussian weights, unit layer-norm gains and
    /// zero biases.
    pub fn new(vocab: Vocabulary, config: GenConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::seeded(rng::derive(seed, "genlm-init"));
        let (v, d, f) = (vocab.len(), config.d_model, config.ffn());
        let std = 0.02;
        let resid_std = std / (2.0 * config.layers as f64).sqrt();
        let mut params = vec![
            Tensor::randn(&[v, d], std, &mut r),
            Tensor::randn(&[config.context, d], std, &mut r),
        ];
        for _ in 0..config.layers {
            params.extend([
                Tensor::full(&[d], 1.0),
                Tensor::zeros(&[d]),
                Tensor::randn(&[d, 3 * d], std, &mut r),
                Tensor::zeros(&[3 * d]),
                Tensor::randn(&[d, d], resid_std, &mut r),
                Tensor::zeros(&[d]),
                Tensor::full(&[d], 1.0),
                Tensor::zeros(&[d]),
                Tensor::randn(&[d, f], std, &mut r),
                Tensor::zeros(&[f]),
                Tensor::randn(&[f, d], resid_std, &mut r),
                Tensor::zeros(&[d]),
            ]);
        }
        params.extend([Tensor::full(&[d], 1.0), Tensor::zeros(&[d])]);
        Ok(Self { vocab, config, params })
    }

    pub(crate) fn from_parts(vocab: Vocabulary, config: GenConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let template = Self::new(vocab.clone(), config, 0)?;
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

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["tok_emb".to_string(), "pos_emb".to_string()];
        for l in 0..self.config.layers {
            for n in [
                "ln1.g", "ln1.b", "attn.w_qkv", "attn.b_qkv", "attn.w_o", "attn.b_o", "ln2.g", "ln2.b",
                "mlp.w_fc", "mlp.b_fc", "mlp.w_proj", "mlp.b_proj",
            ] {
                names.push(format!("block{l}.{n}"));
            }
        }
        names.extend(["ln_f.g".to_string(), "ln_f.b".to_string()]);
        names
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Next-token logits for packed sequences, one row per input token
    /// (`sum(len) × V`). `params` are this model's parameters registered
    /// on `g`, in [`GeneratorModel::params`] order.
    pub fn forward(&self, g: &mut Graph, params: &[Var], seqs: &[&[usize]]) -> Result<Var> {
        let cfg = &self.config;
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut segments = Vec::with_capacity(seqs.len());
        for s in seqs {
            if s.is_empty() {
                return Err(invalid("empty sequence"));
            }
            if s.len() > cfg.context {
                return Err(invalid(format!(
                    "sequence of length {} exceeds context {}",
                    s.len(),
                    cfg.context
                )));
            }
            segments.push((ids.len(), s.len()));
            ids.extend_from_slice(s);
            positions.extend(0..s.len());
        }
        let tok = g.embedding(params[TOK_EMB], &ids)?;
        let pos = g.embedding(params[POS_EMB], &positions)?;
        let mut x = g.add(tok, pos)?;
        for l in 0..cfg.layers {
            let b = Block::at(l);
            let h = g.layer_norm(x, params[b.ln1_g], params[b.ln1_b], LN_EPS)?;
            let qkv = g.matmul(h, params[b.w_qkv])?;
            let qkv = g.add_bias(qkv, params[b.b_qkv])?;
            let att = g.causal_attention(qkv, &segments, cfg.heads)?;
            let proj = g.matmul(att, params[b.w_o])?;
            let proj = g.add_bias(proj, params[b.b_o])?;
            x = g.add(x, proj)?;
            let h = g.layer_norm(x, params[b.ln2_g], params[b.ln2_b], LN_EPS)?;
            let f = g.matmul(h, params[b.w_fc])?;
            let f = g.add_bias(f, params[b.b_fc])?;
            let f = g.gelu(f);
            let m = g.matmul(f, params[b.w_proj])?;
            let m = g.add_bias(m, params[b.b_proj])?;
            x = g.add(x, m)?;
        }
        let n = self.params.len();
        let h = g.layer_norm(x, params[n - 2], params[n - 1], LN_EPS)?;
        let emb_t = g.transpose(params[TOK_EMB]);
        g.matmul(h, emb_t)
    }

    /// Mean next-token cross-entropy over every position after the first,
    /// as a graph scalar.
    pub fn sequence_loss(&self, g: &mut Graph, params: &[Var], seqs: &[&[usize]]) -> Result<Var> {
        let mut inputs = Vec::with_capacity(seqs.len());
        let mut targets = Vec::new();
        for s in seqs {
            if s.len() < 2 {
                return Err(invalid("sequences need at least two tokens"));
            }
            inputs.push(&s[..s.len() - 1]);
            targets.extend_from_slice(&s[1..]);
        }
        let logits = self.forward(g, params, &inputs)?;
        g.cross_entropy(logits, &targets, None)
    }

    /// Untracked logits for each position of `seq` (`len × V`).
    pub fn logits(&self, seq: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars: Vec<Var> = self.params.iter().map(|p| g.constant(p.clone())).collect();
        let out = self.forward(&mut g, &vars, &[seq])?;
        Ok(g.value(out).clone())
    }

    pub fn decoder(&self) -> Decoder<'_> {
        Decoder::new(self)
    }
}

/// Incremental decoding with cached per-layer projections. Produces the
/// same logits as [`GeneratorModel::forward`] on the full prefix.
pub struct Decoder<'m> {
    model: &'m GeneratorModel,
    emb_t: Tensor,
    caches: Vec<Vec<f64>>,
    len: usize,
}

impl<'m> Decoder<'m> {
    fn new(model: &'m GeneratorModel) -> Self {
        Self {
            model,
            emb_t: model.params[TOK_EMB].transpose(),
            caches: vec![Vec::new(); model.config.layers],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Feeds one token and returns the logits for the next one.
    pub fn step(&mut self, token: usize) -> Result<Vec<f64>> {
        let m = self.model;
        let cfg = &m.config;
        if self.len >= cfg.context {
            return Err(invalid("decoder context is full"));
        }
        if token >= m.vocab.len() {
            return Err(Error::Index {
                what: "vocabulary",
                index: token,
                len: m.vocab.len(),
            });
        }
        let p = &m.params;
        let d = cfg.d_model;
        let dh = d / cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x: Vec<f64> = p[TOK_EMB]
            .row(token)
            .iter()
            .zip(p[POS_EMB].row(self.len))
            .map(|(a, b)| a + b)
            .collect();
        let mut h = vec![0.0; d];
        let mut probs = vec![0.0; self.len + 1];
        for l in 0..cfg.layers {
            let b = Block::at(l);
            layer_norm_affine(&x, &p[b.ln1_g], &p[b.ln1_b], &mut h);
            let qkv = linear(&h, &p[b.w_qkv], &p[b.b_qkv]);
            let cache = &mut self.caches[l];
            cache.extend_from_slice(&qkv);
            let mut att = vec![0.0; d];
            for head in 0..cfg.heads {
                let q = &qkv[head * dh..(head + 1) * dh];
                kernels::attend_one(
                    q,
                    cache,
                    cache,
                    3 * d,
                    d + head * dh,
                    2 * d + head * dh,
                    self.len + 1,
                    scale,
                    &mut probs,
                    &mut att[head * dh..(head + 1) * dh],
                );
            }
            let proj = linear(&att, &p[b.w_o], &p[b.b_o]);
            x.iter_mut().zip(&proj).for_each(|(a, b)| *a += b);
            layer_norm_affine(&x, &p[b.ln2_g], &p[b.ln2_b], &mut h);
            let mut f = linear(&h, &p[b.w_fc], &p[b.b_fc]);
            f.iter_mut().for_each(|v| *v = kernels::gelu(*v));
            let mlp = linear(&f, &p[b.w_proj], &p[b.b_proj]);
            x.iter_mut().zip(&mlp).for_each(|(a, b)| *a += b);
        }
        let n = p.len();
        layer_norm_affine(&x, &p[n - 2], &p[n - 1], &mut h);
        let v = m.vocab.len();
        let mut logits = vec![0.0; v];
        kernels::matmul(&h, self.emb_t.data(), &mut logits, 1, d, v);
        self.len += 1;
        Ok(logits)
    }
}

fn layer_norm_affine(x: &[f64], gain: &Tensor, bias: &Tensor, out: &mut [f64]) {
    kernels::layer_norm_row(x, LN_EPS, out);
    for ((o, g), b) in out.iter_mut().zip(gain.data()).zip(bias.data()) {
        *o = *o * g + b;
    }
}

fn linear(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let n = w.cols();
    let mut out = vec![0.0; n];
    kernels::matmul(x, w.data(), &mut out, 1, x.len(), n);
    out.iter_mut().zip(b.data()).for_each(|(o, b)| *o += b);
    out
}

impl GeneratorModel {
    pub fn to_checkpoint(&self) -> crate::checkpoint::Checkpoint {
        use crate::checkpoint::{Checkpoint, ModelKind};
        let c = &self.config;
        Checkpoint {
            kind: ModelKind::Generator,
            vocab: self.vocab.clone(),
            hyper: vec![
                ("d_model".into(), c.d_model as u64),
                ("heads".into(), c.heads as u64),
                ("layers".into(), c.layers as u64),
                ("context".into(), c.context as u64),
            ],
            tensors: self.param_names().into_iter().zip(self.params.iter().cloned()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: crate::checkpoint::Checkpoint) -> Result<Self> {
        let ckpt = ckpt.expect_kind(crate::checkpoint::ModelKind::Generator)?;
        let config = GenConfig {
            d_model: ckpt.hyper("d_model")? as usize,
            heads: ckpt.hyper("heads")? as usize,
            layers: ckpt.hyper("layers")? as usize,
            context: ckpt.hyper("context")? as usize,
        };
        let params = ckpt.tensors.into_iter().map(|(_, t)| t).collect();
        Self::from_parts(ckpt.vocab, config, params)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(crate::checkpoint::Checkpoint::load(path)?)
    }

    pub fn params_hash(&self) -> String {
        crate::checkpoint::params_hash(&self.params)
    }
}
