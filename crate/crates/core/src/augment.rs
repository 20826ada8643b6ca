//! Synthetic positive generation and the strategies that merge it with
//! the original training set.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierFactory, ClfTrainConfig};
use crate::corpus::LabeledDocument;
use crate::error::{invalid, Error, Result};
use crate::genlm::{sample, GeneratorModel, PromptSpec};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Prompt continues from the first two tokens of a positive training
    /// document.
    #[default]
    WithContext,
    WithoutContext,
}

/// How a noisy synthetic slot is corrupted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Text generated from a negative-label prompt, stored as positive.
    #[default]
    Offlabel,
    /// Text generated from a positive prompt, stored as negative.
    Flip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPlan {
    pub count: usize,
    pub prompt_mode: PromptMode,
    pub dedup: bool,
    pub seed: u64,
    pub temperature: f64,
    pub top_k: usize,
    pub max_len: usize,
    /// Probability that a slot is corrupted per `noise_mode`.
    pub noise_fraction: f64,
    pub noise_mode: NoiseMode,
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        Self {
            count: 0,
            prompt_mode: PromptMode::WithContext,
            dedup: true,
            seed: 0,
            temperature: 1.0,
            top_k: 40,
            max_len: 64,
            noise_fraction: 0.0,
            noise_mode: NoiseMode::Offlabel,
        }
    }
}

impl AugmentationPlan {
    /// Generated documents are always prompted as positives.
    pub const TARGET_LABEL: u8 = 1;

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(invalid("noise_fraction must lie in [0, 1]"));
        }
        if !(self.temperature > 0.0) || self.top_k == 0 {
            return Err(invalid("temperature and top_k must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSet {
    pub docs: Vec<LabeledDocument>,
    /// Ids of corrupted documents.
    pub noisy: Vec<String>,
    pub attempts: usize,
}

/// Fills `plan.count` slots with sampled documents. Each slot draws from
/// its own seeded stream and is deduplicated only against earlier slots,
/// so a smaller plan with the same seed yields a prefix of a larger one.
pub fn generate_synthetic(
    g_tuned: &GeneratorModel,
    plan: &AugmentationPlan,
    train_docs: &[LabeledDocument],
) -> Result<SyntheticSet> {
    plan.validate()?;
    let positives: Vec<&LabeledDocument> = train_docs.iter().filter(|d| d.label == 1).collect();
    if plan.count > 0 && plan.prompt_mode == PromptMode::WithContext && positives.is_empty() {
        return Err(invalid("context prompts need at least one positive training document"));
    }
    let budget = plan.count.saturating_mul(10);
    let mut out = SyntheticSet::default();
    let mut seen = HashSet::new();
    for slot in 0..plan.count {
        let slot_seed = rng::derive_index(plan.seed, "synthetic-slot", slot as u64);
        let mut r = rng::seeded(slot_seed);
        let noisy = r.random_bool(plan.noise_fraction);
        let prompt_label = match (noisy, plan.noise_mode) {
            (true, NoiseMode::Offlabel) => 0,
            _ => AugmentationPlan::TARGET_LABEL,
        };
        let stored_label = match (noisy, plan.noise_mode) {
            (true, NoiseMode::Flip) => 0,
            _ => AugmentationPlan::TARGET_LABEL,
        };
        let id = format!("syn{:016x}-{slot:05}", plan.seed);
        let doc = loop {
            if out.attempts >= budget {
                return Err(Error::GenerationStarved {
                    requested: plan.count,
                    achieved: out.docs.len(),
                    attempts: out.attempts,
                });
            }
            out.attempts += 1;
            let context = match plan.prompt_mode {
                PromptMode::WithContext => {
                    let src = positives.choose(&mut r).expect("checked non-empty");
                    src.tokens().take(2).collect()
                }
                PromptMode::WithoutContext => Vec::new(),
            };
            let prompt = PromptSpec {
                label: prompt_label,
                context,
                temperature: plan.temperature,
                top_k: plan.top_k,
                max_len: plan.max_len,
                seed: r.random(),
            };
            let Some(mut doc) = sample(g_tuned, &prompt)?.into_document(id.clone()) else {
                continue;
            };
            if plan.dedup && !seen.insert(doc.text.clone()) {
                continue;
            }
            doc.label = stored_label;
            break doc;
        };
        if noisy {
            out.noisy.push(doc.id.clone());
        }
        out.docs.push(doc);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlScope {
    #[default]
    AllSamples,
    SyntheticOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    None,
    Base,
    ConfidenceFilter { keep_fraction: f64 },
    Medaug { tau: f64, kl_scope: KlScope },
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::ConfidenceFilter { keep_fraction } if !(keep_fraction > 0.0 && keep_fraction <= 1.0) => {
                Err(invalid("keep_fraction must lie in (0, 1]"))
            }
            Strategy::Medaug { tau, .. } if !(tau >= 0.0 && tau.is_finite()) => {
                Err(invalid("tau must be finite and nonnegative"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Base => "base",
            Strategy::ConfidenceFilter { .. } => "confidence_filter",
            Strategy::Medaug { .. } => "medaug",
        }
    }

    pub fn uses_synthetic(&self) -> bool {
        !matches!(self, Strategy::None)
    }
}

/// `train` followed by every synthetic document.
pub fn strategy_base(train: &[LabeledDocument], synthetic: &[LabeledDocument]) -> Result<Vec<LabeledDocument>> {
    let ids: HashSet<&str> = train.iter().map(|d| d.id.as_str()).collect();
    if let Some(d) = synthetic.iter().find(|d| ids.contains(d.id.as_str())) {
        return Err(invalid(format!("synthetic id {} collides with a training document", d.id)));
    }
    Ok(train.iter().chain(synthetic).cloned().collect())
}

/// Keeps the `ceil(keep_fraction * n)` synthetic documents a classifier
/// trained on `train` alone scores most positive; ties go to the smaller
/// id. Kept documents retain their pool order.
pub fn strategy_confidence_filter(
    train: &[LabeledDocument],
    synthetic: &[LabeledDocument],
    keep_fraction: f64,
    factory: &ClassifierFactory,
    cfg: &ClfTrainConfig,
) -> Result<Vec<LabeledDocument>> {
    Strategy::ConfidenceFilter { keep_fraction }.validate()?;
    let (model, _) = factory.train(train, cfg)?;
    let keep = ((keep_fraction * synthetic.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut ranked: Vec<(f64, usize)> = synthetic
        .iter()
        .enumerate()
        .map(|(i, d)| (model.predict_proba(d)[usize::from(AugmentationPlan::TARGET_LABEL)], i))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| synthetic[a.1].id.cmp(&synthetic[b.1].id)));
    let mut kept: Vec<usize> = ranked[..keep.min(ranked.len())].iter().map(|&(_, i)| i).collect();
    kept.sort_unstable();
    let kept: Vec<LabeledDocument> = kept.into_iter().map(|i| synthetic[i].clone()).collect();
    strategy_base(train, &kept)
}

/// What an augmentation step did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub strategy: Strategy,
    pub requested: usize,
    pub realized: usize,
    pub kept: usize,
    pub noisy: usize,
    pub attempts: usize,
    pub train_docs: usize,
    pub combined_docs: usize,
    pub generation_seed: u64,
    pub filter_seed: Option<u64>,
    /// Set when the combined set must be trained with KL control.
    pub kl_control: bool,
    pub note: Option<String>,
}

/// Applies `strategy` to an already generated pool.
pub fn apply_strategy(
    train: &[LabeledDocument],
    pool: &SyntheticSet,
    strategy: &Strategy,
    factory: &ClassifierFactory,
    filter_cfg: &ClfTrainConfig,
) -> Result<(Vec<LabeledDocument>, AugmentReport)> {
    strategy.validate()?;
    if train.iter().any(LabeledDocument::is_synthetic) {
        return Err(invalid("training set already contains synthetic documents"));
    }
    let combined = match *strategy {
        Strategy::None => train.to_vec(),
        Strategy::Base | Strategy::Medaug { .. } => strategy_base(train, &pool.docs)?,
        Strategy::ConfidenceFilter { keep_fraction } => {
            strategy_confidence_filter(train, &pool.docs, keep_fraction, factory, filter_cfg)?
        }
    };
    let kept = combined.len() - train.len();
    let kept_ids: HashSet<&str> = combined[train.len()..].iter().map(|d| d.id.as_str()).collect();
    let report = AugmentReport {
        strategy: *strategy,
        requested: pool.docs.len(),
        realized: pool.docs.len(),
        kept,
        noisy: pool.noisy.iter().filter(|id| kept_ids.contains(id.as_str())).count(),
        attempts: pool.attempts,
        train_docs: train.len(),
        combined_docs: combined.len(),
        generation_seed: 0,
        filter_seed: matches!(strategy, Strategy::ConfidenceFilter { .. }).then_some(filter_cfg.seed),
        kl_control: matches!(strategy, Strategy::Medaug { .. }),
        note: matches!(strategy, Strategy::None).then(|| "no augmentation".to_string()),
    };
    Ok((combined, report))
}

/// Generates the pool (skipped for `Strategy::None`) and applies the
/// strategy.
pub fn run_augmentation(
    train: &[LabeledDocument],
    g_tuned: &GeneratorModel,
    plan: &AugmentationPlan,
    strategy: &Strategy,
    factory: &ClassifierFactory,
    filter_cfg: &ClfTrainConfig,
) -> Result<(Vec<LabeledDocument>, AugmentReport)> {
    let pool = if strategy.uses_synthetic() {
        generate_synthetic(g_tuned, plan, train)?
    } else {
        SyntheticSet::default()
    };
    let (combined, mut report) = apply_strategy(train, &pool, strategy, factory, filter_cfg)?;
    report.requested = if strategy.uses_synthetic() { plan.count } else { 0 };
    report.generation_seed = plan.seed;
    Ok((combined, report))
}
