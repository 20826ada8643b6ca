//! Teacher-student training: a teacher fit on original data only guides
//! a student trained on the combined set through
//! `L = L_student + tau * L_KL`.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{apply_strategy, generate_synthetic, AugmentReport, AugmentationPlan, KlScope, Strategy};
use crate::classifier::{fit, score_corpus, ClassifierFactory, ClassifierModel, ClfConfig, ClfHistory, ClfTrainConfig, Consistency};
use crate::corpus::{build_vocab, CorpusSplit, LabeledDocument};
use crate::error::{invalid, Result};
use crate::genlm::{lm_finetune, GenConfig, GeneratorModel, LmTrainConfig};
use crate::metrics::{evaluate, MetricSet};
use crate::rng;
use crate::tensor::{KlDirection, Tensor};

pub use crate::classifier::LossBreakdown as DistillLossBreakdown;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub tau: f64,
    pub kl_scope: KlScope,
    pub direction: KlDirection,
    pub teacher: ClfTrainConfig,
    pub student: ClfTrainConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            kl_scope: KlScope::AllSamples,
            direction: KlDirection::TargetToModel,
            teacher: ClfTrainConfig { seed: 1, ..Default::default() },
            student: ClfTrainConfig { seed: 2, ..Default::default() },
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(invalid(format!("tau must be finite and nonnegative, got {}", self.tau)));
        }
        Ok(())
    }
}

/// A trained classifier that can only be read.
#[derive(Clone, Debug, PartialEq)]
pub struct Teacher(ClassifierModel);

impl Teacher {
    pub fn model(&self) -> &ClassifierModel {
        &self.0
    }

    pub fn predict_proba(&self, doc: &LabeledDocument) -> [f64; 2] {
        self.0.predict_proba(doc)
    }
}

pub fn pretrain_teacher(factory: &ClassifierFactory, d_train: &[LabeledDocument], cfg: &DistillConfig) -> Result<Teacher> {
    if d_train.iter().any(LabeledDocument::is_synthetic) {
        return Err(invalid("the teacher trains on original documents only"));
    }
    let (model, _) = factory.train(d_train, &cfg.teacher)?;
    Ok(Teacher(model))
}

/// Fresh student on `d_combined`. With `tau = 0` the KL term is never
/// built, so the result equals plain training with the student config.
pub fn train_student(
    factory: &ClassifierFactory,
    d_combined: &[LabeledDocument],
    teacher: &Teacher,
    cfg: &DistillConfig,
) -> Result<(ClassifierModel, ClfHistory)> {
    cfg.validate()?;
    let mut student = factory.build(cfg.student.seed);
    if cfg.tau == 0.0 {
        let h = fit(&mut student, d_combined, &cfg.student, None, None)?;
        return Ok((student, h));
    }
    let mut target = Vec::with_capacity(d_combined.len() * 2);
    for d in d_combined {
        target.extend(teacher.predict_proba(d));
    }
    let target = Tensor::new(&[d_combined.len(), 2], target)?;
    let in_scope: Vec<bool> = d_combined
        .iter()
        .map(|d| match cfg.kl_scope {
            KlScope::AllSamples => true,
            KlScope::SyntheticOnly => d.is_synthetic(),
        })
        .collect();
    let consistency = Consistency {
        target: &target,
        in_scope: &in_scope,
        tau: cfg.tau,
        direction: cfg.direction,
    };
    let h = fit(&mut student, d_combined, &cfg.student, None, Some(consistency))?;
    Ok((student, h))
}

/// Mean `KL(teacher || model)` over `docs`.
pub fn mean_kl_to_teacher(model: &ClassifierModel, teacher: &Teacher, docs: &[LabeledDocument]) -> Result<f64> {
    if docs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for d in docs {
        total += crate::tensor::kl_divergence(&teacher.predict_proba(d), &model.predict_proba(d))?;
    }
    Ok(total / docs.len() as f64)
}

/// Everything one end-to-end run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub vocab_min_freq: usize,
    pub generator: GenConfig,
    pub lm: LmTrainConfig,
    pub balanced: bool,
    pub classifier: ClfConfig,
    pub plan: AugmentationPlan,
    pub distill: DistillConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_min_freq: 1,
            generator: GenConfig::default(),
            lm: LmTrainConfig { epochs: 3, ..Default::default() },
            balanced: true,
            classifier: ClfConfig::default(),
            plan: AugmentationPlan::default(),
            distill: DistillConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Copy with every stage seed derived from `seed`.
    pub fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.lm.seed = rng::derive(self.seed, "lm");
        c.plan.seed = rng::derive(self.seed, "generation");
        c.distill.teacher.seed = rng::derive(self.seed, "teacher");
        c.distill.student.seed = rng::derive(self.seed, "student");
        c
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: u64,
    pub hash: String,
    pub summary: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub augmentation: AugmentReport,
    pub lm_loss: Vec<f64>,
    pub student_loss: Vec<DistillLossBreakdown>,
    pub teacher_valid: MetricSet,
    pub student_valid: MetricSet,
    /// Wall-clock seconds per stage; excluded from [`PipelineReport::hash`].
    pub timings: BTreeMap<String, f64>,
}

impl PipelineReport {
    /// SHA-256 of the report JSON with timings removed.
    pub fn hash(&self) -> String {
        let mut r = self.clone();
        r.timings.clear();
        let json = serde_json::to_vec(&r).expect("report serialises");
        hex::encode(Sha256::digest(json))
    }
}

/// Hex SHA-256 over ids, labels and texts.
pub fn docs_hash(docs: &[LabeledDocument]) -> String {
    let mut h = Sha256::new();
    for d in docs {
        h.update(d.id.as_bytes());
        h.update([0, d.label]);
        h.update(d.text.as_bytes());
        h.update([0xff]);
    }
    hex::encode(h.finalize())
}

/// Fine-tune the generator, generate, pre-train the teacher, train the
/// student. Errors carry the failing stage's name.
pub fn medaug_pipeline(split: &CorpusSplit, config: &PipelineConfig) -> Result<(ClassifierModel, PipelineReport)> {
    split.validate()?;
    config.distill.validate()?;
    let cfg = config.seeded();
    let mut timings = BTreeMap::new();
    let mut stages = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let vocab = build_vocab(&split.train, cfg.vocab_min_freq).map_err(|e| e.in_stage("vocabulary"))?;
    let factory = ClassifierFactory::new(vocab.clone(), cfg.classifier).map_err(|e| e.in_stage("vocabulary"))?;
    let mut generator = GeneratorModel::new(vocab, cfg.generator, rng::derive(cfg.seed, "generator-init"))
        .map_err(|e| e.in_stage("finetune"))?;
    let ft = lm_finetune(&mut generator, &split.train, cfg.balanced, &cfg.lm).map_err(|e| e.in_stage("finetune"))?;
    stages.push(StageRecord {
        stage: "finetune".into(),
        seed: cfg.lm.seed,
        hash: generator.params_hash(),
        summary: BTreeMap::from([
            ("docs_used".into(), ft.docs_used as f64),
            ("final_loss".into(), ft.history.epochs.last().copied().unwrap_or(f64::NAN)),
        ]),
    });
    lap("finetune", &mut timings);

    let pool = generate_synthetic(&generator, &cfg.plan, &split.train).map_err(|e| e.in_stage("generate"))?;
    let strategy = Strategy::Medaug {
        tau: cfg.distill.tau,
        kl_scope: cfg.distill.kl_scope,
    };
    let (combined, mut augmentation) = apply_strategy(&split.train, &pool, &strategy, &factory, &cfg.distill.teacher)
        .map_err(|e| e.in_stage("generate"))?;
    augmentation.requested = cfg.plan.count;
    augmentation.generation_seed = cfg.plan.seed;
    stages.push(StageRecord {
        stage: "generate".into(),
        seed: cfg.plan.seed,
        hash: docs_hash(&pool.docs),
        summary: BTreeMap::from([
            ("realized".into(), pool.docs.len() as f64),
            ("noisy".into(), pool.noisy.len() as f64),
        ]),
    });
    lap("generate", &mut timings);

    let teacher = pretrain_teacher(&factory, &split.train, &cfg.distill).map_err(|e| e.in_stage("teacher"))?;
    let teacher_valid = evaluate(&score_corpus(teacher.model(), &split.valid)?).map_err(|e| e.in_stage("teacher"))?;
    stages.push(StageRecord {
        stage: "teacher".into(),
        seed: cfg.distill.teacher.seed,
        hash: teacher.model().params_hash(),
        summary: BTreeMap::from([("valid_auroc".into(), teacher_valid.auroc)]),
    });
    lap("teacher", &mut timings);

    let (student, history) =
        train_student(&factory, &combined, &teacher, &cfg.distill).map_err(|e| e.in_stage("student"))?;
    let student_valid = evaluate(&score_corpus(&student, &split.valid)?).map_err(|e| e.in_stage("student"))?;
    stages.push(StageRecord {
        stage: "student".into(),
        seed: cfg.distill.student.seed,
        hash: student.params_hash(),
        summary: BTreeMap::from([
            ("valid_auroc".into(), student_valid.auroc),
            ("combined_docs".into(), combined.len() as f64),
        ]),
    });
    lap("student", &mut timings);

    let report = PipelineReport {
        config: cfg,
        stages,
        augmentation,
        lm_loss: ft.history.epochs,
        student_loss: history.epochs,
        teacher_valid,
        student_valid,
        timings,
    };
    Ok((student, report))
}
