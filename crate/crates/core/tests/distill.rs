mod common;

use medaug::augment::{AugmentationPlan, KlScope};
use medaug::classifier::{clf_train, ClassifierFactory, ClfConfig};
use medaug::corpus::{build_vocab, synth_benchmark, CorpusSplit, LabeledDocument, Origin, SynthBenchSpec};
use medaug::distill::*;
use medaug::genlm::GenConfig;
use medaug::metrics::auroc;
use medaug::tensor::KlDirection;
use medaug::Error;

fn factory(split: &CorpusSplit) -> ClassifierFactory {
    ClassifierFactory::new(build_vocab(&split.train, 1).unwrap(), ClfConfig::default()).unwrap()
}

/// Benchmark positives from an unseen seed, with every third one swapped
/// for a negative document relabelled positive.
fn noisy_synthetic(n: usize, seed: u64) -> Vec<LabeledDocument> {
    let docs = synth_benchmark(&SynthBenchSpec { num_docs: 8 * n, seed: seed + 1000, ..Default::default() }).unwrap();
    let mut pos = docs.iter().filter(|d| d.label == 1);
    let mut neg = docs.iter().filter(|d| d.label == 0);
    (0..n)
        .map(|i| {
            let src = if i % 3 == 0 { neg.next() } else { pos.next() }.unwrap();
            LabeledDocument { id: format!("syn{i}"), label: 1, text: src.text.clone(), origin: Origin::Synthetic }
        })
        .collect()
}

#[test]
fn teacher_learns_clean_benchmark_and_is_reproducible() {
    let split = common::small_split(2000, 1);
    let f = factory(&split);
    let cfg = DistillConfig::default();
    let t = pretrain_teacher(&f, &split.train, &cfg).unwrap();
    let sp = medaug::classifier::score_corpus(t.model(), &split.train).unwrap();
    assert!(auroc(&sp).unwrap() >= 0.95);
    assert_eq!(t, pretrain_teacher(&f, &split.train, &cfg).unwrap());
    let mut tainted = split.train.clone();
    tainted[0].origin = Origin::Synthetic;
    assert!(pretrain_teacher(&f, &tainted, &cfg).is_err());
}

#[test]
fn zero_tau_is_plain_training() {
    let split = common::small_split(1000, 2);
    let f = factory(&split);
    let mut combined = split.train.clone();
    combined.extend(noisy_synthetic(90, 2));
    let cfg = DistillConfig { tau: 0.0, ..Default::default() };
    let teacher = pretrain_teacher(&f, &split.train, &cfg).unwrap();
    let (student, h) = train_student(&f, &combined, &teacher, &cfg).unwrap();
    let mut plain = f.build(cfg.student.seed);
    let hp = clf_train(&mut plain, &combined, &cfg.student, None).unwrap();
    assert_eq!(student.params_hash(), plain.params_hash());
    assert_eq!(h, hp);
    assert!(h.batches.iter().all(|b| b.kl == 0.0));
}

#[test]
fn loss_breakdown_accounting_and_frozen_teacher() {
    let split = common::small_split(1000, 3);
    let f = factory(&split);
    let mut combined = split.train.clone();
    combined.extend(noisy_synthetic(90, 3));
    for (scope, direction) in [
        (KlScope::AllSamples, KlDirection::TargetToModel),
        (KlScope::SyntheticOnly, KlDirection::ModelToTarget),
    ] {
        let cfg = DistillConfig { tau: 0.7, kl_scope: scope, direction, ..Default::default() };
        let teacher = pretrain_teacher(&f, &split.train, &cfg).unwrap();
        let before = teacher.model().params_hash();
        let (_, h) = train_student(&f, &combined, &teacher, &cfg).unwrap();
        assert_eq!(teacher.model().params_hash(), before);
        for b in h.batches.iter().chain(&h.epochs) {
            assert!(b.kl >= 0.0);
            assert_eq!(b.total, b.student + 0.7 * b.kl);
        }
    }
    assert!(matches!(
        train_student(&f, &combined, &pretrain_teacher(&f, &split.train, &DistillConfig::default()).unwrap(),
            &DistillConfig { tau: -0.5, ..Default::default() }),
        Err(Error::Validation(_))
    ));
}

#[test]
fn large_tau_pulls_student_onto_teacher() {
    let split = common::small_split(1000, 4);
    let f = factory(&split);
    let cfg = DistillConfig { tau: 1000.0, ..Default::default() };
    let teacher = pretrain_teacher(&f, &split.train, &cfg).unwrap();
    let (student, _) = train_student(&f, &split.train, &teacher, &cfg).unwrap();
    let kl = mean_kl_to_teacher(&student, &teacher, &split.train).unwrap();
    assert!(kl < 0.01, "{kl}");
}

#[test]
fn consistency_pressure_reduces_kl_on_noisy_data() {
    let (mut with_tau, mut without) = (0.0, 0.0);
    for seed in 0..5 {
        let split = common::small_split(1000, 10 + seed);
        let f = factory(&split);
        let mut combined = split.train.clone();
        combined.extend(noisy_synthetic(150, seed));
        let cfg = DistillConfig { tau: 1.0, ..Default::default() };
        let teacher = pretrain_teacher(&f, &split.train, &cfg).unwrap();
        let (s1, _) = train_student(&f, &combined, &teacher, &cfg).unwrap();
        let (s0, _) = train_student(&f, &combined, &teacher, &DistillConfig { tau: 0.0, ..cfg }).unwrap();
        with_tau += mean_kl_to_teacher(&s1, &teacher, &split.train).unwrap();
        without += mean_kl_to_teacher(&s0, &teacher, &split.train).unwrap();
    }
    assert!(with_tau <= without, "{with_tau} > {without}");
}

fn pipeline_config(count: usize, seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        generator: GenConfig { d_model: 32, heads: 2, layers: 1, context: 64 },
        lm: medaug::genlm::LmTrainConfig { epochs: 1, ..Default::default() },
        plan: AugmentationPlan { count, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn pipeline_is_reproducible_and_reports_every_stage() {
    let split = common::small_split(800, 5);
    let cfg = pipeline_config(40, 5);
    let (student, report) = medaug_pipeline(&split, &cfg).unwrap();
    let stages: Vec<&str> = report.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(stages, ["finetune", "generate", "teacher", "student"]);
    assert_eq!(report.stages[3].hash, student.params_hash());
    assert_eq!(report.augmentation.combined_docs, split.train.len() + 40);
    assert_eq!(report.timings.len(), 4);
    let (again, rerun) = medaug_pipeline(&split, &cfg).unwrap();
    assert_eq!(again, student);
    assert_eq!(rerun.hash(), report.hash());
    let other = medaug_pipeline(&split, &pipeline_config(40, 6)).unwrap().1;
    assert_ne!(other.hash(), report.hash());
}

#[test]
fn pipeline_without_synthetic_data_trains_on_train_only() {
    let split = common::small_split(800, 6);
    let (_, report) = medaug_pipeline(&split, &pipeline_config(0, 6)).unwrap();
    assert_eq!(report.augmentation.kept, 0);
    assert_eq!(report.augmentation.combined_docs, split.train.len());
}

#[test]
fn pipeline_errors_name_the_stage() {
    let mut split = common::small_split(800, 7);
    split.train.retain(|d| d.label == 0);
    match medaug_pipeline(&split, &pipeline_config(10, 7)) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "finetune"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn student_keeps_pace_with_teacher() {
    let mut gap = 0.0;
    for seed in 0..3 {
        let split = common::small_split(1500, 20 + seed);
        let (_, r) = medaug_pipeline(&split, &pipeline_config(150, seed)).unwrap();
        gap += r.student_valid.auroc - r.teacher_valid.auroc;
    }
    assert!(gap / 3.0 >= -0.02, "mean gap {}", gap / 3.0);
}
