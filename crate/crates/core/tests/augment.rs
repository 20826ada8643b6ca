mod common;

use std::collections::HashSet;

use medaug::augment::*;
use medaug::classifier::{ClassifierFactory, ClfConfig, ClfTrainConfig};
use medaug::corpus::{build_vocab, BenchLexicon, LabeledDocument, Origin, SynthBenchSpec};
use medaug::Error;

fn ids(docs: &[LabeledDocument]) -> HashSet<String> {
    docs.iter().map(|d| d.id.clone()).collect()
}

fn doc(id: &str, label: u8, text: &str, origin: Origin) -> LabeledDocument {
    LabeledDocument::new(id, label, text, origin).unwrap()
}

#[test]
fn generation_contract() {
    let split = common::small_split(600, 1);
    let g = common::quick_generator(&split, 1);
    let empty = generate_synthetic(&g, &AugmentationPlan::default(), &split.train).unwrap();
    assert!(empty.docs.is_empty());

    for mode in [PromptMode::WithContext, PromptMode::WithoutContext] {
        let plan = AugmentationPlan { count: 40, prompt_mode: mode, seed: 3, ..Default::default() };
        let set = generate_synthetic(&g, &plan, &split.train).unwrap();
        assert_eq!(set.docs.len(), 40);
        assert!(set.noisy.is_empty());
        assert!(set.docs.iter().all(|d| d.label == 1 && d.origin == Origin::Synthetic));
        let texts: HashSet<&str> = set.docs.iter().map(|d| d.text.as_str()).collect();
        assert_eq!(texts.len(), 40);
        assert_eq!(ids(&set.docs).len(), 40);
        assert_eq!(set, generate_synthetic(&g, &plan, &split.train).unwrap());
        let prefix = generate_synthetic(&g, &AugmentationPlan { count: 15, ..plan.clone() }, &split.train).unwrap();
        assert_eq!(prefix.docs[..], set.docs[..15]);
    }
}

#[test]
fn context_mode_continues_a_positive_opening() {
    let split = common::small_split(600, 2);
    let g = common::quick_generator(&split, 2);
    let openings: HashSet<String> = split
        .train
        .iter()
        .filter(|d| d.label == 1)
        .map(|d| d.tokens().take(2).collect::<Vec<_>>().join(" "))
        .collect();
    let plan = AugmentationPlan { count: 20, seed: 5, ..Default::default() };
    for d in generate_synthetic(&g, &plan, &split.train).unwrap().docs {
        let head = d.tokens().take(2).collect::<Vec<_>>().join(" ");
        assert!(openings.contains(&head), "{head}");
    }
}

#[test]
fn noise_injection_modes() {
    let split = common::small_split(600, 3);
    let g = common::quick_generator(&split, 3);
    let plan = AugmentationPlan { count: 60, noise_fraction: 0.5, seed: 1, ..Default::default() };
    let off = generate_synthetic(&g, &plan, &split.train).unwrap();
    assert!(!off.noisy.is_empty() && off.noisy.len() < 60);
    assert!(off.docs.iter().all(|d| d.label == 1));
    let flip = generate_synthetic(&g, &AugmentationPlan { noise_mode: NoiseMode::Flip, ..plan }, &split.train).unwrap();
    assert_eq!(flip.noisy, off.noisy);
    let noisy: HashSet<&String> = flip.noisy.iter().collect();
    for d in &flip.docs {
        assert_eq!(d.label == 0, noisy.contains(&d.id));
    }
}

#[test]
fn deterministic_decoding_starves_under_dedup() {
    let split = common::small_split(600, 4);
    let g = common::quick_generator(&split, 4);
    let plan = AugmentationPlan {
        count: 5,
        prompt_mode: PromptMode::WithoutContext,
        temperature: 1e-6,
        ..Default::default()
    };
    match generate_synthetic(&g, &plan, &split.train) {
        Err(Error::GenerationStarved { requested, achieved, attempts }) => {
            assert_eq!((requested, achieved, attempts), (5, 1, 50));
        }
        other => panic!("expected starvation, got {other:?}"),
    }
    let no_dedup = generate_synthetic(&g, &AugmentationPlan { dedup: false, ..plan }, &split.train).unwrap();
    assert_eq!(no_dedup.docs.len(), 5);
}

#[test]
fn base_strategy_is_a_disjoint_union() {
    let train: Vec<_> = (0..100).map(|i| doc(&format!("t{i}"), (i % 5 == 0) as u8, "a b", Origin::Original)).collect();
    let syn: Vec<_> = (0..25).map(|i| doc(&format!("s{i}"), 1, "c d", Origin::Synthetic)).collect();
    let combined = strategy_base(&train, &syn).unwrap();
    assert_eq!(combined.len(), 125);
    assert!(ids(&syn).is_subset(&ids(&combined)));
    assert_eq!(strategy_base(&train, &[]).unwrap(), train);
    let clash = [doc("t3", 1, "x", Origin::Synthetic)];
    assert!(strategy_base(&train, &clash).is_err());
}

fn filter_fixture() -> (Vec<LabeledDocument>, Vec<LabeledDocument>, ClassifierFactory) {
    let split = common::small_split(1500, 6);
    let lex = BenchLexicon::new(&SynthBenchSpec::default());
    let mut syn = Vec::new();
    for i in 0..10 {
        let [a, b] = &lex.positive[i % lex.positive.len()];
        syn.push(doc(&format!("good{i}"), 1, &format!("hospital course patient {a} {b} was seen"), Origin::Synthetic));
        let [a, b] = &lex.negative[i % lex.negative.len()];
        syn.push(doc(&format!("bad{i}"), 1, &format!("hospital course patient {a} {b} was seen"), Origin::Synthetic));
    }
    let factory = ClassifierFactory::new(build_vocab(&split.train, 1).unwrap(), ClfConfig::default()).unwrap();
    (split.train, syn, factory)
}

#[test]
fn confidence_filter_drops_negative_looking_generations() {
    let (train, syn, factory) = filter_fixture();
    let cfg = ClfTrainConfig::default();
    let all = strategy_confidence_filter(&train, &syn, 1.0, &factory, &cfg).unwrap();
    assert_eq!(ids(&all), ids(&strategy_base(&train, &syn).unwrap()));
    let half = strategy_confidence_filter(&train, &syn, 0.5, &factory, &cfg).unwrap();
    let kept = &half[train.len()..];
    assert_eq!(kept.len(), 10);
    assert!(kept.iter().all(|d| d.id.starts_with("good")), "{:?}", ids(kept));
    let ten = &syn[..10];
    let k = strategy_confidence_filter(&train, ten, 0.5, &factory, &cfg).unwrap();
    assert_eq!(k.len() - train.len(), 5);
    assert!(strategy_confidence_filter(&train, &syn, 0.0, &factory, &cfg).is_err());
}

#[test]
fn run_augmentation_reports() {
    let split = common::small_split(600, 7);
    let g = common::quick_generator(&split, 7);
    let factory = ClassifierFactory::new(g.vocab().clone(), ClfConfig::default()).unwrap();
    let plan = AugmentationPlan { count: 30, seed: 2, ..Default::default() };
    let cfg = ClfTrainConfig::default();

    let (combined, rep) = run_augmentation(&split.train, &g, &plan, &Strategy::None, &factory, &cfg).unwrap();
    assert_eq!(combined, split.train);
    assert_eq!((rep.requested, rep.kept, rep.kl_control), (0, 0, false));
    assert_eq!(rep.note.as_deref(), Some("no augmentation"));

    let medaug = Strategy::Medaug { tau: 1.0, kl_scope: KlScope::AllSamples };
    let (combined, rep) = run_augmentation(&split.train, &g, &plan, &medaug, &factory, &cfg).unwrap();
    assert_eq!(combined.len(), split.train.len() + 30);
    assert!(rep.kl_control);
    assert_eq!(rep.kept, rep.realized);

    let filter = Strategy::ConfidenceFilter { keep_fraction: 0.4 };
    let (combined, rep) = run_augmentation(&split.train, &g, &plan, &filter, &factory, &cfg).unwrap();
    assert_eq!(rep.train_docs + rep.kept, rep.combined_docs);
    assert_eq!(rep.combined_docs, combined.len());
    assert_eq!((rep.requested, rep.realized, rep.kept), (30, 30, 12));
    assert_eq!(rep.filter_seed, Some(cfg.seed));
    let original = ids(&split.train);
    assert!(original.is_subset(&ids(&combined)));
    let json = serde_json::to_value(&rep).unwrap();
    assert_eq!(json["strategy"]["kind"], "confidence_filter");
}
