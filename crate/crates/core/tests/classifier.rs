use medaug::classifier::*;
use medaug::corpus::{build_vocab, LabeledDocument, Origin};
use medaug::tensor::{grad_check_params, Tensor};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

/// Label 1 iff the document contains the word "signal".
fn separable(n: usize, seed: u64) -> Vec<LabeledDocument> {
    let words = ["the", "patient", "was", "seen", "today", "stable", "notes", "plan"];
    let mut r = medaug::rng::seeded(seed);
    (0..n)
        .map(|i| {
            let label = u8::from(r.random_bool(0.3));
            let len = r.random_range(4..10);
            let mut toks: Vec<&str> = (0..len).map(|_| *words.choose(&mut r).unwrap()).collect();
            if label == 1 {
                let at = r.random_range(0..=toks.len());
                toks.insert(at, "signal");
            }
            LabeledDocument::new(format!("s{i:04}"), label, toks.join(" "), Origin::Original).unwrap()
        })
        .collect()
}

fn fresh(docs: &[LabeledDocument], cfg: ClfConfig, seed: u64) -> ClassifierModel {
    ClassifierModel::new(build_vocab(docs, 1).unwrap(), cfg, seed).unwrap()
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let docs = separable(6, 3);
    let cfg = ClfConfig { embed_dim: 4, hidden_dim: 3, max_tokens: 16 };
    for seed in 0..3 {
        let m = fresh(&docs, cfg, seed);
        let enc: Vec<Vec<usize>> = docs.iter().map(|d| m.encode(&d.text)).collect();
        let refs: Vec<&[usize]> = enc.iter().map(Vec::as_slice).collect();
        let labels: Vec<usize> = docs.iter().map(|d| d.label as usize).collect();
        let weights = [0.5, 1.0, 2.0, 0.0, 1.5, 1.0];
        let err = grad_check_params(|g, p| m.loss(g, p, &refs, &labels, Some(&weights)), m.params()).unwrap();
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn separable_corpus_is_learned() {
    let docs = separable(300, 1);
    let mut m = fresh(&docs, ClfConfig::default(), 0);
    let cfg = ClfTrainConfig { epochs: 15, ..Default::default() };
    let h = clf_train(&mut m, &docs, &cfg, None).unwrap();
    assert!(h.epochs.last().unwrap().student < h.epochs[0].student);
    let correct = docs.iter().filter(|d| (m.predict_proba(d)[1] > 0.5) == (d.label == 1)).count();
    assert!(correct as f64 / docs.len() as f64 >= 0.99, "accuracy {correct}/300");
    for d in docs.iter().filter(|d| d.label == 1) {
        assert!(m.predict_proba(d)[1] > 0.9);
    }
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let docs = separable(50, 2);
    let mut m = fresh(&docs, ClfConfig::default(), 5);
    let before = m.clone();
    clf_train(&mut m, &docs, &ClfTrainConfig::default(), Some(&vec![0.0; docs.len()])).unwrap();
    assert_eq!(m, before);
}

#[test]
fn unit_weights_equal_unweighted_bitwise() {
    let docs = separable(80, 4);
    let cfg = ClfTrainConfig { epochs: 3, ..Default::default() };
    let mut a = fresh(&docs, ClfConfig::default(), 1);
    let mut b = a.clone();
    let ha = clf_train(&mut a, &docs, &cfg, None).unwrap();
    let hb = clf_train(&mut b, &docs, &cfg, Some(&vec![1.0; docs.len()])).unwrap();
    assert_eq!(a.params_hash(), b.params_hash());
    assert_eq!(ha, hb);
}

#[test]
fn same_seed_same_history() {
    let docs = separable(80, 4);
    let cfg = ClfTrainConfig { epochs: 2, seed: 9, ..Default::default() };
    let run = || {
        let mut m = fresh(&docs, ClfConfig::default(), 2);
        let h = clf_train(&mut m, &docs, &cfg, None).unwrap();
        (h, m.params_hash())
    };
    assert_eq!(run(), run());
    let mut m = fresh(&docs, ClfConfig::default(), 2);
    let other = clf_train(&mut m, &docs, &ClfTrainConfig { seed: 10, ..cfg }, None).unwrap();
    assert_ne!(other, run().0);
}

#[test]
fn score_corpus_mirrors_predict_proba() {
    let docs = separable(40, 6);
    let m = fresh(&docs, ClfConfig::default(), 3);
    let sp = score_corpus(&m, &docs).unwrap();
    assert_eq!(sp.len(), docs.len());
    for (i, d) in docs.iter().enumerate() {
        assert_eq!(sp.scores[i], m.predict_proba(d)[1]);
        assert_eq!(sp.labels[i], d.label);
    }
    assert!(score_corpus(&m, &[]).unwrap().is_empty());
}

#[test]
fn checkpoint_round_trip() {
    let docs = separable(40, 6);
    let mut m = fresh(&docs, ClfConfig::default(), 3);
    clf_train(&mut m, &docs, &ClfTrainConfig { epochs: 1, ..Default::default() }, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.maug");
    m.save(&path).unwrap();
    let back = ClassifierModel::load(&path).unwrap();
    assert_eq!(back, m);
    assert!(medaug::genlm::GeneratorModel::load(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_sum_to_one_and_ignore_order(seed in 0u64..1000, shuffle_seed in 0u64..1000) {
        let docs = separable(20, seed);
        let m = fresh(&docs, ClfConfig { embed_dim: 8, hidden_dim: 8, max_tokens: 64 }, seed);
        let mut r = medaug::rng::seeded(shuffle_seed);
        for d in &docs {
            let p = m.predict_proba(d);
            prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-12);
            let mut toks: Vec<String> = d.tokens().collect();
            toks.shuffle(&mut r);
            let q = m.predict_proba(&LabeledDocument { text: toks.join(" "), ..d.clone() });
            prop_assert!((p[1] - q[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn graph_forward_matches_fast_path(seed in 0u64..1000) {
        let docs = separable(8, seed);
        let m = fresh(&docs, ClfConfig { embed_dim: 6, hidden_dim: 5, max_tokens: 64 }, seed);
        let enc: Vec<Vec<usize>> = docs.iter().map(|d| m.encode(&d.text)).collect();
        let refs: Vec<&[usize]> = enc.iter().map(Vec::as_slice).collect();
        let mut g = medaug::tensor::Graph::new();
        let vars: Vec<_> = m.params().iter().map(|p| g.constant(p.clone())).collect();
        let logits = m.forward(&mut g, &vars, &refs).unwrap();
        let probs: Tensor = g.value(logits).softmax_rows();
        for (i, d) in docs.iter().enumerate() {
            prop_assert!((probs.get(i, 1) - m.predict_proba(d)[1]).abs() <= 1e-12);
        }
    }
}
