use medaug::corpus::{build_vocab, encode_labeled, LabeledDocument, Origin, Vocabulary};
use medaug::genlm::{
    lm_finetune, lm_train, perplexity, perplexity_of_sequences, sample, GenConfig, GeneratorModel, LmTrainConfig,
    PromptSpec,
};
use medaug::tensor::{grad_check_params, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vocab_of(n: usize) -> Vocabulary {
    let tokens = Vocabulary::RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain((0..n).map(|i| format!("w{i}")))
        .collect();
    Vocabulary::from_tokens(tokens, 1)
}

fn tiny() -> GenConfig {
    GenConfig {
        d_model: 8,
        heads: 2,
        layers: 1,
        context: 16,
    }
}

#[test]
fn full_model_gradient_check_tiny_config() {
    for seed in 0..3 {
        let model = GeneratorModel::new(vocab_of(6), tiny(), seed).unwrap();
        // Larger weights than the default init so every path is exercised.
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<Tensor> = model
            .params()
            .iter()
            .map(|p| {
                let noise = Tensor::randn(p.shape(), 0.3, &mut r);
                Tensor::new(p.shape(), p.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect()).unwrap()
            })
            .collect();
        let seqs: Vec<Vec<usize>> = vec![vec![5, 2, 7, 8, 3], vec![4, 2, 9, 3]];
        let err = grad_check_params(
            |g: &mut Graph, vars: &[Var]| {
                let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
                model.sequence_loss(g, vars, &refs)
            },
            &params,
        )
        .unwrap();
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn attention_is_causal() {
    let model = GeneratorModel::new(vocab_of(20), tiny(), 3).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let seq: Vec<usize> = (0..12).map(|_| r.random_range(0..26)).collect();
        let base = model.logits(&seq).unwrap();
        let t = r.random_range(0..11);
        let mut changed = seq.clone();
        for tok in changed.iter_mut().skip(t + 1) {
            *tok = (*tok + 1 + r.random_range(0..5)) % 26;
        }
        let other = model.logits(&changed).unwrap();
        for pos in 0..=t {
            assert_eq!(base.row(pos), other.row(pos), "position {pos} changed");
        }
    }
}

#[test]
fn decoder_matches_full_forward() {
    let model = GeneratorModel::new(vocab_of(30), GenConfig { d_model: 16, heads: 4, layers: 2, context: 32 }, 9).unwrap();
    let seq = [5, 2, 10, 11, 12, 30, 7, 8];
    let full = model.logits(&seq).unwrap();
    let mut dec = model.decoder();
    for (i, &t) in seq.iter().enumerate() {
        let step = dec.step(t).unwrap();
        assert_eq!(step.as_slice(), full.row(i));
    }
}

#[test]
fn memorizes_a_single_sequence() {
    let mut model = GeneratorModel::new(vocab_of(12), GenConfig { d_model: 16, heads: 2, layers: 1, context: 16 }, 1).unwrap();
    let seq: Vec<usize> = vec![5, 2, 6, 9, 7, 12, 8, 15, 10, 3];
    let cfg = LmTrainConfig { epochs: 200, lr: 1e-2, batch_size: 1, grad_clip: 1.0, seed: 0 };
    let hist = lm_train(&mut model, std::slice::from_ref(&seq), &cfg).unwrap();
    assert!(*hist.steps.last().unwrap() < 0.1, "final loss {}", hist.steps.last().unwrap());
    let ppl = perplexity_of_sequences(&model, &[seq]).unwrap();
    assert!(ppl < 1.1, "{ppl}");
}

#[test]
fn untrained_perplexity_near_vocab_size() {
    let v = vocab_of(94);
    let model = GeneratorModel::new(v.clone(), GenConfig::default(), 2).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let seqs: Vec<Vec<usize>> = (0..20).map(|_| (0..30).map(|_| r.random_range(0..v.len())).collect()).collect();
    let ppl = perplexity_of_sequences(&model, &seqs).unwrap();
    assert!((ppl - 100.0).abs() < 10.0, "{ppl}");

    let mut zero = model.clone();
    zero.params_mut().iter_mut().for_each(|p| p.data_mut().iter_mut().for_each(|x| *x = 0.0));
    let ppl = perplexity_of_sequences(&zero, &seqs).unwrap();
    assert!((ppl - 100.0).abs() < 1e-9, "{ppl}");
}

#[test]
fn rejects_sequences_longer_than_context() {
    let mut model = GeneratorModel::new(vocab_of(5), tiny(), 0).unwrap();
    let long = vec![6; 17];
    assert!(lm_train(&mut model, &[long], &LmTrainConfig::default()).is_err());
}

#[test]
fn training_is_bitwise_reproducible() {
    let run = || {
        let mut m = GeneratorModel::new(vocab_of(10), tiny(), 4).unwrap();
        let seqs = vec![vec![5, 2, 6, 7, 3], vec![4, 2, 8, 9, 10, 3]];
        let cfg = LmTrainConfig { epochs: 5, batch_size: 1, ..Default::default() };
        let h = lm_train(&mut m, &seqs, &cfg).unwrap();
        (m.params_hash(), h)
    };
    assert_eq!(run(), run());
}

fn toy_docs() -> Vec<LabeledDocument> {
    let mut docs = Vec::new();
    for i in 0..40 {
        let (label, text) = if i % 5 == 0 { (1, "alpha beta gamma alpha") } else { (0, "delta epsilon zeta delta") };
        docs.push(LabeledDocument::new(format!("d{i}"), label, text, Origin::Original).unwrap());
    }
    docs
}

#[test]
fn finetune_balanced_undersamples() {
    let docs = toy_docs();
    let vocab = build_vocab(&docs, 1).unwrap();
    let cfg = LmTrainConfig { epochs: 1, ..Default::default() };
    let mut m = GeneratorModel::new(vocab.clone(), tiny(), 0).unwrap();
    let rep = lm_finetune(&mut m, &docs, true, &cfg).unwrap();
    assert_eq!((rep.positives, rep.negatives, rep.docs_used), (8, 8, 16));
    let mut m2 = GeneratorModel::new(vocab, tiny(), 0).unwrap();
    let rep = lm_finetune(&mut m2, &docs, false, &cfg).unwrap();
    assert_eq!(rep.docs_used, 40);
}

#[test]
fn finetune_same_seed_same_params() {
    let docs = toy_docs();
    let vocab = build_vocab(&docs, 1).unwrap();
    let cfg = LmTrainConfig { epochs: 2, ..Default::default() };
    let run = || {
        let mut m = GeneratorModel::new(vocab.clone(), tiny(), 0).unwrap();
        lm_finetune(&mut m, &docs, true, &cfg).unwrap();
        m
    };
    assert_eq!(run().params(), run().params());
}

#[test]
fn conditioning_on_toy_corpus_and_sampling_contract() {
    let docs = toy_docs();
    let vocab = build_vocab(&docs, 1).unwrap();
    let mut m = GeneratorModel::new(vocab.clone(), GenConfig { d_model: 16, heads: 2, layers: 1, context: 16 }, 0).unwrap();
    let cfg = LmTrainConfig { epochs: 30, lr: 1e-2, batch_size: 8, ..Default::default() };
    lm_finetune(&mut m, &docs, true, &cfg).unwrap();

    let mut prompt = PromptSpec::new(1, vec![], 0);
    prompt.max_len = 16;
    prompt.temperature = 1e-9;
    let a = sample(&m, &prompt).unwrap();
    let b = sample(&m, &prompt).unwrap();
    assert_eq!(a, b);
    assert!(a.text.starts_with("alpha"), "{}", a.text);
    let mut neg = prompt.clone();
    neg.label = 0;
    assert!(sample(&m, &neg).unwrap().text.starts_with("delta"));

    prompt.temperature = 1.0;
    for seed in 0..50 {
        prompt.seed = seed;
        let s = sample(&m, &prompt).unwrap();
        assert!(s.ids.iter().all(|&t| !matches!(t, 0 | 1 | 2 | 4 | 5)));
        assert!(s.ids.len() + 2 <= 16);
    }

    let ctx = PromptSpec { context: vec!["alpha".into(), "beta".into()], ..prompt.clone() };
    assert!(sample(&m, &ctx).unwrap().text.starts_with("alpha beta"));
    let bad = PromptSpec { temperature: 0.0, ..prompt.clone() };
    assert!(sample(&m, &bad).is_err());
    let bad = PromptSpec { top_k: 0, ..prompt.clone() };
    assert!(sample(&m, &bad).is_err());
    let bad = PromptSpec { max_len: 17, ..prompt };
    assert!(sample(&m, &bad).is_err());

    let ppl = perplexity(&m, &docs).unwrap();
    assert!(ppl < 3.0, "{ppl}");
}

#[test]
fn checkpoint_round_trip_bitwise() {
    let m = GeneratorModel::new(vocab_of(7), tiny(), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.maug");
    m.save(&p).unwrap();
    let back = GeneratorModel::load(&p).unwrap();
    assert_eq!(back, m);
    assert_eq!(std::fs::read(&p).unwrap(), back.to_checkpoint().to_bytes());
}

#[test]
fn encode_then_train_uses_label_prefix() {
    let d = LabeledDocument::new("x", 1, "w1 w2", Origin::Original).unwrap();
    let v = vocab_of(3);
    assert_eq!(encode_labeled(&d, &v, 16).unwrap()[..2], [Vocabulary::LBL1, Vocabulary::SEP]);
}
