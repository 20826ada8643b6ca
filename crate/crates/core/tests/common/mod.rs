#![allow(dead_code)]

pub mod oracles;

use medaug::corpus::{build_vocab, make_split, synth_benchmark, CorpusSplit, SplitRatios, SynthBenchSpec};
use medaug::genlm::{lm_finetune, GenConfig, GeneratorModel, LmTrainConfig};

/// Small benchmark split for fast end-to-end tests.
pub fn small_split(num_docs: usize, seed: u64) -> CorpusSplit {
    let spec = SynthBenchSpec { num_docs, seed, ..Default::default() };
    make_split(&synth_benchmark(&spec).unwrap(), SplitRatios::default(), seed).unwrap()
}

/// Quickly fine-tuned small generator; fluent enough to sample from.
pub fn quick_generator(split: &CorpusSplit, seed: u64) -> GeneratorModel {
    let vocab = build_vocab(&split.train, 1).unwrap();
    let cfg = GenConfig { d_model: 32, heads: 2, layers: 1, context: 64 };
    let mut g = GeneratorModel::new(vocab, cfg, seed).unwrap();
    lm_finetune(&mut g, &split.train, true, &LmTrainConfig { epochs: 1, seed, ..Default::default() }).unwrap();
    g
}
