use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{class_counts, require_both_classes, CorpusSplit, LabeledDocument};
use crate::error::{invalid, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

/// Seeded shuffle, then contiguous partition. Valid and test sizes are
/// floored; the remainder goes to train.
pub fn make_split(docs: &[LabeledDocument], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    let sum = ratios.train + ratios.valid + ratios.test;
    if (sum - 1.0).abs() > 1e-9 || [ratios.train, ratios.valid, ratios.test].iter().any(|r| *r < 0.0) {
        return Err(invalid(format!("split ratios must be nonnegative and sum to 1, got {sum}")));
    }
    if docs.len() < 3 {
        return Err(invalid(format!("need at least 3 documents to split, got {}", docs.len())));
    }
    let n = docs.len();
    let n_valid = floor_share(n, ratios.valid);
    let n_test = floor_share(n, ratios.test);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(rng::derive(seed, "split")));
    let take = |range: std::ops::Range<usize>| order[range].iter().map(|&i| docs[i].clone()).collect();
    let n_train = n - n_valid - n_test;
    Ok(CorpusSplit {
        train: take(0..n_train),
        valid: take(n_train..n_train + n_valid),
        test: take(n_train + n_valid..n),
        synthetic: Vec::new(),
    })
}

fn floor_share(n: usize, ratio: f64) -> usize {
    // The epsilon keeps products like 10 * 0.1 from flooring to 0.
    ((n as f64) * ratio + 1e-9).floor() as usize
}

/// All minority-class documents plus an equal-size uniform sample of the
/// majority class, shuffled.
pub fn undersample_balanced(train: &[LabeledDocument], seed: u64) -> Result<Vec<LabeledDocument>> {
    require_both_classes(train, "under-sampling")?;
    let [neg, pos] = class_counts(train);
    let minority_label = u8::from(pos <= neg);
    let minority: Vec<&LabeledDocument> = train.iter().filter(|d| d.label == minority_label).collect();
    let majority: Vec<&LabeledDocument> = train.iter().filter(|d| d.label != minority_label).collect();
    let mut r = rng::seeded(rng::derive(seed, "undersample"));
    let mut picked = index::sample(&mut r, majority.len(), minority.len()).into_vec();
    picked.sort_unstable();
    let mut out: Vec<LabeledDocument> = minority
        .into_iter()
        .chain(picked.into_iter().map(|i| majority[i]))
        .cloned()
        .collect();
    out.shuffle(&mut r);
    Ok(out)
}
