//! Brute-force metric oracles, written independently of the library's
//! sort-based implementations.

#![allow(dead_code)]

/// Fraction of (positive, negative) pairs ranked correctly, ties ½.
pub fn auroc_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn distinct_desc(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

fn counts_at(scores: &[f64], labels: &[u8], t: f64) -> (usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    for (s, l) in scores.iter().zip(labels) {
        if *s >= t {
            if *l == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (tp, fp)
}

/// Step-sum average precision, recounting from scratch per threshold.
pub fn ap_step_sum(scores: &[f64], labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in distinct_desc(scores) {
        let (tp, fp) = counts_at(scores, labels, t);
        let recall = tp as f64 / pos;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Exhaustive threshold scan for recall at precision ≥ 0.8.
pub fn rp80_scan(scores: &[f64], labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut best = 0.0_f64;
    for t in distinct_desc(scores) {
        let (tp, fp) = counts_at(scores, labels, t);
        // compare as rationals to avoid rounding at exactly 0.8
        if tp * 5 >= (tp + fp) * 4 {
            best = best.max(tp as f64 / pos);
        }
    }
    best
}
