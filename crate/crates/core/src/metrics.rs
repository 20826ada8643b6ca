//! Ranking metrics for imbalanced binary classification.
//!
//! * AUROC is the Mann-Whitney statistic with average ranks for ties.
//! * AUPRC is average precision: `sum_n (R_n - R_{n-1}) P_n` over the
//!   distinct score thresholds in descending order. No trapezoidal
//!   interpolation.
//! * RP80 is the best recall among thresholds with precision ≥ 0.8.
//!
//! A threshold `t` predicts positive for every score `>= t`; tied scores
//! are always grouped into one threshold.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Parallel scores and binary labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredPredictions {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let sp = Self { scores, labels };
        sp.validate()?;
        Ok(sp)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, u8)>) -> Result<Self> {
        let (scores, labels) = pairs.into_iter().unzip();
        Self::new(scores, labels)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.scores.len() != self.labels.len() {
            return Err(Error::Dimension {
                op: "ScoredPredictions",
                left: vec![self.scores.len()],
                right: vec![self.labels.len()],
            });
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(invalid("labels must be 0 or 1"));
        }
        if self.scores.iter().any(|s| s.is_nan()) {
            return Err(invalid("scores must not be NaN"));
        }
        Ok(())
    }

    fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    fn require_both(&self, metric: &str) -> Result<(usize, usize)> {
        self.validate()?;
        let pos = self.positives();
        let neg = self.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(invalid(format!(
                "{metric} needs both classes (positives {pos}, negatives {neg})"
            )));
        }
        Ok((pos, neg))
    }

    /// `(tp, fp)` counts at each distinct threshold, highest score first.
    fn threshold_counts(&self) -> Vec<(f64, usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (i, &idx) in order.iter().enumerate() {
            if self.labels[idx] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            let last_of_group = order
                .get(i + 1)
                .is_none_or(|&next| self.scores[next] != self.scores[idx]);
            if last_of_group {
                out.push((self.scores[idx], tp, fp));
            }
        }
        out
    }
}

pub fn auroc(sp: &ScoredPredictions) -> Result<f64> {
    let (pos, neg) = sp.require_both("AUROC")?;
    let mut order: Vec<usize> = (0..sp.len()).collect();
    order.sort_by(|&a, &b| sp.scores[a].total_cmp(&sp.scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && sp.scores[order[j + 1]] == sp.scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; a tie group shares its average rank.
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let group_pos = order[i..=j].iter().filter(|&&k| sp.labels[k] == 1).count();
        rank_sum += avg_rank * group_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn auprc(sp: &ScoredPredictions) -> Result<f64> {
    sp.validate()?;
    let pos = sp.positives();
    if pos == 0 {
        return Err(invalid("AUPRC needs at least one positive"));
    }
    let mut ap = 0.0;
    let mut prev_tp = 0;
    for (_, tp, fp) in sp.threshold_counts() {
        if tp > prev_tp {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (tp - prev_tp) as f64 / pos as f64 * precision;
            prev_tp = tp;
        }
    }
    Ok(ap)
}

/// Best recall at precision ≥ `min_precision`, or 0 if unattainable.
pub fn recall_at_precision(sp: &ScoredPredictions, min_precision: f64) -> Result<f64> {
    let (pos, _) = sp.require_both("recall at precision")?;
    let best = sp
        .threshold_counts()
        .into_iter()
        .filter(|&(_, tp, fp)| tp as f64 >= min_precision * (tp + fp) as f64)
        .map(|(_, tp, _)| tp)
        .max()
        .unwrap_or(0);
    Ok(best as f64 / pos as f64)
}

pub fn rp80(sp: &ScoredPredictions) -> Result<f64> {
    let (pos, _) = sp.require_both("RP80")?;
    // Integer form of tp / (tp + fp) >= 4/5.
    let best = sp
        .threshold_counts()
        .into_iter()
        .filter(|&(_, tp, fp)| 5 * tp >= 4 * (tp + fp))
        .map(|(_, tp, _)| tp)
        .max()
        .unwrap_or(0);
    Ok(best as f64 / pos as f64)
}

/// All three headline metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub auroc: f64,
    pub auprc: f64,
    pub rp80: f64,
}

pub fn evaluate(sp: &ScoredPredictions) -> Result<MetricSet> {
    Ok(MetricSet {
        auroc: auroc(sp)?,
        auprc: auprc(sp)?,
        rp80: rp80(sp)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// ROC points `(fpr, tpr)` from threshold `+inf` down to the lowest
/// score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<CurvePoint>,
}

/// PR points `(recall, precision)` from threshold `+inf` down to a `-inf`
/// sentinel where recall is 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<CurvePoint>,
}

pub fn roc_curve(sp: &ScoredPredictions) -> Result<RocCurve> {
    let (pos, neg) = sp.require_both("ROC curve")?;
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    points.extend(sp.threshold_counts().into_iter().map(|(t, tp, fp)| CurvePoint {
        threshold: t,
        x: fp as f64 / neg as f64,
        y: tp as f64 / pos as f64,
    }));
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].x - w[0].x) * (w[1].y + w[0].y) / 2.0)
            .sum()
    }
}

pub fn pr_curve(sp: &ScoredPredictions) -> Result<PrCurve> {
    let (pos, neg) = sp.require_both("PR curve")?;
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 1.0,
    }];
    points.extend(sp.threshold_counts().into_iter().map(|(t, tp, fp)| CurvePoint {
        threshold: t,
        x: tp as f64 / pos as f64,
        y: tp as f64 / (tp + fp) as f64,
    }));
    points.push(CurvePoint {
        threshold: f64::NEG_INFINITY,
        x: 1.0,
        y: pos as f64 / (pos + neg) as f64,
    });
    Ok(PrCurve { points })
}

/// Writes `threshold,x,y` rows with a header.
pub fn write_curve_csv(points: &[CurvePoint], path: &Path) -> Result<()> {
    crate::io::write_atomic(path, |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["threshold", "x", "y"])?;
        for p in points {
            w.write_record([p.threshold.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn curve_csv_string(points: &[CurvePoint]) -> String {
    let mut out = Vec::new();
    writeln!(out, "threshold,x,y").expect("in-memory write");
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.x, p.y).expect("in-memory write");
    }
    String::from_utf8(out).expect("ascii")
}
