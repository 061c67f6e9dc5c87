use serde::Serialize;

use crate::error::{Error, Result};

/// ROC curve with one step per distinct score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Distinct scores, descending. Point `t + 1` predicts `score >= thresholds[t]`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

impl RocCurve {
    /// `labels[i]` is true for defective samples.
    pub fn compute(scores: &[f64], labels: &[bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: labels.len(),
            });
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                context: "ROC scores".into(),
                index,
            });
        }
        let pos = labels.iter().filter(|&&l| l).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::insufficient(
                "ROC AUC",
                format!("need both classes, got {pos} defective and {neg} healthy"),
            ));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

        let mut curve = RocCurve {
            thresholds: Vec::new(),
            fpr: vec![0.0],
            tpr: vec![0.0],
        };
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < order.len() {
            let s = scores[order[i]];
            while i < order.len() && scores[order[i]] == s {
                if labels[order[i]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            curve.thresholds.push(s);
            curve.fpr.push(fp as f64 / neg as f64);
            curve.tpr.push(tp as f64 / pos as f64);
        }
        Ok(curve)
    }

    pub fn auc(&self) -> f64 {
        trapezoid(&self.fpr, &self.tpr)
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) * 0.5)
        .sum()
}

/// Area under the ROC curve; equal scores form a single threshold step.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(RocCurve::compute(scores, labels)?.auc())
}
