use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Precision, recall and F1 of a removal decision against the true defectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nothing was removed; precision reported as 0.
    #[serde(default, skip_serializing_if = "is_false")]
    pub precision_undefined: bool,
    /// No defectives in the training set; recall reported as 0.
    #[serde(default, skip_serializing_if = "is_false")]
    pub recall_undefined: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

pub fn refinement_prf<A: AsRef<str>, B: AsRef<str>>(removed: &[A], defective: &[B]) -> Prf {
    let truth: HashSet<&str> = defective.iter().map(AsRef::as_ref).collect();
    let removed: HashSet<&str> = removed.iter().map(AsRef::as_ref).collect();
    let hits = removed.iter().filter(|id| truth.contains(*id)).count() as f64;
    let precision_undefined = removed.is_empty();
    let recall_undefined = truth.is_empty();
    if precision_undefined {
        log::debug!("refinement removed no samples; precision reported as 0");
    }
    let precision = if precision_undefined { 0.0 } else { hits / removed.len() as f64 };
    let recall = if recall_undefined { 0.0 } else { hits / truth.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
    }
}
