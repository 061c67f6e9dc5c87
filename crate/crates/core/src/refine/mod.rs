//! Training-set refinement: drop the samples most likely to be pollutants.
//!
//! * **SROC** fits the refiner on the whole polluted set and removes the
//!   highest self-scores.
//! * **Random** removes a seeded uniform sample.
//! * **Cross-validation** scores each of `s` splits with a model fit on the
//!   other `s − 1`.
//! * **STOC** fits one model per split, scores every sample with all `s`
//!   models and averages. Single pass.
//!
//! All strategies remove `floor(ratio · N)` samples, highest score first, with
//! ties going to the earlier sample in manifest order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{fit, DetectorConfig, DetectorKind, FittedDetector};
use crate::error::{Error, Result};
use crate::metrics::{refinement_prf, Prf};
use crate::tensor::EmbeddingSet;

/// Absorbs round-off in `ratio · N` (e.g. `0.2 · 35` evaluating to 6.999…).
const COUNT_EPSILON: f64 = 1e-9;

pub const DEFAULT_SPLITS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[serde(alias = "SROC")]
    Sroc,
    #[serde(alias = "RANDOM")]
    Random,
    #[serde(alias = "CROSS_VALIDATION", alias = "cv")]
    CrossValidation,
    #[serde(alias = "STOC")]
    Stoc,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Sroc,
        Strategy::Random,
        Strategy::CrossValidation,
        Strategy::Stoc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Sroc => "sroc",
            Strategy::Random => "random",
            Strategy::CrossValidation => "cross_validation",
            Strategy::Stoc => "stoc",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sroc" => Ok(Strategy::Sroc),
            "random" => Ok(Strategy::Random),
            "cross_validation" | "cv" => Ok(Strategy::CrossValidation),
            "stoc" => Ok(Strategy::Stoc),
            other => Err(Error::Config(format!("unknown refinement strategy `{other}`"))),
        }
    }
}

fn default_splits() -> usize {
    DEFAULT_SPLITS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    pub strategy: Strategy,
    pub refinement_ratio: f64,
    #[serde(default = "default_splits")]
    pub splits: usize,
    /// Detector that produces the refinement scores.
    pub refiner: DetectorConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RefinementConfig {
    pub fn new(strategy: Strategy, refinement_ratio: f64, refiner: DetectorKind) -> Self {
        RefinementConfig {
            strategy,
            refinement_ratio,
            splits: DEFAULT_SPLITS,
            refiner: DetectorConfig::new(refiner),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.refinement_ratio;
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Config(format!("refinement ratio {r} outside [0, 1)")));
        }
        match self.strategy {
            Strategy::CrossValidation if self.splits < 2 => Err(Error::Config(format!(
                "cross-validation needs at least 2 splits, got {}",
                self.splits
            ))),
            Strategy::Stoc if self.splits < 1 => Err(Error::Config("STOC needs at least 1 split".into())),
            _ => Ok(()),
        }
    }
}

/// Result of one refinement. Id lists keep training-set order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    #[serde(rename = "kept")]
    pub kept_ids: Vec<String>,
    #[serde(rename = "removed")]
    pub removed_ids: Vec<String>,
    pub scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub prf: Option<Prf>,
}

impl RefinementOutcome {
    fn from_scores(train: &EmbeddingSet, scores: &[f64], count: usize) -> Self {
        let removed: HashSet<usize> = select_removals(scores, count).into_iter().collect();
        let ids = train.sample_ids();
        let (mut kept_ids, mut removed_ids) = (Vec::new(), Vec::new());
        for (i, id) in ids.iter().enumerate() {
            if removed.contains(&i) {
                removed_ids.push(id.clone());
            } else {
                kept_ids.push(id.clone());
            }
        }
        RefinementOutcome {
            kept_ids,
            removed_ids,
            scores: ids.iter().cloned().zip(scores.iter().copied()).collect(),
            prf: None,
        }
    }

    /// Fills `prf` from the ids known to be defective.
    pub fn with_ground_truth<S: AsRef<str>>(mut self, defective: &[S]) -> Self {
        self.prf = Some(refinement_prf(&self.removed_ids, defective));
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `floor(ratio · n)`; errors when that would remove every sample.
pub fn removal_count(ratio: f64, n: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!("refinement ratio {ratio} outside [0, 1)")));
    }
    let count = (ratio * n as f64 + COUNT_EPSILON).floor() as usize;
    if n > 0 && count >= n {
        return Err(Error::Config(format!("ratio {ratio} would remove all {n} samples")));
    }
    Ok(count)
}

/// Indices of the `count` highest scores, ties to the lower index.
pub fn select_removals(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    if count > 0 && count < order.len() && scores[order[count - 1]] == scores[order[count]] {
        log::info!(
            "score tie at the removal boundary ({}); kept the later samples",
            scores[order[count]]
        );
    }
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Seeded shuffle of `0..n` cut into `s` near-equal parts (sizes differ by at
/// most one); each part sorted ascending.
pub fn make_splits(n: usize, s: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if s == 0 {
        return Err(Error::Config("number of splits must be positive".into()));
    }
    if s > n {
        return Err(Error::insufficient("split partition", format!("{n} samples cannot fill {s} splits")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / s, n % s);
    let mut splits = Vec::with_capacity(s);
    let mut start = 0;
    for i in 0..s {
        let len = base + usize::from(i < extra);
        let mut part = perm[start..start + len].to_vec();
        part.sort_unstable();
        splits.push(part);
        start += len;
    }
    Ok(splits)
}

fn check_train(train: &EmbeddingSet, cfg: &RefinementConfig) -> Result<usize> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::insufficient("refinement", "empty training set"));
    }
    removal_count(cfg.refinement_ratio, train.len())
}

pub fn sroc(train: &EmbeddingSet, cfg: &RefinementConfig) -> Result<RefinementOutcome> {
    let count = check_train(train, cfg)?;
    let det = fit(&cfg.refiner, train)?;
    let scores = det.image_scores(train)?;
    Ok(RefinementOutcome::from_scores(train, &scores, count))
}

/// Every sample gets an i.i.d. uniform key; the top keys are removed, which is
/// a uniform draw without replacement.
pub fn random_refine(train: &EmbeddingSet, cfg: &RefinementConfig) -> Result<RefinementOutcome> {
    let count = check_train(train, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keys: Vec<f64> = (0..train.len()).map(|_| rng.random::<f64>()).collect();
    Ok(RefinementOutcome::from_scores(train, &keys, count))
}

pub fn cross_validation_refine(train: &EmbeddingSet, cfg: &RefinementConfig) -> Result<RefinementOutcome> {
    let count = check_train(train, cfg)?;
    let n = train.len();
    let splits = make_splits(n, cfg.splits, cfg.seed)?;
    let per_split = splits
        .par_iter()
        .map(|held_out| {
            let held: HashSet<usize> = held_out.iter().copied().collect();
            let rest: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
            let det = fit(&cfg.refiner, &train.subset(&rest))?;
            det.image_scores(&train.subset(held_out))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scores = vec![f64::NAN; n];
    for (held_out, s) in splits.iter().zip(per_split) {
        for (&i, v) in held_out.iter().zip(s) {
            scores[i] = v;
        }
    }
    Ok(RefinementOutcome::from_scores(train, &scores, count))
}

pub fn stoc_refine(train: &EmbeddingSet, cfg: &RefinementConfig) -> Result<RefinementOutcome> {
    let count = check_train(train, cfg)?;
    let splits = make_splits(train.len(), cfg.splits, cfg.seed)?;
    let per_model = splits
        .par_iter()
        .map(|part| fit(&cfg.refiner, &train.subset(part))?.image_scores(train))
        .collect::<Result<Vec<_>>>()?;
    let s = per_model.len() as f64;
    let scores: Vec<f64> = (0..train.len())
        .map(|i| per_model.iter().map(|m| m[i]).sum::<f64>() / s)
        .collect();
    Ok(RefinementOutcome::from_scores(train, &scores, count))
}

/// Dispatches on `cfg.strategy`.
pub fn refine(train: &EmbeddingSet, cfg: &RefinementConfig) -> Result<RefinementOutcome> {
    match cfg.strategy {
        Strategy::Sroc => sroc(train, cfg),
        Strategy::Random => random_refine(train, cfg),
        Strategy::CrossValidation => cross_validation_refine(train, cfg),
        Strategy::Stoc => stoc_refine(train, cfg),
    }
}

/// SROC with `refiner`, then `final_detector` fitted on the kept samples.
pub fn cross_detector_pipeline(
    train: &EmbeddingSet,
    refiner: &DetectorConfig,
    final_detector: &DetectorConfig,
    ratio: f64,
) -> Result<(RefinementOutcome, FittedDetector)> {
    let cfg = RefinementConfig {
        strategy: Strategy::Sroc,
        refinement_ratio: ratio,
        splits: DEFAULT_SPLITS,
        refiner: refiner.clone(),
        seed: 0,
    };
    let outcome = sroc(train, &cfg)?;
    let kept = train.subset_by_ids(&outcome.kept_ids)?;
    let det = fit(final_detector, &kept)?;
    Ok((outcome, det))
}
