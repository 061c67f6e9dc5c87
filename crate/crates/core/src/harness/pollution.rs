//! Building contaminated training sets.
//!
//! A pool of `floor(0.2 · N)` defective validation images is withheld from
//! validation, with per-defect-type counts proportional to the validation
//! defect mix. `floor(ratio · N)` training images are then replaced by pool
//! images, so the training set keeps size `N`.
//!
//! The pool and both permutations depend only on `(category, seed)`, so plans
//! for increasing ratios are nested and share the same validation set.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::seeds::derive_seed;
use crate::error::{Error, Result};
use crate::tensor::{Manifest, Split};

/// Pool size as a fraction of the training set.
pub const POOL_FRACTION: f64 = 0.2;
/// Highest pollution ratio the pool can supply.
pub const MAX_POLLUTION: f64 = POOL_FRACTION;
/// Defect type recorded for defective samples without one.
pub const UNSPECIFIED_TYPE: &str = "unspecified";

const COUNT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutionPlan {
    pub category: String,
    pub pollution_ratio: f64,
    pub seed: u64,
    /// Contaminated training set, in manifest order.
    pub train_ids: Vec<String>,
    /// Validation set with the pool removed, in manifest order.
    pub val_ids: Vec<String>,
    /// Withheld defective validation images, in manifest order.
    pub pollution_pool: Vec<String>,
    /// Pool composition by defect type (largest-remainder rounding).
    pub pool_type_counts: BTreeMap<String, usize>,
    /// Original training images taken out, in manifest order.
    pub replaced_train_ids: Vec<String>,
    /// Pool images put into the training set, in manifest order.
    pub injected_ids: Vec<String>,
}

impl PollutionPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Splits `total` proportionally to `weights` (largest remainder, ties by key).
pub fn largest_remainder(weights: &BTreeMap<String, usize>, total: usize) -> BTreeMap<String, usize> {
    let sum: usize = weights.values().sum();
    if sum == 0 {
        return weights.keys().map(|k| (k.clone(), 0)).collect();
    }
    let mut out = BTreeMap::new();
    let mut remainders = Vec::new();
    let mut assigned = 0;
    for (key, &w) in weights {
        // exact integer arithmetic: quota = total·w / sum
        let num = total * w;
        let floor = num / sum;
        out.insert(key.clone(), floor);
        assigned += floor;
        remainders.push((num % sum, key.clone()));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    for (_, key) in remainders.into_iter().take(total - assigned) {
        *out.get_mut(&key).unwrap() += 1;
    }
    out
}

pub fn build_pollution_plan(
    manifest: &Manifest,
    category: &str,
    pollution_ratio: f64,
    seed: u64,
) -> Result<PollutionPlan> {
    if !(0.0..=MAX_POLLUTION).contains(&pollution_ratio) {
        return Err(Error::Config(format!(
            "pollution ratio {pollution_ratio} outside [0, {MAX_POLLUTION}]"
        )));
    }
    let train: Vec<usize> = (0..manifest.len())
        .filter(|&i| manifest.records[i].split == Split::Train)
        .collect();
    let n = train.len();
    if n == 0 {
        return Err(Error::CategoryExcluded {
            category: category.to_string(),
            reason: "no training samples".into(),
        });
    }
    let pool_size = (POOL_FRACTION * n as f64 + COUNT_EPSILON).floor() as usize;
    let mut by_type: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        if r.split == Split::Val && r.label.is_defective() {
            let t = r.defect_type.clone().unwrap_or_else(|| UNSPECIFIED_TYPE.to_string());
            by_type.entry(t).or_default().push(i);
        }
    }
    let available: usize = by_type.values().map(Vec::len).sum();
    if available < pool_size + 1 {
        return Err(Error::CategoryExcluded {
            category: category.to_string(),
            reason: format!(
                "{available} defective validation images, need at least {} for a pool of {pool_size}",
                pool_size + 1
            ),
        });
    }
    let weights: BTreeMap<String, usize> = by_type.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let pool_type_counts = largest_remainder(&weights, pool_size);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, category, 0));
    let mut pool: Vec<usize> = Vec::with_capacity(pool_size);
    for (t, members) in &by_type {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        pool.extend_from_slice(&members[..pool_type_counts[t]]);
    }
    pool.sort_unstable();

    let count = (pollution_ratio * n as f64 + COUNT_EPSILON).floor() as usize;
    let mut inject_order = pool.clone();
    inject_order.shuffle(&mut rng);
    let mut replace_order = train.clone();
    replace_order.shuffle(&mut rng);
    let mut injected: Vec<usize> = inject_order[..count].to_vec();
    let mut replaced: Vec<usize> = replace_order[..count].to_vec();
    injected.sort_unstable();
    replaced.sort_unstable();

    let replaced_set: HashSet<usize> = replaced.iter().copied().collect();
    let pool_set: HashSet<usize> = pool.iter().copied().collect();
    let mut new_train: Vec<usize> = train.iter().copied().filter(|i| !replaced_set.contains(i)).collect();
    new_train.extend_from_slice(&injected);
    new_train.sort_unstable();
    let val: Vec<usize> = (0..manifest.len())
        .filter(|&i| manifest.records[i].split == Split::Val && !pool_set.contains(&i))
        .collect();

    let ids = |v: &[usize]| v.iter().map(|&i| manifest.records[i].id.clone()).collect::<Vec<_>>();
    Ok(PollutionPlan {
        category: category.to_string(),
        pollution_ratio,
        seed,
        train_ids: ids(&new_train),
        val_ids: ids(&val),
        pollution_pool: ids(&pool),
        pool_type_counts,
        replaced_train_ids: ids(&replaced),
        injected_ids: ids(&injected),
    })
}
