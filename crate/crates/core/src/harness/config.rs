//! Sweep configuration, read from JSON.
//!
//! ```json
//! {
//!   "categories": [{"name": "carpet", "manifest": "carpet/manifest.json",
//!                   "levels": ["carpet/level_4.npy", "carpet/level_6.npy"]}],
//!   "detectors": ["knn", {"kind": "patchcore", "nprobe": 8}],
//!   "pollution_ratios": [0.0, 0.1, 0.2],
//!   "seeds": [0, 1, 2, 3, 4]
//! }
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::detectors::{DetectorConfig, DetectorKind};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_FPR_CAP;
use crate::refine::{Strategy, DEFAULT_SPLITS};

use super::pollution::MAX_POLLUTION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySource {
    pub name: String,
    pub manifest: PathBuf,
    pub levels: Vec<PathBuf>,
    /// Resolution of pixel maps; defaults to the size of the first mask.
    #[serde(default)]
    pub image_size: Option<(usize, usize)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DetectorSpec {
    Kind(DetectorKind),
    Full(DetectorConfig),
}

fn detector_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<DetectorConfig>, D::Error> {
    let specs = Vec::<DetectorSpec>::deserialize(d)?;
    Ok(specs
        .into_iter()
        .map(|s| match s {
            DetectorSpec::Kind(k) => DetectorConfig::new(k),
            DetectorSpec::Full(c) => c,
        })
        .collect())
}

fn all_detectors() -> Vec<DetectorConfig> {
    DetectorKind::ALL.iter().map(|&k| DetectorConfig::new(k)).collect()
}
fn default_pollution_ratios() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.15, 0.2]
}
fn default_refinement_pollution() -> f64 {
    0.2
}
fn default_refinement_ratios() -> Vec<f64> {
    (0..=8).map(|i| i as f64 / 10.0).collect()
}
fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}
fn default_splits() -> usize {
    DEFAULT_SPLITS
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_fpr_cap() -> f64 {
    DEFAULT_FPR_CAP
}
fn default_sigma() -> f64 {
    4.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub categories: Vec<CategorySource>,
    #[serde(default = "all_detectors", deserialize_with = "detector_list")]
    pub detectors: Vec<DetectorConfig>,
    #[serde(default = "default_pollution_ratios")]
    pub pollution_ratios: Vec<f64>,
    /// Pollution used by the refinement sweep.
    #[serde(default = "default_refinement_pollution")]
    pub refinement_pollution: f64,
    #[serde(default = "default_refinement_ratios")]
    pub refinement_ratios: Vec<f64>,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    /// Refinement scorer; `None` refines with the detector being evaluated.
    #[serde(default)]
    pub refiner: Option<DetectorConfig>,
    #[serde(default = "default_splits")]
    pub splits: usize,
    /// Seed values, reused for every ratio.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_fpr_cap")]
    pub fpr_cap: f64,
    /// Gaussian smoothing of pixel maps, in image pixels.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "yes")]
    pub pixel_metrics: bool,
    /// When set, capped IoU and PRO curves are written here per cell.
    #[serde(default)]
    pub curves_dir: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut self.categories {
            join(&mut c.manifest);
            c.levels.iter_mut().for_each(join);
        }
        if let Some(d) = self.curves_dir.as_mut() {
            join(d);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.categories.is_empty() {
            return fail("no categories configured".into());
        }
        for c in &self.categories {
            if c.levels.is_empty() {
                return fail(format!("category `{}` lists no level files", c.name));
            }
        }
        if self.detectors.is_empty() || self.seeds.is_empty() {
            return fail("detectors and seeds must be non-empty".into());
        }
        for &r in self.pollution_ratios.iter().chain([&self.refinement_pollution]) {
            if !(0.0..=MAX_POLLUTION).contains(&r) {
                return fail(format!("pollution ratio {r} outside [0, {MAX_POLLUTION}]"));
            }
        }
        for &r in &self.refinement_ratios {
            if !(0.0..1.0).contains(&r) {
                return fail(format!("refinement ratio {r} outside [0, 1)"));
            }
        }
        if self.splits == 0 {
            return fail("splits must be positive".into());
        }
        if !(self.fpr_cap > 0.0 && self.fpr_cap <= 1.0) {
            return fail(format!("FPR cap {} outside (0, 1]", self.fpr_cap));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return fail(format!("sigma {} must be non-negative", self.sigma));
        }
        Ok(())
    }
}
