//! Robustness and refinement sweeps over (category, detector, ratio, seed).

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use super::config::{CategorySource, SweepConfig};
use super::masks::load_mask;
use super::pollution::{build_pollution_plan, PollutionPlan};
use super::report::{ExperimentReport, ReportRow, NO_REFINEMENT, STATUS_OK};
use super::seeds::derive_seed;
use crate::detectors::{fit, DetectorConfig, FittedDetector, PixelMapConfig};
use crate::error::{Error, Result};
use crate::metrics::{pixel_curves, roc_auc, PixelCurves};
use crate::refine::{refine, RefinementConfig, Strategy};
use crate::tensor::{load_embedding_set, EmbeddingSet, Manifest, Split};

/// Environment variable that sets the worker count.
pub const WORKERS_ENV: &str = "SROC_WORKERS";

/// Workers from `SROC_WORKERS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` inside a rayon pool of [`worker_count`] threads.
pub fn with_worker_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// One category's embeddings and ground truth, loaded once per sweep.
#[derive(Debug, Clone)]
pub struct CategoryData {
    pub name: String,
    pub manifest: Manifest,
    pub set: EmbeddingSet,
    /// Masks of all validation images, when every defective one has a mask.
    pub masks: Option<HashMap<String, Array2<bool>>>,
    pub image_size: Option<(usize, usize)>,
}

impl CategoryData {
    pub fn load(source: &CategorySource, want_masks: bool) -> Result<Self> {
        let (manifest, set) = load_embedding_set(&source.manifest, &source.levels)?;
        let mut data = CategoryData {
            name: source.name.clone(),
            manifest,
            set,
            masks: None,
            image_size: source.image_size,
        };
        if want_masks {
            data.load_masks()?;
        }
        Ok(data)
    }

    fn load_masks(&mut self) -> Result<()> {
        let mut loaded = HashMap::new();
        for r in self.manifest.records.iter().filter(|r| r.split == Split::Val) {
            if let Some(path) = self.manifest.mask_path(r) {
                let mask = load_mask(&path)?;
                let size = *self.image_size.get_or_insert(mask.dim());
                if mask.dim() != size {
                    return Err(Error::ShapeMismatch {
                        path,
                        reason: format!("mask is {:?}, expected {:?}", mask.dim(), size),
                    });
                }
                loaded.insert(r.id.clone(), mask);
            } else if r.label.is_defective() {
                log::warn!("{}: defective sample {} has no mask; pixel metrics disabled", self.name, r.id);
                return Ok(());
            }
        }
        let Some(size) = self.image_size else {
            return Ok(());
        };
        for r in self.manifest.records.iter().filter(|r| r.split == Split::Val) {
            loaded.entry(r.id.clone()).or_insert_with(|| Array2::from_elem(size, false));
        }
        self.masks = Some(loaded);
        Ok(())
    }

    pub fn labels(&self, ids: &[String]) -> Vec<bool> {
        ids.iter()
            .map(|id| self.manifest.get(id).is_some_and(|r| r.label.is_defective()))
            .collect()
    }
}

/// Image AUC plus pixel curves when available.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub auc: f64,
    pub pixel: Option<PixelCurves>,
}

/// Scores `test` with `det` and computes every applicable metric.
pub fn evaluate(det: &FittedDetector, data: &CategoryData, test_ids: &[String], cfg: &SweepConfig) -> Result<Evaluation> {
    let test = data.set.subset_by_ids(test_ids)?;
    let labels = data.labels(test_ids);
    let masks = match (&data.masks, cfg.pixel_metrics && det.kind().has_pixel_maps()) {
        (Some(m), true) => Some(m),
        _ => None,
    };
    let Some(masks) = masks else {
        let scores = det.image_scores(&test)?;
        return Ok(Evaluation {
            auc: roc_auc(&scores, &labels)?,
            pixel: None,
        });
    };
    let det = det.clone().with_pixel_config(PixelMapConfig {
        image_size: data.image_size,
        sigma: cfg.sigma,
    });
    let maps = det.score_set(&test)?;
    let scores: Vec<f64> = maps.iter().map(|m| m.image_score).collect();
    let auc = roc_auc(&scores, &labels)?;
    let pixel_scores: Vec<Array2<f64>> = maps.into_iter().filter_map(|m| m.pixel_scores).collect();
    let gt: Vec<Array2<bool>> = test_ids.iter().map(|id| masks[id].clone()).collect();
    let pixel = match pixel_curves(&pixel_scores, &gt, cfg.fpr_cap) {
        Ok(c) => Some(c),
        Err(Error::InsufficientData { reason, .. }) => {
            log::warn!("{}: pixel metrics skipped: {reason}", data.name);
            None
        }
        Err(e) => return Err(e),
    };
    Ok(Evaluation { auc, pixel })
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    category: usize,
    detector: usize,
    strategy: Option<Strategy>,
    pollution: f64,
    refinement: f64,
    seed: u64,
}

impl Cell {
    fn file_stem(&self, cfg: &SweepConfig) -> String {
        format!(
            "{}_{}_{}_p{}_r{}_s{}",
            cfg.categories[self.category].name,
            cfg.detectors[self.detector].kind,
            self.strategy.map_or(NO_REFINEMENT, Strategy::as_str),
            self.pollution,
            self.refinement,
            self.seed
        )
    }
}

struct CellMetrics {
    eval: Evaluation,
    prf: Option<crate::metrics::Prf>,
}

fn detector_for(cfg: &DetectorConfig, category: &str, seed: u64) -> DetectorConfig {
    let mut c = cfg.clone();
    c.seed = derive_seed(seed, category, 2).wrapping_add(cfg.seed);
    c
}

fn run_cell(cell: &Cell, data: &CategoryData, cfg: &SweepConfig) -> Result<CellMetrics> {
    let plan: PollutionPlan = build_pollution_plan(&data.manifest, &data.name, cell.pollution, cell.seed)?;
    let train = data.set.subset_by_ids(&plan.train_ids)?;
    let det_cfg = detector_for(&cfg.detectors[cell.detector], &data.name, cell.seed);
    let (train, prf) = match cell.strategy {
        None => (train, None),
        Some(strategy) => {
            let refiner = cfg.refiner.as_ref().unwrap_or(&cfg.detectors[cell.detector]);
            let rc = RefinementConfig {
                strategy,
                refinement_ratio: cell.refinement,
                splits: cfg.splits,
                refiner: detector_for(refiner, &data.name, cell.seed),
                seed: derive_seed(cell.seed, &data.name, 1),
            };
            let outcome = refine(&train, &rc)?.with_ground_truth(&plan.injected_ids);
            (train.subset_by_ids(&outcome.kept_ids)?, outcome.prf)
        }
    };
    let det = fit(&det_cfg, &train)?;
    let eval = evaluate(&det, data, &plan.val_ids, cfg)?;
    if let (Some(dir), Some(curves)) = (&cfg.curves_dir, &eval.pixel) {
        let stem = cell.file_stem(cfg);
        curves.iou.save_csv(&dir.join(format!("{stem}_iou.csv")))?;
        curves.pro.save_csv(&dir.join(format!("{stem}_pro.csv")))?;
    }
    Ok(CellMetrics { eval, prf })
}

fn run_cells(cfg: &SweepConfig, cells: Vec<Cell>) -> Result<ExperimentReport> {
    cfg.validate()?;
    if let Some(dir) = &cfg.curves_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let data = cfg
        .categories
        .iter()
        .map(|c| CategoryData::load(c, cfg.pixel_metrics))
        .collect::<Result<Vec<_>>>()?;
    let rows = with_worker_pool(|| {
        cells
            .par_iter()
            .map(|cell| {
                let start = Instant::now();
                let result = run_cell(cell, &data[cell.category], cfg);
                let wall_time_s = start.elapsed().as_secs_f64();
                let mut row = ReportRow {
                    category: data[cell.category].name.clone(),
                    detector: cfg.detectors[cell.detector].kind,
                    strategy: cell.strategy.map_or(NO_REFINEMENT, Strategy::as_str).to_string(),
                    pollution: cell.pollution,
                    refinement: cell.refinement,
                    seed: cell.seed,
                    auc: None,
                    au_iou: None,
                    au_pro: None,
                    precision: None,
                    recall: None,
                    f1: None,
                    wall_time_s,
                    status: STATUS_OK.to_string(),
                };
                match result {
                    Ok(m) => {
                        row.auc = Some(m.eval.auc);
                        if let Some(p) = m.eval.pixel {
                            row.au_iou = Some(p.iou.area());
                            row.au_pro = Some(p.pro.area());
                        }
                        if let Some(prf) = m.prf {
                            row.precision = Some(prf.precision);
                            row.recall = Some(prf.recall);
                            row.f1 = Some(prf.f1);
                        }
                    }
                    Err(e) => {
                        let kind = if matches!(e, Error::CategoryExcluded { .. }) { "excluded" } else { "error" };
                        log::warn!("cell {} failed: {e}", cell.file_stem(cfg));
                        row.status = format!("{kind}: {e}");
                    }
                }
                row
            })
            .collect::<Vec<_>>()
    })?;
    Ok(ExperimentReport::new(rows))
}

/// Detector robustness to increasing pollution, without refinement.
pub fn run_robustness_sweep(cfg: &SweepConfig) -> Result<ExperimentReport> {
    let mut cells = Vec::new();
    for category in 0..cfg.categories.len() {
        for detector in 0..cfg.detectors.len() {
            for &pollution in &cfg.pollution_ratios {
                for &seed in &cfg.seeds {
                    cells.push(Cell {
                        category,
                        detector,
                        strategy: None,
                        pollution,
                        refinement: 0.0,
                        seed,
                    });
                }
            }
        }
    }
    run_cells(cfg, cells)
}

/// Every refinement strategy and ratio at fixed pollution.
pub fn run_refinement_sweep(cfg: &SweepConfig) -> Result<ExperimentReport> {
    let mut cells = Vec::new();
    for category in 0..cfg.categories.len() {
        for detector in 0..cfg.detectors.len() {
            for &strategy in &cfg.strategies {
                for &refinement in &cfg.refinement_ratios {
                    for &seed in &cfg.seeds {
                        cells.push(Cell {
                            category,
                            detector,
                            strategy: Some(strategy),
                            pollution: cfg.refinement_pollution,
                            refinement,
                            seed,
                        });
                    }
                }
            }
        }
    }
    run_cells(cfg, cells)
}

/// Loads one category from explicit paths, without masks.
pub fn load_category(name: &str, manifest: &Path, levels: &[impl AsRef<Path>]) -> Result<CategoryData> {
    let source = CategorySource {
        name: name.to_string(),
        manifest: manifest.to_path_buf(),
        levels: levels.iter().map(|p| p.as_ref().to_path_buf()).collect(),
        image_size: None,
    };
    CategoryData::load(&source, false)
}
