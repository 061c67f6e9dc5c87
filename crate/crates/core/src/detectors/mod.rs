//! The four one-class detectors.
//!
//! | kind          | fitted on                         | image score                         |
//! |---------------|-----------------------------------|-------------------------------------|
//! | `knn`         | concatenated GAP vectors          | mean squared distance to k nearest  |
//! | `mahalanobis` | per-level GAP vectors             | sum of per-level Mahalanobis        |
//! | `padim`       | aligned patch grid, per location  | max per-location Mahalanobis        |
//! | `patchcore`   | aligned patch grid, pooled bank   | max patch mean squared k-NN distance|
//!
//! KNN also produces SPADE-style maps: for every level, the mean squared
//! distance between each test patch and the same-position patches of the `k`
//! retrieved training images; per-level maps are bilinearly upsampled and
//! summed. Mahalanobis has no localization map.

pub mod pixel;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array4, ArrayView3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{exact_knn, ivf_build, ivf_query, IvfIndex, IvfParams, PayloadId, VectorBank};
use crate::covariance::{ledoit_wolf, GaussianModel};
use crate::error::{Error, Result};
use crate::tensor::{align_and_concat, concat_pooled_levels, global_average_pool, EmbeddingSet};

pub use pixel::{bilinear_resize, gaussian_smooth};

/// Default neighbour count for both nearest-neighbour detectors.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[serde(alias = "KNN")]
    Knn,
    #[serde(alias = "MAHALANOBIS")]
    Mahalanobis,
    #[serde(alias = "PADIM")]
    Padim,
    #[serde(alias = "PATCHCORE")]
    Patchcore,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Knn,
        DetectorKind::Mahalanobis,
        DetectorKind::Padim,
        DetectorKind::Patchcore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Knn => "knn",
            DetectorKind::Mahalanobis => "mahalanobis",
            DetectorKind::Padim => "padim",
            DetectorKind::Patchcore => "patchcore",
        }
    }

    /// Whether the detector produces localization maps.
    pub fn has_pixel_maps(self) -> bool {
        self != DetectorKind::Mahalanobis
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" | "spade" => Ok(DetectorKind::Knn),
            "mahalanobis" => Ok(DetectorKind::Mahalanobis),
            "padim" => Ok(DetectorKind::Padim),
            "patchcore" => Ok(DetectorKind::Patchcore),
            other => Err(Error::Config(format!("unknown detector kind `{other}`"))),
        }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

/// JSON detector configuration: `{"kind", "k": 5, "nlist": null, "nprobe": null}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub nlist: Option<usize>,
    #[serde(default)]
    pub nprobe: Option<usize>,
    /// Seed for the PatchCore coarse quantizer.
    #[serde(default)]
    pub seed: u64,
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind) -> Self {
        DetectorConfig {
            kind,
            k: DEFAULT_K,
            nlist: None,
            nprobe: None,
            seed: 0,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

/// How patch maps are turned into image-resolution maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelMapConfig {
    /// Target `(height, width)`; `None` keeps the patch grid resolution and
    /// skips smoothing.
    pub image_size: Option<(usize, usize)>,
    /// Gaussian smoothing in image pixels.
    pub sigma: f64,
}

impl Default for PixelMapConfig {
    fn default() -> Self {
        PixelMapConfig {
            image_size: None,
            sigma: 4.0,
        }
    }
}

impl PixelMapConfig {
    fn render(&self, patch: &Array2<f64>) -> Array2<f64> {
        match self.image_size {
            None => patch.clone(),
            Some((h, w)) => gaussian_smooth(&bilinear_resize(patch, h, w), self.sigma),
        }
    }
}

/// Scores for one test image. Higher is more anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub image_score: f64,
    /// Patch-grid scores before any upsampling.
    pub patch_scores: Option<Array2<f64>>,
    /// Localization map at image resolution.
    pub pixel_scores: Option<Array2<f64>>,
}

impl ScoreMap {
    fn image_only(image_score: f64) -> Self {
        ScoreMap {
            image_score,
            patch_scores: None,
            pixel_scores: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Knn {
        bank: VectorBank<f64>,
        train_levels: Vec<Array4<f32>>,
    },
    Mahalanobis {
        levels: Vec<GaussianModel>,
    },
    Padim {
        height: usize,
        width: usize,
        cells: Vec<GaussianModel>,
    },
    Patchcore {
        height: usize,
        width: usize,
        bank: VectorBank<f32>,
        index: IvfIndex,
    },
}

/// A trained detector. Immutable after [`fit`]; safe to share across threads.
#[derive(Debug, Clone)]
pub struct FittedDetector {
    kind: DetectorKind,
    k: usize,
    train_size: usize,
    pixel: PixelMapConfig,
    model: Model,
}

/// Fits `config.kind` on every sample of `train`.
pub fn fit(config: &DetectorConfig, train: &EmbeddingSet) -> Result<FittedDetector> {
    let kind = config.kind;
    let n = train.len();
    let insufficient = |reason: String| Error::insufficient(format!("{kind} detector"), reason);
    if n == 0 {
        return Err(insufficient("empty training set".into()));
    }
    if train.levels().is_empty() {
        return Err(insufficient("embedding set has no feature levels".into()));
    }
    let relabel = |e: Error| match e {
        Error::InsufficientData { reason, .. } => insufficient(reason),
        other => other,
    };
    let model = match kind {
        DetectorKind::Knn => {
            if config.k == 0 || config.k > n {
                return Err(insufficient(format!("k = {} but only {n} training images", config.k)));
            }
            let pooled = concat_pooled_levels(train)?;
            Model::Knn {
                bank: VectorBank::from_rows(pooled.view())?,
                train_levels: train.levels().iter().map(|l| l.data().clone()).collect(),
            }
        }
        DetectorKind::Mahalanobis => {
            if n < 2 {
                return Err(insufficient(format!("covariance needs ≥ 2 samples, got {n}")));
            }
            let levels = train
                .levels()
                .par_iter()
                .map(|l| ledoit_wolf(global_average_pool(l).view()))
                .collect::<Result<Vec<_>>>()
                .map_err(relabel)?;
            Model::Mahalanobis { levels }
        }
        DetectorKind::Padim => {
            if n < 2 {
                return Err(insufficient(format!("covariance needs ≥ 2 samples per location, got {n}")));
            }
            let grid = align_and_concat(train)?;
            let (h, w) = (grid.height(), grid.width());
            let cells = (0..h * w)
                .into_par_iter()
                .map(|cell| {
                    let (i, j) = (cell / w, cell % w);
                    let x = grid.data().slice(s![.., i, j, ..]).mapv(f64::from);
                    ledoit_wolf(x.view())
                })
                .collect::<Result<Vec<_>>>()
                .map_err(relabel)?;
            Model::Padim {
                height: h,
                width: w,
                cells,
            }
        }
        DetectorKind::Patchcore => {
            let grid = align_and_concat(train)?;
            let (h, w, c) = (grid.height(), grid.width(), grid.channels());
            let m = n * h * w;
            if config.k == 0 || config.k > m {
                return Err(insufficient(format!("k = {} but bank holds {m} patches", config.k)));
            }
            let vectors: Vec<f32> = grid.data().iter().copied().collect();
            let payload = (0..n)
                .flat_map(|sample| {
                    (0..h).flat_map(move |row| (0..w).map(move |col| PayloadId::Patch { sample, row, col }))
                })
                .collect();
            let bank = VectorBank::new(c, vectors, payload)?;
            let index = ivf_build(
                &bank,
                IvfParams {
                    nlist: config.nlist,
                    nprobe: config.nprobe,
                    seed: config.seed,
                },
            )
            .map_err(relabel)?;
            Model::Patchcore {
                height: h,
                width: w,
                bank,
                index,
            }
        }
    };
    Ok(FittedDetector {
        kind,
        k: config.k,
        train_size: n,
        pixel: PixelMapConfig::default(),
        model,
    })
}

impl FittedDetector {
    pub fn kind(&self) -> DetectorKind {
        self.kind
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn train_size(&self) -> usize {
        self.train_size
    }
    pub fn pixel_config(&self) -> &PixelMapConfig {
        &self.pixel
    }

    pub fn with_pixel_config(mut self, pixel: PixelMapConfig) -> Self {
        self.pixel = pixel;
        self
    }

    /// Number of stored bank vectors (KNN: images, PatchCore: patches).
    pub fn bank_size(&self) -> Option<usize> {
        match &self.model {
            Model::Knn { bank, .. } => Some(bank.len()),
            Model::Patchcore { bank, .. } => Some(bank.len()),
            _ => None,
        }
    }

    pub fn gaussians(&self) -> &[GaussianModel] {
        match &self.model {
            Model::Mahalanobis { levels } => levels,
            Model::Padim { cells, .. } => cells,
            _ => &[],
        }
    }

    pub fn ivf_index(&self) -> Option<&IvfIndex> {
        match &self.model {
            Model::Patchcore { index, .. } => Some(index),
            _ => None,
        }
    }

    /// Grid shape `(height, width)` used by PaDiM and PatchCore.
    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        match &self.model {
            Model::Padim { height, width, .. } | Model::Patchcore { height, width, .. } => {
                Some((*height, *width))
            }
            _ => None,
        }
    }

    fn wrong_kind(&self, wanted: DetectorKind) -> Error {
        Error::InvalidInput(format!("detector is {}, not {wanted}", self.kind))
    }

    /// Image-level KNN score with optional SPADE maps.
    ///
    /// `levels` are the test image's per-level `H×W×C` feature maps; when
    /// given, patch and pixel maps are produced.
    pub fn score_knn(&self, pooled: &[f64], levels: Option<&[ArrayView3<'_, f32>]>) -> Result<ScoreMap> {
        let Model::Knn { bank, train_levels } = &self.model else {
            return Err(self.wrong_kind(DetectorKind::Knn));
        };
        let hits = exact_knn(bank, pooled, self.k)?;
        let image_score = hits.iter().map(|h| h.sq_dist).sum::<f64>() / self.k as f64;
        let Some(levels) = levels else {
            return Ok(ScoreMap::image_only(image_score));
        };
        if levels.len() != train_levels.len() {
            return Err(Error::DimensionMismatch {
                expected: train_levels.len(),
                got: levels.len(),
            });
        }
        let fine_h = train_levels.iter().map(|l| l.dim().1).max().unwrap_or(1);
        let fine_w = train_levels.iter().map(|l| l.dim().2).max().unwrap_or(1);
        let mut patch = Array2::<f64>::zeros((fine_h, fine_w));
        let mut pixel = self.pixel.image_size.map(|(h, w)| Array2::<f64>::zeros((h, w)));
        for (test, train) in levels.iter().zip(train_levels) {
            let (_, h, w, c) = train.dim();
            if test.dim() != (h, w, c) {
                return Err(Error::InvalidInput(format!(
                    "test level shape {:?} differs from training shape {:?}",
                    test.dim(),
                    (h, w, c)
                )));
            }
            let mut map = Array2::<f64>::zeros((h, w));
            for hit in &hits {
                let neighbour = train.index_axis(ndarray::Axis(0), hit.row);
                for i in 0..h {
                    for j in 0..w {
                        map[[i, j]] += neighbour
                            .slice(s![i, j, ..])
                            .iter()
                            .zip(test.slice(s![i, j, ..]))
                            .map(|(&a, &b)| {
                                let d = a as f64 - b as f64;
                                d * d
                            })
                            .sum::<f64>();
                    }
                }
            }
            map.mapv_inplace(|v| v / self.k as f64);
            patch += &bilinear_resize(&map, fine_h, fine_w);
            if let (Some(px), Some((ih, iw))) = (pixel.as_mut(), self.pixel.image_size) {
                *px += &bilinear_resize(&map, ih, iw);
            }
        }
        let pixel_scores = match pixel {
            Some(px) => gaussian_smooth(&px, self.pixel.sigma),
            None => patch.clone(),
        };
        Ok(ScoreMap {
            image_score,
            patch_scores: Some(patch),
            pixel_scores: Some(pixel_scores),
        })
    }

    /// Sum over levels of the Mahalanobis distance of each level's GAP vector.
    pub fn score_mahalanobis(&self, level_gaps: &[&[f64]]) -> Result<ScoreMap> {
        let Model::Mahalanobis { levels } = &self.model else {
            return Err(self.wrong_kind(DetectorKind::Mahalanobis));
        };
        if level_gaps.len() != levels.len() {
            return Err(Error::DimensionMismatch {
                expected: levels.len(),
                got: level_gaps.len(),
            });
        }
        let mut total = 0.0;
        for (model, y) in levels.iter().zip(level_gaps) {
            total += model.mahalanobis(y)?;
        }
        Ok(ScoreMap::image_only(total))
    }

    /// Per-location Mahalanobis distances on an aligned `H×W×C` grid.
    pub fn score_padim(&self, grid: ArrayView3<'_, f32>) -> Result<ScoreMap> {
        self.score_padim_inner(grid, true)
    }

    fn score_padim_inner(&self, grid: ArrayView3<'_, f32>, maps: bool) -> Result<ScoreMap> {
        let Model::Padim { height, width, cells } = &self.model else {
            return Err(self.wrong_kind(DetectorKind::Padim));
        };
        check_grid(grid, *height, *width, cells[0].dim())?;
        let mut patch = Array2::<f64>::zeros((*height, *width));
        let mut buf = Vec::with_capacity(grid.dim().2);
        for i in 0..*height {
            for j in 0..*width {
                buf.clear();
                buf.extend(grid.slice(s![i, j, ..]).iter().copied());
                patch[[i, j]] = cells[i * width + j].mahalanobis(&buf)?;
            }
        }
        Ok(self.finish_patch_map(patch, maps))
    }

    /// Mean squared distance of every patch to its `k` nearest bank patches.
    pub fn score_patchcore(&self, grid: ArrayView3<'_, f32>) -> Result<ScoreMap> {
        self.score_patchcore_inner(grid, true)
    }

    fn score_patchcore_inner(&self, grid: ArrayView3<'_, f32>, maps: bool) -> Result<ScoreMap> {
        let Model::Patchcore { height, width, bank, index } = &self.model else {
            return Err(self.wrong_kind(DetectorKind::Patchcore));
        };
        check_grid(grid, *height, *width, bank.dim())?;
        let mut patch = Array2::<f64>::zeros((*height, *width));
        let mut buf = Vec::with_capacity(bank.dim());
        for i in 0..*height {
            for j in 0..*width {
                buf.clear();
                buf.extend(grid.slice(s![i, j, ..]).iter().copied());
                let hits = ivf_query(index, bank, &buf, self.k)?;
                patch[[i, j]] = hits.iter().map(|h| h.sq_dist).sum::<f64>() / self.k as f64;
            }
        }
        Ok(self.finish_patch_map(patch, maps))
    }

    fn finish_patch_map(&self, patch: Array2<f64>, maps: bool) -> ScoreMap {
        let image_score = patch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !maps {
            return ScoreMap::image_only(image_score);
        }
        let pixel = self.pixel.render(&patch);
        ScoreMap {
            image_score,
            patch_scores: Some(patch),
            pixel_scores: Some(pixel),
        }
    }

    /// Scores every sample of `test`, in order, with localization maps.
    pub fn score_set(&self, test: &EmbeddingSet) -> Result<Vec<ScoreMap>> {
        self.score_batch(test, true)
    }

    /// Image scores only; skips all map computation.
    pub fn image_scores(&self, test: &EmbeddingSet) -> Result<Vec<f64>> {
        Ok(self
            .score_batch(test, false)?
            .into_iter()
            .map(|s| s.image_score)
            .collect())
    }

    fn score_batch(&self, test: &EmbeddingSet, maps: bool) -> Result<Vec<ScoreMap>> {
        if test.is_empty() {
            return Ok(Vec::new());
        }
        match self.kind {
            DetectorKind::Knn => {
                let pooled = test.pooled_or_compute()?;
                (0..test.len())
                    .into_par_iter()
                    .map(|n| {
                        let row = pooled.row(n);
                        let row = row.as_slice().expect("pooled rows are contiguous");
                        if maps {
                            let levels: Vec<_> = test.levels().iter().map(|l| l.sample(n)).collect();
                            self.score_knn(row, Some(&levels))
                        } else {
                            self.score_knn(row, None)
                        }
                    })
                    .collect()
            }
            DetectorKind::Mahalanobis => {
                let gaps: Vec<Array2<f64>> = test.levels().iter().map(global_average_pool).collect();
                (0..test.len())
                    .into_par_iter()
                    .map(|n| {
                        let rows: Vec<Vec<f64>> = gaps.iter().map(|g| g.row(n).to_vec()).collect();
                        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                        self.score_mahalanobis(&refs)
                    })
                    .collect()
            }
            DetectorKind::Padim | DetectorKind::Patchcore => {
                let grid = align_and_concat(test)?;
                (0..test.len())
                    .into_par_iter()
                    .map(|n| {
                        if self.kind == DetectorKind::Padim {
                            self.score_padim_inner(grid.sample(n), maps)
                        } else {
                            self.score_patchcore_inner(grid.sample(n), maps)
                        }
                    })
                    .collect()
            }
        }
    }
}

fn check_grid(grid: ArrayView3<'_, f32>, h: usize, w: usize, c: usize) -> Result<()> {
    if grid.dim() != (h, w, c) {
        return Err(Error::InvalidInput(format!(
            "grid shape {:?} differs from fitted shape {:?}",
            grid.dim(),
            (h, w, c)
        )));
    }
    Ok(())
}
