//! Embedding tensors, their on-disk format and the pooling/alignment
//! transforms shared by every detector.
//!
//! A category is stored as one JSON manifest plus one npy file per feature
//! level. Each level file holds an `N×H×W×C` little-endian `float32` tensor
//! whose first axis follows the manifest order.

mod manifest;
pub mod npy;

use std::path::Path;

use ndarray::{s, Array2, Array4, ArrayView1, ArrayView3, Axis, Ix4};

pub use manifest::{HealthLabel, Manifest, SampleRecord, Split};
pub use npy::{read_npy, save_array_npy};

use crate::error::{Error, Result};

/// One feature level: an `N×H×W×C` activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    level_id: u32,
    data: Array4<f32>,
}

impl FeatureLevel {
    pub fn new(level_id: u32, data: Array4<f32>) -> Result<Self> {
        let (_, h, w, c) = data.dim();
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidInput(format!(
                "level {level_id} has an empty spatial or channel axis ({h}×{w}×{c})"
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("feature level {level_id}"),
                index,
            });
        }
        Ok(FeatureLevel { level_id, data })
    }

    pub fn level_id(&self) -> u32 {
        self.level_id
    }
    pub fn n(&self) -> usize {
        self.data.dim().0
    }
    pub fn height(&self) -> usize {
        self.data.dim().1
    }
    pub fn width(&self) -> usize {
        self.data.dim().2
    }
    pub fn channels(&self) -> usize {
        self.data.dim().3
    }
    pub fn data(&self) -> &Array4<f32> {
        &self.data
    }

    /// The `H×W×C` feature map of sample `n`.
    pub fn sample(&self, n: usize) -> ArrayView3<'_, f32> {
        self.data.index_axis(Axis(0), n)
    }

    fn select(&self, indices: &[usize]) -> FeatureLevel {
        FeatureLevel {
            level_id: self.level_id,
            data: self.data.select(Axis(0), indices),
        }
    }
}

/// Per-level features for an ordered list of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    sample_ids: Vec<String>,
    levels: Vec<FeatureLevel>,
    pooled: Option<Array2<f64>>,
}

impl EmbeddingSet {
    pub fn new(sample_ids: Vec<String>, levels: Vec<FeatureLevel>) -> Result<Self> {
        for level in &levels {
            if level.n() != sample_ids.len() {
                return Err(Error::ShapeMismatch {
                    path: format!("<level {}>", level.level_id).into(),
                    reason: format!(
                        "level holds {} samples, expected {}",
                        level.n(),
                        sample_ids.len()
                    ),
                });
            }
        }
        Ok(EmbeddingSet {
            sample_ids,
            levels,
            pooled: None,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn levels(&self) -> &[FeatureLevel] {
        &self.levels
    }

    pub fn pooled(&self) -> Option<&Array2<f64>> {
        self.pooled.as_ref()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.sample_ids.iter().position(|s| s == id)
    }

    /// Sum of channel counts over all levels.
    pub fn total_channels(&self) -> usize {
        self.levels.iter().map(FeatureLevel::channels).sum()
    }

    /// Copies out the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingSet {
        EmbeddingSet {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            levels: self.levels.iter().map(|l| l.select(indices)).collect(),
            pooled: self.pooled.as_ref().map(|p| p.select(Axis(0), indices)),
        }
    }

    /// Copies out the samples with the given ids, in that order.
    pub fn subset_by_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<EmbeddingSet> {
        let lookup: std::collections::HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let indices = ids
            .iter()
            .map(|id| {
                lookup.get(id.as_ref()).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("sample `{}` not in embedding set", id.as_ref()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.subset(&indices))
    }

    /// Concatenated per-level GAP vectors (`N×D`), computing them if they
    /// have not been cached with [`EmbeddingSet::with_pooled`].
    pub fn pooled_or_compute(&self) -> Result<Array2<f64>> {
        match &self.pooled {
            Some(p) => Ok(p.clone()),
            None => concat_pooled_levels(self),
        }
    }

    /// Computes and stores the pooled image vectors.
    pub fn with_pooled(mut self) -> Result<Self> {
        self.pooled = Some(concat_pooled_levels(&self)?);
        Ok(self)
    }
}

/// All levels aligned to the finest grid and channel-concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPatchGrid {
    data: Array4<f32>,
}

impl AlignedPatchGrid {
    pub fn n(&self) -> usize {
        self.data.dim().0
    }
    pub fn height(&self) -> usize {
        self.data.dim().1
    }
    pub fn width(&self) -> usize {
        self.data.dim().2
    }
    pub fn channels(&self) -> usize {
        self.data.dim().3
    }
    pub fn data(&self) -> &Array4<f32> {
        &self.data
    }
    pub fn sample(&self, n: usize) -> ArrayView3<'_, f32> {
        self.data.index_axis(Axis(0), n)
    }
    pub fn patch(&self, n: usize, i: usize, j: usize) -> ArrayView1<'_, f32> {
        self.data.slice(s![n, i, j, ..])
    }
}

/// Reads a manifest and one npy file per level. Level ids are taken from the
/// trailing digits of each file stem (`block4.npy` → 4), falling back to the
/// position in `level_files`.
pub fn load_embedding_set<P: AsRef<Path>>(
    manifest_path: &Path,
    level_files: &[P],
) -> Result<(Manifest, EmbeddingSet)> {
    let manifest = Manifest::load(manifest_path)?;
    let mut levels = Vec::with_capacity(level_files.len());
    let mut first_n: Option<(usize, &Path)> = None;
    for (pos, file) in level_files.iter().enumerate() {
        let path = file.as_ref();
        let array = read_npy(path)?;
        let shape = array.shape().to_vec();
        let data = array
            .into_dimensionality::<Ix4>()
            .map_err(|_| Error::ShapeMismatch {
                path: path.to_path_buf(),
                reason: format!("expected a 4-D N×H×W×C tensor, found shape {shape:?}"),
            })?;
        let n = data.dim().0;
        match first_n {
            None => first_n = Some((n, path)),
            Some((n0, p0)) if n0 != n => {
                return Err(Error::ShapeMismatch {
                    path: path.to_path_buf(),
                    reason: format!("{n} samples, but {} holds {n0}", p0.display()),
                })
            }
            _ => {}
        }
        if n != manifest.len() {
            return Err(Error::ShapeMismatch {
                path: path.to_path_buf(),
                reason: format!(
                    "{n} samples, but manifest {} lists {}",
                    manifest_path.display(),
                    manifest.len()
                ),
            });
        }
        let level_id = level_id_from_path(path).unwrap_or(pos as u32);
        let level = FeatureLevel::new(level_id, data).map_err(|e| match e {
            Error::NonFinite { index, .. } => Error::NonFinite {
                context: path.display().to_string(),
                index,
            },
            other => other,
        })?;
        levels.push(level);
    }
    let set = EmbeddingSet::new(manifest.ids(), levels)?;
    Ok((manifest, set))
}

fn level_id_from_path(path: &Path) -> Option<u32> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Spatial mean of every channel: `out[n][c] = mean_{i,j} data[n][i][j][c]`.
pub fn global_average_pool(level: &FeatureLevel) -> Array2<f64> {
    let (n, h, w, c) = level.data.dim();
    let mut out = Array2::<f64>::zeros((n, c));
    let scale = 1.0 / (h * w) as f64;
    for (sample, mut row) in level.data.outer_iter().zip(out.outer_iter_mut()) {
        for patch in sample.lanes(Axis(2)) {
            for (acc, &v) in row.iter_mut().zip(patch.iter()) {
                *acc += v as f64;
            }
        }
        row.mapv_inplace(|v| v * scale);
    }
    out
}

/// Concatenates per-level GAP vectors in level order into an `N×D` matrix.
pub fn concat_pooled_levels(set: &EmbeddingSet) -> Result<Array2<f64>> {
    if set.levels.is_empty() {
        return Err(Error::InvalidInput(
            "cannot pool an embedding set without levels".to_string(),
        ));
    }
    let mut out = Array2::<f64>::zeros((set.len(), set.total_channels()));
    let mut offset = 0;
    for level in &set.levels {
        let c = level.channels();
        out.slice_mut(s![.., offset..offset + c])
            .assign(&global_average_pool(level));
        offset += c;
    }
    Ok(out)
}

/// Upsamples every level to the largest grid by nearest-neighbour
/// replication and concatenates channels in level order.
pub fn align_and_concat(set: &EmbeddingSet) -> Result<AlignedPatchGrid> {
    if set.levels.is_empty() {
        return Err(Error::InvalidInput(
            "cannot align an embedding set without levels".to_string(),
        ));
    }
    let h = set.levels.iter().map(FeatureLevel::height).max().unwrap_or(1);
    let w = set.levels.iter().map(FeatureLevel::width).max().unwrap_or(1);
    let mut data = Array4::<f32>::zeros((set.len(), h, w, set.total_channels()));
    let mut offset = 0;
    for level in &set.levels {
        let (_, lh, lw, c) = level.data.dim();
        for i in 0..h {
            let si = nearest_source(i, lh, h);
            for j in 0..w {
                let sj = nearest_source(j, lw, w);
                data.slice_mut(s![.., i, j, offset..offset + c])
                    .assign(&level.data.slice(s![.., si, sj, ..]));
            }
        }
        offset += c;
    }
    Ok(AlignedPatchGrid { data })
}

/// Source row for destination row `dst` when stretching `src_len` cells to `dst_len`.
pub(crate) fn nearest_source(dst: usize, src_len: usize, dst_len: usize) -> usize {
    (dst * src_len / dst_len).min(src_len - 1)
}
