//! Generated data for tests, benchmarks and the bundled fixture.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::masks::save_mask;
use crate::error::{Error, Result};
use crate::tensor::npy::save_array_npy;
use crate::tensor::{EmbeddingSet, FeatureLevel, HealthLabel, Manifest, SampleRecord, Split};

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `n` points in `d` dimensions: healthy ones drawn from `N(0, I)`, a
/// `floor(pollution · n)` subset displaced by `shift` along an independent
/// random direction each. Stored as one level with a 1×1 grid.
///
/// Returns the set (ids `s0000`, `s0001`, …) and the ids of the displaced
/// points.
pub fn blob_set(n: usize, d: usize, pollution: f64, shift: f64, seed: u64) -> (EmbeddingSet, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_def = (pollution * n as f64 + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut defective = vec![false; n];
    for &i in &order[..n_def] {
        defective[i] = true;
    }
    let mut data = Array4::<f32>::zeros((n, 1, 1, d));
    for i in 0..n {
        let offset = if defective[i] { unit_vector(&mut rng, d) } else { vec![0.0; d] };
        for (c, o) in offset.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            data[[i, 0, 0, c]] = (z + shift * o) as f32;
        }
    }
    let ids: Vec<String> = (0..n).map(|i| format!("s{i:04}")).collect();
    let bad = (0..n).filter(|&i| defective[i]).map(|i| ids[i].clone()).collect();
    let level = FeatureLevel::new(0, data).expect("finite synthetic data");
    (EmbeddingSet::new(ids, vec![level]).expect("consistent synthetic set"), bad)
}

/// `m` vectors around `clusters` well-separated centres (unit-variance noise).
pub fn clustered_rows(m: usize, dim: usize, clusters: usize, spread: f32, seed: u64) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f32>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.random_range(-spread..spread)).collect())
        .collect();
    Array2::from_shape_fn((m, dim), |(i, j)| centres[i % clusters][j] + rng.sample::<f32, _>(StandardNormal))
}

/// Layout of a generated category.
#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub n_train: usize,
    pub n_val_healthy: usize,
    /// `(defect type, count)` among validation images.
    pub defects: Vec<(String, usize)>,
    /// Square image side in pixels.
    pub image_size: usize,
    /// `(grid side, channels)` per level, coarsest last.
    pub levels: Vec<(usize, usize)>,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_train: 40,
            n_val_healthy: 12,
            defects: vec![
                ("hole".to_string(), 6),
                ("scratch".to_string(), 6),
                ("stain".to_string(), 8),
            ],
            image_size: 32,
            levels: vec![(8, 4), (4, 6)],
            seed: 7,
        }
    }
}

/// Writes `manifest.json`, `level_<i>.npy` and `masks/*.png` into `dir`.
///
/// Features are Gaussian noise around a smooth per-channel pattern. Each
/// defective image gets a random rectangle; patches overlapping it are pushed
/// along a per-type direction in proportion to the overlap.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    if spec.levels.is_empty() || spec.image_size == 0 {
        return Err(Error::Config("fixture needs at least one level and a positive image size".into()));
    }
    std::fs::create_dir_all(dir.join("masks")).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = spec.image_size;

    let mut records = Vec::new();
    for i in 0..spec.n_train {
        records.push((format!("train_good_{i:03}"), Split::Train, None));
    }
    for i in 0..spec.n_val_healthy {
        records.push((format!("val_good_{i:03}"), Split::Val, None));
    }
    for (t, count) in &spec.defects {
        for i in 0..*count {
            records.push((format!("val_{t}_{i:03}"), Split::Val, Some(t.clone())));
        }
    }
    let n = records.len();
    let total_c: usize = spec.levels.iter().map(|l| l.1).sum();
    let directions: Vec<Vec<f64>> = spec
        .defects
        .iter()
        .map(|_| unit_vector(&mut rng, total_c))
        .collect();

    let mut rects = Vec::with_capacity(n);
    let mut manifest_records = Vec::with_capacity(n);
    for (id, split, defect) in &records {
        let (label, mask) = match defect {
            None => (HealthLabel::Healthy, None),
            Some(_) => {
                let h = rng.random_range(size / 5..=size / 3);
                let w = rng.random_range(size / 5..=size / 3);
                let top = rng.random_range(0..=size - h);
                let left = rng.random_range(0..=size - w);
                let mask = Array2::from_shape_fn((size, size), |(i, j)| {
                    i >= top && i < top + h && j >= left && j < left + w
                });
                let rel = PathBuf::from("masks").join(format!("{id}.png"));
                save_mask(&mask, &dir.join(&rel))?;
                rects.push(Some((top, left, h, w)));
                (HealthLabel::Defective, Some(rel))
            }
        };
        if defect.is_none() {
            rects.push(None);
        }
        manifest_records.push(SampleRecord {
            id: id.clone(),
            split: *split,
            label,
            defect_type: defect.clone(),
            mask,
        });
    }

    let mut channel_offset = 0;
    for (li, &(side, channels)) in spec.levels.iter().enumerate() {
        let phase: Vec<f64> = (0..channels).map(|_| rng.random_range(0.0..6.3)).collect();
        let mut data = Array4::<f32>::zeros((n, side, side, channels));
        for (s, (_, _, defect)) in records.iter().enumerate() {
            let push = defect
                .as_ref()
                .map(|t| spec.defects.iter().position(|d| &d.0 == t).unwrap());
            for i in 0..side {
                for j in 0..side {
                    let overlap = rects[s].map_or(0.0, |r| cell_overlap(r, i, j, side, size));
                    for c in 0..channels {
                        let base = ((i + 2 * j) as f64 * 0.7 + phase[c]).sin();
                        let noise: f64 = rng.sample(StandardNormal);
                        let shift = push.map_or(0.0, |p| 5.0 * overlap * directions[p][channel_offset + c]);
                        data[[s, i, j, c]] = (base + 0.4 * noise + shift) as f32;
                    }
                }
            }
        }
        save_array_npy(&data.into_dyn().view(), &dir.join(format!("level_{}.npy", li + 1)))?;
        channel_offset += channels;
    }

    let manifest = Manifest::new(manifest_records, dir)?;
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Fraction of grid cell `(i, j)` covered by the rectangle.
fn cell_overlap(rect: (usize, usize, usize, usize), i: usize, j: usize, side: usize, size: usize) -> f64 {
    let (top, left, h, w) = rect;
    let cell = size as f64 / side as f64;
    let span = |lo: f64, len: f64, start: usize, extent: usize| {
        let a = lo.max(start as f64);
        let b = (lo + len).min((start + extent) as f64);
        (b - a).max(0.0)
    };
    let dy = span(i as f64 * cell, cell, top, h);
    let dx = span(j as f64 * cell, cell, left, w);
    dy * dx / (cell * cell)
}
