//! Qualitative analyses of embedding geometry under pollution.

use std::io::Write;
use std::path::Path;

use ndarray::ArrayView2;
use serde::Serialize;

use crate::covariance::ledoit_wolf;
use crate::error::{Error, Result};

/// Mean pairwise Euclidean distances within and across the two classes.
/// Entries are `None` where a class has fewer than two (or no) members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceSummary {
    pub healthy_count: usize,
    pub defective_count: usize,
    pub healthy_healthy: Option<f64>,
    pub healthy_defective: Option<f64>,
    pub defective_defective: Option<f64>,
}

impl DistanceSummary {
    /// `[[hh, hd], [dh, dd]]`.
    pub fn matrix(&self) -> [[Option<f64>; 2]; 2] {
        [
            [self.healthy_healthy, self.healthy_defective],
            [self.healthy_defective, self.defective_defective],
        ]
    }
}

/// `labels[i]` is true for defective rows.
pub fn pairwise_distance_summary(embeddings: ArrayView2<'_, f64>, labels: &[bool]) -> Result<DistanceSummary> {
    let n = embeddings.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [[0usize; 2]; 2];
    for i in 0..n {
        for j in i + 1..n {
            let d = embeddings
                .row(i)
                .iter()
                .zip(embeddings.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let (a, b) = (usize::from(labels[i]), usize::from(labels[j]));
            let (a, b) = (a.min(b), a.max(b));
            sums[a][b] += d;
            counts[a][b] += 1;
        }
    }
    let entry = |a: usize, b: usize| (counts[a][b] > 0).then(|| sums[a][b] / counts[a][b] as f64);
    let defective_count = labels.iter().filter(|&&l| l).count();
    Ok(DistanceSummary {
        healthy_count: n - defective_count,
        defective_count,
        healthy_healthy: entry(0, 0),
        healthy_defective: entry(0, 1),
        defective_defective: entry(1, 1),
    })
}

/// Two-axis view of the Gaussians fitted with and without pollution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourProjection {
    /// Coordinates with the largest absolute variance change, largest first.
    pub axes: [usize; 2],
    pub variance_change: Vec<f64>,
    pub healthy_mean: [f64; 2],
    pub healthy_cov: [[f64; 2]; 2],
    pub polluted_mean: [f64; 2],
    pub polluted_cov: [[f64; 2]; 2],
    pub healthy_points: Vec<[f64; 2]>,
    pub polluted_points: Vec<[f64; 2]>,
}

pub fn mvg_contour_projection(healthy: ArrayView2<'_, f64>, polluted: ArrayView2<'_, f64>) -> Result<ContourProjection> {
    let d = healthy.ncols();
    if d < 2 {
        return Err(Error::InvalidInput(format!("contour projection needs D ≥ 2, got {d}")));
    }
    if polluted.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: polluted.ncols(),
        });
    }
    let h = ledoit_wolf(healthy)?;
    let p = ledoit_wolf(polluted)?;
    let variance_change: Vec<f64> = (0..d)
        .map(|i| (p.covariance()[(i, i)] - h.covariance()[(i, i)]).abs())
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| variance_change[b].total_cmp(&variance_change[a]).then(a.cmp(&b)));
    let axes = [order[0], order[1]];
    let mean2 = |m: &crate::covariance::GaussianModel| [m.mean()[axes[0]], m.mean()[axes[1]]];
    let cov2 = |m: &crate::covariance::GaussianModel| {
        let c = m.covariance();
        [
            [c[(axes[0], axes[0])], c[(axes[0], axes[1])]],
            [c[(axes[1], axes[0])], c[(axes[1], axes[1])]],
        ]
    };
    let project = |x: ArrayView2<'_, f64>| x.rows().into_iter().map(|r| [r[axes[0]], r[axes[1]]]).collect();
    Ok(ContourProjection {
        axes,
        variance_change,
        healthy_mean: mean2(&h),
        healthy_cov: cov2(&h),
        polluted_mean: mean2(&p),
        polluted_cov: cov2(&p),
        healthy_points: project(healthy),
        polluted_points: project(polluted),
    })
}

impl ContourProjection {
    /// Header, two `gaussian` rows, then one `sample` row per point.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "source", "x", "y", "var_x", "cov_xy", "var_y"])?;
        for (source, mean, cov) in [
            ("healthy", self.healthy_mean, self.healthy_cov),
            ("polluted", self.polluted_mean, self.polluted_cov),
        ] {
            w.write_record([
                "gaussian".to_string(),
                source.to_string(),
                mean[0].to_string(),
                mean[1].to_string(),
                cov[0][0].to_string(),
                cov[0][1].to_string(),
                cov[1][1].to_string(),
            ])?;
        }
        for (source, points) in [("healthy", &self.healthy_points), ("polluted", &self.polluted_points)] {
            for p in points {
                w.write_record(["sample", source, &p[0].to_string(), &p[1].to_string(), "", "", ""])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
