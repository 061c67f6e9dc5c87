use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use super::regions::connected_components;
use super::roc::trapezoid;
use crate::error::{Error, Result};

/// False-positive-rate limit for AU-IoU and AU-PRO.
pub const DEFAULT_FPR_CAP: f64 = 0.3;

/// A metric-versus-FPR curve truncated at `fpr_cap`.
///
/// Points are the distinct score thresholds (predict anomalous when
/// `score >= θ`), in decreasing θ. The curve is extended flat to FPR 0 at the
/// value of the strictest threshold and ends with a point interpolated
/// exactly at the cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CappedCurve {
    pub fpr_cap: f64,
    pub fpr: Vec<f64>,
    pub value: Vec<f64>,
}

impl CappedCurve {
    /// Builds the capped curve from `(fpr, value)` points in threshold order.
    pub fn from_points(points: &[(f64, f64)], fpr_cap: f64) -> Result<Self> {
        if !(fpr_cap > 0.0 && fpr_cap <= 1.0) {
            return Err(Error::Config(format!("FPR cap {fpr_cap} outside (0, 1]")));
        }
        let Some(&(x0, y0)) = points.first() else {
            return Err(Error::InvalidInput("empty curve".into()));
        };
        let mut fpr = Vec::new();
        let mut value = Vec::new();
        if x0 > 0.0 {
            fpr.push(0.0);
            value.push(y0);
        }
        let mut closed = false;
        for &(x, y) in points {
            if x < fpr_cap {
                fpr.push(x);
                value.push(y);
                continue;
            }
            if x == fpr_cap {
                fpr.push(x);
                value.push(y);
            } else {
                let (px, py) = (*fpr.last().unwrap(), *value.last().unwrap());
                fpr.push(fpr_cap);
                value.push(py + (y - py) * (fpr_cap - px) / (x - px));
            }
            closed = true;
            break;
        }
        if !closed {
            let last = *value.last().unwrap();
            fpr.push(fpr_cap);
            value.push(last);
        }
        Ok(CappedCurve { fpr_cap, fpr, value })
    }

    /// Trapezoidal area over `[0, fpr_cap]`, divided by the cap.
    pub fn area(&self) -> f64 {
        trapezoid(&self.fpr, &self.value) / self.fpr_cap
    }

    /// Writes `fpr,value` rows with a header line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fpr", "value"])?;
        for (x, y) in self.fpr.iter().zip(&self.value) {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// IoU and PRO curves from one pass over the pooled pixels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PixelCurves {
    pub iou: CappedCurve,
    pub pro: CappedCurve,
}

struct Pixel {
    score: f64,
    /// 0 for healthy pixels, otherwise global region index + 1.
    region: u32,
}

pub fn pixel_curves(scores: &[Array2<f64>], masks: &[Array2<bool>], fpr_cap: f64) -> Result<PixelCurves> {
    if scores.len() != masks.len() {
        return Err(Error::DimensionMismatch {
            expected: masks.len(),
            got: scores.len(),
        });
    }
    let mut pixels = Vec::new();
    let mut region_sizes: Vec<usize> = Vec::new();
    for (n, (s, m)) in scores.iter().zip(masks).enumerate() {
        if s.dim() != m.dim() {
            return Err(Error::InvalidInput(format!(
                "image {n}: score map {:?} and mask {:?} differ in shape",
                s.dim(),
                m.dim()
            )));
        }
        let regions = connected_components(m);
        let offset = region_sizes.len() as u32;
        region_sizes.extend_from_slice(regions.sizes());
        for ((i, j), &score) in s.indexed_iter() {
            if !score.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("pixel scores of image {n}"),
                    index: i * s.ncols() + j,
                });
            }
            let region = regions.component_at(i, j).map_or(0, |c| offset + c as u32 + 1);
            pixels.push(Pixel { score, region });
        }
    }
    let positives: usize = region_sizes.iter().sum();
    let negatives = pixels.len() - positives;
    if positives == 0 {
        return Err(Error::insufficient("pixel metrics", "no anomalous ground-truth pixels"));
    }
    if negatives == 0 {
        return Err(Error::insufficient("pixel metrics", "no healthy pixels to measure FPR"));
    }
    pixels.sort_by(|a, b| b.score.total_cmp(&a.score));

    let inv_size: Vec<f64> = region_sizes.iter().map(|&s| 1.0 / s as f64).collect();
    let n_regions = region_sizes.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut overlap = 0.0;
    let mut iou_pts = Vec::new();
    let mut pro_pts = Vec::new();
    let mut i = 0;
    while i < pixels.len() {
        let s = pixels[i].score;
        while i < pixels.len() && pixels[i].score == s {
            match pixels[i].region {
                0 => fp += 1,
                r => {
                    tp += 1;
                    overlap += inv_size[r as usize - 1];
                }
            }
            i += 1;
        }
        let fpr = fp as f64 / negatives as f64;
        iou_pts.push((fpr, tp as f64 / (positives + fp) as f64));
        pro_pts.push((fpr, overlap / n_regions));
        if fpr >= fpr_cap {
            break;
        }
    }
    Ok(PixelCurves {
        iou: CappedCurve::from_points(&iou_pts, fpr_cap)?,
        pro: CappedCurve::from_points(&pro_pts, fpr_cap)?,
    })
}

pub fn iou_curve(scores: &[Array2<f64>], masks: &[Array2<bool>], fpr_cap: f64) -> Result<CappedCurve> {
    Ok(pixel_curves(scores, masks, fpr_cap)?.iou)
}

pub fn pro_curve(scores: &[Array2<f64>], masks: &[Array2<bool>], fpr_cap: f64) -> Result<CappedCurve> {
    Ok(pixel_curves(scores, masks, fpr_cap)?.pro)
}

/// Normalized area under the dataset-level IoU-vs-FPR curve.
pub fn au_iou(scores: &[Array2<f64>], masks: &[Array2<bool>], fpr_cap: f64) -> Result<f64> {
    Ok(iou_curve(scores, masks, fpr_cap)?.area())
}

/// Normalized area under the per-region-overlap-vs-FPR curve.
pub fn au_pro(scores: &[Array2<f64>], masks: &[Array2<bool>], fpr_cap: f64) -> Result<f64> {
    Ok(pro_curve(scores, masks, fpr_cap)?.area())
}
