//! Gaussian models with Ledoit–Wolf shrunk covariance.
//!
//! The shrunk estimate is `(1 − α)·S + α·m·I` where `S` is the biased
//! (divide-by-N) empirical covariance, `m = trace(S)/D`, and `α` is the
//! Ledoit–Wolf (2004) optimal intensity, clipped to `[0, 1]`:
//!
//! ```text
//! d² = ‖S − m·I‖² / D
//! b̄² = (1/N²) Σ_t ‖x_t x_tᵀ − S‖² / D
//! α  = min(b̄², d²) / d²
//! ```
//!
//! Distances are evaluated through a cached Cholesky factor, never through an
//! explicit inverse.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Multivariate Gaussian fitted to a set of embeddings.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    shrinkage_alpha: f64,
    jittered: bool,
}

impl GaussianModel {
    /// Builds a model from a mean and covariance. If the covariance is not
    /// positive definite, `1e-6·m·I` is added once before giving up.
    pub fn from_parts(mean: DVector<f64>, covariance: DMatrix<f64>, shrinkage_alpha: f64) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        if !(0.0..=1.0).contains(&shrinkage_alpha) {
            return Err(Error::InvalidInput(format!(
                "shrinkage intensity {shrinkage_alpha} outside [0, 1]"
            )));
        }
        let trace_mean = covariance.trace() / d as f64;
        let (covariance, cholesky, jittered) = match Cholesky::new(covariance.clone()) {
            Some(ch) => (covariance, ch.unpack(), false),
            None => {
                let jitter = 1e-6 * trace_mean;
                let mut bumped = covariance;
                for i in 0..d {
                    bumped[(i, i)] += jitter;
                }
                match Cholesky::new(bumped.clone()) {
                    Some(ch) if jitter > 0.0 => {
                        log::warn!(
                            "covariance not positive definite; added {jitter:e}·I jitter"
                        );
                        (bumped, ch.unpack(), true)
                    }
                    _ => return Err(Error::NotPositiveDefinite { trace_mean }),
                }
            }
        };
        Ok(GaussianModel {
            mean,
            covariance,
            cholesky,
            shrinkage_alpha,
            jittered,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
    /// Lower-triangular `L` with `L·Lᵀ = covariance`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.cholesky
    }
    pub fn shrinkage_alpha(&self) -> f64 {
        self.shrinkage_alpha
    }
    /// Whether the diagonal jitter fallback was needed.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// `sqrt((y − μ)ᵀ S⁻¹ (y − μ))`.
    pub fn mahalanobis<T: Copy + Into<f64>>(&self, y: &[T]) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        let centered = DVector::from_iterator(
            y.len(),
            y.iter().zip(self.mean.iter()).map(|(&v, m)| v.into() - m),
        );
        let z = self
            .cholesky
            .solve_lower_triangular(&centered)
            .ok_or(Error::NotPositiveDefinite {
                trace_mean: self.covariance.trace() / self.dim() as f64,
            })?;
        Ok(z.norm())
    }
}

/// Column mean and biased (1/N) covariance of the rows of `x`.
pub fn empirical_mean_cov(x: ArrayView2<'_, f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::insufficient(
            "covariance estimate",
            format!("need at least 2 samples, got {n}"),
        ));
    }
    let centered = centered_matrix(x);
    let cov = centered.transpose() * &centered / n as f64;
    let mean = DVector::from_iterator(d, x.columns().into_iter().map(|c| c.sum() / n as f64));
    Ok((mean, symmetrize(cov)))
}

/// Fits a Gaussian with Ledoit–Wolf shrinkage towards `m·I`.
pub fn ledoit_wolf(x: ArrayView2<'_, f64>) -> Result<GaussianModel> {
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "covariance input".to_string(),
            index,
        });
    }
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::insufficient(
            "covariance estimate",
            format!("need at least 2 samples, got {n}"),
        ));
    }
    let centered = centered_matrix(x);
    let mean = DVector::from_iterator(d, x.columns().into_iter().map(|c| c.sum() / n as f64));
    let emp = symmetrize(centered.transpose() * &centered / n as f64);
    let alpha = shrinkage_intensity(&centered, &emp);
    let m = emp.trace() / d as f64;
    let mut shrunk = emp * (1.0 - alpha);
    for i in 0..d {
        shrunk[(i, i)] += alpha * m;
    }
    GaussianModel::from_parts(mean, shrunk, alpha)
}

/// Ledoit–Wolf intensity from centred rows and their empirical covariance.
fn shrinkage_intensity(centered: &DMatrix<f64>, emp: &DMatrix<f64>) -> f64 {
    let (n, d) = centered.shape();
    let (nf, df) = (n as f64, d as f64);
    let m = emp.trace() / df;
    let emp_frob2 = emp.norm_squared();
    // (1/N) Σ_t ‖x_t x_tᵀ − S‖² = (1/N) Σ_t ‖x_t‖⁴ − ‖S‖²
    let mean_fourth: f64 = centered
        .row_iter()
        .map(|r| {
            let s = r.norm_squared();
            s * s
        })
        .sum::<f64>()
        / nf;
    let b_bar2 = ((mean_fourth - emp_frob2) / nf / df).max(0.0);
    // ‖S − m·I‖² = ‖S‖² − 2m·trace(S) + D·m²
    let d2 = ((emp_frob2 - 2.0 * m * emp.trace() + df * m * m) / df).max(0.0);
    if d2 <= 0.0 {
        return 0.0;
    }
    (b_bar2.min(d2) / d2).clamp(0.0, 1.0)
}

fn centered_matrix(x: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (n, d) = x.dim();
    let means: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n as f64).collect();
    DMatrix::from_fn(n, d, |i, j| x[[i, j]] - means[j])
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Convenience wrapper for ndarray inputs.
pub fn mahalanobis_distance(model: &GaussianModel, y: ArrayView1<'_, f64>) -> Result<f64> {
    match y.as_slice() {
        Some(s) => model.mahalanobis(s),
        None => model.mahalanobis(&y.to_vec()),
    }
}
