//! Lloyd's k-means with k-means++ seeding; used as the IVF coarse quantizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{squared_l2, Element};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once `|inertia_prev − inertia| / inertia_prev` drops below this.
    pub rel_tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            max_iter: 25,
            rel_tol: 1e-4,
        }
    }
}

/// `k×dim` centroid matrix plus the final inertia.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    k: usize,
    dim: usize,
    data: Vec<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

impl Centroids {
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    /// Index of the closest centroid (lowest index on ties) and its distance.
    pub fn nearest<T: Element>(&self, v: &[T]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for c in 0..self.k {
            let d = squared_l2(v, self.row(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }
}

/// Clusters the `M = vectors.len() / dim` rows into `k` groups.
pub fn kmeans_fit<T: Element>(
    vectors: &[T],
    dim: usize,
    k: usize,
    seed: u64,
    params: KMeansParams,
) -> Result<Centroids> {
    if dim == 0 || !vectors.len().is_multiple_of(dim) {
        return Err(Error::InvalidInput(format!(
            "{} values do not form rows of dimension {dim}",
            vectors.len()
        )));
    }
    let m = vectors.len() / dim;
    if k == 0 {
        return Err(Error::InvalidInput("k-means needs k ≥ 1".into()));
    }
    if m < k {
        return Err(Error::insufficient(
            "k-means",
            format!("{m} vectors cannot form {k} clusters"),
        ));
    }
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut data = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..m);
    data.extend(row(first).iter().map(|&v| v.into()));
    let mut closest: Vec<f64> = (0..m).map(|i| squared_l2(row(i), &data[..dim])).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = m - 1;
            for (i, &d) in closest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // floating round-off can walk past the end; take the last positive weight
            if closest[chosen] == 0.0 {
                chosen = closest.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        data.extend(row(pick).iter().map(|&v| v.into()));
        let centre = &data[c * dim..(c + 1) * dim];
        closest
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(squared_l2(row(i), centre)));
    }

    let mut centroids = Centroids {
        k,
        dim,
        data,
        inertia: f64::INFINITY,
        iterations: 0,
    };
    let mut prev_inertia = f64::INFINITY;
    for iter in 0..params.max_iter {
        let assignment: Vec<(usize, f64)> = (0..m)
            .into_par_iter()
            .map(|i| centroids.nearest(row(i)))
            .collect();
        let inertia: f64 = assignment.iter().map(|a| a.1).sum();
        centroids.inertia = inertia;
        centroids.iterations = iter + 1;
        if inertia == 0.0 {
            break;
        }
        if prev_inertia.is_finite() && (prev_inertia - inertia).abs() / prev_inertia < params.rel_tol {
            break;
        }
        prev_inertia = inertia;

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += v.into();
            }
        }
        // empty clusters take the points currently worst served
        let mut far: Vec<usize> = (0..m).collect();
        far.sort_by(|&a, &b| assignment[b].1.total_cmp(&assignment[a].1).then(a.cmp(&b)));
        let mut far_iter = far.into_iter();
        for c in 0..k {
            let dst = &mut centroids.data[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (d, s) in dst.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *d = s * inv;
                }
            } else if let Some(p) = far_iter.next() {
                log::debug!("k-means: reseeding empty cluster {c} at point {p}");
                for (d, &v) in dst.iter_mut().zip(row(p)) {
                    *d = v.into();
                }
            }
        }
    }
    if !centroids.inertia.is_finite() {
        centroids.inertia = (0..m).map(|i| centroids.nearest(row(i)).1).sum();
    }
    Ok(centroids)
}
