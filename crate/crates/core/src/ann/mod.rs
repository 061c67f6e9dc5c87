//! Exact and inverted-file (IVF-Flat) k-nearest-neighbour search.
//!
//! All distances are squared Euclidean, accumulated in `f64`. Ties are
//! broken by the lower bank row so results are reproducible across
//! platforms and thread counts.

mod ivf;
mod kmeans;

use std::cmp::Ordering;

use ndarray::ArrayView2;

pub use ivf::{default_nlist, default_nprobe, ivf_build, ivf_query, IvfIndex, IvfParams};
pub use kmeans::{kmeans_fit, Centroids, KMeansParams};

use crate::error::{Error, Result};

/// Scalar types a [`VectorBank`] may store.
pub trait Element: Copy + Into<f64> + Send + Sync + 'static {}
impl Element for f32 {}
impl Element for f64 {}

/// What a bank row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadId {
    /// A whole training image (index into the training set).
    Sample(usize),
    /// Patch `(row, col)` of a training image.
    Patch { sample: usize, row: usize, col: usize },
}

/// Row-major `M×dim` matrix of vectors with one payload id per row.
#[derive(Debug, Clone)]
pub struct VectorBank<T = f32> {
    dim: usize,
    vectors: Vec<T>,
    payload_ids: Vec<PayloadId>,
}

impl<T: Element> VectorBank<T> {
    pub fn new(dim: usize, vectors: Vec<T>, payload_ids: Vec<PayloadId>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("vector dimension must be positive".into()));
        }
        if vectors.len() != dim * payload_ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} values cannot form {} rows of dimension {dim}",
                vectors.len(),
                payload_ids.len()
            )));
        }
        if let Some(index) = vectors.iter().position(|&v| !v.into().is_finite()) {
            return Err(Error::NonFinite {
                context: "vector bank".to_string(),
                index,
            });
        }
        Ok(VectorBank {
            dim,
            vectors,
            payload_ids,
        })
    }

    /// Bank over the rows of a matrix, with `PayloadId::Sample(row)` ids.
    pub fn from_rows(rows: ArrayView2<'_, T>) -> Result<Self> {
        let (m, dim) = rows.dim();
        let vectors: Vec<T> = rows.iter().copied().collect();
        Self::new(dim, vectors, (0..m).map(PayloadId::Sample).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.payload_ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.payload_ids.is_empty()
    }
    pub fn row(&self, i: usize) -> &[T] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
    pub fn payload(&self, i: usize) -> PayloadId {
        self.payload_ids[i]
    }
    pub fn payload_ids(&self) -> &[PayloadId] {
        &self.payload_ids
    }
    pub fn as_flat(&self) -> &[T] {
        &self.vectors
    }
}

/// One search hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub sq_dist: f64,
}

impl Neighbor {
    fn order(a: &Neighbor, b: &Neighbor) -> Ordering {
        a.sq_dist.total_cmp(&b.sq_dist).then(a.row.cmp(&b.row))
    }
}

#[inline]
pub fn squared_l2<A: Element, B: Element>(a: &[A], b: &[B]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum()
}

/// Keeps the `k` smallest candidates, sorted ascending (ties by row).
pub(crate) fn select_k(mut candidates: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, Neighbor::order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(Neighbor::order);
    candidates
}

fn check_query<T: Element, Q: Element>(bank: &VectorBank<T>, query: &[Q], k: usize) -> Result<()> {
    if bank.is_empty() {
        return Err(Error::InvalidInput("search over an empty bank".into()));
    }
    if query.len() != bank.dim {
        return Err(Error::DimensionMismatch {
            expected: bank.dim,
            got: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    if k > bank.len() {
        return Err(Error::insufficient(
            "k-nearest-neighbour search",
            format!("k = {k} exceeds bank size {}", bank.len()),
        ));
    }
    Ok(())
}

/// The `k` rows closest to `query`, by brute force.
pub fn exact_knn<T: Element, Q: Element>(
    bank: &VectorBank<T>,
    query: &[Q],
    k: usize,
) -> Result<Vec<Neighbor>> {
    check_query(bank, query, k)?;
    let candidates = (0..bank.len())
        .map(|row| Neighbor {
            row,
            sq_dist: squared_l2(bank.row(row), query),
        })
        .collect();
    Ok(select_k(candidates, k))
}
