use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kmeans::{kmeans_fit, Centroids, KMeansParams};
use super::{check_query, select_k, squared_l2, Element, Neighbor, VectorBank};
use crate::error::{Error, Result};

/// Cap on k-means training points per centroid; larger banks are subsampled.
pub const MAX_TRAIN_POINTS_PER_CENTROID: usize = 256;

/// `round(sqrt(M))` clamped to `[1, 1024]`.
pub fn default_nlist(m: usize) -> usize {
    ((m as f64).sqrt().round() as usize).clamp(1, 1024)
}

/// `max(1, nlist / 4)`.
pub fn default_nprobe(nlist: usize) -> usize {
    (nlist / 4).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IvfParams {
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
    pub seed: u64,
}

/// Coarse quantizer plus per-centroid inverted lists of bank rows.
#[derive(Debug, Clone)]
pub struct IvfIndex {
    centroids: Centroids,
    inverted_lists: Vec<Vec<usize>>,
    nprobe: usize,
}

impl IvfIndex {
    pub fn nlist(&self) -> usize {
        self.centroids.k()
    }
    pub fn nprobe(&self) -> usize {
        self.nprobe
    }
    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }
    pub fn inverted_lists(&self) -> &[Vec<usize>] {
        &self.inverted_lists
    }

    pub fn set_nprobe(&mut self, nprobe: usize) -> Result<()> {
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(Error::Config(format!(
                "nprobe {nprobe} must lie in [1, nlist = {}]",
                self.nlist()
            )));
        }
        self.nprobe = nprobe;
        Ok(())
    }
}

/// Trains the coarse quantizer and fills the inverted lists.
pub fn ivf_build<T: Element>(bank: &VectorBank<T>, params: IvfParams) -> Result<IvfIndex> {
    let m = bank.len();
    let nlist = params.nlist.unwrap_or_else(|| default_nlist(m));
    if nlist == 0 {
        return Err(Error::Config("nlist must be positive".into()));
    }
    if m < nlist {
        return Err(Error::insufficient(
            "IVF index",
            format!("{m} vectors cannot fill {nlist} lists"),
        ));
    }
    let dim = bank.dim();
    let cap = nlist.saturating_mul(MAX_TRAIN_POINTS_PER_CENTROID);
    let centroids = if m > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut picked = sample(&mut rng, m, cap).into_vec();
        picked.sort_unstable();
        let mut train = Vec::with_capacity(cap * dim);
        for &r in &picked {
            train.extend_from_slice(bank.row(r));
        }
        log::debug!("IVF: training quantizer on {cap} of {m} vectors");
        kmeans_fit(&train, dim, nlist, params.seed, KMeansParams::default())?
    } else {
        kmeans_fit(bank.as_flat(), dim, nlist, params.seed, KMeansParams::default())?
    };

    let assignment: Vec<usize> = (0..m)
        .into_par_iter()
        .map(|r| centroids.nearest(bank.row(r)).0)
        .collect();
    let mut inverted_lists = vec![Vec::new(); nlist];
    for (row, c) in assignment.into_iter().enumerate() {
        inverted_lists[c].push(row);
    }
    let nprobe = params.nprobe.unwrap_or_else(|| default_nprobe(nlist));
    let mut index = IvfIndex {
        centroids,
        inverted_lists,
        nprobe: 1,
    };
    index.set_nprobe(nprobe)?;
    Ok(index)
}

/// Exact search restricted to the `nprobe` closest lists, probing further
/// lists in centroid-distance order until at least `k` candidates exist.
pub fn ivf_query<T: Element, Q: Element>(
    index: &IvfIndex,
    bank: &VectorBank<T>,
    query: &[Q],
    k: usize,
) -> Result<Vec<Neighbor>> {
    check_query(bank, query, k)?;
    let mut order: Vec<(f64, usize)> = (0..index.nlist())
        .map(|c| (squared_l2(query, index.centroids.row(c)), c))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut candidates = Vec::new();
    for (probed, &(_, c)) in order.iter().enumerate() {
        if probed >= index.nprobe && candidates.len() >= k {
            break;
        }
        candidates.extend(index.inverted_lists[c].iter().map(|&row| Neighbor {
            row,
            sq_dist: squared_l2(bank.row(row), query),
        }));
    }
    Ok(select_k(candidates, k))
}
