use ndarray::Array2;

/// Connected anomalous regions of one ground-truth mask (8-connectivity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthRegions {
    shape: (usize, usize),
    /// Per pixel: 0 for background, otherwise `component index + 1`.
    labels: Array2<u32>,
    sizes: Vec<usize>,
}

impl GroundTruthRegions {
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }
    pub fn len(&self) -> usize {
        self.sizes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Component index of a pixel, if it is foreground.
    pub fn component_at(&self, i: usize, j: usize) -> Option<usize> {
        match self.labels[[i, j]] {
            0 => None,
            l => Some(l as usize - 1),
        }
    }

    /// Pixel sets, in order of each component's first pixel in raster order.
    pub fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.sizes.len()];
        for ((i, j), &l) in self.labels.indexed_iter() {
            if l > 0 {
                out[l as usize - 1].push((i, j));
            }
        }
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Two-pass union-find labelling with 8-connectivity.
pub fn connected_components(mask: &Array2<bool>) -> GroundTruthRegions {
    let (h, w) = mask.dim();
    let mut provisional = Array2::<usize>::zeros((h, w));
    let mut parent = vec![0usize];
    for i in 0..h {
        for j in 0..w {
            if !mask[[i, j]] {
                continue;
            }
            let mut neighbours = [0usize; 4];
            let mut count = 0;
            let candidates = [
                (i.checked_sub(1), j.checked_sub(1)),
                (i.checked_sub(1), Some(j)),
                (i.checked_sub(1), if j + 1 < w { Some(j + 1) } else { None }),
                (Some(i), j.checked_sub(1)),
            ];
            for (ni, nj) in candidates {
                if let (Some(ni), Some(nj)) = (ni, nj) {
                    let l = provisional[[ni, nj]];
                    if l > 0 {
                        neighbours[count] = l;
                        count += 1;
                    }
                }
            }
            if count == 0 {
                let l = parent.len();
                parent.push(l);
                provisional[[i, j]] = l;
            } else {
                let mut root = find(&mut parent, neighbours[0]);
                for &l in &neighbours[1..count] {
                    let r = find(&mut parent, l);
                    if r != root {
                        let (lo, hi) = (root.min(r), root.max(r));
                        parent[hi] = lo;
                        root = lo;
                    }
                }
                provisional[[i, j]] = root;
            }
        }
    }
    let mut compact = vec![0u32; parent.len()];
    let mut sizes = Vec::new();
    let mut labels = Array2::<u32>::zeros((h, w));
    for ((i, j), &l) in provisional.indexed_iter() {
        if l == 0 {
            continue;
        }
        let root = find(&mut parent, l);
        if compact[root] == 0 {
            sizes.push(0);
            compact[root] = sizes.len() as u32;
        }
        let c = compact[root];
        sizes[c as usize - 1] += 1;
        labels[[i, j]] = c;
    }
    GroundTruthRegions {
        shape: (h, w),
        labels,
        sizes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeSet, VecDeque};

    fn bfs_components(mask: &Array2<bool>) -> BTreeSet<BTreeSet<(usize, usize)>> {
        let (h, w) = mask.dim();
        let mut seen = Array2::from_elem((h, w), false);
        let mut out = BTreeSet::new();
        for i in 0..h {
            for j in 0..w {
                if !mask[[i, j]] || seen[[i, j]] {
                    continue;
                }
                let mut comp = BTreeSet::new();
                let mut queue = VecDeque::from([(i, j)]);
                seen[[i, j]] = true;
                while let Some((a, b)) = queue.pop_front() {
                    comp.insert((a, b));
                    for da in -1i64..=1 {
                        for db in -1i64..=1 {
                            let (x, y) = (a as i64 + da, b as i64 + db);
                            if x < 0 || y < 0 || x >= h as i64 || y >= w as i64 {
                                continue;
                            }
                            let (x, y) = (x as usize, y as usize);
                            if mask[[x, y]] && !seen[[x, y]] {
                                seen[[x, y]] = true;
                                queue.push_back((x, y));
                            }
                        }
                    }
                }
                out.insert(comp);
            }
        }
        out
    }

    #[test]
    fn empty_and_diagonal() {
        assert!(connected_components(&Array2::from_elem((3, 3), false)).is_empty());
        let mut m = Array2::from_elem((2, 2), false);
        m[[0, 0]] = true;
        m[[1, 1]] = true;
        let r = connected_components(&m);
        assert_eq!(r.sizes(), &[2]);
        m[[0, 0]] = false;
        m[[0, 1]] = true;
        m[[1, 0]] = true;
        m[[1, 1]] = false;
        assert_eq!(connected_components(&m).len(), 1);
    }

    #[test]
    fn u_shape_merges() {
        let m = ndarray::arr2(&[
            [true, false, true],
            [true, false, true],
            [true, true, true],
        ]);
        let r = connected_components(&m);
        assert_eq!(r.sizes(), &[7]);
        assert_eq!(r.component_at(0, 2), Some(0));
        assert_eq!(r.component_at(0, 1), None);
    }

    proptest! {
        #[test]
        fn matches_flood_fill(bits in prop::collection::vec(prop::bool::weighted(0.4), 1..=144), w in 1usize..12) {
            let h = bits.len().div_ceil(w);
            let mask = Array2::from_shape_fn((h, w), |(i, j)| bits.get(i * w + j).copied().unwrap_or(false));
            let got: BTreeSet<BTreeSet<(usize, usize)>> = connected_components(&mask)
                .components()
                .into_iter()
                .map(|c| c.into_iter().collect())
                .collect();
            let r = connected_components(&mask);
            prop_assert_eq!(r.sizes().iter().sum::<usize>(), mask.iter().filter(|&&b| b).count());
            prop_assert_eq!(got, bfs_components(&mask));
        }
    }
}
