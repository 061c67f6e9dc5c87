//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p sroc-core --test acceptance`; the process exits
//! nonzero when any criterion fails. Criterion 6 needs exported MVTec embeddings
//! under `$SROC_MVTEC_ROOT/<category>/{manifest.json,level_*.npy}` and is
//! reported as SKIPPED otherwise.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Array4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sroc_core::ann::{exact_knn, ivf_build, ivf_query, IvfParams, VectorBank};
use sroc_core::detectors::{fit, DetectorConfig, DetectorKind};
use sroc_core::harness::pollution::{build_pollution_plan, largest_remainder};
use sroc_core::harness::synthetic::{blob_set, clustered_rows};
use sroc_core::harness::{run_refinement_sweep, run_robustness_sweep, CategorySource, SweepConfig};
use sroc_core::metrics::{pixel_curves, roc_auc, DEFAULT_FPR_CAP};
use sroc_core::refine::{removal_count, select_removals, sroc, RefinementConfig, Strategy};
use sroc_core::{EmbeddingSet, Error, FeatureLevel, HealthLabel, Manifest, SampleRecord, Split};

/// Relative tolerance for detector scores against brute-force formulas.
const SCORE_RTOL: f64 = 1e-8;
/// Absolute tolerance for ROC AUC against pair counting.
const AUC_TOL: f64 = 1e-12;
/// Absolute tolerance for capped areas against the exhaustive sweep.
const CURVE_TOL: f64 = 1e-9;
/// recall@5 of the default-parameter IVF index on the clustered bank below.
/// Measured 1.000 by the oracle run before the threshold was frozen.
const IVF_RECALL_THRESHOLD: f64 = 0.99;
/// Recall of Mahalanobis SROC on the polluted blob set.
const SROC_RECALL_THRESHOLD: f64 = 0.95;

const INSTANCES: usize = 100;

enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

fn rel_close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * b.abs().max(1e-12)
}

// ---------------------------------------------------------------------------
// independent oracles

fn oracle_gap(level: &Array4<f32>, n: usize) -> Vec<f64> {
    let (_, h, w, c) = level.dim();
    let mut out = vec![0.0; c];
    for i in 0..h {
        for j in 0..w {
            for (ch, o) in out.iter_mut().enumerate() {
                *o += level[[n, i, j, ch]] as f64;
            }
        }
    }
    out.iter().map(|v| v / (h * w) as f64).collect()
}

fn oracle_pooled(set: &EmbeddingSet, n: usize) -> Vec<f64> {
    set.levels().iter().flat_map(|l| oracle_gap(l.data(), n)).collect()
}

/// Patch `(i, j)` of the finest grid: each level sampled at `⌊i·h/H⌋, ⌊j·w/W⌋`.
fn oracle_aligned_patch(set: &EmbeddingSet, n: usize, i: usize, j: usize) -> Vec<f64> {
    let hh = set.levels().iter().map(|l| l.height()).max().unwrap();
    let ww = set.levels().iter().map(|l| l.width()).max().unwrap();
    let mut v = Vec::new();
    for l in set.levels() {
        let (si, sj) = (i * l.height() / hh, j * l.width() / ww);
        v.extend((0..l.channels()).map(|c| l.data()[[n, si, sj, c]] as f64));
    }
    v
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_k_smallest(mut d: Vec<f64>, k: usize) -> f64 {
    d.sort_by(f64::total_cmp);
    d[..k].iter().sum::<f64>() / k as f64
}

/// Ledoit–Wolf by its defining sums, with a Gauss–Jordan inverse.
struct OracleGaussian {
    mean: Vec<f64>,
    inv: Vec<Vec<f64>>,
}

impl OracleGaussian {
    fn fit(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let d = x[0].len();
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let c: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
        let mut s = vec![vec![0.0; d]; d];
        for r in &c {
            for a in 0..d {
                for b in 0..d {
                    s[a][b] += r[a] * r[b] / n as f64;
                }
            }
        }
        let m = (0..d).map(|a| s[a][a]).sum::<f64>() / d as f64;
        let mut d2 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let t = if a == b { m } else { 0.0 };
                d2 += (s[a][b] - t).powi(2);
            }
        }
        d2 /= d as f64;
        let mut b2 = 0.0;
        for r in &c {
            for a in 0..d {
                for b in 0..d {
                    b2 += (r[a] * r[b] - s[a][b]).powi(2);
                }
            }
        }
        b2 /= (n * n) as f64 * d as f64;
        let alpha = if d2 > 0.0 { (b2.min(d2) / d2).clamp(0.0, 1.0) } else { 0.0 };
        let mut cov = s;
        for (a, row) in cov.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = (1.0 - alpha) * *v + if a == b { alpha * m } else { 0.0 };
            }
        }
        OracleGaussian { mean, inv: gauss_jordan(cov) }
    }

    fn distance(&self, y: &[f64]) -> f64 {
        let c: Vec<f64> = y.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut q = 0.0;
        for (a, row) in self.inv.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                q += c[a] * v * c[b];
            }
        }
        q.max(0.0).sqrt()
    }
}

fn gauss_jordan(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        inv.swap(col, p);
        let pv = a[col][col];
        for j in 0..n {
            a[col][j] /= pv;
            inv[col][j] /= pv;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                for j in 0..n {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, shapes: &[(usize, usize, usize)], prefix: &str) -> EmbeddingSet {
    let levels = shapes
        .iter()
        .enumerate()
        .map(|(id, &(h, w, c))| {
            let data = Array4::from_shape_fn((n, h, w, c), |_| rng.sample::<f32, _>(StandardNormal));
            FeatureLevel::new(id as u32, data).unwrap()
        })
        .collect();
    EmbeddingSet::new((0..n).map(|i| format!("{prefix}{i}")).collect(), levels).unwrap()
}

/// 1–3 levels, total channels ≤ 32, grids up to `max_side`.
fn random_shapes(rng: &mut ChaCha8Rng, max_side: usize) -> Vec<(usize, usize, usize)> {
    let levels = rng.random_range(1..=3);
    let mut budget = 32;
    (0..levels)
        .map(|l| {
            let c = rng.random_range(1..=(budget - (levels - 1 - l)).min(16));
            budget -= c;
            (rng.random_range(1..=max_side), rng.random_range(1..=max_side), c)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// criterion 1

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc1);
    let mut worst = BTreeMap::new();
    let mut failures = Vec::new();
    for kind in DetectorKind::ALL {
        let mut worst_rel: f64 = 0.0;
        for inst in 0..INSTANCES {
            let (n_max, side) = match kind {
                DetectorKind::Knn | DetectorKind::Mahalanobis => (200, 4),
                DetectorKind::Padim => (60, 3),
                DetectorKind::Patchcore => (40, 3),
            };
            let n = rng.random_range(5..=n_max);
            let shapes = random_shapes(&mut rng, side);
            let train = random_set(&mut rng, n, &shapes, "t");
            let test = random_set(&mut rng, 4, &shapes, "q");
            let mut cfg = DetectorConfig::new(kind);
            if kind == DetectorKind::Patchcore {
                let hh = shapes.iter().map(|s| s.0).max().unwrap();
                let ww = shapes.iter().map(|s| s.1).max().unwrap();
                let nlist = (n * hh * ww).min(8);
                cfg.nlist = Some(nlist);
                cfg.nprobe = Some(nlist);
                cfg.seed = inst as u64;
            }
            let det = match fit(&cfg, &train) {
                Ok(d) => d,
                Err(e) => {
                    failures.push(format!("{kind} instance {inst}: fit failed: {e}"));
                    continue;
                }
            };
            let got = det.image_scores(&test).unwrap();
            let want: Vec<f64> = match kind {
                DetectorKind::Knn => (0..4)
                    .map(|q| {
                        let y = oracle_pooled(&test, q);
                        let d = (0..n).map(|t| sq_dist(&oracle_pooled(&train, t), &y)).collect();
                        mean_k_smallest(d, 5)
                    })
                    .collect(),
                DetectorKind::Mahalanobis => {
                    let models: Vec<OracleGaussian> = train
                        .levels()
                        .iter()
                        .map(|l| OracleGaussian::fit(&(0..n).map(|t| oracle_gap(l.data(), t)).collect::<Vec<_>>()))
                        .collect();
                    (0..4)
                        .map(|q| {
                            models
                                .iter()
                                .zip(test.levels())
                                .map(|(m, l)| m.distance(&oracle_gap(l.data(), q)))
                                .sum()
                        })
                        .collect()
                }
                DetectorKind::Padim => {
                    let hh = shapes.iter().map(|s| s.0).max().unwrap();
                    let ww = shapes.iter().map(|s| s.1).max().unwrap();
                    let cells: Vec<OracleGaussian> = (0..hh * ww)
                        .map(|c| {
                            let x: Vec<Vec<f64>> =
                                (0..n).map(|t| oracle_aligned_patch(&train, t, c / ww, c % ww)).collect();
                            OracleGaussian::fit(&x)
                        })
                        .collect();
                    (0..4)
                        .map(|q| {
                            (0..hh * ww)
                                .map(|c| cells[c].distance(&oracle_aligned_patch(&test, q, c / ww, c % ww)))
                                .fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect()
                }
                DetectorKind::Patchcore => {
                    let hh = shapes.iter().map(|s| s.0).max().unwrap();
                    let ww = shapes.iter().map(|s| s.1).max().unwrap();
                    let bank: Vec<Vec<f64>> = (0..n)
                        .flat_map(|t| (0..hh * ww).map(move |c| (t, c)))
                        .map(|(t, c)| oracle_aligned_patch(&train, t, c / ww, c % ww))
                        .collect();
                    (0..4)
                        .map(|q| {
                            (0..hh * ww)
                                .map(|c| {
                                    let p = oracle_aligned_patch(&test, q, c / ww, c % ww);
                                    mean_k_smallest(bank.iter().map(|b| sq_dist(b, &p)).collect(), 5)
                                })
                                .fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect()
                }
            };
            for (g, w) in got.iter().zip(&want) {
                let rel = (g - w).abs() / w.abs().max(1e-12);
                worst_rel = worst_rel.max(rel);
                if !rel_close(*g, *w, SCORE_RTOL) {
                    failures.push(format!("{kind} instance {inst}: {g} vs oracle {w}"));
                }
            }
        }
        worst.insert(kind.to_string(), worst_rel);
    }
    let detail = format!("{INSTANCES} instances per detector, worst relative error {worst:?}");
    if failures.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; first failure: {}", failures[0]))
    }
}

// ---------------------------------------------------------------------------
// criterion 2

fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut credit, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                credit += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    credit / pairs
}

fn bfs_regions(mask: &Array2<bool>) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = mask.dim();
    let mut seen = Array2::from_elem((h, w), false);
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if !mask[[i, j]] || seen[[i, j]] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([(i, j)]);
            seen[[i, j]] = true;
            while let Some((a, b)) = queue.pop_front() {
                comp.push((a, b));
                for x in a.saturating_sub(1)..=(a + 1).min(h - 1) {
                    for y in b.saturating_sub(1)..=(b + 1).min(w - 1) {
                        if mask[[x, y]] && !seen[[x, y]] {
                            seen[[x, y]] = true;
                            queue.push_back((x, y));
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Exhaustive sweep: for every distinct threshold, recompute the prediction
/// from scratch. Returns the normalized (AU-IoU, AU-PRO).
fn oracle_capped_areas(scores: &[Array2<f64>], masks: &[Array2<bool>], cap: f64) -> (f64, f64) {
    let mut thresholds: Vec<f64> = scores.iter().flat_map(|s| s.iter().copied()).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let regions: Vec<Vec<Vec<(usize, usize)>>> = masks.iter().map(bfs_regions).collect();
    let n_regions: usize = regions.iter().map(Vec::len).sum();
    let negatives: usize = masks.iter().map(|m| m.iter().filter(|&&b| !b).count()).sum();
    let positives: usize = masks.iter().map(|m| m.iter().filter(|&&b| b).count()).sum();
    let mut iou_pts = Vec::new();
    let mut pro_pts = Vec::new();
    for &t in &thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut pro = 0.0;
        for (img, (s, m)) in scores.iter().zip(masks).enumerate() {
            for ((i, j), &v) in s.indexed_iter() {
                if v >= t {
                    if m[[i, j]] {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            for comp in &regions[img] {
                let hit = comp.iter().filter(|&&(i, j)| s[[i, j]] >= t).count();
                pro += hit as f64 / comp.len() as f64;
            }
        }
        let fpr = fp as f64 / negatives as f64;
        iou_pts.push((fpr, tp as f64 / (positives + fp) as f64));
        pro_pts.push((fpr, pro / n_regions as f64));
    }
    let area = |pts: &[(f64, f64)]| {
        // flat from FPR 0 to the first point, trapezoids after, cut at the cap
        let mut total = pts[0].1 * pts[0].0.min(cap);
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x0 >= cap {
                break;
            }
            if x1 <= cap {
                total += (x1 - x0) * (y0 + y1) / 2.0;
            } else {
                let yc = y0 + (y1 - y0) * (cap - x0) / (x1 - x0);
                total += (cap - x0) * (y0 + yc) / 2.0;
            }
        }
        total / cap
    };
    (area(&iou_pts), area(&pro_pts))
}

fn random_pixel_instance(rng: &mut ChaCha8Rng) -> (Vec<Array2<f64>>, Vec<Array2<bool>>) {
    loop {
        let images = rng.random_range(1..=3);
        let levels = rng.random_range(3..=40);
        let mut scores = Vec::new();
        let mut masks = Vec::new();
        for _ in 0..images {
            let mut mask = Array2::from_elem((8, 8), false);
            for _ in 0..rng.random_range(0..=3) {
                let (t, l) = (rng.random_range(0..8), rng.random_range(0..8));
                let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
                for i in t..(t + h).min(8) {
                    for j in l..(l + w).min(8) {
                        mask[[i, j]] = true;
                    }
                }
            }
            let bias = rng.random_range(0.0..3.0);
            let s = Array2::from_shape_fn((8, 8), |(i, j)| {
                let base = if mask[[i, j]] { bias } else { 0.0 };
                (base + rng.random_range(0.0..4.0) * levels as f64 / 4.0).floor()
            });
            scores.push(s);
            masks.push(mask);
        }
        let pos: usize = masks.iter().map(|m| m.iter().filter(|&&b| b).count()).sum();
        if pos > 0 && pos < images * 64 {
            return (scores, masks);
        }
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc2);
    let mut failures = Vec::new();
    let (mut worst_auc, mut worst_curve): (f64, f64) = (0.0, 0.0);
    for inst in 0..INSTANCES {
        let n = 50;
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..20.0f64)).floor()).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        let err = (auc - mann_whitney(&scores, &labels)).abs();
        worst_auc = worst_auc.max(err);
        if err > AUC_TOL {
            failures.push(format!("roc instance {inst}: error {err:e}"));
        }
        let transformed: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() * 2.0 - 1.0).collect();
        if roc_auc(&transformed, &labels).unwrap() != auc {
            failures.push(format!("roc instance {inst}: not invariant under monotone transform"));
        }
        let count = removal_count(0.2, n).unwrap();
        if select_removals(&scores, count) != select_removals(&transformed, count) {
            failures.push(format!("removal instance {inst}: set changed under monotone transform"));
        }

        let (maps, masks) = random_pixel_instance(&mut rng);
        let curves = pixel_curves(&maps, &masks, DEFAULT_FPR_CAP).unwrap();
        let (iou, pro) = oracle_capped_areas(&maps, &masks, DEFAULT_FPR_CAP);
        for (name, got, want) in [("au_iou", curves.iou.area(), iou), ("au_pro", curves.pro.area(), pro)] {
            let err = (got - want).abs();
            worst_curve = worst_curve.max(err);
            if err > CURVE_TOL {
                failures.push(format!("{name} instance {inst}: {got} vs oracle {want}"));
            }
        }
        let warped: Vec<Array2<f64>> = maps.iter().map(|m| m.mapv(|v| (v / 7.0).exp() + 0.5)).collect();
        if pixel_curves(&warped, &masks, DEFAULT_FPR_CAP).unwrap() != curves {
            failures.push(format!("pixel instance {inst}: curves changed under monotone transform"));
        }
    }
    let detail = format!(
        "{INSTANCES} instances; worst AUC error {worst_auc:e}, worst capped-area error {worst_curve:e}; \
         monotone transforms checked on AUC, removal sets and curves"
    );
    if failures.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; first failure: {}", failures[0]))
    }
}

// ---------------------------------------------------------------------------
// criterion 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc3);
    let mut failures = Vec::new();
    for inst in 0..INSTANCES {
        let m = rng.random_range(20..=500);
        let dim = rng.random_range(2..=32);
        let rows = Array2::from_shape_fn((m, dim), |_| rng.random_range(-1.0f32..1.0));
        let bank = VectorBank::from_rows(rows.view()).unwrap();
        let nlist = rng.random_range(1..=32.min(m));
        let index = ivf_build(&bank, IvfParams { nlist: Some(nlist), nprobe: Some(nlist), seed: inst as u64 }).unwrap();
        for _ in 0..10 {
            let q: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.2..1.2)).collect();
            let k = rng.random_range(1..=10);
            if ivf_query(&index, &bank, &q, k).unwrap() != exact_knn(&bank, &q, k).unwrap() {
                failures.push(format!("bank {inst}: exhaustive probe differs from exact search"));
            }
        }
    }
    let recall = clustered_recall();
    let detail = format!(
        "{INSTANCES} banks with nprobe = nlist match exact search; clustered recall@5 = {recall:.4} \
         (threshold {IVF_RECALL_THRESHOLD})"
    );
    if recall < IVF_RECALL_THRESHOLD {
        failures.push(format!("recall {recall} below threshold"));
    }
    if failures.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; first failure: {}", failures[0]))
    }
}

/// 16 clusters, M = 4096, dim = 64, default nlist/nprobe; 256 fresh queries.
fn clustered_recall() -> f64 {
    let rows = clustered_rows(4096 + 256, 64, 16, 10.0, 0x3c);
    let bank_rows = rows.slice(ndarray::s![..4096, ..]).to_owned();
    let bank = VectorBank::from_rows(bank_rows.view()).unwrap();
    let index = ivf_build(&bank, IvfParams::default()).unwrap();
    let mut hits = 0;
    for q in 4096..4096 + 256 {
        let query = rows.row(q).to_vec();
        let exact: HashSet<usize> = exact_knn(&bank, &query, 5).unwrap().iter().map(|h| h.row).collect();
        hits += ivf_query(&index, &bank, &query, 5).unwrap().iter().filter(|h| exact.contains(&h.row)).count();
    }
    hits as f64 / (256 * 5) as f64
}

// ---------------------------------------------------------------------------
// criterion 4

fn criterion_4() -> Outcome {
    let (set, defective) = blob_set(400, 8, 0.2, 6.0, 2024);
    let run = |ratio: f64| {
        let cfg = RefinementConfig::new(Strategy::Sroc, ratio, DetectorKind::Mahalanobis);
        sroc(&set, &cfg).unwrap().with_ground_truth(&defective)
    };
    let at_20 = run(0.2);
    let at_40 = run(0.4);
    let p20 = at_20.prf.unwrap();
    let p40 = at_40.prf.unwrap();

    // oracle scoring: brute-force Mahalanobis on the full polluted set
    let x: Vec<Vec<f64>> = (0..400).map(|i| oracle_pooled(&set, i)).collect();
    let g = OracleGaussian::fit(&x);
    let mut order: Vec<usize> = (0..400).collect();
    let d: Vec<f64> = x.iter().map(|r| g.distance(r)).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let oracle_removed: BTreeSet<&String> = order[..80].iter().map(|&i| &set.sample_ids()[i]).collect();
    let removed: BTreeSet<&String> = at_20.removed_ids.iter().collect();

    let mut failures = Vec::new();
    if removed != oracle_removed {
        failures.push("SROC removal set differs from oracle scoring".to_string());
    }
    if p20.recall < SROC_RECALL_THRESHOLD {
        failures.push(format!("recall {} < {SROC_RECALL_THRESHOLD}", p20.recall));
    }
    if p20.f1 <= p40.f1 {
        failures.push(format!("F1 at 0.2 ({}) does not exceed F1 at 0.4 ({})", p20.f1, p40.f1));
    }
    if p20.precision != p20.recall {
        failures.push(format!("precision {} != recall {} with 80 removed of 80", p20.precision, p20.recall));
    }
    let detail = format!(
        "N=400, D=8, 80 pollutants at 6σ; recall@0.2 = {:.4}, F1@0.2 = {:.4}, F1@0.4 = {:.4}, P = R at 0.2: {}",
        p20.recall,
        p20.f1,
        p40.f1,
        p20.precision == p20.recall
    );
    if failures.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; {}", failures.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// criterion 5

fn random_manifest(rng: &mut ChaCha8Rng) -> Manifest {
    let n_train = rng.random_range(1..=200);
    let n_good = rng.random_range(0..=30);
    let types = rng.random_range(1..=4);
    let mut records: Vec<SampleRecord> = Vec::new();
    for i in 0..n_train {
        records.push(SampleRecord {
            id: format!("tr{i}"),
            split: Split::Train,
            label: HealthLabel::Healthy,
            defect_type: None,
            mask: None,
        });
    }
    for i in 0..n_good {
        records.push(SampleRecord {
            id: format!("vg{i}"),
            split: Split::Val,
            label: HealthLabel::Healthy,
            defect_type: None,
            mask: None,
        });
    }
    for t in 0..types {
        for i in 0..rng.random_range(0..=n_train / 3 + 3) {
            records.push(SampleRecord {
                id: format!("d{t}_{i}"),
                split: Split::Val,
                label: HealthLabel::Defective,
                defect_type: if rng.random_bool(0.9) { Some(format!("type{t}")) } else { None },
                mask: None,
            });
        }
    }
    records.shuffle(rng);
    Manifest::new(records, ".").unwrap()
}

fn check_plan(m: &Manifest, ratio: f64, seed: u64) -> Result<bool, String> {
    let n = m.records.iter().filter(|r| r.split == Split::Train).count();
    let defect_types: BTreeMap<String, usize> = m
        .records
        .iter()
        .filter(|r| r.split == Split::Val && r.label.is_defective())
        .fold(BTreeMap::new(), |mut acc, r| {
            *acc.entry(r.defect_type.clone().unwrap_or_else(|| "unspecified".into())).or_default() += 1;
            acc
        });
    let available: usize = defect_types.values().sum();
    let pool_size = (0.2 * n as f64 + 1e-9).floor() as usize;
    let plan = match build_pollution_plan(m, "cat", ratio, seed) {
        Ok(p) => p,
        Err(Error::CategoryExcluded { .. }) if available < pool_size + 1 => return Ok(false),
        Err(e) => return Err(format!("unexpected error {e}")),
    };
    if available < pool_size + 1 {
        return Err("infeasible plan was accepted".into());
    }
    let count = (ratio * n as f64 + 1e-9).floor() as usize;
    let set = |v: &[String]| v.iter().cloned().collect::<BTreeSet<_>>();
    let orig_train: BTreeSet<String> =
        m.records.iter().filter(|r| r.split == Split::Train).map(|r| r.id.clone()).collect();
    let orig_val: BTreeSet<String> = m.records.iter().filter(|r| r.split == Split::Val).map(|r| r.id.clone()).collect();
    let (train, val, pool) = (set(&plan.train_ids), set(&plan.val_ids), set(&plan.pollution_pool));
    let (injected, replaced) = (set(&plan.injected_ids), set(&plan.replaced_train_ids));
    let expected_train: BTreeSet<String> = orig_train.difference(&replaced).cloned().chain(injected.iter().cloned()).collect();
    let mut pool_types: BTreeMap<String, usize> = BTreeMap::new();
    for id in &pool {
        let r = m.get(id).unwrap();
        if !r.label.is_defective() || r.split != Split::Val {
            return Err(format!("pool member {id} is not a defective validation image"));
        }
        *pool_types.entry(r.defect_type.clone().unwrap_or_else(|| "unspecified".into())).or_default() += 1;
    }
    pool_types.retain(|_, v| *v > 0);
    let mut want_types = largest_remainder(&defect_types, pool_size);
    want_types.retain(|_, v| *v > 0);
    let mut recorded = plan.pool_type_counts.clone();
    recorded.retain(|_, v| *v > 0);
    let checks = [
        (injected.len() == count && plan.injected_ids.len() == count, "|injected| = floor(ratio·N)"),
        (replaced.len() == count && plan.replaced_train_ids.len() == count, "|replaced| = floor(ratio·N)"),
        (injected.is_subset(&pool), "injected ⊆ pool"),
        (pool.is_disjoint(&val), "pool ∩ validation = ∅"),
        (train.is_disjoint(&val), "train ∩ validation = ∅"),
        (plan.train_ids.len() == n && train.len() == n, "train size = N"),
        (train == expected_train, "train = original − replaced + injected"),
        (replaced.is_subset(&orig_train), "replaced ⊆ original train"),
        (pool.len() == pool_size, "pool size = floor(0.2·N)"),
        (val.union(&pool).cloned().collect::<BTreeSet<_>>() == orig_val, "validation ∪ pool = original validation"),
        (pool_types == want_types && recorded == want_types, "pool type counts follow largest remainder"),
    ];
    if let Some((_, name)) = checks.iter().find(|c| !c.0) {
        return Err(format!("invariant violated: {name}"));
    }
    let again = build_pollution_plan(m, "cat", ratio, seed).unwrap();
    if again.to_json().unwrap() != plan.to_json().unwrap() {
        return Err("same seed produced different JSON".into());
    }
    Ok(true)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc5);
    let (mut feasible, mut excluded) = (0, 0);
    for b in 0..1000 {
        let m = random_manifest(&mut rng);
        let ratio = match b % 10 {
            0 => 0.0,
            1 => 0.2,
            _ => rng.random_range(0.0..=0.2),
        };
        let seed = rng.random::<u64>();
        match check_plan(&m, ratio, seed) {
            Ok(true) => feasible += 1,
            Ok(false) => excluded += 1,
            Err(e) => return Outcome::Fail(format!("build {b}: {e}")),
        }
    }
    Outcome::Pass(format!(
        "1000 builds ({feasible} feasible, {excluded} excluded as infeasible); all invariants hold, reruns byte-identical"
    ))
}

// ---------------------------------------------------------------------------
// criterion 6

fn mvtec_sources(root: &Path) -> Vec<CategorySource> {
    let mut out = Vec::new();
    let Ok(entries) = std::fs::read_dir(root) else {
        return out;
    };
    let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    for dir in dirs {
        let manifest = dir.join("manifest.json");
        let mut levels: Vec<PathBuf> = std::fs::read_dir(&dir)
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "npy"))
            .collect();
        levels.sort();
        if manifest.exists() && !levels.is_empty() {
            out.push(CategorySource {
                name: dir.file_name().unwrap().to_string_lossy().into_owned(),
                manifest,
                levels,
                image_size: None,
            });
        }
    }
    out
}

fn mean_auc(rows: &[&sroc_core::ReportRow]) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn criterion_6() -> Outcome {
    let Ok(root) = std::env::var("SROC_MVTEC_ROOT") else {
        return Outcome::Skipped("SROC_MVTEC_ROOT not set; needs exported MVTec embeddings".into());
    };
    let categories = mvtec_sources(Path::new(&root));
    if categories.is_empty() {
        return Outcome::Fail(format!("no <category>/manifest.json with level NPY files under {root}"));
    }
    let kinds = [DetectorKind::Knn, DetectorKind::Mahalanobis, DetectorKind::Patchcore];
    let cfg = SweepConfig {
        categories,
        detectors: kinds.iter().map(|&k| DetectorConfig::new(k)).collect(),
        pollution_ratios: vec![0.0, 0.2],
        refinement_pollution: 0.2,
        refinement_ratios: vec![0.2],
        strategies: vec![Strategy::Sroc],
        refiner: None,
        splits: 5,
        seeds: (0..5).collect(),
        fpr_cap: DEFAULT_FPR_CAP,
        sigma: 4.0,
        pixel_metrics: false,
        curves_dir: None,
    };
    let robust = match run_robustness_sweep(&cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("robustness sweep failed: {e}")),
    };
    let ok_rows: Vec<&sroc_core::ReportRow> = robust.rows.iter().filter(|r| r.is_ok()).collect();
    let mut degradation = BTreeMap::new();
    for kind in kinds {
        let at = |p: f64| {
            mean_auc(&ok_rows.iter().copied().filter(|r| r.detector == kind && r.pollution == p).collect::<Vec<_>>())
        };
        match (at(0.0), at(0.2)) {
            (Some(a), Some(b)) => {
                degradation.insert(kind, a - b);
            }
            _ => return Outcome::Fail(format!("no successful {kind} rows")),
        }
    }
    let mut maha_cfg = cfg.clone();
    maha_cfg.detectors = vec![DetectorConfig::new(DetectorKind::Mahalanobis)];
    let refined = match run_refinement_sweep(&maha_cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("refinement sweep failed: {e}")),
    };
    let refined_auc = mean_auc(&refined.rows.iter().filter(|r| r.is_ok()).collect::<Vec<_>>());
    let polluted_auc = mean_auc(
        &ok_rows
            .iter()
            .copied()
            .filter(|r| r.detector == DetectorKind::Mahalanobis && r.pollution == 0.2)
            .collect::<Vec<_>>(),
    );
    let (pc, knn, maha) = (
        degradation[&DetectorKind::Patchcore],
        degradation[&DetectorKind::Knn],
        degradation[&DetectorKind::Mahalanobis],
    );
    let ordering = pc < knn && pc < maha && maha > knn;
    let recovers = matches!((refined_auc, polluted_auc), (Some(r), Some(p)) if r >= p);
    let detail = format!(
        "AUC drop 0→20%: patchcore {pc:.4}, knn {knn:.4}, mahalanobis {maha:.4}; \
         mahalanobis AUC at 20% pollution {polluted_auc:?} → after SROC 0.2 {refined_auc:?}"
    );
    if ordering && recovers {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("score-formula oracles", criterion_1),
        ("metric oracles", criterion_2),
        ("IVF correctness", criterion_3),
        ("synthetic SROC end-to-end", criterion_4),
        ("pollution-plan determinism", criterion_5),
        ("real-embedding degradation ordering", criterion_6),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skipped(d) => ("SKIPPED", d),
        };
        println!("criterion {} [{name}]: {tag} ({secs:.1}s) {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
