use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::Serialize;

use sroc_core::detectors::{fit as fit_detector, DetectorConfig, DetectorKind, FittedDetector, PixelMapConfig};
use sroc_core::harness::config::CategorySource;
use sroc_core::harness::seeds::derive_seed;
use sroc_core::harness::sweep::{CategoryData, WORKERS_ENV};
use sroc_core::harness::synthetic::{write_fixture, FixtureSpec};
use sroc_core::harness::{
    build_pollution_plan, mvg_contour_projection, pairwise_distance_summary, run_refinement_sweep,
    run_robustness_sweep, ExperimentReport, PollutionPlan, SweepConfig,
};
use sroc_core::metrics::{pixel_curves, roc_auc, DEFAULT_FPR_CAP};
use sroc_core::refine::{refine as refine_set, RefinementConfig, Strategy, DEFAULT_SPLITS};
use sroc_core::tensor::{concat_pooled_levels, save_array_npy, Manifest, Split};

use crate::overlay::{config_error, data_error, Failure};
use crate::{
    ContourArgs, DataArgs, DetectorArgs, DistanceArgs, FitArgs, FixtureArgs, PolluteArgs, RefineArgs, ReportArgs,
    ScoreArgs, SweepArgs,
};

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| data_error(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            let newline = if text.ends_with('\n') { "" } else { "\n" };
            match write!(stdout, "{text}{newline}").and_then(|()| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(data_error(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(data_error)
}

fn parse_kind(s: &str) -> Result<DetectorKind, Failure> {
    s.parse().map_err(Failure::from)
}

fn parse_strategy(s: &str) -> Result<Strategy, Failure> {
    s.parse().map_err(Failure::from)
}

fn detector_config(args: &DetectorArgs, default: Option<DetectorKind>) -> Result<DetectorConfig, Failure> {
    let kind = match (&args.detector, default) {
        (Some(s), _) => parse_kind(s)?,
        (None, Some(k)) => k,
        (None, None) => return Err(config_error("--detector is required")),
    };
    let mut cfg = DetectorConfig::new(kind);
    if let Some(k) = args.k {
        cfg.k = k;
    }
    cfg.nlist = args.nlist;
    cfg.nprobe = args.nprobe;
    Ok(cfg)
}

fn manifest_path(category: Option<&str>, manifest: Option<&Path>) -> Result<PathBuf, Failure> {
    match (manifest, category) {
        (Some(m), _) => Ok(m.to_path_buf()),
        (None, Some(c)) => Ok(Path::new(c).join("manifest.json")),
        (None, None) => Err(config_error("give --manifest or --category")),
    }
}

/// `--category` may be a directory path; its last component is the name.
fn category_name(category: Option<&str>, manifest: &Path) -> String {
    let dir = match category {
        Some(c) => Path::new(c),
        None => manifest.parent().unwrap_or(Path::new("")),
    };
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .or_else(|| category.map(str::to_string))
        .unwrap_or_else(|| "category".to_string())
}

fn npy_files_next_to(manifest: &Path) -> Result<Vec<PathBuf>, Failure> {
    let dir = manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let entries = std::fs::read_dir(dir).map_err(|e| data_error(format!("cannot list {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "npy"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(data_error(format!("no level NPY files in {}", dir.display())));
    }
    Ok(files)
}

/// Loaded category plus the training and validation ids to use.
struct Loaded {
    data: CategoryData,
    plan: Option<PollutionPlan>,
    train_ids: Vec<String>,
    val_ids: Vec<String>,
    seed: u64,
}

impl Loaded {
    fn defective(&self, ids: &[String]) -> Vec<String> {
        ids.iter()
            .filter(|id| self.data.manifest.get(id).is_some_and(|r| r.label.is_defective()))
            .cloned()
            .collect()
    }
}

fn load(args: &DataArgs, want_masks: bool) -> Result<Loaded, Failure> {
    let manifest = manifest_path(args.category.as_deref(), args.manifest.as_deref())?;
    let name = category_name(args.category.as_deref(), &manifest);
    let levels = match &args.levels {
        Some(l) => l.clone(),
        None => npy_files_next_to(&manifest)?,
    };
    let source = CategorySource {
        name: name.clone(),
        manifest,
        levels,
        image_size: None,
    };
    let data = CategoryData::load(&source, want_masks)?;
    let seed = args.seed.unwrap_or(0);
    let plan = match (&args.plan, args.pollution) {
        (Some(_), Some(_)) => return Err(config_error("--plan and --pollution are mutually exclusive")),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| data_error(format!("cannot read plan {}: {e}", path.display())))?;
            let plan: PollutionPlan =
                serde_json::from_str(&text).map_err(|e| data_error(format!("{}: {e}", path.display())))?;
            Some(plan)
        }
        (None, Some(ratio)) => Some(build_pollution_plan(&data.manifest, &name, ratio, seed)?),
        (None, None) => None,
    };
    let (train_ids, val_ids) = match &plan {
        Some(p) => (p.train_ids.clone(), p.val_ids.clone()),
        None => (ids_in(&data.manifest, Split::Train), ids_in(&data.manifest, Split::Val)),
    };
    Ok(Loaded {
        data,
        plan,
        train_ids,
        val_ids,
        seed,
    })
}

fn ids_in(manifest: &Manifest, split: Split) -> Vec<String> {
    manifest.records.iter().filter(|r| r.split == split).map(|r| r.id.clone()).collect()
}

/// Fits the way a sweep cell does, so that identical seeds give identical models.
fn fit_on(loaded: &Loaded, ids: &[String], cfg: &DetectorConfig) -> Result<FittedDetector, Failure> {
    let mut cfg = cfg.clone();
    cfg.seed = derive_seed(loaded.seed, &loaded.data.name, 2).wrapping_add(cfg.seed);
    let train = loaded.data.set.subset_by_ids(ids)?;
    Ok(fit_detector(&cfg, &train)?)
}

pub fn pollute(args: PolluteArgs) -> Result<(), Failure> {
    let path = manifest_path(args.category.as_deref(), args.manifest.as_deref())?;
    let name = category_name(args.category.as_deref(), &path);
    let ratio = args.ratio.ok_or_else(|| config_error("--ratio is required"))?;
    let manifest = Manifest::load(&path)?;
    let plan = build_pollution_plan(&manifest, &name, ratio, args.seed.unwrap_or(0))?;
    emit(&plan.to_json()?, args.out.as_deref())
}

#[derive(Serialize)]
struct FitSummary {
    category: String,
    detector: DetectorKind,
    train_size: usize,
    k: usize,
    bank_size: Option<usize>,
    gaussians: usize,
    gaussian_dims: Vec<usize>,
    shrinkage: Vec<f64>,
    grid: Option<(usize, usize)>,
    nlist: Option<usize>,
    nprobe: Option<usize>,
}

pub fn fit(args: FitArgs) -> Result<(), Failure> {
    let cfg = detector_config(&args.detector, None)?;
    let loaded = load(&args.data, false)?;
    let det = fit_on(&loaded, &loaded.train_ids, &cfg)?;
    let summary = FitSummary {
        category: loaded.data.name.clone(),
        detector: det.kind(),
        train_size: det.train_size(),
        k: det.k(),
        bank_size: det.bank_size(),
        gaussians: det.gaussians().len(),
        gaussian_dims: det.gaussians().iter().map(|g| g.dim()).collect(),
        shrinkage: det.gaussians().iter().map(|g| g.shrinkage_alpha()).collect(),
        grid: det.grid_shape(),
        nlist: det.ivf_index().map(|i| i.nlist()),
        nprobe: det.ivf_index().map(|i| i.nprobe()),
    };
    emit(&to_json(&summary)?, args.out.as_deref())
}

#[derive(Serialize)]
struct ScoredSample {
    id: String,
    defective: bool,
    score: f64,
}

#[derive(Serialize)]
struct ScoreOutput {
    category: String,
    detector: DetectorKind,
    train_size: usize,
    auc: Option<f64>,
    au_iou: Option<f64>,
    au_pro: Option<f64>,
    scores: Vec<ScoredSample>,
}

pub fn score(args: ScoreArgs) -> Result<(), Failure> {
    let cfg = detector_config(&args.detector, None)?;
    let want_maps = cfg.kind.has_pixel_maps();
    let loaded = load(&args.data, want_maps)?;
    let det = fit_on(&loaded, &loaded.train_ids, &cfg)?.with_pixel_config(PixelMapConfig {
        image_size: loaded.data.image_size,
        sigma: args.sigma.unwrap_or(4.0),
    });
    let test = loaded.data.set.subset_by_ids(&loaded.val_ids)?;
    let labels = loaded.data.labels(&loaded.val_ids);
    let maps = if want_maps { det.score_set(&test)? } else { Vec::new() };
    let image_scores: Vec<f64> = if want_maps {
        maps.iter().map(|m| m.image_score).collect()
    } else {
        det.image_scores(&test)?
    };
    let both_classes = labels.iter().any(|&l| l) && labels.iter().any(|&l| !l);
    let auc = both_classes.then(|| roc_auc(&image_scores, &labels)).transpose()?;

    let pixel: Vec<Array2<f64>> = maps.iter().filter_map(|m| m.pixel_scores.clone()).collect();
    let (mut au_iou, mut au_pro) = (None, None);
    if let (Some(masks), true) = (&loaded.data.masks, pixel.len() == loaded.val_ids.len() && both_classes) {
        let gt: Vec<Array2<bool>> = loaded.val_ids.iter().map(|id| masks[id].clone()).collect();
        if gt.iter().zip(&pixel).all(|(g, p)| g.dim() == p.dim()) {
            let curves = pixel_curves(&pixel, &gt, args.fpr_cap.unwrap_or(DEFAULT_FPR_CAP))?;
            au_iou = Some(curves.iou.area());
            au_pro = Some(curves.pro.area());
        }
    }
    if let Some(dir) = &args.maps_dir {
        std::fs::create_dir_all(dir).map_err(|e| data_error(format!("cannot create {}: {e}", dir.display())))?;
        for (id, m) in loaded.val_ids.iter().zip(&maps) {
            if let Some(map) = m.pixel_scores.as_ref().or(m.patch_scores.as_ref()) {
                let f32_map = map.mapv(|v| v as f32).insert_axis(Axis(0)).into_dyn();
                save_array_npy(&f32_map.view(), &dir.join(format!("{id}.npy")))?;
            }
        }
    }
    let out = ScoreOutput {
        category: loaded.data.name.clone(),
        detector: det.kind(),
        train_size: det.train_size(),
        auc,
        au_iou,
        au_pro,
        scores: loaded
            .val_ids
            .iter()
            .zip(&labels)
            .zip(&image_scores)
            .map(|((id, &defective), &score)| ScoredSample {
                id: id.clone(),
                defective,
                score,
            })
            .collect(),
    };
    emit(&to_json(&out)?, args.out.as_deref())
}

#[derive(Serialize)]
struct RefineOutput {
    category: String,
    strategy: Strategy,
    refiner: DetectorKind,
    refinement_ratio: f64,
    #[serde(flatten)]
    outcome: sroc_core::RefinementOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_detector: Option<DetectorKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_auc: Option<f64>,
}

pub fn refine(args: RefineArgs) -> Result<(), Failure> {
    let strategy = parse_strategy(args.strategy.as_deref().unwrap_or("sroc"))?;
    let ratio = args.ratio.ok_or_else(|| config_error("--ratio is required"))?;
    let refiner = parse_kind(args.refiner.as_deref().unwrap_or("mahalanobis"))?;
    let final_kind = args.final_detector.as_deref().map(parse_kind).transpose()?;
    let loaded = load(&args.data, false)?;
    let mut cfg = RefinementConfig::new(strategy, ratio, refiner);
    cfg.splits = args.splits.unwrap_or(DEFAULT_SPLITS);
    cfg.seed = derive_seed(loaded.seed, &loaded.data.name, 1);
    cfg.validate()?;
    let train = loaded.data.set.subset_by_ids(&loaded.train_ids)?;
    let outcome = refine_set(&train, &cfg)?.with_ground_truth(&loaded.defective(&loaded.train_ids));
    let final_auc = match final_kind {
        Some(kind) => {
            let det = fit_on(&loaded, &outcome.kept_ids, &DetectorConfig::new(kind))?;
            let test = loaded.data.set.subset_by_ids(&loaded.val_ids)?;
            Some(roc_auc(&det.image_scores(&test)?, &loaded.data.labels(&loaded.val_ids))?)
        }
        None => None,
    };
    let out = RefineOutput {
        category: loaded.data.name.clone(),
        strategy,
        refiner,
        refinement_ratio: ratio,
        outcome,
        final_detector: final_kind,
        final_auc,
    };
    emit(&to_json(&out)?, args.out.as_deref())
}

fn apply_sweep_overrides(cfg: &mut SweepConfig, args: &SweepArgs) -> Result<(), Failure> {
    if let Some(d) = &args.detectors {
        cfg.detectors = d.iter().map(|s| parse_kind(s).map(DetectorConfig::new)).collect::<Result<_, _>>()?;
    }
    if let Some(s) = &args.strategies {
        cfg.strategies = s.iter().map(|s| parse_strategy(s)).collect::<Result<_, _>>()?;
    }
    if let Some(r) = &args.refiner {
        cfg.refiner = Some(DetectorConfig::new(parse_kind(r)?));
    }
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = &args.$field {
                cfg.$field = v.clone();
            }
        )*};
    }
    set!(pollution_ratios, refinement_pollution, refinement_ratios, splits, seeds, fpr_cap, sigma, pixel_metrics);
    if let Some(d) = &args.curves_dir {
        cfg.curves_dir = Some(d.clone());
    }
    cfg.validate()?;
    Ok(())
}

pub fn sweep(config: &Path, args: SweepArgs, refinement: bool) -> Result<(), Failure> {
    let mut cfg = SweepConfig::load(config).map_err(|e| match e {
        sroc_core::Error::Io { .. } => config_error(e),
        other => other.into(),
    })?;
    apply_sweep_overrides(&mut cfg, &args)?;
    if let Some(n) = args.workers {
        if n == 0 {
            return Err(config_error("--workers must be positive"));
        }
        std::env::set_var(WORKERS_ENV, n.to_string());
    }
    let report = if refinement {
        run_refinement_sweep(&cfg)?
    } else {
        run_robustness_sweep(&cfg)?
    };
    for row in report.rows.iter().filter(|r| !r.is_ok()) {
        log::warn!("{} {} {} seed {}: {}", row.category, row.detector, row.strategy, row.seed, row.status);
    }
    if let Some(path) = &args.summary {
        let mut buf = Vec::new();
        report.write_summary_csv(&mut buf)?;
        emit(&String::from_utf8_lossy(&buf), Some(path))?;
    }
    match &args.out {
        Some(path) => Ok(report.save(path)?),
        None => emit(&report.to_csv_string()?, None),
    }
}

pub fn distances(args: DistanceArgs) -> Result<(), Failure> {
    let loaded = load(&args.data, false)?;
    let ids: Vec<String> = match args.subset.as_deref().unwrap_or("all") {
        "train" => loaded.train_ids.clone(),
        "val" => loaded.val_ids.clone(),
        "all" => loaded.train_ids.iter().chain(&loaded.val_ids).cloned().collect(),
        other => return Err(config_error(format!("unknown subset `{other}` (train, val or all)"))),
    };
    let set = loaded.data.set.subset_by_ids(&ids)?;
    let pooled = concat_pooled_levels(&set)?;
    let summary = pairwise_distance_summary(pooled.view(), &loaded.data.labels(&ids))?;
    #[derive(Serialize)]
    struct Out {
        category: String,
        #[serde(flatten)]
        summary: sroc_core::harness::DistanceSummary,
        matrix: [[Option<f64>; 2]; 2],
    }
    let matrix = summary.matrix();
    emit(
        &to_json(&Out {
            category: loaded.data.name.clone(),
            summary,
            matrix,
        })?,
        args.out.as_deref(),
    )
}

pub fn contours(args: ContourArgs) -> Result<(), Failure> {
    let loaded = load(&args.data, false)?;
    if loaded.plan.is_none() {
        return Err(config_error("analyze-contours needs --plan or --pollution"));
    }
    let clean = ids_in(&loaded.data.manifest, Split::Train);
    let injected: HashSet<&String> = loaded.plan.iter().flat_map(|p| &p.injected_ids).collect();
    if injected.is_empty() {
        log::warn!("the plan injects no samples; both Gaussians are fitted on healthy data");
    }
    let healthy = concat_pooled_levels(&loaded.data.set.subset_by_ids(&clean)?)?;
    let polluted = concat_pooled_levels(&loaded.data.set.subset_by_ids(&loaded.train_ids)?)?;
    let projection = mvg_contour_projection(healthy.view(), polluted.view())?;
    let mut buf = Vec::new();
    projection.write_csv(&mut buf)?;
    emit(&String::from_utf8_lossy(&buf), args.out.as_deref())
}

pub fn report(args: ReportArgs) -> Result<(), Failure> {
    let input = args.input.unwrap_or_else(|| PathBuf::from("report.csv"));
    let report = ExperimentReport::load(&input)?;
    let text = match args.format.as_deref().unwrap_or("csv") {
        "csv" => report.to_csv_string()?,
        "json" => report.to_json()?,
        "summary" => {
            let mut buf = Vec::new();
            report.write_summary_csv(&mut buf)?;
            String::from_utf8_lossy(&buf).into_owned()
        }
        other => return Err(config_error(format!("unknown format `{other}` (csv, json or summary)"))),
    };
    emit(&text, args.out.as_deref())
}

pub fn fixture(args: FixtureArgs) -> Result<(), Failure> {
    let out = args.out.ok_or_else(|| config_error("--out is required"))?;
    let mut spec = FixtureSpec::default();
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.n_train {
        spec.n_train = n;
    }
    if let Some(size) = args.image_size {
        spec.image_size = size;
    }
    let manifest = write_fixture(&out, &spec)?;
    println!("{}", manifest.display());
    Ok(())
}
