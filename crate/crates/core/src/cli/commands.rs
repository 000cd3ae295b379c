use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::{start_run, OutputLock, RunManifest};
use crate::autodiff::{NdArray, Params};
use crate::checkpoint::Checkpoint;
use crate::data::image_io::{read_probability, write_probability, write_rgb};
use crate::data::{
    crop, encode_gt_rgb, load_dataset, pad_to_multiple, resize_bilinear, resize_policy, DatasetKind, DatasetLayout,
    FundusSample, LoadOptions,
};
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate, wilcoxon_signed_rank_one_tailed, EvalConfig, ImageMetrics, MetricReport, Prediction, TopoConfig,
};
use crate::networks::{Rrwnet, Variant, ARTERY, VEIN, VESSEL};
use crate::synth::{generate_set, write_dataset, SynthConfig};
use crate::training::{cross_validation_split, holdout_split, TrainConfig, TrainOptions, TrainResult, Trainer};

pub const MAP_SUFFIXES: [&str; 3] = ["artery", "vein", "vessel"];

/// Settings shared by every command, after merging the config file and flags.
#[derive(Clone, Debug)]
pub struct Settings {
    pub config: TrainConfig,
    pub config_path: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub kind: DatasetKind,
    pub out: PathBuf,
    pub threshold: f32,
    pub paths: Option<usize>,
}

impl Settings {
    pub fn new(config: TrainConfig, out: impl Into<PathBuf>) -> Self {
        Settings {
            config,
            config_path: None,
            data: None,
            kind: DatasetKind::Custom,
            out: out.into(),
            threshold: 0.5,
            paths: None,
        }
    }

    pub fn layout(&self) -> Result<DatasetLayout> {
        let data = self.data.as_ref().ok_or_else(|| Error::InvalidArgument("--data is required".into()))?;
        if !data.exists() {
            return Err(Error::Data(format!("dataset path {} does not exist", data.display())));
        }
        DatasetLayout::resolve(data, self.kind)
    }

    fn manifest(&self, command: &str) -> RunManifest {
        let mut m = RunManifest::new(command, &self.out, self.config.seed);
        m.config_path = self.config_path.clone();
        m.settings = self.config.to_text();
        let _ = writeln!(m.settings, "threshold = {}", self.threshold);
        if let Some(p) = self.paths {
            let _ = writeln!(m.settings, "paths = {p}");
        }
        m
    }

    fn start(&self, command: &str, layout: Option<&DatasetLayout>, checkpoints: &[&Path]) -> Result<OutputLock> {
        let mut m = self.manifest(command);
        m.dataset = layout.map(DatasetLayout::to_manifest);
        m.checkpoints = checkpoints.iter().map(|p| p.to_path_buf()).collect();
        start_run(&m)
    }

    fn eval_config(&self, kind: DatasetKind, topology: bool) -> EvalConfig {
        EvalConfig {
            threshold: self.threshold,
            topology: topology.then(|| TopoConfig {
                n_paths: self.paths.unwrap_or(kind.default_paths()),
                threshold: self.threshold,
                seed: self.config.seed,
                ..TopoConfig::default()
            }),
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_report(dir: &Path, stem: &str, report: &MetricReport) -> Result<()> {
    write_text(&dir.join(format!("{stem}.json")), &report.to_json())?;
    let path = dir.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(|e| Error::io(&path, e))?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))
}

/// Final-stage maps of a sample at its working resolution.
pub fn predict_sample(model: &Rrwnet, params: &Params<f32>, sample: &FundusSample) -> Result<NdArray<f32>> {
    let (padded, spec) = pad_to_multiple(&sample.image, model.config.size_factor())?;
    crop(&model.predict(params, &padded)?, spec)
}

/// Writes the three probability maps as 16-bit PNGs plus an RGB composite.
pub fn write_maps(dir: &Path, id: &str, maps: &NdArray<f32>) -> Result<()> {
    let (_, h, w) = maps.chw()?;
    for (c, suffix) in MAP_SUFFIXES.iter().enumerate() {
        write_probability(&dir.join(format!("{id}_{suffix}.png")), h, w, maps.channel(c))?;
    }
    let composite = encode_gt_rgb(maps.channel(ARTERY), maps.channel(VEIN), maps.channel(VESSEL), h, w)?;
    write_rgb(&dir.join(format!("{id}_composite.png")), &composite)
}

/// Identifiers with an `<id>_artery.png` map in `dir`, sorted.
pub fn list_map_ids(dir: &Path) -> Result<Vec<String>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids: Vec<String> = rd
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("_artery.png")).map(str::to_string))
        .collect();
    ids.sort();
    Ok(ids)
}

/// Reads the maps of one image; the vessel map is optional.
pub fn read_maps(dir: &Path, id: &str) -> std::result::Result<(NdArray<f32>, bool), Vec<String>> {
    let mut planes = Vec::new();
    let mut problems = Vec::new();
    let mut dims = None;
    for suffix in MAP_SUFFIXES {
        let path = dir.join(format!("{id}_{suffix}.png"));
        if suffix == "vessel" && !path.exists() {
            break;
        }
        match read_probability(&path) {
            Ok((h, w, v)) => {
                if dims.is_some_and(|d| d != (h, w)) {
                    problems.push(format!("{}: size {}x{} differs from the artery map", path.display(), h, w));
                }
                dims.get_or_insert((h, w));
                planes.push(v);
            }
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }
    if !problems.is_empty() {
        return Err(problems);
    }
    let (h, w) = dims.expect("artery map read");
    let has_vessel = planes.len() == 3;
    let c = planes.len();
    let arr = NdArray::new(vec![c, h, w], planes.concat()).map_err(|e| vec![e.to_string()])?;
    Ok((arr, has_vessel))
}

fn read_map_dir(dir: &Path, ids: &[String]) -> Result<Vec<(String, NdArray<f32>, bool)>> {
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for id in ids {
        match read_maps(dir, id) {
            Ok((m, v)) => out.push((id.clone(), m, v)),
            Err(p) => problems.extend(p),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::DataFiles(problems))
    }
}

fn train_samples(s: &Settings) -> Result<(DatasetLayout, Vec<FundusSample>)> {
    let layout = s.layout()?;
    let ds = load_dataset(&layout, &LoadOptions::default())?;
    if ds.train.is_empty() {
        return Err(Error::Data(format!("no training images under {}", layout.root.display())));
    }
    Ok((layout, ds.train))
}

/// Fold assignments: cross-validation for two or more folds, otherwise one holdout split.
pub fn fold_splits(cfg: &TrainConfig, n: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if cfg.fold_count >= 2 {
        cross_validation_split(n, cfg.fold_count, cfg.seed)
    } else {
        Ok(vec![holdout_split(n, cfg.validation_fraction, cfg.seed)])
    }
}

fn pick(samples: &[FundusSample], idx: &[usize]) -> Vec<FundusSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

fn train_fold(
    cfg: &TrainConfig,
    train: &[FundusSample],
    val: &[FundusSample],
    fold: usize,
    log_path: &Path,
    diag_path: &Path,
) -> Result<TrainResult> {
    let mut log = Vec::new();
    let mut trainer = Trainer::new(cfg)?;
    let result = trainer.fit(
        train,
        val,
        TrainOptions { log: Some(&mut log), diagnostic_path: Some(diag_path.to_path_buf()), fold: Some(fold) },
    );
    fs::write(log_path, &log).map_err(|e| Error::io(log_path, e))?;
    result
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub fold_checkpoints: Vec<PathBuf>,
    pub best: PathBuf,
    pub best_fold: usize,
    pub best_val_loss: f64,
}

/// Trains one model per fold and copies the lowest-validation-loss fold to `best.ckpt`.
pub fn cmd_train(s: &Settings) -> Result<TrainSummary> {
    let layout = s.layout()?;
    let _lock = s.start("train", Some(&layout), &[])?;
    let (_, samples) = train_samples(s)?;
    let ckpt_dir = s.out.join("checkpoints");
    let reports = s.out.join("reports");
    let mut fold_checkpoints = Vec::new();
    let mut best: Option<(usize, f64, Checkpoint)> = None;
    for (f, (tr, va)) in fold_splits(&s.config, samples.len())?.into_iter().enumerate() {
        let result = train_fold(
            &s.config,
            &pick(&samples, &tr),
            &pick(&samples, &va),
            f,
            &reports.join(format!("train_fold{f}.csv")),
            &ckpt_dir.join(format!("fold{f}_diagnostic.ckpt")),
        )?;
        let path = ckpt_dir.join(format!("fold{f}.ckpt"));
        result.best.save(&path)?;
        fold_checkpoints.push(path);
        let loss = result.best.provenance.val_loss.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|b| loss < b.1) {
            best = Some((f, loss, result.best));
        }
    }
    let (best_fold, best_val_loss, ckpt) = best.expect("at least one fold");
    let best_path = ckpt_dir.join("best.ckpt");
    ckpt.save(&best_path)?;
    Ok(TrainSummary { fold_checkpoints, best: best_path, best_fold, best_val_loss })
}

fn load_model(s: &Settings, checkpoint: &Path, explicit: bool) -> Result<(Rrwnet, Checkpoint)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if explicit {
        let want = s.config.model();
        let have = ckpt.model;
        if want.variant != have.variant || want.base != have.base || want.refiner != have.refiner {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} model ({} base channels, depth {}), but the configuration asks for {} ({} base channels, depth {})",
                checkpoint.display(),
                have.variant,
                have.base.base_channels,
                have.base.depth,
                want.variant,
                want.base.base_channels,
                want.base.depth
            )));
        }
    }
    Ok((Rrwnet::new(ckpt.model)?, ckpt))
}

/// Overrides the number of refinement iterations where the variant allows it.
fn with_k(model: Rrwnet, k: Option<usize>) -> Result<Rrwnet> {
    match k {
        Some(k) if k != model.config.k => {
            let mut c = model.config;
            c.k = k;
            Rrwnet::new(c)
        }
        _ => Ok(model),
    }
}

/// Writes full-resolution maps for every test image.
pub fn cmd_predict(s: &Settings, checkpoint: &Path, explicit_model: bool, k: Option<usize>) -> Result<Vec<PathBuf>> {
    let layout = s.layout()?;
    let _lock = s.start("predict", Some(&layout), &[checkpoint])?;
    let (model, ckpt) = load_model(s, checkpoint, explicit_model)?;
    let model = with_k(model, k)?;
    let ds = load_dataset(&layout, &LoadOptions::default())?;
    if ds.test.is_empty() {
        return Err(Error::Data(format!("no test images under {}", layout.root.display())));
    }
    let dir = s.out.join("predictions");
    let mut written = Vec::new();
    for sample in &ds.test {
        let maps = predict_sample(&model, &ckpt.params, sample)?;
        let maps = if sample.resize.is_identity() { maps } else { sample.resize.restore(&maps)? };
        write_maps(&dir, &sample.identifier, &maps)?;
        written.push(dir.join(format!("{}_composite.png", sample.identifier)));
    }
    Ok(written)
}

fn copy_file(from: &Path, to: &Path) -> Result<()> {
    fs::copy(from, to).map(|_| ()).map_err(|e| Error::io(from, e))
}

/// Applies the refiner `k` times to externally produced maps.
pub fn cmd_refine(s: &Settings, checkpoint: &Path, maps_dir: &Path, k: Option<usize>) -> Result<Vec<String>> {
    let layout = match &s.data {
        Some(_) => Some(s.layout()?),
        None => None,
    };
    let _lock = s.start("refine", layout.as_ref(), &[checkpoint])?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = Rrwnet::new(ckpt.model)?;
    let k = k.unwrap_or(model.config.k);
    if !maps_dir.is_dir() {
        return Err(Error::Data(format!("map directory {} does not exist", maps_dir.display())));
    }
    let ids = list_map_ids(maps_dir)?;
    if ids.is_empty() {
        return Err(Error::Data(format!("no *_artery.png maps in {}", maps_dir.display())));
    }
    let out = s.out.join("predictions");
    let inputs = read_map_dir(maps_dir, &ids)?;
    let refiner = model.config.refiner;
    let mut refined = Vec::new();
    for (id, maps, has_vessel) in &inputs {
        let (_, h, w) = maps.chw()?;
        if k == 0 {
            for suffix in MAP_SUFFIXES.iter().take(if *has_vessel { 3 } else { 2 }) {
                let name = format!("{id}_{suffix}.png");
                copy_file(&maps_dir.join(&name), &out.join(&name))?;
            }
            let composite = maps_dir.join(format!("{id}_composite.png"));
            if composite.exists() {
                copy_file(&composite, &out.join(format!("{id}_composite.png")))?;
            }
            refined.push((id.clone(), maps.clone(), *has_vessel));
            continue;
        }
        let r = refiner.ok_or_else(|| Error::InvalidArgument(format!("variant {} has no refiner", model.config.variant)))?;
        if r.in_channels == 3 && !has_vessel {
            return Err(Error::Data(format!("{id}: {} refines vessel maps too, but {id}_vessel.png is missing", model.config.variant)));
        }
        let spec = resize_policy(s.kind, h, w);
        let (wh, ww) = spec.working;
        let work = if spec.is_identity() { maps.clone() } else { resize_bilinear(maps, wh, ww)? };
        let (padded, crop_spec) = pad_to_multiple(&work, model.config.size_factor())?;
        let out_maps = crop(&model.refine_maps(&ckpt.params, &padded, k)?, crop_spec)?;
        let out_maps = if spec.is_identity() { out_maps } else { spec.restore(&out_maps)? };
        let (_, oh, ow) = out_maps.chw()?;
        write_probability(&out.join(format!("{id}_artery.png")), oh, ow, out_maps.channel(ARTERY))?;
        write_probability(&out.join(format!("{id}_vein.png")), oh, ow, out_maps.channel(VEIN))?;
        if *has_vessel {
            let name = format!("{id}_vessel.png");
            if r.in_channels == 3 {
                write_probability(&out.join(&name), oh, ow, out_maps.channel(VESSEL))?;
            } else {
                copy_file(&maps_dir.join(&name), &out.join(&name))?;
            }
            let (vessel_maps, _) = read_maps(&out, id).map_err(Error::DataFiles)?;
            let composite = encode_gt_rgb(
                vessel_maps.channel(ARTERY),
                vessel_maps.channel(VEIN),
                vessel_maps.channel(VESSEL),
                oh,
                ow,
            )?;
            write_rgb(&out.join(format!("{id}_composite.png")), &composite)?;
            refined.push((id.clone(), vessel_maps, true));
        } else {
            refined.push((id.clone(), out_maps, false));
        }
    }
    if let Some(layout) = &layout {
        let with_vessel = |v: &[(String, NdArray<f32>, bool)]| -> Vec<Prediction> {
            v.iter().filter(|x| x.2).map(|(id, m, _)| Prediction { identifier: id.clone(), maps: m.clone() }).collect()
        };
        let (before, after) = (with_vessel(&inputs), with_vessel(&refined));
        if before.len() == inputs.len() {
            let samples = evaluation_samples(layout, &ids)?;
            let cfg = s.eval_config(layout.kind, true);
            let reports = s.out.join("reports");
            write_report(&reports, "before", &evaluate(&before, &samples, &cfg)?)?;
            write_report(&reports, "after", &evaluate(&after, &samples, &cfg)?)?;
        }
    }
    Ok(ids)
}

/// Ground truth at native resolution for the given identifiers.
fn evaluation_samples(layout: &DatasetLayout, ids: &[String]) -> Result<Vec<FundusSample>> {
    let ds = load_dataset(layout, &LoadOptions::evaluation())?;
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let all: Vec<FundusSample> = ds.test.into_iter().chain(ds.train).collect();
    let known: BTreeSet<&str> = all.iter().map(|s| s.identifier.as_str()).collect();
    let missing: Vec<String> = wanted
        .iter()
        .filter(|id| !known.contains(*id))
        .map(|id| format!("{id}: no ground truth in {}", layout.root.display()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::DataFiles(missing));
    }
    Ok(all.into_iter().filter(|s| wanted.contains(s.identifier.as_str())).collect())
}

/// Scores a prediction directory against the test partition.
pub fn cmd_evaluate(s: &Settings, pred_dir: &Path) -> Result<MetricReport> {
    let layout = s.layout()?;
    let _lock = s.start("evaluate", Some(&layout), &[])?;
    let nested = pred_dir.join("predictions");
    let dir = if nested.is_dir() { nested } else { pred_dir.to_path_buf() };
    if !dir.is_dir() {
        return Err(Error::Data(format!("prediction directory {} does not exist", pred_dir.display())));
    }
    let ds = load_dataset(&layout, &LoadOptions::evaluation())?;
    let samples = if ds.test.is_empty() { ds.train } else { ds.test };
    let ids = list_map_ids(&dir)?;
    let have: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let mut problems: Vec<String> = samples
        .iter()
        .filter(|x| !have.contains(x.identifier.as_str()))
        .map(|x| format!("{}: no prediction in {}", x.identifier, dir.display()))
        .collect();
    let known: BTreeSet<&str> = samples.iter().map(|x| x.identifier.as_str()).collect();
    problems.extend(ids.iter().filter(|id| !known.contains(id.as_str())).map(|id| format!("{id}: prediction without ground truth")));
    if !problems.is_empty() {
        return Err(Error::DataFiles(problems));
    }
    let mut preds = Vec::new();
    let mut bad = Vec::new();
    for (id, maps, has_vessel) in read_map_dir(&dir, &ids)? {
        if has_vessel {
            preds.push(Prediction { identifier: id, maps });
        } else {
            bad.push(format!("{id}: missing {id}_vessel.png"));
        }
    }
    if !bad.is_empty() {
        return Err(Error::DataFiles(bad));
    }
    let report = evaluate(&preds, &samples, &s.eval_config(layout.kind, true))?;
    write_report(&s.out.join("reports"), "metrics", &report)?;
    Ok(report)
}

/// The twelve rows of the comparison tables: `(evaluation, structure, metric)`.
pub const TABLE_ROWS: [(&str, &str, &str); 12] = [
    ("Segmentation", "Artery", "AUROC"),
    ("Segmentation", "Artery", "AUPR"),
    ("Segmentation", "Vein", "AUROC"),
    ("Segmentation", "Vein", "AUPR"),
    ("Segmentation", "BV", "AUROC"),
    ("Segmentation", "BV", "AUPR"),
    ("Classification", "Artery/Vein", "Sens."),
    ("Classification", "Artery/Vein", "Spec."),
    ("Classification", "Artery/Vein", "Acc."),
    ("Classification", "BV/BG", "Sens."),
    ("Classification", "BV/BG", "Spec."),
    ("Classification", "BV/BG", "Acc."),
];

/// Table values (percentages) in [`TABLE_ROWS`] order. A/V rates use every
/// ground-truth vessel pixel except crossings and uncertain ones.
pub fn table_values(m: &ImageMetrics) -> [f64; 12] {
    let (a, v, b) = (&m.av_all_gt, &m.bv, &m);
    [
        100.0 * b.artery.auroc,
        100.0 * b.artery.aupr,
        100.0 * b.vein.auroc,
        100.0 * b.vein.aupr,
        100.0 * b.vessel.auroc,
        100.0 * b.vessel.aupr,
        a.sensitivity,
        a.specificity,
        a.accuracy,
        v.sensitivity,
        v.specificity,
        v.accuracy,
    ]
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.2}")
    }
}

/// Trains on `samples` and scores each fold's model on its validation images.
fn fold_metrics(cfg: &TrainConfig, samples: &[FundusSample], s: &Settings, tag: &str) -> Result<MetricReport> {
    let mut preds = Vec::new();
    let mut scored = Vec::new();
    for (f, (tr, va)) in fold_splits(cfg, samples.len())?.into_iter().enumerate() {
        let (train, val) = (pick(samples, &tr), pick(samples, &va));
        let reports = s.out.join("reports");
        let result = train_fold(
            cfg,
            &train,
            &val,
            f,
            &reports.join(format!("train_{tag}_fold{f}.csv")),
            &s.out.join("checkpoints").join(format!("{tag}_fold{f}_diagnostic.ckpt")),
        )?;
        let model = Rrwnet::new(result.best.model)?;
        let eval_on = if val.is_empty() { &train } else { &val };
        for sample in eval_on {
            preds.push(Prediction { identifier: sample.identifier.clone(), maps: predict_sample(&model, &result.best.params, sample)? });
            scored.push(sample.clone());
        }
    }
    evaluate(&preds, &scored, &EvalConfig { threshold: s.threshold, topology: None })
}

#[derive(Clone, Debug)]
pub struct KSearchResult {
    pub k_values: Vec<usize>,
    /// Mean table values per K, in [`TABLE_ROWS`] order.
    pub values: Vec<[f64; 12]>,
    pub best_k: usize,
    pub csv: String,
}

/// Trains and validates one model per K and tabulates the validation metrics.
pub fn cmd_ksearch(s: &Settings, k_list: &[usize]) -> Result<KSearchResult> {
    if k_list.is_empty() {
        return Err(Error::InvalidArgument("empty K list".into()));
    }
    let layout = s.layout()?;
    let _lock = s.start("ksearch", Some(&layout), &[])?;
    let (_, samples) = train_samples(s)?;
    let mut values = Vec::new();
    for &k in k_list {
        let cfg = TrainConfig { k, ..s.config };
        cfg.validate()?;
        let report = fold_metrics(&cfg, &samples, s, &format!("k{k}"))?;
        write_report(&s.out.join("reports"), &format!("ksearch_k{k}"), &report)?;
        values.push(table_values(&report.mean));
    }
    let score = |v: &[f64; 12]| crate::metrics::nan_mean(v.iter().copied());
    let best = (0..k_list.len()).max_by(|&a, &b| score(&values[a]).total_cmp(&score(&values[b]))).expect("nonempty");
    let mut csv = String::from("evaluation,structure,metric");
    for k in k_list {
        let _ = write!(csv, ",K={k}");
    }
    csv.push_str(",best\n");
    for (r, (ev, st, me)) in TABLE_ROWS.iter().enumerate() {
        let _ = write!(csv, "{ev},{st},{me}");
        for v in &values {
            let _ = write!(csv, ",{}", fmt_cell(v[r]));
        }
        let row_best = (0..k_list.len()).max_by(|&a, &b| values[a][r].total_cmp(&values[b][r])).expect("nonempty");
        let _ = writeln!(csv, ",K={}", k_list[row_best]);
    }
    let _ = write!(csv, "Summary,All,Mean");
    for v in &values {
        let _ = write!(csv, ",{}", fmt_cell(score(v)));
    }
    let _ = writeln!(csv, ",K={}", k_list[best]);
    write_text(&s.out.join("reports").join("ksearch.csv"), &csv)?;
    Ok(KSearchResult { k_values: k_list.to_vec(), values, best_k: k_list[best], csv })
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub values: Vec<f64>,
    /// Indices of the best and second-best variant with the one-tailed p-value.
    pub comparison: Option<(usize, usize, Option<f64>)>,
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub variants: Vec<Variant>,
    pub rows: Vec<AblationRow>,
    pub csv: String,
}

/// Trains every variant, scores it on the test partition and compares the
/// best two per metric with a one-tailed Wilcoxon signed-rank test.
pub fn cmd_ablate(s: &Settings, variants: &[Variant]) -> Result<AblationResult> {
    if variants.is_empty() {
        return Err(Error::InvalidArgument("no variants requested".into()));
    }
    let layout = s.layout()?;
    let _lock = s.start("ablate", Some(&layout), &[])?;
    let ds = load_dataset(&layout, &LoadOptions::default())?;
    if ds.train.is_empty() || ds.test.is_empty() {
        return Err(Error::Data("ablation needs both training and test images".into()));
    }
    let ckpt_dir = s.out.join("checkpoints");
    let reports = s.out.join("reports");
    let mut per_variant: Vec<Vec<[f64; 12]>> = Vec::new();
    let mut means = Vec::new();
    for &v in variants {
        let cfg = TrainConfig { variant: v, ..s.config };
        cfg.validate()?;
        let (tr, va) = holdout_split(ds.train.len(), cfg.validation_fraction, cfg.seed);
        let result = train_fold(
            &cfg,
            &pick(&ds.train, &tr),
            &pick(&ds.train, &va),
            0,
            &reports.join(format!("train_{v}.csv")),
            &ckpt_dir.join(format!("{v}_diagnostic.ckpt")),
        )?;
        result.best.save(&ckpt_dir.join(format!("{v}.ckpt")))?;
        let model = Rrwnet::new(result.best.model)?;
        let preds = ds
            .test
            .iter()
            .map(|x| Ok(Prediction { identifier: x.identifier.clone(), maps: predict_sample(&model, &result.best.params, x)? }))
            .collect::<Result<Vec<_>>>()?;
        let report = evaluate(&preds, &ds.test, &EvalConfig { threshold: s.threshold, topology: None })?;
        write_report(&reports, &format!("ablation_{v}"), &report)?;
        per_variant.push(report.images.iter().map(table_values).collect());
        means.push(table_values(&report.mean));
    }
    let mut rows = Vec::new();
    for r in 0..TABLE_ROWS.len() {
        let values: Vec<f64> = means.iter().map(|m| m[r]).collect();
        let comparison = (variants.len() >= 2).then(|| {
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
            let (best, second) = (order[0], order[1]);
            let a: Vec<f64> = per_variant[best].iter().map(|x| x[r]).collect();
            let b: Vec<f64> = per_variant[second].iter().map(|x| x[r]).collect();
            let paired: (Vec<f64>, Vec<f64>) = a.iter().zip(&b).filter(|(x, y)| !x.is_nan() && !y.is_nan()).map(|(x, y)| (*x, *y)).unzip();
            let p = wilcoxon_signed_rank_one_tailed(&paired.0, &paired.1).ok().map(|w| w.p_value);
            (best, second, p)
        });
        rows.push(AblationRow { values, comparison });
    }
    let mut csv = String::from("evaluation,structure,metric");
    for v in variants {
        let _ = write!(csv, ",{v}");
    }
    if variants.len() >= 2 {
        csv.push_str(",best,second,p_value");
    }
    csv.push('\n');
    for ((ev, st, me), row) in TABLE_ROWS.iter().zip(&rows) {
        let _ = write!(csv, "{ev},{st},{me}");
        for v in &row.values {
            let _ = write!(csv, ",{}", fmt_cell(*v));
        }
        if let Some((b, sec, p)) = row.comparison {
            let _ = write!(csv, ",{},{},{}", variants[b], variants[sec], p.map_or(String::new(), |p| format!("{p:.6}")));
        }
        csv.push('\n');
    }
    write_text(&reports.join("ablation.csv"), &csv)?;
    Ok(AblationResult { variants: variants.to_vec(), rows, csv })
}

/// Writes the synthetic benchmark as a `custom` dataset in the output directory.
pub fn cmd_synth(s: &Settings, cfg: &SynthConfig, train_count: usize, test_count: usize) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(&s.out).map_err(|e| Error::io(&s.out, e))?;
    let _lock = super::manifest::OutputLock::acquire(&s.out)?;
    let mut m = s.manifest("synth");
    let _ = writeln!(m.settings, "synth = {}", serde_json::to_string(cfg).expect("serialisable"));
    let _ = writeln!(m.settings, "train_count = {train_count}\ntest_count = {test_count}");
    m.write()?;
    let seed = s.config.seed;
    let train = generate_set(cfg, seed, 0, train_count)?;
    let test = generate_set(cfg, seed, train_count, test_count)?;
    write_dataset(&s.out, &train, &test)
}
