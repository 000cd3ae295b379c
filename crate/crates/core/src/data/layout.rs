//! Dataset directory conventions and loading.
//!
//! Each kind has a default layout below its root directory:
//!
//! | kind     | partitions                       | folders                 |
//! |----------|----------------------------------|-------------------------|
//! | `rite`   | `training/`, `test/`             | `images/ av/ mask/`     |
//! | `hrf`    | one folder; first 5 per category | `images/ av/ mask/`     |
//! | `les_av` | one folder, all test             | `images/ av/ mask/`     |
//! | `custom` | `train/`, `test/`                | `images/ av/ mask/`     |
//!
//! A `layout.txt` manifest (flat `key = value`) in the root, or passed
//! directly, overrides any of: `kind`, `root`, `images`, `gt`, `masks`,
//! `train`, `test`. Ground truth and mask files are matched to an image when
//! their stem equals the image stem or starts with it followed by `_`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gt_codec::{decode_gt_image, GtMaps};
use super::image_io::{read_gt_rgb, read_mask, read_rgb8, rgb_to_array};
use super::mask::Mask;
use super::preprocess::{preprocess, PreprocessConfig};
use super::resize::{resize_bilinear, resize_nearest, resize_policy, ResizeSpec};
use super::roi::synthesize_roi;
use crate::autodiff::NdArray;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "layout.txt";
const IMAGE_EXTS: [&str; 7] = ["png", "tif", "tiff", "jpg", "jpeg", "gif", "bmp"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Rite,
    LesAv,
    Hrf,
    Custom,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Rite => "rite",
            DatasetKind::LesAv => "les_av",
            DatasetKind::Hrf => "hrf",
            DatasetKind::Custom => "custom",
        }
    }

    /// Paths sampled per image for the connectivity metrics.
    pub fn default_paths(self) -> usize {
        match self {
            DatasetKind::Rite | DatasetKind::Custom => 1000,
            DatasetKind::Hrf | DatasetKind::LesAv => 100,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rite" => Ok(DatasetKind::Rite),
            "les_av" => Ok(DatasetKind::LesAv),
            "hrf" => Ok(DatasetKind::Hrf),
            "custom" => Ok(DatasetKind::Custom),
            _ => Err(Error::InvalidArgument(format!("unknown dataset kind '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
}

/// How images are assigned to partitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SplitRule {
    /// Separate sub-folders; `None` means the partition does not exist.
    Subdirs { train: Option<String>, test: Option<String> },
    /// The first `n` images (sorted) of each `_category` suffix are test images.
    FirstPerCategory(usize),
    AllTest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
    pub kind: DatasetKind,
    pub image_dir: String,
    pub gt_dir: String,
    pub mask_dir: String,
    pub split: SplitRule,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>, kind: DatasetKind) -> Self {
        let split = match kind {
            DatasetKind::Rite => SplitRule::Subdirs { train: Some("training".into()), test: Some("test".into()) },
            DatasetKind::Hrf => SplitRule::FirstPerCategory(5),
            DatasetKind::LesAv => SplitRule::AllTest,
            DatasetKind::Custom => SplitRule::Subdirs { train: Some("train".into()), test: Some("test".into()) },
        };
        DatasetLayout {
            root: root.into(),
            kind,
            image_dir: "images".into(),
            gt_dir: "av".into(),
            mask_dir: "mask".into(),
            split,
        }
    }

    /// Resolves `path`: a manifest file, a directory containing `layout.txt`,
    /// or a plain directory of the given default kind.
    pub fn resolve(path: &Path, default_kind: DatasetKind) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Data(format!("dataset path {} does not exist", path.display())));
        }
        if path.is_file() {
            return Self::from_manifest(path);
        }
        let manifest = path.join(MANIFEST_NAME);
        if manifest.is_file() {
            return Self::from_manifest(&manifest);
        }
        Ok(Self::new(path, default_kind))
    }

    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = parse_key_values(&text)?;
        let get = |k: &str| entries.get(k).map(|(_, v)| v.clone());
        for (k, (line, _)) in &entries {
            if !["kind", "root", "images", "gt", "masks", "train", "test"].contains(&k.as_str()) {
                return Err(Error::Config { line: *line, message: format!("unknown layout key '{k}'") });
            }
        }
        let kind: DatasetKind = get("kind").as_deref().unwrap_or("custom").parse()?;
        let base = path.parent().unwrap_or(Path::new("."));
        let root = get("root").map_or_else(|| base.to_path_buf(), |r| base.join(r));
        let mut layout = DatasetLayout::new(root, kind);
        if let Some(v) = get("images") {
            layout.image_dir = v;
        }
        if let Some(v) = get("gt") {
            layout.gt_dir = v;
        }
        if let Some(v) = get("masks") {
            layout.mask_dir = v;
        }
        if entries.contains_key("train") || entries.contains_key("test") {
            let opt = |v: Option<String>| v.filter(|s| !s.is_empty());
            layout.split = SplitRule::Subdirs { train: opt(get("train")), test: opt(get("test")) };
        }
        Ok(layout)
    }

    pub fn to_manifest(&self) -> String {
        let mut s = format!(
            "kind = {}\nimages = {}\ngt = {}\nmasks = {}\n",
            self.kind, self.image_dir, self.gt_dir, self.mask_dir
        );
        if let SplitRule::Subdirs { train, test } = &self.split {
            s += &format!("train = {}\ntest = {}\n", train.as_deref().unwrap_or(""), test.as_deref().unwrap_or(""));
        }
        s
    }
}

/// Parses flat `key = value` text; `#` starts a comment. Keys map to `(line, value)`.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config { line: i + 1, message: format!("expected 'key = value', got '{line}'") })?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), (i + 1, v.trim().to_string())).is_some() {
            return Err(Error::Config { line: i + 1, message: format!("duplicate key '{k}'") });
        }
    }
    Ok(out)
}

/// One image with its ground truth at working resolution.
#[derive(Clone, Debug)]
pub struct FundusSample {
    pub identifier: String,
    /// `[3,H,W]`: preprocessed values, or raw 0-255 intensities when loaded without preprocessing.
    pub image: NdArray<f32>,
    /// `[3,H,W]` binary artery, vein, vessel channels.
    pub gt: NdArray<f32>,
    pub roi: Mask,
    pub crossing: Mask,
    pub uncertain: Mask,
    pub original_size: (usize, usize),
    pub resize: ResizeSpec,
}

impl FundusSample {
    pub fn dims(&self) -> (usize, usize) {
        self.roi.dims()
    }

    pub fn gt_maps(&self) -> GtMaps {
        let (h, w) = self.dims();
        let m = |c| Mask::threshold(h, w, self.gt.channel(c), 0.5f32).expect("dims");
        GtMaps::from_avb(m(0), m(1), m(2))
    }

    /// Builds a sample from decoded ground truth, enforcing every invariant.
    pub fn new(identifier: String, image: NdArray<f32>, gt: &GtMaps, roi: Mask) -> Result<Self> {
        let (_, h, w) = image.chw()?;
        if gt.dims() != (h, w) || roi.dims() != (h, w) {
            return Err(Error::Data(format!(
                "{identifier}: image {}x{}, ground truth {:?}, mask {:?}",
                h,
                w,
                gt.dims(),
                roi.dims()
            )));
        }
        gt.check_invariants().map_err(|e| Error::Data(format!("{identifier}: {e}")))?;
        if !gt.vessel.is_subset_of(&roi) {
            return Err(Error::Data(format!("{identifier}: vessel pixels outside the region of interest")));
        }
        Ok(FundusSample {
            identifier,
            image,
            gt: gt.to_array(),
            roi,
            crossing: gt.crossing.clone(),
            uncertain: gt.uncertain.clone(),
            original_size: (h, w),
            resize: ResizeSpec::identity(h, w),
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<FundusSample>,
    pub test: Vec<FundusSample>,
}

impl Dataset {
    pub fn partition(&self, p: Partition) -> &[FundusSample] {
        match p {
            Partition::Train => &self.train,
            Partition::Test => &self.test,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    /// Apply the per-kind working-resolution rule.
    pub resize: bool,
    pub preprocess: Option<PreprocessConfig>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { resize: true, preprocess: Some(PreprocessConfig::default()) }
    }
}

impl LoadOptions {
    /// Ground truth at native resolution; images left as raw intensities.
    pub fn evaluation() -> Self {
        LoadOptions { resize: false, preprocess: None }
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// The file in `candidates` belonging to image `id`.
fn match_file<'a>(id: &str, candidates: &'a [PathBuf]) -> std::result::Result<Option<&'a PathBuf>, String> {
    if let Some(p) = candidates.iter().find(|p| stem(p) == id) {
        return Ok(Some(p));
    }
    let prefix = format!("{id}_");
    let hits: Vec<_> = candidates.iter().filter(|p| stem(p).starts_with(&prefix)).collect();
    match hits.len() {
        0 => Ok(None),
        1 => Ok(Some(hits[0])),
        _ => Err(format!("{id}: ambiguous matches {hits:?}")),
    }
}

struct Entry {
    id: String,
    image: PathBuf,
    gt: PathBuf,
    mask: Option<PathBuf>,
}

fn scan_folder(folder: &Path, layout: &DatasetLayout, errors: &mut Vec<String>) -> Vec<Entry> {
    let images = match list_images(&folder.join(&layout.image_dir)) {
        Ok(v) => v,
        Err(e) => {
            errors.push(e.to_string());
            return Vec::new();
        }
    };
    let gts = list_images(&folder.join(&layout.gt_dir)).unwrap_or_else(|e| {
        errors.push(e.to_string());
        Vec::new()
    });
    let mask_dir = folder.join(&layout.mask_dir);
    let masks = if mask_dir.is_dir() { list_images(&mask_dir).unwrap_or_default() } else { Vec::new() };
    let mut out = Vec::new();
    for img in images {
        let id = stem(&img);
        let gt = match match_file(&id, &gts) {
            Ok(Some(p)) => p.clone(),
            Ok(None) => {
                errors.push(format!("{}: no ground truth found in {}", img.display(), folder.join(&layout.gt_dir).display()));
                continue;
            }
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let mask = match match_file(&id, &masks) {
            Ok(m) => m.cloned(),
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        out.push(Entry { id, image: img, gt, mask });
    }
    out
}

fn hrf_category(id: &str) -> &str {
    id.rsplit_once('_').map_or("", |(_, c)| c)
}

fn load_entry(e: &Entry, kind: DatasetKind, opts: &LoadOptions) -> Result<FundusSample> {
    let rgb = read_rgb8(&e.image)?;
    let gt_img = read_gt_rgb(&e.gt)?;
    if gt_img.dimensions() != rgb.dimensions() {
        return Err(Error::Data(format!(
            "{}: ground truth is {:?} but image is {:?}",
            e.gt.display(),
            gt_img.dimensions(),
            rgb.dimensions()
        )));
    }
    let gt = decode_gt_image(&gt_img)?;
    let roi = match &e.mask {
        Some(p) => read_mask(p)?,
        None => synthesize_roi(&rgb),
    };
    if roi.dims() != gt.dims() {
        return Err(Error::Data(format!("{}: mask size {:?} differs from image", e.id, roi.dims())));
    }
    let (h, w) = gt.dims();
    let spec = if opts.resize { resize_policy(kind, h, w) } else { ResizeSpec::identity(h, w) };
    let (nh, nw) = spec.working;
    let image = resize_bilinear(&rgb_to_array(&rgb), nh, nw)?;
    let gt = if spec.is_identity() {
        gt
    } else {
        GtMaps::from_avb(
            resize_nearest(&gt.artery, nh, nw),
            resize_nearest(&gt.vein, nh, nw),
            resize_nearest(&gt.vessel, nh, nw),
        )
    };
    let roi = resize_nearest(&roi, nh, nw);
    let image = match &opts.preprocess {
        Some(cfg) => preprocess(&image, &roi, cfg)?,
        None => image,
    };
    let mut s = FundusSample::new(e.id.clone(), image, &gt, roi)?;
    s.original_size = (h, w);
    s.resize = spec;
    Ok(s)
}

/// Loads every sample of a layout. Any per-file problem aborts the load with
/// the complete list of failures.
pub fn load_dataset(layout: &DatasetLayout, opts: &LoadOptions) -> Result<Dataset> {
    if !layout.root.is_dir() {
        return Err(Error::Data(format!("dataset directory {} does not exist", layout.root.display())));
    }
    let mut errors = Vec::new();
    let mut assigned: Vec<(Partition, Entry)> = Vec::new();
    match &layout.split {
        SplitRule::Subdirs { train, test } => {
            for (part, sub) in [(Partition::Train, train), (Partition::Test, test)] {
                if let Some(sub) = sub {
                    let folder = if sub == "." { layout.root.clone() } else { layout.root.join(sub) };
                    for e in scan_folder(&folder, layout, &mut errors) {
                        assigned.push((part, e));
                    }
                }
            }
        }
        SplitRule::FirstPerCategory(n) => {
            let mut seen: BTreeMap<String, usize> = BTreeMap::new();
            for e in scan_folder(&layout.root, layout, &mut errors) {
                let c = seen.entry(hrf_category(&e.id).to_string()).or_default();
                *c += 1;
                let part = if *c <= *n { Partition::Test } else { Partition::Train };
                assigned.push((part, e));
            }
        }
        SplitRule::AllTest => {
            for e in scan_folder(&layout.root, layout, &mut errors) {
                assigned.push((Partition::Test, e));
            }
        }
    }
    if !errors.is_empty() {
        return Err(Error::DataFiles(errors));
    }
    let loaded: Vec<(Partition, std::result::Result<FundusSample, String>)> = assigned
        .par_iter()
        .map(|(p, e)| (*p, load_entry(e, layout.kind, opts).map_err(|err| format!("{}: {err}", e.image.display()))))
        .collect();
    let mut ds = Dataset::default();
    for (p, r) in loaded {
        match r {
            Ok(s) => match p {
                Partition::Train => ds.train.push(s),
                Partition::Test => ds.test.push(s),
            },
            Err(msg) => errors.push(msg),
        }
    }
    if !errors.is_empty() {
        return Err(Error::DataFiles(errors));
    }
    ds.train.sort_by(|a, b| a.identifier.cmp(&b.identifier));
    ds.test.sort_by(|a, b| a.identifier.cmp(&b.identifier));
    Ok(ds)
}
