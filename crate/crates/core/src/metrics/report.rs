use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classification::{av_classification, binarize, bv_classification, AvInputs, Protocol, Rates};
use super::curves::{pr_auc, roc_auc};
use super::topology::{topo_cor_inf, TopoConfig, TopoScore};
use crate::autodiff::NdArray;
use crate::data::{FundusSample, Mask};
use crate::error::{shape_err, Error, Result};
use crate::networks::{ARTERY, VEIN, VESSEL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub threshold: f32,
    pub topology: Option<TopoConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { threshold: 0.5, topology: Some(TopoConfig::default()) }
    }
}

/// A `[3,H,W]` probability map (artery, vein, vessel) for one image.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub identifier: String,
    pub maps: NdArray<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucPair {
    pub auroc: f64,
    pub aupr: f64,
}

/// Metrics of one image, or their mean when `identifier` is `"mean"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub identifier: String,
    pub artery: AucPair,
    pub vein: AucPair,
    pub vessel: AucPair,
    pub av_intersection: Rates,
    pub av_all_gt: Rates,
    pub bv: Rates,
    pub topo_artery: Option<TopoScore>,
    pub topo_vein: Option<TopoScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: EvalConfig,
    pub images: Vec<ImageMetrics>,
    pub mean: ImageMetrics,
}

pub const CSV_COLUMNS: [&str; 23] = [
    "identifier",
    "artery_auroc",
    "artery_aupr",
    "vein_auroc",
    "vein_aupr",
    "vessel_auroc",
    "vessel_aupr",
    "av_intersection_sensitivity",
    "av_intersection_specificity",
    "av_intersection_accuracy",
    "av_all_gt_sensitivity",
    "av_all_gt_specificity",
    "av_all_gt_accuracy",
    "bv_sensitivity",
    "bv_specificity",
    "bv_accuracy",
    "artery_cor",
    "artery_inf",
    "vein_cor",
    "vein_inf",
    "av_intersection_pixels",
    "av_all_gt_pixels",
    "bv_pixels",
];

impl ImageMetrics {
    /// Flat numeric view in [`CSV_COLUMNS`] order (without the identifier).
    pub fn values(&self) -> Vec<f64> {
        let topo = |t: &Option<TopoScore>| t.map_or([f64::NAN; 2], |t| [t.cor, t.inf]);
        let pixels = |r: &Rates| r.counts.map_or(f64::NAN, |c| c.total() as f64);
        let mut v = vec![
            self.artery.auroc,
            self.artery.aupr,
            self.vein.auroc,
            self.vein.aupr,
            self.vessel.auroc,
            self.vessel.aupr,
        ];
        for r in [&self.av_intersection, &self.av_all_gt, &self.bv] {
            v.extend([r.sensitivity, r.specificity, r.accuracy]);
        }
        v.extend(topo(&self.topo_artery));
        v.extend(topo(&self.topo_vein));
        v.extend([pixels(&self.av_intersection), pixels(&self.av_all_gt), pixels(&self.bv)]);
        v
    }
}

/// Arithmetic mean ignoring NaN; NaN when nothing is defined.
pub fn nan_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().filter(|v| !v.is_nan()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn mean_of(images: &[ImageMetrics]) -> ImageMetrics {
    let m = |f: &dyn Fn(&ImageMetrics) -> f64| nan_mean(images.iter().map(f));
    let auc = |f: &dyn Fn(&ImageMetrics) -> AucPair| AucPair {
        auroc: m(&|i| f(i).auroc),
        aupr: m(&|i| f(i).aupr),
    };
    let rates = |f: &dyn Fn(&ImageMetrics) -> Rates| Rates {
        sensitivity: m(&|i| f(i).sensitivity),
        specificity: m(&|i| f(i).specificity),
        accuracy: m(&|i| f(i).accuracy),
        counts: None,
    };
    let topo = |f: &dyn Fn(&ImageMetrics) -> Option<TopoScore>| {
        images.iter().any(|i| f(i).is_some()).then(|| TopoScore {
            cor: m(&|i| f(i).map_or(f64::NAN, |t| t.cor)),
            inf: m(&|i| f(i).map_or(f64::NAN, |t| t.inf)),
        })
    };
    ImageMetrics {
        identifier: "mean".into(),
        artery: auc(&|i| i.artery),
        vein: auc(&|i| i.vein),
        vessel: auc(&|i| i.vessel),
        av_intersection: rates(&|i| i.av_intersection),
        av_all_gt: rates(&|i| i.av_all_gt),
        bv: rates(&|i| i.bv),
        topo_artery: topo(&|i| i.topo_artery),
        topo_vein: topo(&|i| i.topo_vein),
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Path-sampling seed for one image and class, independent of evaluation order.
pub fn image_seed(seed: u64, identifier: &str, class: usize) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(identifier.as_bytes());
    bytes.push(class as u8);
    fnv1a(&bytes)
}

fn auc_pair(scores: &[f32], labels: &Mask, mask: &Mask) -> AucPair {
    let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
    let auroc = roc_auc(&s, labels.data(), Some(mask.data())).map_or(f64::NAN, |c| c.area);
    let aupr = pr_auc(&s, labels.data(), Some(mask.data())).map_or(f64::NAN, |c| c.area);
    AucPair { auroc, aupr }
}

fn undefined_rates() -> Rates {
    Rates { sensitivity: f64::NAN, specificity: f64::NAN, accuracy: f64::NAN, counts: None }
}

/// All metrics for one image. Undefined metrics (e.g. a class absent from
/// the ground truth) are NaN.
pub fn evaluate_image(maps: &NdArray<f32>, sample: &FundusSample, cfg: &EvalConfig) -> Result<ImageMetrics> {
    let (c, h, w) = maps.chw()?;
    if c < 3 || (h, w) != sample.dims() {
        return Err(shape_err!(
            "{}: prediction is {}x{}x{}, expected 3x{}x{}",
            sample.identifier,
            c,
            h,
            w,
            sample.dims().0,
            sample.dims().1
        ));
    }
    let gt = sample.gt_maps();
    let eval_mask = sample.roi.and_not(&sample.crossing).and_not(&sample.uncertain);
    let (pa, pv, pb) = (maps.channel(ARTERY), maps.channel(VEIN), maps.channel(VESSEL));
    let inputs = AvInputs {
        pred_artery: pa,
        pred_vein: pv,
        pred_vessel: pb,
        gt_artery: &gt.artery,
        gt_vein: &gt.vein,
        eval_mask: &eval_mask,
    };
    let av = |p| match av_classification(&inputs, p, cfg.threshold) {
        Ok(r) => Ok(r),
        Err(Error::InvalidArgument(_)) => Ok(undefined_rates()),
        Err(e) => Err(e),
    };
    let topo = |pred: &[f32], gt_class: &Mask, class: usize| -> Result<Option<TopoScore>> {
        let Some(tc) = cfg.topology else { return Ok(None) };
        let tc = TopoConfig { seed: image_seed(tc.seed, &sample.identifier, class), ..tc };
        let pred_mask = binarize(pred, h, w, tc.threshold)?;
        match topo_cor_inf(gt_class, &pred_mask, &tc) {
            Ok(s) => Ok(Some(s)),
            Err(Error::InvalidArgument(_)) => Ok(Some(TopoScore { cor: f64::NAN, inf: f64::NAN })),
            Err(e) => Err(e),
        }
    };
    Ok(ImageMetrics {
        identifier: sample.identifier.clone(),
        artery: auc_pair(pa, &gt.artery, &eval_mask),
        vein: auc_pair(pv, &gt.vein, &eval_mask),
        vessel: auc_pair(pb, &gt.vessel, &sample.roi),
        av_intersection: av(Protocol::Intersection)?,
        av_all_gt: av(Protocol::AllGt)?,
        bv: bv_classification(pb, &gt.vessel, &sample.roi, cfg.threshold)?,
        topo_artery: topo(pa, &gt.artery, ARTERY)?,
        topo_vein: topo(pv, &gt.vein, VEIN)?,
    })
}

/// Evaluates predictions against samples, matched by identifier. Every
/// sample needs a prediction; missing or unmatched ones are listed together.
pub fn evaluate(predictions: &[Prediction], samples: &[FundusSample], cfg: &EvalConfig) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.identifier.as_str(), p)).collect();
    let mut problems: Vec<String> = samples
        .iter()
        .filter(|s| !by_id.contains_key(s.identifier.as_str()))
        .map(|s| format!("{}: missing prediction", s.identifier))
        .collect();
    let known: std::collections::BTreeSet<&str> = samples.iter().map(|s| s.identifier.as_str()).collect();
    problems.extend(
        predictions
            .iter()
            .filter(|p| !known.contains(p.identifier.as_str()))
            .map(|p| format!("{}: prediction has no ground truth", p.identifier)),
    );
    if !problems.is_empty() {
        return Err(Error::DataFiles(problems));
    }
    let mut ordered: Vec<&FundusSample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.identifier.cmp(&b.identifier));
    let images = ordered
        .par_iter()
        .map(|s| evaluate_image(&by_id[s.identifier.as_str()].maps, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mean = mean_of(&images);
    Ok(MetricReport { config: *cfg, images, mean })
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        for row in self.images.iter().chain(std::iter::once(&self.mean)) {
            let vals: Vec<String> = row.values().iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }).collect();
            writeln!(out, "{},{}", row.identifier, vals.join(","))?;
        }
        Ok(())
    }
}
