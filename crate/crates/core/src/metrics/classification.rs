use serde::{Deserialize, Serialize};

use crate::data::Mask;
use crate::error::{shape_err, Error, Result};

/// Values at or above the threshold become foreground.
pub fn binarize(values: &[f32], h: usize, w: usize, threshold: f32) -> Result<Mask> {
    Mask::threshold(h, w, values, threshold)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn pct(num: u64, den: u64) -> f64 {
        if den == 0 {
            f64::NAN
        } else {
            100.0 * num as f64 / den as f64
        }
    }

    pub fn rates(&self) -> Rates {
        Rates {
            sensitivity: Self::pct(self.tp, self.tp + self.fn_),
            specificity: Self::pct(self.tn, self.tn + self.fp),
            accuracy: Self::pct(self.tp + self.tn, self.total()),
            counts: Some(*self),
        }
    }
}

/// Percentages; NaN (serialised as `null`) when a class is absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counts: Option<Confusion>,
}

/// Which pixels an artery/vein decision is scored on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// GT vessel pixels that are also detected as vessel.
    Intersection,
    /// Every GT vessel pixel.
    AllGt,
}

/// Inputs for [`av_classification`], all at the same resolution.
pub struct AvInputs<'a> {
    pub pred_artery: &'a [f32],
    pub pred_vein: &'a [f32],
    pub pred_vessel: &'a [f32],
    pub gt_artery: &'a Mask,
    pub gt_vein: &'a Mask,
    /// ROI without crossings and uncertain pixels.
    pub eval_mask: &'a Mask,
}

/// The pixels scored under `protocol`.
pub fn av_evaluated_pixels(inp: &AvInputs<'_>, protocol: Protocol, threshold: f32) -> Result<Mask> {
    let (h, w) = inp.gt_artery.dims();
    let n = h * w;
    if inp.pred_artery.len() != n || inp.pred_vein.len() != n || inp.pred_vessel.len() != n {
        return Err(shape_err!("A/V classification: prediction sizes do not match {}x{}", h, w));
    }
    if inp.gt_vein.dims() != (h, w) || inp.eval_mask.dims() != (h, w) {
        return Err(shape_err!("A/V classification: mask sizes differ"));
    }
    let mut sel = inp.gt_artery.or(inp.gt_vein).and(inp.eval_mask);
    if protocol == Protocol::Intersection {
        sel = sel.and(&binarize(inp.pred_vessel, h, w, threshold)?);
    }
    Ok(sel)
}

/// Artery (positive) versus vein (negative) on ground-truth vessel pixels.
/// A pixel is predicted artery when `pred_artery >= pred_vein`.
pub fn av_classification(inp: &AvInputs<'_>, protocol: Protocol, threshold: f32) -> Result<Rates> {
    let sel = av_evaluated_pixels(inp, protocol, threshold)?;
    let mut c = Confusion::default();
    for (i, _) in sel.data().iter().enumerate().filter(|(_, &s)| s) {
        let is_artery = inp.gt_artery.data()[i];
        let says_artery = inp.pred_artery[i] >= inp.pred_vein[i];
        match (is_artery, says_artery) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    if c.total() == 0 {
        return Err(Error::InvalidArgument(format!("A/V classification ({protocol:?}): no pixels to evaluate")));
    }
    Ok(c.rates())
}

/// Vessel (positive) versus background over the ROI after binarisation.
pub fn bv_classification(pred_vessel: &[f32], gt_vessel: &Mask, roi: &Mask, threshold: f32) -> Result<Rates> {
    let (h, w) = gt_vessel.dims();
    if pred_vessel.len() != h * w || roi.dims() != (h, w) {
        return Err(shape_err!("vessel classification: sizes differ"));
    }
    if !roi.any() {
        return Err(Error::InvalidArgument("vessel classification over an empty ROI".into()));
    }
    let mut c = Confusion::default();
    for i in 0..h * w {
        if !roi.data()[i] {
            continue;
        }
        match (gt_vessel.data()[i], pred_vessel[i] >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c.rates())
}
