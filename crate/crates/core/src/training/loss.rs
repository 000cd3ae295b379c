use crate::autodiff::{NdArray, Real, Tape, Var};
use crate::error::{shape_err, Result};

/// Per-stage loss weights `[w_0, ..., w_K]`: `w_0 = 1` and `w_k = k / Z`
/// with `Z = 1 + 2 + ... + K`, so the refinement weights sum to one.
pub fn iteration_weights(k: usize) -> Vec<f64> {
    let z = (k * (k + 1) / 2) as f64;
    std::iter::once(1.0)
        .chain((1..=k).map(|j| j as f64 / z))
        .collect()
}

/// Sum over the channels of `pred` of the per-channel mean BCE, restricted to `roi`.
pub fn segmentation_loss<T: Real>(tape: &mut Tape<T>, pred: Var, gt: &NdArray<T>, roi: Option<&[bool]>) -> Result<Var> {
    let (c, h, w) = tape.value(pred).chw()?;
    if gt.shape() != [c, h, w] {
        return Err(shape_err!("segmentation loss: prediction {:?} vs ground truth {:?}", [c, h, w], gt.shape()));
    }
    if let Some(m) = roi {
        if m.len() != h * w {
            return Err(shape_err!("segmentation loss: ROI has {} pixels, maps have {}", m.len(), h * w));
        }
    }
    let mut terms = Vec::with_capacity(c);
    for ch in 0..c {
        let p = tape.slice_channels(pred, ch, 1)?;
        let t = gt.channels(ch, 1)?;
        terms.push((tape.bce(p, &t, roi)?, T::one()));
    }
    tape.weighted_sum(&terms)
}

/// Stage-weighted sum of segmentation losses over `[y_0, ..., y_K]`.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    stages: &[Var],
    gt: &NdArray<T>,
    roi: Option<&[bool]>,
    k: usize,
) -> Result<Var> {
    if stages.len() != k + 1 {
        return Err(shape_err!("total loss: {} stages for K = {}", stages.len(), k));
    }
    let weights = iteration_weights(k);
    let mut terms = Vec::with_capacity(stages.len());
    for (&s, &w) in stages.iter().zip(&weights) {
        terms.push((segmentation_loss(tape, s, gt, roi)?, T::lit(w)));
    }
    tape.weighted_sum(&terms)
}

/// [`total_loss`] evaluated on plain arrays (no gradients).
pub fn total_loss_value<T: Real>(stages: &[NdArray<T>], gt: &NdArray<T>, roi: Option<&[bool]>, k: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = stages.iter().map(|s| tape.constant(s.clone())).collect();
    let loss = total_loss(&mut tape, &vars, gt, roi, k)?;
    Ok(tape.value(loss).item()?.as_f64())
}

/// [`segmentation_loss`] evaluated on plain arrays.
pub fn segmentation_loss_value<T: Real>(pred: &NdArray<T>, gt: &NdArray<T>, roi: Option<&[bool]>) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let loss = segmentation_loss(&mut tape, p, gt, roi)?;
    Ok(tape.value(loss).item()?.as_f64())
}
