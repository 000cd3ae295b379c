//! Threshold-swept ROC and precision-recall curves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// FPR for ROC, recall for PR.
    pub x: f64,
    /// TPR for ROC, precision for PR.
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub area: f64,
}

impl Curve {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "threshold,x,y")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.threshold, p.x, p.y)?;
        }
        Ok(())
    }
}

/// Cumulative `(threshold, tp, fp)` at every distinct score, descending.
fn sweep(scores: &[f64], labels: &[bool], mask: Option<&[bool]>) -> Result<(Vec<(f64, usize, usize)>, usize, usize)> {
    if scores.len() != labels.len() || mask.is_some_and(|m| m.len() != scores.len()) {
        return Err(shape_err!(
            "curve inputs differ in length: {} scores, {} labels, {:?} mask",
            scores.len(),
            labels.len(),
            mask.map(<[bool]>::len)
        ));
    }
    let mut pairs: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(_, (&s, &l))| (s, l))
        .collect();
    if pairs.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos = pairs.iter().filter(|p| p.1).count();
    let neg = pairs.len() - pos;
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == t {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((t, tp, fp));
    }
    Ok((out, pos, neg))
}

/// ROC curve with trapezoidal AUROC. Tied scores form a single threshold, so
/// the area equals `P(score_pos > score_neg) + P(equal) / 2`.
pub fn roc_auc(scores: &[f64], labels: &[bool], mask: Option<&[bool]>) -> Result<Curve> {
    let (steps, pos, neg) = sweep(scores, labels, mask)?;
    if pos == 0 || neg == 0 {
        let missing = if pos == 0 { "positive" } else { "negative" };
        return Err(Error::InvalidArgument(format!("ROC needs both classes; no {missing} samples inside the mask")));
    }
    let mut points = vec![CurvePoint { threshold: f64::INFINITY, x: 0.0, y: 0.0 }];
    let mut area = 0.0;
    for (t, tp, fp) in steps {
        let x = fp as f64 / neg as f64;
        let y = tp as f64 / pos as f64;
        let prev = points.last().expect("seeded");
        area += (x - prev.x) * (y + prev.y) / 2.0;
        points.push(CurvePoint { threshold: t, x, y });
    }
    Ok(Curve { points, area })
}

/// Precision-recall curve with step-wise area: `sum (R_i - R_{i-1}) * P_i`
/// over distinct thresholds in descending order.
pub fn pr_auc(scores: &[f64], labels: &[bool], mask: Option<&[bool]>) -> Result<Curve> {
    let (steps, pos, _) = sweep(scores, labels, mask)?;
    if pos == 0 {
        return Err(Error::InvalidArgument("precision-recall needs at least one positive sample".into()));
    }
    let mut points = Vec::with_capacity(steps.len());
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (t, tp, fp) in steps {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / pos as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(CurvePoint { threshold: t, x: recall, y: precision });
    }
    Ok(Curve { points, area })
}
