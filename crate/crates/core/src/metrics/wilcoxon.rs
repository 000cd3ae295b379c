use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{shape_err, Error, Result};

/// Largest number of non-zero differences handled by the exact distribution.
pub const EXACT_LIMIT: usize = 25;

pub const MIN_PAIRS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks of `|d|`, doubled so that tied ranks stay integral.
pub fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, times two
        let r = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// One-tailed Wilcoxon signed-rank test of `a > b` on paired samples.
///
/// Zero differences are dropped. Up to [`EXACT_LIMIT`] remaining pairs the
/// p-value comes from the exact permutation distribution of the (midranked)
/// statistic; above that, from the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_signed_rank_one_tailed(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(shape_err!("Wilcoxon: {} vs {} paired values", a.len(), b.len()));
    }
    if a.len() < MIN_PAIRS {
        return Err(Error::InvalidArgument(format!("Wilcoxon needs at least {MIN_PAIRS} pairs, got {}", a.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("Wilcoxon: NaN in paired values".into()));
    }
    if d.is_empty() {
        return Err(Error::InvalidArgument("Wilcoxon: all paired differences are zero".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w2: u64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let w_plus = w2 as f64 / 2.0;
    if n <= EXACT_LIMIT {
        return Ok(WilcoxonResult { w_plus, n, p_value: exact_upper_tail(&ranks, w2), exact: true });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus - mean - 0.5) / var.sqrt();
    let normal = Normal::standard();
    Ok(WilcoxonResult { w_plus, n, p_value: 1.0 - normal.cdf(z), exact: false })
}

/// `P(W2 >= observed)` with every sign assignment equally likely.
fn exact_upper_tail(ranks: &[u64], observed: u64) -> f64 {
    let total: u64 = ranks.iter().sum();
    // counts[s] = number of sign assignments with positive-rank sum s
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let tail: f64 = counts[observed as usize..].iter().sum();
    tail / 2f64.powi(ranks.len() as i32)
}
