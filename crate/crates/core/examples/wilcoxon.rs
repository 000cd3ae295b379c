//! One-tailed Wilcoxon signed-rank test on paired per-image scores.

use rrwnet::metrics::wilcoxon_signed_rank_one_tailed;

fn main() -> rrwnet::Result<()> {
    let refined = [95.1, 94.2, 96.0, 93.8, 95.5, 94.9, 96.3, 95.0, 94.4, 95.7];
    let baseline = [94.0, 94.5, 95.1, 92.9, 94.8, 94.9, 95.2, 94.1, 94.6, 94.3];
    let r = wilcoxon_signed_rank_one_tailed(&refined, &baseline)?;
    println!(
        "W+ = {}, non-zero pairs = {}, p = {:.5} ({})",
        r.w_plus,
        r.n,
        r.p_value,
        if r.exact { "exact" } else { "normal approximation" }
    );

    let a: Vec<f64> = (0..40).map(|i| 80.0 + (i as f64 * 0.7).sin() + 0.3).collect();
    let b: Vec<f64> = (0..40).map(|i| 80.0 + (i as f64 * 1.3).cos()).collect();
    let r = wilcoxon_signed_rank_one_tailed(&a, &b)?;
    println!("40 pairs: p = {:.5} (exact: {})", r.p_value, r.exact);
    Ok(())
}
