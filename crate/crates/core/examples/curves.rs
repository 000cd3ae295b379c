//! ROC and precision-recall curves with their areas, printed as CSV.

use rrwnet::metrics::{pr_auc, roc_auc};

fn main() -> rrwnet::Result<()> {
    let scores = [0.95, 0.9, 0.8, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2, 0.1];
    let labels = [true, true, false, true, true, false, false, true, false, false];
    let roc = roc_auc(&scores, &labels, None)?;
    let pr = pr_auc(&scores, &labels, None)?;
    println!("AUROC = {:.4}, AUPR = {:.4}", roc.area, pr.area);
    println!("# ROC (x = false positive rate, y = true positive rate)");
    roc.write_csv(std::io::stdout()).map_err(|e| rrwnet::Error::Data(e.to_string()))?;
    println!("# PR (x = recall, y = precision)");
    pr.write_csv(std::io::stdout()).map_err(|e| rrwnet::Error::Data(e.to_string()))?;

    let mask = [true, true, true, true, true, true, true, true, false, false];
    println!("AUROC on the first eight samples = {:.4}", roc_auc(&scores, &labels, Some(&mask))?.area);
    Ok(())
}
