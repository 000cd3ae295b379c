//! Evaluation: ROC/PR curves, artery/vein and vessel classification rates,
//! path connectivity (COR/INF), the one-tailed Wilcoxon test and reports.

mod classification;
mod curves;
mod report;
pub mod topology;
mod wilcoxon;

pub use classification::{av_classification, av_evaluated_pixels, binarize, bv_classification, AvInputs, Confusion, Protocol, Rates};
pub use curves::{pr_auc, roc_auc, Curve, CurvePoint};
pub use report::{
    evaluate, evaluate_image, fnv1a, image_seed, nan_mean, AucPair, EvalConfig, ImageMetrics, MetricReport, Prediction,
    CSV_COLUMNS,
};
pub use topology::{skeletonize, topo_cor_inf, PathOutcome, TopoConfig, TopoScore};
pub use wilcoxon::{doubled_ranks, wilcoxon_signed_rank_one_tailed, WilcoxonResult, EXACT_LIMIT, MIN_PAIRS};
