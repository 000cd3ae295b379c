//! The command-line pipeline driven in-process: synthesize a dataset, train
//! one holdout fold, predict the test images and evaluate the predictions.
//!
//! `cargo run --release --example cli_workflow -- [output-dir]`

use std::path::PathBuf;

fn rrwnet(args: &[&str]) {
    let code = rrwnet::cli::run(std::iter::once("rrwnet").chain(args.iter().copied()));
    assert_eq!(code, 0, "rrwnet {}", args.join(" "));
}

fn main() -> std::io::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cli-workflow".into()));
    std::fs::create_dir_all(&root)?;
    let path = |name: &str| root.join(name).to_string_lossy().into_owned();
    std::fs::write(root.join("tiny.cfg"), "base_channels = 4\ndepth = 2\nk = 2\nlearning_rate = 0.001\n")?;
    let (data, cfg) = (path("data"), path("tiny.cfg"));

    rrwnet(&["synth", "--out", &data, "--train-count", "12", "--test-count", "4", "--size", "48"]);
    rrwnet(&["train", "--config", &cfg, "--data", &data, "--out", &path("train"), "--folds", "1", "--max-epochs", "5"]);
    let ckpt = root.join("train/checkpoints/best.ckpt").to_string_lossy().into_owned();
    rrwnet(&["predict", "--checkpoint", &ckpt, "--data", &data, "--out", &path("predict")]);
    rrwnet(&["evaluate", "--pred", &path("predict"), "--data", &data, "--out", &path("evaluate"), "--paths", "200"]);

    print!("{}", std::fs::read_to_string(root.join("evaluate/reports/metrics.csv"))?);
    Ok(())
}
