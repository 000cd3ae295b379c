//! The `rrwnet` command-line tool.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_ablate, cmd_evaluate, cmd_ksearch, cmd_predict, cmd_refine, cmd_synth, cmd_train, fold_splits, list_map_ids,
    predict_sample, read_maps, table_values, write_maps, AblationResult, AblationRow, KSearchResult, Settings,
    TrainSummary, MAP_SUFFIXES, TABLE_ROWS,
};
pub use manifest::{start_run, OutputLock, RunManifest, LOCK_FILE, MANIFEST_FILE};

use crate::data::DatasetKind;
use crate::error::{Error, Result};
use crate::networks::Variant;
use crate::synth::SynthConfig;
use crate::training::TrainConfig;

pub const THREADS_ENV: &str = "RRWNET_THREADS";

#[derive(Parser, Debug)]
#[command(name = "rrwnet", version, about = "Retinal artery/vein segmentation with recursive refinement")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Training configuration file (flat `key = value` lines)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Dataset root directory
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Dataset kind used when the root has no layout.txt [rite, les_av, hrf, custom]
    #[arg(long, global = true, value_name = "KIND", default_value = "custom")]
    pub kind: DatasetKind,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "rrwnet-out")]
    pub out: PathBuf,
    /// Seed for every random component [default: config value, else 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Refinement iterations K [default: config value, else 6]
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Model variant [rrwnet, wnet, rrwnet_all, unet_only, rrunet; default: config value, else rrwnet]
    #[arg(long, global = true, value_name = "NAME")]
    pub variant: Option<Variant>,
    /// Cross-validation folds, 1 for a single holdout split [default: config value, else 4]
    #[arg(long, global = true, value_name = "N")]
    pub folds: Option<usize>,
    /// Sampled paths per image for COR/INF [default: 100 for hrf and les_av, 1000 otherwise]
    #[arg(long, global = true, value_name = "N")]
    pub paths: Option<usize>,
    /// Binarisation threshold for classification and topology metrics
    #[arg(long, global = true, default_value_t = 0.5)]
    pub threshold: f32,
    /// Maximum training epochs [default: config value, else 2000]
    #[arg(long, global = true, value_name = "N")]
    pub max_epochs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Train with cross-validation and keep the best fold as best.ckpt
    Train,
    /// Predict full-resolution maps for the test images
    Predict {
        /// Model checkpoint
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
    },
    /// Refine external artery/vein maps with a trained refiner
    Refine {
        /// Checkpoint holding the refiner weights
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Directory of <id>_artery.png and <id>_vein.png maps (<id>_vessel.png optional)
        #[arg(long, value_name = "DIR")]
        maps: PathBuf,
    },
    /// Score a prediction directory against the ground truth
    Evaluate {
        /// Prediction directory (or a run directory containing predictions/)
        #[arg(long, value_name = "DIR")]
        pred: PathBuf,
    },
    /// Compare refinement iteration counts on validation folds
    Ksearch {
        /// Comma-separated K values
        #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "2,3,6,8,11")]
        k_list: Vec<usize>,
    },
    /// Train and compare model variants with paired significance tests
    Ablate {
        /// Comma-separated variant names
        #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "unet_only,wnet,rrunet,rrwnet_all,rrwnet")]
        variants: Vec<Variant>,
    },
    /// Write the synthetic curve benchmark as a dataset into --out
    Synth {
        /// Training images
        #[arg(long, default_value_t = 40)]
        train_count: usize,
        /// Test images
        #[arg(long, default_value_t = 20)]
        test_count: usize,
        /// Image side length in pixels
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

/// Loads the config file (or defaults) and applies the flag overrides.
pub fn resolve_config(g: &GlobalArgs) -> Result<TrainConfig> {
    let mut cfg = match &g.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(k) = g.k {
        cfg.k = k;
    }
    if let Some(v) = g.variant {
        cfg.variant = v;
    }
    if let Some(f) = g.folds {
        cfg.fold_count = f;
    }
    if let Some(e) = g.max_epochs {
        cfg.max_epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn settings(g: &GlobalArgs) -> Result<Settings> {
    if !(0.0..=1.0).contains(&g.threshold) {
        return Err(Error::InvalidArgument(format!("threshold {} outside [0, 1]", g.threshold)));
    }
    if g.paths == Some(0) {
        return Err(Error::InvalidArgument("--paths must be positive".into()));
    }
    Ok(Settings {
        config: resolve_config(g)?,
        config_path: g.config.clone(),
        data: g.data.clone(),
        kind: g.kind,
        out: g.out.clone(),
        threshold: g.threshold,
        paths: g.paths,
    })
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.code() {
        "E_USAGE" => 2,
        "E_NUMERIC" => 4,
        _ => 3,
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV}={v} is not a positive integer")))?;
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a parsed command line, printing a summary to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    configure_threads()?;
    let s = settings(&cli.global)?;
    let explicit_model = cli.global.config.is_some() || cli.global.variant.is_some();
    let say = |out: &mut dyn Write, text: String| {
        let _ = writeln!(out, "{text}");
    };
    match &cli.command {
        Command::Train => {
            let r = cmd_train(&s)?;
            say(out, format!("best fold {} (validation loss {:.6}) -> {}", r.best_fold, r.best_val_loss, r.best.display()));
        }
        Command::Predict { checkpoint } => {
            let written = cmd_predict(&s, checkpoint, explicit_model, cli.global.k)?;
            say(out, format!("wrote maps for {} images to {}", written.len(), s.out.join("predictions").display()));
        }
        Command::Refine { checkpoint, maps } => {
            let ids = cmd_refine(&s, checkpoint, maps, cli.global.k)?;
            say(out, format!("refined {} images into {}", ids.len(), s.out.join("predictions").display()));
        }
        Command::Evaluate { pred } => {
            let r = cmd_evaluate(&s, pred)?;
            say(out, format!("evaluated {} images -> {}", r.images.len(), s.out.join("reports").display()));
        }
        Command::Ksearch { k_list } => {
            let r = cmd_ksearch(&s, k_list)?;
            let _ = write!(out, "{}", r.csv);
            say(out, format!("selected K = {}", r.best_k));
        }
        Command::Ablate { variants } => {
            let r = cmd_ablate(&s, variants)?;
            let _ = write!(out, "{}", r.csv);
        }
        Command::Synth { train_count, test_count, size } => {
            let cfg = SynthConfig { size: *size, ..SynthConfig::default() };
            cmd_synth(&s, &cfg, *train_count, *test_count)?;
            say(out, format!("wrote {train_count} training and {test_count} test images to {}", s.out.display()));
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            let detail = e.to_string().replace('\n', "; ");
            eprintln!("{}: {detail}", e.code());
            exit_code(&e)
        }
    }
}
