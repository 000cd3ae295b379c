use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LOCK_FILE: &str = ".rrwnet.lock";

/// Reproducibility record written to an output directory before any work.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    /// Dataset layout in manifest form, if a dataset is involved.
    pub dataset: Option<String>,
    pub checkpoints: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub version: String,
    /// Fully resolved settings, one `key = value` per line.
    pub settings: String,
}

impl RunManifest {
    pub fn new(command: &str, out_dir: &Path, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_path: None,
            seed,
            dataset: None,
            checkpoints: Vec::new(),
            out_dir: out_dir.to_path_buf(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            version: env!("CARGO_PKG_VERSION").to_string(),
            settings: String::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let none = || "none".to_string();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "timestamp = {}", self.timestamp);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config = {}", self.config_path.as_ref().map_or_else(none, |p| p.display().to_string()));
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let ckpts: Vec<String> = self.checkpoints.iter().map(|p| p.display().to_string()).collect();
        let _ = writeln!(s, "checkpoints = {}", if ckpts.is_empty() { none() } else { ckpts.join(", ") });
        if let Some(d) = &self.dataset {
            s.push_str("\n[dataset]\n");
            s.push_str(d);
        }
        if !self.settings.is_empty() {
            s.push_str("\n[settings]\n");
            s.push_str(&self.settings);
        }
        s
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.out_dir.join(MANIFEST_FILE);
        fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    pub fn acquire(out_dir: &Path) -> Result<Self> {
        let path = out_dir.join(LOCK_FILE);
        let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::InvalidArgument(format!(
                    "{} is in use by another run (remove {} if that run is gone)",
                    out_dir.display(),
                    path.display()
                ))
            } else {
                Error::io(&path, e)
            }
        })?;
        Ok(OutputLock { path, _file: file })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Creates `out_dir` with its standard subfolders, takes the lock and writes the manifest.
pub fn start_run(manifest: &RunManifest) -> Result<OutputLock> {
    let out = &manifest.out_dir;
    for sub in ["", "checkpoints", "predictions", "reports"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let lock = OutputLock::acquire(out)?;
    manifest.write()?;
    Ok(lock)
}
