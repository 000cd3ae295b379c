use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::data::parse_key_values;
use crate::error::{Error, Result};
use crate::networks::{RrwnetConfig, Variant};

/// Ranges of the online augmentations. Each family has its own switch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub color_jitter: bool,
    pub gain_min: f32,
    pub gain_max: f32,
    pub shift_min: f32,
    pub shift_max: f32,
    pub affine: bool,
    pub rotation_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub shear_deg: f64,
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub cutout: bool,
    pub cutout_min: usize,
    pub cutout_max: usize,
    pub cutout_max_fraction: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            color_jitter: true,
            gain_min: 0.8,
            gain_max: 1.2,
            shift_min: -0.1,
            shift_max: 0.1,
            affine: true,
            rotation_deg: 45.0,
            scale_min: 0.9,
            scale_max: 1.1,
            shear_deg: 10.0,
            hflip_p: 0.5,
            vflip_p: 0.5,
            cutout: true,
            cutout_min: 1,
            cutout_max: 3,
            cutout_max_fraction: 0.1,
        }
    }
}

impl AugmentationConfig {
    pub fn disabled() -> Self {
        AugmentationConfig {
            color_jitter: false,
            affine: false,
            hflip_p: 0.0,
            vflip_p: 0.0,
            cutout: false,
            ..Self::default()
        }
    }

    pub fn is_disabled(&self) -> bool {
        !self.color_jitter && !self.affine && self.hflip_p == 0.0 && self.vflip_p == 0.0 && !self.cutout
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.gain_min > self.gain_max || self.gain_min < 0.0 {
            return bad(format!("gain range [{}, {}]", self.gain_min, self.gain_max));
        }
        if self.shift_min > self.shift_max {
            return bad(format!("shift range [{}, {}]", self.shift_min, self.shift_max));
        }
        if self.scale_min > self.scale_max || self.scale_min <= 0.0 {
            return bad(format!("scale range [{}, {}]", self.scale_min, self.scale_max));
        }
        if self.rotation_deg < 0.0 || self.shear_deg < 0.0 || self.shear_deg >= 90.0 {
            return bad(format!("rotation {} / shear {} degrees", self.rotation_deg, self.shear_deg));
        }
        for p in [self.hflip_p, self.vflip_p] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("flip probability {p} outside [0, 1]"));
            }
        }
        if self.cutout_min > self.cutout_max || !(0.0..=1.0).contains(&self.cutout_max_fraction) {
            return bad(format!(
                "cutout count {}..{} / fraction {}",
                self.cutout_min, self.cutout_max, self.cutout_max_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub fold_count: usize,
    pub variant: Variant,
    pub base_channels: usize,
    pub depth: usize,
    /// Held-out share when training without cross-validation (`fold_count = 1`).
    pub validation_fraction: f64,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 6,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 1,
            early_stop_patience: 200,
            max_epochs: 2000,
            seed: 0,
            fold_count: 4,
            variant: Variant::Rrwnet,
            base_channels: 64,
            depth: 5,
            validation_fraction: 0.2,
            augmentation: AugmentationConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, line: usize, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config { line, message: format!("invalid value '{value}' for {key}") })
}

fn parse_bool(key: &str, line: usize, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config { line, message: format!("invalid boolean '{value}' for {key}") }),
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }

    pub fn model(&self) -> RrwnetConfig {
        RrwnetConfig::new(self.variant, self.base_channels, self.depth, self.k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size != 1 {
            return Err(Error::InvalidArgument(format!("batch_size must be 1, got {}", self.batch_size)));
        }
        if self.early_stop_patience == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument("early_stop_patience and max_epochs must be positive".into()));
        }
        if self.fold_count == 0 {
            return Err(Error::InvalidArgument("fold_count must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("validation_fraction {} outside (0, 1)", self.validation_fraction)));
        }
        self.adam().validate()?;
        self.model().validate()?;
        self.augmentation.validate()
    }

    /// Parses flat `key = value` text on top of the defaults. Unknown keys
    /// and malformed values are reported with their line number.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (key, (line, value)) in parse_key_values(text)? {
            let (l, v) = (line, value.as_str());
            let a = &mut c.augmentation;
            match key.as_str() {
                "k" => {
                    let k: i64 = parse(&key, l, v)?;
                    c.k = usize::try_from(k)
                        .map_err(|_| Error::Config { line: l, message: format!("k must be non-negative, got {k}") })?;
                }
                "learning_rate" => c.learning_rate = parse(&key, l, v)?,
                "beta1" => c.beta1 = parse(&key, l, v)?,
                "beta2" => c.beta2 = parse(&key, l, v)?,
                "batch_size" => c.batch_size = parse(&key, l, v)?,
                "early_stop_patience" => c.early_stop_patience = parse(&key, l, v)?,
                "max_epochs" => c.max_epochs = parse(&key, l, v)?,
                "seed" => c.seed = parse(&key, l, v)?,
                "fold_count" => c.fold_count = parse(&key, l, v)?,
                "variant" => {
                    c.variant = v.parse().map_err(|e: Error| Error::Config { line: l, message: e.to_string() })?
                }
                "base_channels" => c.base_channels = parse(&key, l, v)?,
                "depth" => c.depth = parse(&key, l, v)?,
                "validation_fraction" => c.validation_fraction = parse(&key, l, v)?,
                "color_jitter" => a.color_jitter = parse_bool(&key, l, v)?,
                "gain_min" => a.gain_min = parse(&key, l, v)?,
                "gain_max" => a.gain_max = parse(&key, l, v)?,
                "shift_min" => a.shift_min = parse(&key, l, v)?,
                "shift_max" => a.shift_max = parse(&key, l, v)?,
                "affine" => a.affine = parse_bool(&key, l, v)?,
                "rotation_deg" => a.rotation_deg = parse(&key, l, v)?,
                "scale_min" => a.scale_min = parse(&key, l, v)?,
                "scale_max" => a.scale_max = parse(&key, l, v)?,
                "shear_deg" => a.shear_deg = parse(&key, l, v)?,
                "hflip_p" => a.hflip_p = parse(&key, l, v)?,
                "vflip_p" => a.vflip_p = parse(&key, l, v)?,
                "cutout" => a.cutout = parse_bool(&key, l, v)?,
                "cutout_min" => a.cutout_min = parse(&key, l, v)?,
                "cutout_max" => a.cutout_max = parse(&key, l, v)?,
                "cutout_max_fraction" => a.cutout_max_fraction = parse(&key, l, v)?,
                _ => return Err(Error::Config { line: l, message: format!("unknown key '{key}'") }),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Renders every field in the format accepted by [`from_text`](Self::from_text).
    pub fn to_text(&self) -> String {
        let a = &self.augmentation;
        let mut s = String::new();
        let fields = [
            ("k", self.k.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("early_stop_patience", self.early_stop_patience.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("fold_count", self.fold_count.to_string()),
            ("variant", self.variant.name().to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("depth", self.depth.to_string()),
            ("validation_fraction", self.validation_fraction.to_string()),
            ("color_jitter", a.color_jitter.to_string()),
            ("gain_min", a.gain_min.to_string()),
            ("gain_max", a.gain_max.to_string()),
            ("shift_min", a.shift_min.to_string()),
            ("shift_max", a.shift_max.to_string()),
            ("affine", a.affine.to_string()),
            ("rotation_deg", a.rotation_deg.to_string()),
            ("scale_min", a.scale_min.to_string()),
            ("scale_max", a.scale_max.to_string()),
            ("shear_deg", a.shear_deg.to_string()),
            ("hflip_p", a.hflip_p.to_string()),
            ("vflip_p", a.vflip_p.to_string()),
            ("cutout", a.cutout.to_string()),
            ("cutout_min", a.cutout_min.to_string()),
            ("cutout_max", a.cutout_max.to_string()),
            ("cutout_max_fraction", a.cutout_max_fraction.to_string()),
        ];
        for (k, v) in fields {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
