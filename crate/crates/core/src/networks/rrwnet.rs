use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::unet::UNetConfig;
use crate::autodiff::{Eager, Exec, NdArray, Params, Real};
use crate::error::{shape_err, Error, Result};

pub const BASE_PREFIX: &str = "base";
pub const REFINER_PREFIX: &str = "refiner";

/// Channel layout of every stage output.
pub const ARTERY: usize = 0;
pub const VEIN: usize = 1;
pub const VESSEL: usize = 2;

/// Architecture variants compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Base network plus a refiner that sees and rewrites only the A/V maps.
    Rrwnet,
    /// Refiner consumes and rewrites A, V and BV.
    RrwnetAll,
    /// A single encoder-decoder, no refinement.
    UnetOnly,
    /// Base plus one refiner application (K = 1).
    Wnet,
    /// One encoder-decoder fed with the image and its own previous output.
    Rrunet,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::UnetOnly, Variant::Wnet, Variant::Rrunet, Variant::RrwnetAll, Variant::Rrwnet];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rrwnet => "rrwnet",
            Variant::RrwnetAll => "rrwnet_all",
            Variant::UnetOnly => "unet_only",
            Variant::Wnet => "wnet",
            Variant::Rrunet => "rrunet",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant '{s}' (expected one of rrwnet, rrwnet_all, unet_only, wnet, rrunet)")))
    }
}

/// Full model description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RrwnetConfig {
    pub base: UNetConfig,
    pub refiner: Option<UNetConfig>,
    /// Number of refinement iterations.
    pub k: usize,
    pub variant: Variant,
}

impl RrwnetConfig {
    /// Builds a consistent configuration for `variant`. `k` is overridden where
    /// the variant fixes it (W-Net: 1, U-Net only: 0).
    pub fn new(variant: Variant, base_channels: usize, depth: usize, k: usize) -> Self {
        let unet = |i, o| UNetConfig::new(i, o, base_channels, depth);
        match variant {
            Variant::Rrwnet => RrwnetConfig { base: unet(3, 3), refiner: Some(unet(2, 2)), k, variant },
            Variant::Wnet => RrwnetConfig { base: unet(3, 3), refiner: Some(unet(2, 2)), k: 1, variant },
            Variant::RrwnetAll => RrwnetConfig { base: unet(3, 3), refiner: Some(unet(3, 3)), k, variant },
            Variant::UnetOnly => RrwnetConfig { base: unet(3, 3), refiner: None, k: 0, variant },
            Variant::Rrunet => RrwnetConfig { base: unet(6, 3), refiner: None, k, variant },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("{msg}: {self:?}")));
        match (self.variant, self.refiner) {
            (Variant::Rrwnet | Variant::Wnet, Some(r)) if r.in_channels == 2 && r.out_channels == 2 => {}
            (Variant::RrwnetAll, Some(r)) if r.in_channels == 3 && r.out_channels == 3 => {}
            (Variant::UnetOnly | Variant::Rrunet, None) => {}
            _ => return bad("refiner shape does not match the variant"),
        }
        if let Some(r) = self.refiner {
            r.validate()?;
        }
        let base_in = if self.variant == Variant::Rrunet { 6 } else { 3 };
        if self.base.in_channels != base_in || self.base.out_channels != 3 {
            return bad("base network must map the image to three maps");
        }
        if self.variant == Variant::Wnet && self.k != 1 {
            return bad("wnet requires k = 1");
        }
        if self.variant == Variant::UnetOnly && self.k != 0 {
            return bad("unet_only has no refinement iterations");
        }
        Ok(())
    }

    /// Largest spatial factor any subnetwork needs.
    pub fn size_factor(&self) -> usize {
        let r = self.refiner.map_or(1, |r| r.size_factor());
        self.base.size_factor().max(r)
    }

    pub fn stage_count(&self) -> usize {
        self.k + 1
    }
}

/// The recursive refinement model. Parameters live outside in a [`Params`]
/// set so that the same definition serves `f32` training and `f64` checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rrwnet {
    pub config: RrwnetConfig,
}

impl Rrwnet {
    pub fn new(config: RrwnetConfig) -> Result<Self> {
        config.validate()?;
        Ok(Rrwnet { config })
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> Result<Params<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        self.config.base.init_params(BASE_PREFIX, &mut rng, &mut params)?;
        if let Some(r) = self.config.refiner {
            r.init_params(REFINER_PREFIX, &mut rng, &mut params)?;
        }
        Ok(params)
    }

    pub fn zero_params<T: Real>(&self) -> Result<Params<T>> {
        let mut params = Params::new();
        self.config.base.zero_params(BASE_PREFIX, &mut params)?;
        if let Some(r) = self.config.refiner {
            r.zero_params(REFINER_PREFIX, &mut params)?;
        }
        Ok(params)
    }

    fn refiner_config(&self) -> Result<&UNetConfig> {
        self.config
            .refiner
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("variant {} has no refiner", self.config.variant)))
    }

    /// Every stage output `[y_0, ..., y_K]`, each `[3,H,W]`.
    pub fn forward_stages<T: Real, E: Exec<T>>(&self, ex: &mut E, image: NdArray<T>) -> Result<Vec<E::Node>> {
        let cfg = &self.config;
        let k = cfg.k;
        let mut stages = Vec::with_capacity(k + 1);
        match cfg.variant {
            Variant::Rrwnet | Variant::Wnet => {
                let x = ex.input(image);
                let y0 = cfg.base.forward(ex, &x, BASE_PREFIX)?;
                let bv = ex.slice(&y0, VESSEL, 1)?;
                let mut av = ex.slice(&y0, ARTERY, 2)?;
                stages.push(y0);
                let refiner = *self.refiner_config()?;
                for _ in 0..k {
                    av = refiner.forward(ex, &av, REFINER_PREFIX)?;
                    stages.push(ex.concat(&av, &bv)?);
                }
            }
            Variant::RrwnetAll => {
                let x = ex.input(image);
                stages.push(cfg.base.forward(ex, &x, BASE_PREFIX)?);
                let refiner = *self.refiner_config()?;
                for _ in 0..k {
                    let next = refiner.forward(ex, stages.last().expect("nonempty"), REFINER_PREFIX)?;
                    stages.push(next);
                }
            }
            Variant::UnetOnly => {
                let x = ex.input(image);
                stages.push(cfg.base.forward(ex, &x, BASE_PREFIX)?);
            }
            Variant::Rrunet => {
                let (c, h, w) = image.chw()?;
                if c != 3 {
                    return Err(shape_err!("rrunet expects a 3-channel image, got {}", c));
                }
                let x = ex.input(image);
                let mut prev = ex.input(NdArray::zeros(&[3, h, w]));
                for _ in 0..=k {
                    let inp = ex.concat(&x, &prev)?;
                    let y = cfg.base.forward(ex, &inp, BASE_PREFIX)?;
                    prev = ex.slice(&y, 0, 3)?;
                    stages.push(y);
                }
            }
        }
        Ok(stages)
    }

    /// Eager inference returning every stage.
    pub fn predict_stages<T: Real>(&self, params: &Params<T>, image: &NdArray<T>) -> Result<Vec<NdArray<T>>> {
        let mut ex = Eager::new(params);
        self.forward_stages(&mut ex, image.clone())
    }

    /// Eager inference returning only the final stage `y_K`.
    pub fn predict<T: Real>(&self, params: &Params<T>, image: &NdArray<T>) -> Result<NdArray<T>> {
        Ok(self.predict_stages(params, image)?.pop().expect("at least one stage"))
    }

    /// The base network alone: `y_0`.
    pub fn base_forward<T: Real>(&self, params: &Params<T>, image: &NdArray<T>) -> Result<NdArray<T>> {
        let mut ex = Eager::new(params);
        let x = ex.input(image.clone());
        self.config.base.forward(&mut ex, &x, BASE_PREFIX)
    }

    /// One refiner application. Only map channels are accepted: two for
    /// `rrwnet`/`wnet`, three for `rrwnet_all`.
    pub fn rr_forward<T: Real>(&self, params: &Params<T>, maps: &NdArray<T>) -> Result<NdArray<T>> {
        let refiner = self.refiner_config()?;
        let (c, _, _) = maps.chw()?;
        if c != refiner.in_channels {
            return Err(shape_err!("refiner takes {} map channels, got {}", refiner.in_channels, c));
        }
        let mut ex = Eager::new(params);
        let x = ex.input(maps.clone());
        refiner.forward(&mut ex, &x, REFINER_PREFIX)
    }

    /// Applies the refiner `k` times to externally produced maps. For
    /// two-channel refiners a third (vessel) channel is carried through
    /// untouched when present.
    pub fn refine_maps<T: Real>(&self, params: &Params<T>, maps: &NdArray<T>, k: usize) -> Result<NdArray<T>> {
        let refiner = self.refiner_config()?;
        let (c, _, _) = maps.chw()?;
        let n = refiner.in_channels;
        if c < n {
            return Err(shape_err!("refine needs at least {} map channels, got {}", n, c));
        }
        let mut cur = maps.channels(0, n)?;
        for _ in 0..k {
            cur = self.rr_forward(params, &cur)?;
        }
        if c > n {
            let rest = maps.channels(n, c - n)?;
            cur = NdArray::concat_channels(&[&cur, &rest])?;
        }
        Ok(cur)
    }
}
