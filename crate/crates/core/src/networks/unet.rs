use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{he_normal, Eager, Exec, NdArray, Params, Real};
use crate::error::{shape_err, Error, Result};

/// Shape of one encoder-decoder subnetwork.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channels at the first level; level `i` has `base_channels * 2^i`.
    pub base_channels: usize,
    /// Number of resolution levels including the bottleneck.
    pub depth: usize,
}

impl UNetConfig {
    pub fn new(in_channels: usize, out_channels: usize, base_channels: usize, depth: usize) -> Self {
        UNetConfig { in_channels, out_channels, base_channels, depth }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_channels == 0 || self.depth == 0 {
            return Err(Error::InvalidArgument(format!("degenerate U-Net config {self:?}")));
        }
        if self.depth > 12 {
            return Err(Error::InvalidArgument(format!("U-Net depth {} is unreasonably large", self.depth)));
        }
        Ok(())
    }

    /// Spatial dimensions must be divisible by this factor.
    pub fn size_factor(&self) -> usize {
        1 << (self.depth - 1)
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// `(layer name, kernel shape)` for every layer, in initialisation order.
    pub fn layers(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut prev = self.in_channels;
        for level in 0..self.depth {
            let c = self.level_channels(level);
            out.push((format!("{prefix}.enc{level}.conv1"), vec![c, prev, 3, 3]));
            out.push((format!("{prefix}.enc{level}.conv2"), vec![c, c, 3, 3]));
            prev = c;
        }
        for level in (0..self.depth.saturating_sub(1)).rev() {
            let c = self.level_channels(level);
            out.push((format!("{prefix}.dec{level}.up"), vec![c, 2 * c, 3, 3]));
            out.push((format!("{prefix}.dec{level}.conv1"), vec![c, 2 * c, 3, 3]));
            out.push((format!("{prefix}.dec{level}.conv2"), vec![c, c, 3, 3]));
        }
        out.push((format!("{prefix}.head"), vec![self.out_channels, self.base_channels]));
        out
    }

    /// He-normal kernels, zero biases.
    pub fn init_params<T: Real>(&self, prefix: &str, rng: &mut impl Rng, params: &mut Params<T>) -> Result<()> {
        self.validate()?;
        for (name, shape) in self.layers(prefix) {
            let fan_in: usize = shape[1..].iter().product();
            params.insert(format!("{name}.weight"), he_normal(&shape, fan_in, rng))?;
            params.insert(format!("{name}.bias"), NdArray::zeros(&shape[..1]))?;
        }
        Ok(())
    }

    /// Zero weights and biases everywhere.
    pub fn zero_params<T: Real>(&self, prefix: &str, params: &mut Params<T>) -> Result<()> {
        for (name, shape) in self.layers(prefix) {
            params.insert(format!("{name}.weight"), NdArray::zeros(&shape))?;
            params.insert(format!("{name}.bias"), NdArray::zeros(&shape[..1]))?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers("")
            .iter()
            .map(|(_, s)| s.iter().product::<usize>() + s[0])
            .sum()
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [c, h, w] = shape else {
            return Err(shape_err!("U-Net input must be [C,H,W], got {:?}", shape));
        };
        if *c != self.in_channels {
            return Err(shape_err!("U-Net expects {} input channels, got {}", self.in_channels, c));
        }
        let f = self.size_factor();
        if h % f != 0 || w % f != 0 || *h == 0 || *w == 0 {
            let ph = h.div_ceil(f) * f;
            let pw = w.div_ceil(f) * f;
            return Err(shape_err!(
                "U-Net of depth {} needs H and W divisible by {}; pad {}x{} to {}x{}",
                self.depth,
                f,
                h,
                w,
                ph.max(f),
                pw.max(f)
            ));
        }
        Ok(())
    }

    /// Encoder-decoder body: sigmoid maps with the input's spatial size.
    pub fn forward<T: Real, E: Exec<T>>(&self, ex: &mut E, x: &E::Node, prefix: &str) -> Result<E::Node> {
        self.check_input(ex.value(x).shape())?;
        let mut skips = Vec::with_capacity(self.depth);
        let mut h: Option<E::Node> = None;
        for level in 0..self.depth {
            let pooled;
            let inp = match (&h, level) {
                (None, _) => x,
                (Some(prev), _) => {
                    pooled = ex.max_pool2(prev)?;
                    &pooled
                }
            };
            let a = ex.conv3x3(inp, &format!("{prefix}.enc{level}.conv1"))?;
            let a = ex.relu(a);
            let b = ex.conv3x3(&a, &format!("{prefix}.enc{level}.conv2"))?;
            let b = ex.relu(b);
            if let Some(prev) = h.take() {
                skips.push(prev);
            }
            h = Some(b);
        }
        let mut h = h.expect("depth >= 1");
        for level in (0..self.depth - 1).rev() {
            let up = ex.upsample2(&h)?;
            let up = ex.conv3x3(&up, &format!("{prefix}.dec{level}.up"))?;
            let skip = skips.pop().expect("one skip per level");
            let cat = ex.concat(&skip, &up)?;
            let a = ex.conv3x3(&cat, &format!("{prefix}.dec{level}.conv1"))?;
            let a = ex.relu(a);
            let b = ex.conv3x3(&a, &format!("{prefix}.dec{level}.conv2"))?;
            h = ex.relu(b);
        }
        let logits = ex.conv1x1(&h, &format!("{prefix}.head"))?;
        Ok(ex.sigmoid(logits))
    }
}

/// Runs a single U-Net eagerly on `image` (`[C_in,H,W]`).
pub fn unet_forward<T: Real>(image: &NdArray<T>, params: &Params<T>, config: &UNetConfig, prefix: &str) -> Result<NdArray<T>> {
    let mut ex = Eager::new(params);
    let x = ex.input(image.clone());
    config.forward(&mut ex, &x, prefix)
}
