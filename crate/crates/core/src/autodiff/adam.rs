use serde::{Deserialize, Serialize};

use super::array::{NdArray, Real};
use super::params::Params;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0) || !in_unit(self.beta1) || !in_unit(self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Bias-corrected Adam moments for one [`Params`] set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real = f32> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<NdArray<T>>,
    pub second_moment: Vec<NdArray<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &Params<T>, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let zeros = || params.values().iter().map(|v| NdArray::zeros(v.shape())).collect();
        Ok(AdamState { config, step_count: 0, first_moment: zeros(), second_moment: zeros() })
    }

    /// Applies one update. `grads` is aligned with the parameter order.
    pub fn step(&mut self, params: &mut Params<T>, grads: &[Option<NdArray<T>>]) -> Result<()> {
        if grads.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(shape_err!(
                "adam: {} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                self.first_moment.len()
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            let g = g.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("adam: missing gradient for {}", params.names()[i]))
            })?;
            if g.shape() != params.values()[i].shape() || self.first_moment[i].shape() != g.shape() {
                return Err(shape_err!("adam: gradient shape mismatch for {}", params.names()[i]));
            }
        }

        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.learning_rate), T::lit(c.epsilon));

        for (i, p) in params.values_mut().iter_mut().enumerate() {
            let g = grads[i].as_ref().expect("checked above");
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
