//! The encoder-decoder subnetwork and the recursive refinement model built from it.

mod rrwnet;
mod unet;

pub use rrwnet::{Rrwnet, RrwnetConfig, Variant, ARTERY, BASE_PREFIX, REFINER_PREFIX, VEIN, VESSEL};
pub use unet::{unet_forward, UNetConfig};
