//! Minimal differentiable-computation engine: dense arrays, a recording tape
//! with reverse-mode gradients, and the Adam optimizer.

mod adam;
mod array;
mod exec;
pub mod kernels;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use array::{NdArray, Real};
pub use exec::{Eager, Exec, TapeExec};
pub use params::{he_normal, BoundParams, Params};
pub use tape::{Tape, Var, BCE_EPS};
