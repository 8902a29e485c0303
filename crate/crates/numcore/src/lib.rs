//! Numerical foundation shared by every stage of the pipeline.
//!
//! * [`tape`]: matrix-valued reverse-mode differentiation. Gradients are
//!   themselves recorded on the tape, so a gradient can be differentiated
//!   again (needed by the WGAN gradient penalty).
//! * [`dual`]: nested forward-mode dual numbers for exact first and second
//!   derivatives with respect to low-dimensional inputs.
//! * [`params`]: named parameter blocks with a flat view for optimizers.
//! * [`adam`]: bias-corrected Adam.
//! * [`rng`]: labelled, reproducible random streams.

pub mod adam;
pub mod dual;
pub mod error;
pub mod params;
pub mod rng;
pub mod special;
pub mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dual::{input_derivative, seed2, Dual, Dual2, Scalar};
pub use error::NumError;
pub use params::{grad_params, ParamVector};
pub use rng::{draw_normal, draw_uniform, RngStream};
pub use tape::{Tape, Var};

/// Row-major dense 2-D array of `f64`. Vectors are stored as `1 × n` rows
/// or `n × 1` columns depending on context.
pub type RealArray = ndarray::Array2<f64>;
