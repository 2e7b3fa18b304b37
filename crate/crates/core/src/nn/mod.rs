//! Minimal differentiable numerical core in 64-bit floats.

pub mod adam;
pub mod gradcheck;
pub mod linalg;
pub mod ops;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use params::{GradientSet, ParameterSet};
pub use tensor::Tensor;
