//! Layer primitives. Each forward has a paired backward with exact analytic
//! gradients; slice-level functions are used by the models, tensor-level
//! wrappers add shape checking.

pub mod activation;
pub mod attention;
pub mod dense;
pub mod layer_norm;
pub mod lstm;
pub mod posenc;

pub use activation::{softmax, softmax_cross_entropy, softmax_cross_entropy_batch};
pub use attention::{multi_head_attention, AttentionParams};
pub use dense::{dense, dense_grad};
pub use layer_norm::layer_norm;
pub use lstm::lstm_cell;
pub use posenc::positional_encoding;
