//! Binarized factorization machine: every coefficient is ±1, with one real
//! scale for the linear part (`alpha`) and one for the interactions (`beta`).
//!
//! Training keeps full-precision proxies, quantizes them by sign in the
//! forward pass and pushes straight-through gradients back into the proxies
//! with Adagrad (or plain SGD for comparison).

mod adagrad;
mod model;
mod ste;
mod train;

pub use adagrad::{adagrad_step, AdagradState};
pub use model::{mean_abs, quantize_sign, BinFmModel, Sign};
pub use ste::interaction_partial;
pub use train::{train, BinFmConfig, BinFmFit, Optimizer};
