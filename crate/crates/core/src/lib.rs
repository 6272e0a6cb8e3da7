//! Binarized factorization machines.
//!
//! Real-valued inputs are discretized per feature into `b` bins and one-hot
//! encoded, so every sample becomes a 0/1 vector of length `p = d * b` with
//! exactly `d` active entries. A degree-2 factorization machine is trained on
//! that representation with every coefficient constrained to ±1 plus two real
//! scales (`alpha` for the linear part, `beta` for the interactions). Training
//! keeps full-precision proxies and updates them with straight-through
//! gradients and Adagrad; the deployable model stores one bit per coefficient
//! and scores a sample with mask-AND + popcount.
//!
//! Modules:
//! - [`dataio`]: libsvm loading, synthetic generators, train/test splits.
//! - [`encoder`]: bin fitting and one-hot encoding.
//! - [`fm`]: full-precision FM (the FM and SEFM baselines).
//! - [`binfm`]: the binarized model and its training loop.
//! - [`packed`]: bit-packed model, popcount inference, the `BFM1` file format
//!   and memory accounting.
//! - [`experiment`]: fitting, evaluation, cross-validation and the repeated
//!   split protocol shared by the CLI and the acceptance suite.
//!
//! Model math is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! name the common instantiations.

pub mod binfm;
pub mod dataio;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod fm;
pub mod loss;
pub mod modelfile;
pub mod ovr;
pub mod packed;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use binfm::{AdagradState, BinFmConfig, BinFmModel, Optimizer, Sign};
pub use dataio::{Dataset, Sample};
pub use encoder::{BinStrategy, BinningSpec, EncodedDataset, EncodedSample};
pub use fm::{FmConfig, FmModel};
pub use loss::LossKind;
pub use ovr::OneVsRest;
pub use packed::{ActiveMask, PackedClassifier, PackedModel};

pub type FmModel32 = FmModel<f32>;
pub type FmModel64 = FmModel<f64>;
pub type BinFmModel32 = BinFmModel<f32>;
pub type BinFmModel64 = BinFmModel<f64>;
pub type AdagradState32 = AdagradState<f32>;
pub type AdagradState64 = AdagradState<f64>;
pub type FmConfig64 = FmConfig<f64>;
pub type BinFmConfig64 = BinFmConfig<f64>;
