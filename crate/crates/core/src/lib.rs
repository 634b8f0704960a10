//! Cross-model embedding compatibility.
//!
//! Two embedding models produce incompatible vectors for the same images.
//! This crate learns transformations `T_q`, `T_g` that map both into a shared
//! space so query embeddings from one model can be searched against gallery
//! embeddings from the other. It provides:
//!
//! * [`kernel`]: dense layers with hand-written backward passes, SGD and a
//!   finite-difference gradient oracle;
//! * [`net`]: residual bottleneck transformations (RBT) and MLP baselines;
//! * [`heads`]: softmax, label-smoothing, AM-Softmax and ArcFace heads plus
//!   the similarity, dual classification and KL losses;
//! * [`train`]: the unified method and both baselines;
//! * [`eval`]: rank-1 identification with distractors, mAP and comparison
//!   tables;
//! * [`data`]: `EMB1` embedding files, `CMCK` checkpoints and a synthetic
//!   scenario generator.

pub mod data;
pub mod error;
pub mod eval;
pub mod heads;
pub mod kernel;
pub mod net;
pub mod train;

pub use error::{Error, Result};
