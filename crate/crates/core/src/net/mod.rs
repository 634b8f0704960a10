//! Transformation networks mapping a model's embeddings into the unified space.

mod mlp;
mod rbt;
mod transform;

pub use mlp::{MlpConfig, MlpTransform, DEFAULT_HIDDEN_WIDTH};
pub use rbt::{RbtBlock, RbtConfig, RbtTransform, DEFAULT_PATH_GAMMA};
pub use transform::{
    build_mlp_baseline, build_transform, identity, IdentityTransform, Transform, TransformBuilder,
    TransformConfig, TransformNet, TransformRegistry,
};
