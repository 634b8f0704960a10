//! Dense layers with hand-written backward rules, the optimizer and a
//! finite-difference gradient oracle.

mod activation;
mod batchnorm;
pub mod gradcheck;
mod layer;
mod linear;
mod param;
mod sgd;
mod split;
mod tensor;

pub use activation::{l2_normalize_bwd, l2_normalize_fwd, relu_bwd, relu_fwd, NORM_FLOOR};
pub use batchnorm::{
    batchnorm_bwd, batchnorm_fwd, BatchNorm, BatchNormCache, BatchNormParams, DEFAULT_EPS,
    DEFAULT_MOMENTUM,
};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use layer::{Layer, Sequential};
pub use linear::{linear_bwd, linear_fwd, Linear, LinearParams};
pub use param::{BufferVisitor, Mode, Param, ParamVisitor};
pub use sgd::Sgd;
pub use split::{concat4, concat_bwd, concat_cols, split4, split_bwd, split_cols};
pub use tensor::{Scalar, Tensor2};
