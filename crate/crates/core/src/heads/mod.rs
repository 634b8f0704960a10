//! Shared classification heads and the training losses.

mod head;
mod loss;

pub use head::{
    build_head, AffineHead, CosineMarginHead, Head, HeadBuilder, HeadCache, HeadConfig, HeadKind,
    HeadParams, HeadRegistry, COS_CLAMP,
};
pub use loss::{
    dual_cls_loss, kl_from_logits, kl_loss, log_softmax, sim_loss, softmax_cross_entropy,
    total_loss, LossWeights, PairLoss, TotalLoss,
};
