//! Self-contained f64 training engine: tensors, layer ops with explicit
//! backward passes, Adam, seeded RNG and finite-difference gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod ops;
pub mod param;
pub mod rng;
pub mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{grad_check, GRAD_CHECK_STEP};
pub use ops::{
    affine_backward, affine_forward, batch_norm_backward, batch_norm_eval,
    batch_norm_eval_cached, batch_norm_train, dropout_backward, dropout_forward, glorot_init,
    relu_backward, relu_forward, softmax, softmax_cross_entropy, BnCache, BnStats, DropoutMask,
    BN_EPSILON, BN_MOMENTUM,
};
pub use param::{Param, ParamId, ParamStore};
pub use rng::{derive_seed, Rng};
pub use tensor::{sum_order_independent, Tensor2};

/// Errors from the numeric kernels.
#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    ShapeMismatch { op: &'static str, lhs: String, rhs: String },
    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidDropoutRate(f64),
    #[error("batch norm needs at least 2 rows in training mode, got {0}")]
    BatchNormTooFewRows(usize),
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGrad(String),
}
