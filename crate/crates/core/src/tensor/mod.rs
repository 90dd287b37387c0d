//! Small dense numeric core: matrices, reverse-mode tape, losses and Adam.

mod gradcheck;
mod loss;
mod matrix;
mod optim;
mod tape;

pub use gradcheck::{finite_diff_check, finite_diff_check_coords, GradCheck};
pub use loss::{cross_entropy, per_token_loss, reduce_sum_loss};
pub use matrix::{affine, sigmoid, softmax, Matrix};
pub use optim::{clip_gradients, global_norm, AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("target class {target} out of range for {classes} classes")]
    BadTarget { target: usize, classes: usize },
    #[error("index {index} out of range for {len} rows")]
    BadIndex { index: usize, len: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("backward needs a 1x1 loss node, got {0:?}")]
    NotScalar((usize, usize)),
}
