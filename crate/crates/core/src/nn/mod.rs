//! Minimal neural-network engine: layer specs, flat parameter vectors,
//! forward/backward passes and plain SGD.
//!
//! Everything here is a pure function of its arguments. Parameter updates
//! return fresh buffers instead of mutating in place.

mod gradcheck;
mod model;
mod params;
mod spec;
mod tensor;

use thiserror::Error;

pub use gradcheck::{check_gradients, compare_gradients, GradCheckReport};
pub use model::{evaluate, forward, loss_and_grad, Batch, Evaluation, ForwardCache};
pub use params::{init_params, sgd_step, Gradients, ParamSet, Segment, SegmentMask};
pub use spec::{validate_spec, LayerSpec, ModelSpec};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("layer {0}: input dimensions do not chain")]
    DimensionMismatch(usize),
    #[error("input shape must be non-empty with positive dimensions")]
    BadInputShape,
    #[error("specific_from is outside [0, layers.len()]")]
    BadBoundary,
    #[error("final layer must be DENSE emitting num_classes logits")]
    BadHead,
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    BadLabel { label: usize, num_classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}
