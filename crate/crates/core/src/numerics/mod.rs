//! Dense linear algebra, layer primitives with hand-written backward passes,
//! the Adam optimizer and a central-difference gradient checker.

mod adam;
mod gradcheck;
mod layers;
mod matrix;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gradcheck::{finite_difference_check, GradCheckReport, DEFAULT_FD_EPSILON};
pub use layers::{
    affine_backward, affine_forward, argmax, relu, relu_backward, softmax_cross_entropy, softmax_rows,
    xavier_uniform, AffineGrads, SoftmaxCrossEntropy,
};
pub use matrix::Matrix;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: String, right: String },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("non-finite loss at parameter {tensor}[{index}]")]
    NonFiniteLoss { tensor: usize, index: usize },
    #[error("finite-difference epsilon must be positive, got {0}")]
    BadEpsilon(f64),
}

impl NumericsError {
    pub(crate) fn shape(left: (usize, usize), right: (usize, usize)) -> Self {
        NumericsError::Shape {
            left: format!("{}x{}", left.0, left.1),
            right: format!("{}x{}", right.0, right.1),
        }
    }
}
