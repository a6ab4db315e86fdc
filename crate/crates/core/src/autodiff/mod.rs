//! Reverse-mode automatic differentiation over small dense tensors, with the
//! Adam optimizer and the losses the trainers need.

mod graph;
mod optim;
mod tensor;

use thiserror::Error;

pub use graph::{evaluate_and_grad, matmul_values, sigmoid_value, Gradients, Graph, NodeId};
pub use optim::AdamState;
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("values of length {len} do not fit shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("tensors of rank {} are not supported", .0.len())]
    UnsupportedRank(Vec<usize>),
    #[error("gradient requested for non-scalar output of shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("non-finite gradient entry in parameter {param}")]
    NonFiniteGradient { param: usize },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("binary target {0} outside [0, 1]")]
    TargetOutOfRange(f64),
}

/// Mean binary cross entropy between `sigmoid(logits)` and `targets`,
/// stable for logits of any magnitude.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> Result<f64, AutodiffError> {
    if logits.is_empty() {
        return Err(AutodiffError::EmptyInput("bce_with_logits"));
    }
    if logits.len() != targets.len() {
        return Err(AutodiffError::ShapeMismatch {
            op: "bce_with_logits",
            lhs: vec![logits.len()],
            rhs: vec![targets.len()],
        });
    }
    if let Some(&bad) = targets.iter().find(|&&y| !(0.0..=1.0).contains(&y)) {
        return Err(AutodiffError::TargetOutOfRange(bad));
    }
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&l, &y)| graph::bce_logit_term(l, y))
        .sum();
    Ok(total / logits.len() as f64)
}
