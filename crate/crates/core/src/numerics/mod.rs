//! Dense tensors, a reverse-mode gradient tape, and probability primitives.

mod gradcheck;
mod prob;
mod quadrature;
mod tape;
mod tensor;

pub use prob::{
    bernoulli_log_likelihood, gaussian_kld, gaussian_log_density, log_sigmoid, logsumexp,
    reparameterize, sigmoid, softplus, GaussianParams, LN_2PI, LOGVAR_MAX, LOGVAR_MIN,
};
pub use gradcheck::{check_gradients, relative_error, GradCheck};
pub use quadrature::adaptive_simpson;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape {shape:?} needs {} values, got {got}", shape.iter().product::<usize>())]
    ValueCount { shape: Vec<usize>, got: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected rank <= {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("{op}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter id {0} registered twice")]
    DuplicateParam(usize),
    #[error("bernoulli target {0} is not 0 or 1")]
    NonBinaryTarget(f64),
}
