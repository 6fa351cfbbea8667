//! Tensor algebra, reverse-mode differentiation and Adam.

mod gradcheck;
mod graph;
mod optim;
mod params;
pub mod rng;
mod tensor;

pub use gradcheck::{gradcheck, gradcheck_params, GradcheckReport};
pub use graph::{Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Init, Param, ParamId, ParamStore};
pub use tensor::{Real, Tensor};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not fit {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("{0} needs at least one operand")]
    Empty(&'static str),
}
