use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs} vs {rhs}")]
    Dimension {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },

    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },

    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    DataLength {
        len: usize,
        shape: Shape,
        expected: usize,
    },

    #[error("unregistered primitive: {0}")]
    UnregisteredPrimitive(String),

    #[error("primitive `{0}` is not twice-differentiable: its VJP is not expressed in recorded primitives")]
    NotTwiceDifferentiable(String),

    #[error("expected a scalar root, got shape {0}")]
    NonScalarRoot(Shape),

    #[error("cotangent shape {cotangent} does not match root shape {root}")]
    CotangentShape { root: Shape, cotangent: Shape },

    #[error("variable belongs to a different graph")]
    ForeignVar,

    #[error("node {0} is not a leaf")]
    NotALeaf(usize),

    #[error("retained bytes {bytes} exceed the ceiling of {ceiling}")]
    MemoryCeiling { bytes: usize, ceiling: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("non-finite loss in term `{term}` at batch {batch}")]
    NonFiniteLoss { term: String, batch: usize },

    #[error("reference has zero norm")]
    ZeroReference,

    #[error("missing batch field: {0}")]
    MissingField(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &Shape, rhs: &Shape) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.clone(),
            rhs: rhs.clone(),
        }
    }
}
