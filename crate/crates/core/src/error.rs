use thiserror::Error;

/// Errors raised by the laboratory's operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stencil resolution violation: epsilon = {epsilon} must be at least 4h = {min}")]
    StencilResolution { epsilon: f64, min: f64 },

    #[error("grid has no nodes")]
    EmptyGrid,

    #[error("grid too large: {0} lattice cells in the bounding box")]
    GridTooLarge(usize),

    #[error("stencil of node {node} is truncated (missing lattice neighbour)")]
    StencilTruncated { node: usize },

    #[error("p(x,t) = {p} <= 2 at x = {x:?}, t = {t}")]
    ExponentOutOfRange { p: f64, x: Vec<f64>, t: f64 },

    #[error("payoff is not finite at x = {x:?}, t = {t}")]
    NonFinitePayoff { x: Vec<f64>, t: f64 },

    #[error("non-finite value at node {node} on slice {slice}")]
    NonFiniteValue { node: usize, slice: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("strategy returned a move of length {length} exceeding the cap {cap}")]
    MoveTooLong { length: f64, cap: f64 },

    #[error("game exceeded the step bound {bound}")]
    StepBoundOverflow { bound: usize },

    #[error("token is off the lattice; greedy strategies need lattice games")]
    OffLattice,

    #[error("start point is not in the space-time cylinder")]
    StartOutsideCylinder,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("CFL violation: dt = {dt} exceeds the stable bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("finite-difference solution blew up at step {step}")]
    Blowup { step: usize },

    #[error("value dump is malformed: {0}")]
    BadDump(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
