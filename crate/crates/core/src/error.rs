use std::io;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid solution: {0}")]
    InvalidSolution(String),
    #[error("point coincides with the depot; polar angle is undefined")]
    CoincidesWithDepot,
    #[error("route index {index} out of range ({routes} routes)")]
    RouteIndexOutOfRange { index: usize, routes: usize },

    #[error("no unvisited nodes left to select")]
    EmptyUnvisited,
    #[error("the polar-angle selector is only defined for CVRP")]
    PolarOnTsp,
    #[error("no current node has been selected")]
    NoCurrentNode,
    #[error("position is not valid for the current partial solution")]
    InvalidPosition,
    #[error("no valid insertion position")]
    NoValidPosition,
    #[error("route capacity exceeded: load {load} > capacity {capacity}")]
    CapacityViolation { load: f64, capacity: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corrupt weights file: {0}")]
    CorruptFile(String),
    #[error("unsupported weights file: {0}")]
    VersionMismatch(String),

    #[error("partial solution is not consistent with the label")]
    InconsistentPartial,
    #[error("backward called without a recorded forward pass")]
    NoForwardRecorded,
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("instance too large for exact solver: {n} nodes (max {max})")]
    TooLarge { n: usize, max: usize },
    #[error("unsupported EDGE_WEIGHT_TYPE: {0}")]
    UnsupportedEdgeWeightType(String),
    #[error("malformed section: {0}")]
    MalformedSection(String),
    #[error("missing demand for node {0}")]
    MissingDemand(usize),
    #[error("line {line}: {message}")]
    CorruptLine { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
