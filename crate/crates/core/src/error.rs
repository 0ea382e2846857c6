use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("theta {theta} outside [0, {theta_max}]")]
    ThetaOutOfRange { theta: f64, theta_max: f64 },

    #[error("no connected sample after {tries} draws")]
    ConnectivityExhausted { tries: usize },

    #[error("invalid recipe table: {0}")]
    InvalidRecipeTable(String),

    #[error("invalid population graph: {0}")]
    InvalidPopulation(String),

    #[error("node {0} has no neighbors")]
    NoNeighbors(usize),

    #[error("cannot draw {wanted} items from an inventory of {available}")]
    InsufficientInventory { wanted: usize, available: usize },

    #[error("embedding dimension {d} outside 1..={max}")]
    DimensionOutOfRange { d: usize, max: usize },

    #[error("matrix has no positive singular values")]
    ZeroMatrix,

    #[error("node {0} is isolated; normalized Laplacian undefined")]
    IsolatedNode(usize),

    #[error("probability matrix has zero expected edges")]
    ZeroExpectedEdges,

    #[error("empty sample set")]
    EmptySamples,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips [`Error::Context`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by bad user input (configs, flags, files)
    /// rather than runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self.root(),
            Error::Config(_)
                | Error::Parse(_)
                | Error::InvalidParameter(_)
                | Error::ThetaOutOfRange { .. }
                | Error::InvalidRecipeTable(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
