use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between {0}")]
    GridMismatch(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A pivot of the implicit step matrix vanished.
    #[error("singular step matrix at time step {step}: {reason}")]
    SingularSystem { step: usize, reason: String },

    #[error("newton iteration failed at time step {step} after {iterations} iterations (residual {residual:.3e})")]
    NewtonFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("exponential weight overflow: exponent {0:.1} exceeds the guard")]
    Overflow(f64),

    #[error("boundary condition violated: {0}")]
    BoundaryCondition(String),

    #[error("no admissible direction for frequency {0:?}")]
    Infeasible(Vec<f64>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("column {column} of the DtN matrix failed: {source}")]
    Assembly {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("a priori bound violated: {0}")]
    APriori(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Name of the subsystem the failure belongs to.
    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) | Error::GridMismatch(_) => "grid",
            Error::SingularSystem { .. } | Error::NewtonFailure { .. } => "forward",
            Error::Overflow(_) => "cgo",
            Error::BoundaryCondition(_) => "carleman",
            Error::Infeasible(_) => "reconstruct",
            Error::Assembly { .. } | Error::Format(_) | Error::Io(_) => "dtn",
            Error::APriori(_) => "semilinear",
            Error::InvalidArgument(_) | Error::Degenerate(_) => "input",
        }
    }
}
