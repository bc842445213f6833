use thiserror::Error;

/// Errors raised by mesh construction, discretization and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-conforming adjacency between cells {0} and {1}")]
    NonConforming(usize, usize),
    #[error("degenerate cell {0} (area {1:e})")]
    DegenerateCell(usize, f64),
    #[error("cell {0} is not a convex counter-clockwise polygon")]
    NotConvex(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("periodic tiling violated at point ({0}, {1}): sum of translates = {2}")]
    TilingViolation(f64, f64, f64),
    #[error("periodic structure: {0}")]
    Periodicity(String),
    #[error("face function of edge {0} is not of the form N w")]
    NonFactorable(usize),
    #[error("quadrature failed on face {0}")]
    Quadrature(usize),
    #[error("field evaluation failed on cell {0}")]
    Evaluation(usize),
    #[error("coefficients do not match mesh: {0}")]
    Mismatch(String),
    #[error("CFL violation: dt = {dt:e} exceeds {limit:e} at cell {cell}")]
    Cfl { cell: usize, dt: f64, limit: f64 },
    #[error("positivity lost: u = {value:e} at cell {cell}")]
    Positivity { cell: usize, value: f64 },
    #[error("matrix is not in M(n): {0}")]
    NotDiffusion(String),
    #[error("range condition violated on block {block}: sum = {sum:e}")]
    Range { block: usize, sum: f64 },
    #[error("direction {0} unsolvable: {1}")]
    Direction(usize, String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
