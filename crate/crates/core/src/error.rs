use thiserror::Error;

/// Failures reported by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain parameter: {0}")]
    InvalidParameter(String),
    #[error("ray hit corner {corner} at s = {s:.12}")]
    CornerCollision { corner: usize, s: f64 },
    #[error("grazing trajectory at s = {s:.12}")]
    Grazing { s: f64 },
    #[error("seed orbit is not an island: {0}")]
    NotAnIsland(String),
    #[error("boundary length of segment {segment} did not converge: eps {eps:e} gives {coarse}, eps/2 gives {fine}")]
    LengthRefinement { segment: usize, eps: f64, coarse: f64, fine: f64 },
    #[error("ill-conditioned basis at kappa = {kappa}: {hint}")]
    IllConditioned { kappa: f64, hint: String },
    #[error("incomplete spectrum: {0}")]
    IncompleteSpectrum(String),
    #[error("multiplicity resolution failed near kappa = {kappa}")]
    Multiplicity { kappa: f64 },
    #[error("projection basis truncation window too narrow: tail weight {tail:e}")]
    TruncationWindow { tail: f64 },
    #[error("missing weights for states {0:?}")]
    MissingWeights(Vec<usize>),
    #[error("ill-conditioned fit: {0}")]
    FitConditioning(String),
    #[error("insufficient statistics: {0}")]
    Statistics(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
