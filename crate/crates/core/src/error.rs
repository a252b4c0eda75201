use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("window radius {have} too shallow, need {need}")]
    WindowTooShallow { have: usize, need: usize },
    #[error("time derivative requested on a single field; use a window")]
    TimeAxisNeedsWindow,
    #[error("support violation: {0}")]
    Support(String),
    #[error("boundary contact at t={t}: |u| = {value:e} within 4h of the boundary")]
    BoundaryContact { t: f64, value: f64 },
    #[error("instability at t={t}: sup-norm {sup:e} exceeds {limit:e}")]
    Instability { t: f64, sup: f64, limit: f64 },
    #[error("admissibility violated: {0}")]
    Admissibility(String),
    #[error("iteration diverged at iterate {iterate}: ratios {ratios:?}")]
    Divergence { iterate: usize, ratios: Vec<f64> },
    #[error("point outside the light cone: t={t}, |x|={r}")]
    OutsideCone { t: f64, r: f64 },
    #[error("point beyond chart conditioning bound: theta={0}")]
    Conditioning(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("symbolic check failed: {0}")]
    Symbolic(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
