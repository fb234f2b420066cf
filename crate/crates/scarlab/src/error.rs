use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("elliptic modulus {0} outside [0, 1)")]
    ModulusOutOfRange(f64),
    #[error("sc(u) has a pole at u = {0} (|cn| < 1e-12)")]
    PoleAtQuarterPeriod(f64),
    #[error("couplings (Jx, Jy, Jz) = ({jx}, {jy}, {jz}) violate Jy >= Jx > Jz, Jy > 0")]
    OrderingViolated { jx: f64, jy: f64, jz: f64 },
    #[error("spin {0} is not a non-negative half-integer")]
    InvalidSpin(f64),
    #[error("site {site} out of range for {n} sites")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("no root of the frame equations found from any start")]
    NoRootFound,
    #[error("numerical postcondition failed: {0}")]
    Numerical(String),
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("inconsistent phase at vertex {vertex}")]
    InconsistentPhases { vertex: usize },
    #[error("unsupported dimensions: {0}")]
    UnsupportedDims(String),
    #[error("q = 4K*{p}/{denominator} is incommensurate with a circuit of winding {winding}")]
    IncommensurateQ { p: i64, denominator: i64, winding: i64 },
    #[error("bilinear requires distinct sites, got m = n = {0}")]
    SameSite(usize),
    #[error("operator does not commute with translation (residual {0:e})")]
    NotTranslationInvariant(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by malformed or out-of-domain input, as
    /// opposed to numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NoRootFound | Error::Numerical(_))
    }
}
