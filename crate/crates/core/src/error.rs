use thiserror::Error;

/// Errors raised by grid construction, field operations and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: String, found: String },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("nonintegrable zero mode: negative-order multiplier applied to a field with nonzero mean")]
    NonintegrableZeroMode,

    #[error("homogeneous norm requires a mean-zero field")]
    NonzeroMean,

    #[error("dyadic index {q} outside representable range [{lo}, {hi}]")]
    BlockOutOfRange { q: i32, lo: i32, hi: i32 },

    #[error("dilation not representable: only {fraction:.6} of the L2 mass lies inside radius {radius:.4}")]
    DilationNotRepresentable { fraction: f64, radius: f64 },

    #[error("CFL violation at t = {time:.6}: max|u| dt / h = {cfl:.4} exceeds {limit:.4}")]
    Cfl { time: f64, cfl: f64, limit: f64 },

    #[error("non-finite value detected at t = {time:.6}")]
    NotFinite { time: f64 },

    #[error("missing snapshot at t = {0}")]
    MissingSnapshot(f64),

    #[error("amplitude too large: Picard updates grew for 3 consecutive iterations")]
    AmplitudeTooLarge { history: Vec<f64> },

    #[error("Picard iteration did not converge in {iterations} iterations (last update {last:.3e})")]
    NotConverged { iterations: usize, last: f64, history: Vec<f64> },

    #[error("decay fit needs at least {needed} nonempty radial bins, found {found}")]
    TooFewBins { needed: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
