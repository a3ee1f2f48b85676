use thiserror::Error;

/// Errors produced by the model builders, solvers and integrators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sector k = {k} outside the truncated space (|k| <= n_max = {n_max})")]
    SectorOutOfRange { k: i64, n_max: usize },

    #[error("cutoff n_max = {n_max} exceeds the oracle limit {limit}")]
    CutoffAboveOracleLimit { n_max: usize, limit: usize },

    #[error("eigensolver failed on sector k = {k} (dim {dim}): {reason}")]
    Eigensolver { k: i64, dim: usize, reason: String },

    #[error(
        "steady state is not unique: {candidates} null candidates, smallest |lambda| = {smallest:.3e}, next = {next:.3e}"
    )]
    SteadyStateNotUnique {
        candidates: usize,
        smallest: f64,
        next: f64,
    },

    #[error("no non-spurious null mode (smallest |lambda| = {smallest:.3e}): the cutoff truncates the steady state")]
    SteadyStateTruncated { smallest: f64 },

    #[error("steady-state solve produced a population of {value:.3e} at m = {index}")]
    NegativePopulation { index: usize, value: f64 },

    #[error("all eigenvalues are flagged spurious")]
    AllSpurious,

    #[error("zero mean photon number: statistic undefined")]
    ZeroPhotonNumber,

    #[error("integrator step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("trace drift {drift:.3e} exceeds tolerance at t = {t:.6e}")]
    TraceDrift { t: f64, drift: f64 },

    #[error("jump probability sum {p_sum:.3e} exceeds bound {bound} at t = {t:.6e}; reduce dt")]
    JumpProbabilityBound { t: f64, p_sum: f64, bound: f64 },

    #[error("trajectory norm collapsed at t = {t:.6e}")]
    NormCollapse { t: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("insufficient samples: {got} < {needed}")]
    InsufficientSamples { got: usize, needed: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
