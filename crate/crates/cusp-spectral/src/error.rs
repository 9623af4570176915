//! Error types, one enum per module plus a crate-level umbrella.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("(c, w) = ({c}, {w}) lies outside the closed moduli space")]
    OutOfModuli { c: f64, w: f64 },
    #[error("alpha = {alpha} must lie in (0, alpha_bar = {alpha_bar})")]
    DegenerateAlpha { alpha: f64, alpha_bar: f64 },
    #[error("cubic is not increasing on the bracket (alpha = {alpha}, b = {b})")]
    NotMonotone { alpha: f64, b: f64 },
    #[error("d/dy B(f(x), y) = {value} fails the bound at (x, y) = ({x}, {y})")]
    MonotonicityFailure { x: f64, y: f64, value: f64 },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModespaceError {
    #[error("mode functions live on different grids or mode cutoffs")]
    GridMismatch,
    #[error("mode {ell} outside 0..={k_max}")]
    ModeOutOfRange { ell: usize, k_max: usize },
    #[error("beta = {beta} is not a grid node")]
    BetaNotOnGrid { beta: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("malformed serialized mode function: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("eigensolver did not converge (subspace {iterations}): {detail}")]
    NoConvergence { iterations: usize, detail: String },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FormError {
    #[error("finite-difference step {h} too large for t = {t}")]
    StepTooSmall { t: f64, h: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("no sign change of the secular function on bracket ({lo}, {hi})")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("turning point inside the window: f(y) = {value} at y = {y}")]
    TurningPointInWindow { y: f64, value: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BranchError {
    #[error("branch lost at t = {t}: best overlap {overlap}")]
    BranchLost { t: f64, overlap: f64 },
    #[error("spectral window [{lo}, {hi}] is empty")]
    WindowEmpty { lo: f64, hi: f64 },
    #[error("Green normalization integral {value} too small")]
    GreenNormalizationSmall { value: f64 },
    #[error("no sign change for crossing index {n}")]
    NoSignChange { n: usize },
    #[error("two model branches within tolerance of E = {e} at t = {t}")]
    AmbiguousTracking { t: f64, e: f64 },
    #[error("|E - lambda0| = {distance} exceeds window {window} at t = {t}")]
    NotNearCrossing { t: f64, distance: f64, window: f64 },
    #[error("regularized form is singular")]
    SingularAtilde,
}

/// Umbrella error for callers that mix modules.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Modespace(#[from] ModespaceError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Branch(#[from] BranchError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
