//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("projection iteration did not converge within {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("nearest-point set on the boundary is not a singleton")]
    NonUniqueProjection,
    #[error("point lies outside the tube (|distance| = {distance} > eps0 = {eps0})")]
    OutsideTube { distance: f64, eps0: f64 },
    #[error("point lies outside the domain (signed distance {distance})")]
    OutsideDomain { distance: f64 },
    #[error("tube radius {eps} exceeds eps0 = {eps0}")]
    BadTube { eps: f64, eps0: f64 },
    #[error("event bisection could not separate a tangential approach at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("unknown example field '{0}'")]
    UnknownExample(String),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("no sample point fell inside the tube")]
    EmptyTube,
    #[error("profile is bounded, so F_zeta is degenerate")]
    BoundedZeta,
    #[error("tube radius {eps0} too small for the finite-difference stencil")]
    TubeTooSmall { eps0: f64 },
    #[error("transition row {row} is not stochastic: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("more than {cap} jumps before the horizon")]
    JumpStorm { cap: usize },
    #[error("unknown mode index {0}")]
    UnknownMode(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
