//! Simulation and verification toolkit for invariance and near-viability of
//! smooth compact domains.
//!
//! * [`geometry`]: signed distance, projection, tube, cutoff.
//! * [`flow`]: ODE integration with boundary-hit detection and the example fields.
//! * [`necessary`]: outward velocity, the zeta profile and the dichotomy classifier.
//! * [`sde`]: controlled Euler–Maruyama paths, shaken coefficients, moment estimates.
//! * [`value`]: discounted occupation, value estimates, discount thresholds, certificates.
//! * [`pdmp`]: switched piecewise deterministic processes and the boundary checker.
//! * [`phage`]: the phage-lambda switched model and its border-avoidance run.
//! * [`cli`]: configuration-driven experiments and manifests.

pub mod cli;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod necessary;
pub mod pdmp;
pub mod phage;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod value;

pub use error::{Error, Result};
