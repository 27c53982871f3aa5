//! Joint transmit-beamforming and RIS-reflection optimization for an
//! integrated sensing and communication (ISAC) system.
//!
//! A multi-antenna base station serves `K` single-antenna users and senses one
//! point target, assisted by an `N`-element reconfigurable intelligent surface
//! (RIS). The library provides:
//!
//! - seeded Rician channel generation from scenario geometry ([`channel`]),
//! - communication and sensing metrics: per-user SINR / sum-rate, a worst-case
//!   radar SNR bound, detection probability, transmit beampattern ([`metrics`]),
//!   and the Cramér-Rao bound on target DoA estimation ([`crb`]),
//! - self-contained small-scale solvers: norm-ball QP, dense SDP barrier
//!   method, Riemannian conjugate gradient on the unit-modulus torus
//!   ([`solvers`]),
//! - the fractional-programming sum-rate reformulation ([`fp`]),
//! - two alternating optimizers: radar-SNR-constrained ([`alg_snr`]) and
//!   CRB-constrained ([`alg_crb`]) sum-rate maximization,
//! - baseline schemes and a Monte-Carlo experiment driver with CSV output
//!   ([`baselines`], [`experiment`]).
//!
//! All angles are radians, all powers are linear watts, and every random draw
//! flows through an explicit RNG handle so that runs are reproducible.

// Validations use `!(x > 0.0)` on purpose: NaN must be rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alg_crb;
pub mod alg_snr;
pub mod baselines;
pub mod channel;
pub mod config;
pub mod crb;
pub mod experiment;
pub mod fp;
pub mod geometry;
pub mod metrics;
pub mod solvers;

use thiserror::Error;

/// Complex scalar used throughout.
pub type Cf64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<Cf64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<Cf64>;

/// Errors surfaced by scenario construction, solvers, and experiment runs.
#[derive(Debug, Error)]
pub enum IsacError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error(
        "infeasible sensing requirement: required {required:.6e}, best achievable {achievable:.6e}"
    )]
    Infeasible { required: f64, achievable: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IsacError>;
