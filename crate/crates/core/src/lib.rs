//! Homogenization toolkit for chiral micromagnetic composites.
//!
//! The library generates stationary ergodic coefficient fields (random
//! laminates and iid lattice tessellations), solves the three corrector
//! problems on periodic representative volume elements (with closed forms
//! in the laminate case), assembles the effective material tensors, and
//! evaluates/minimizes both the heterogeneous and the homogenized
//! micromagnetic energies over unit-sphere-valued grids.

pub mod corrector;
pub mod energy;
pub mod grid;
pub mod gridio;
pub mod laminate;
pub mod minimize;
pub mod phase;
pub mod stray;

pub use corrector::{CorrectorField, CorrectorSet, EffectiveModel, RveSolveOptions};
pub use energy::{chi, EnergyBreakdown, Magnetization};
pub use grid::GridField;
pub use laminate::{LaminateRealization, LaminateSpec, WidthLaw};
pub use minimize::{MinimizeOptions, MinimizeTrace};
pub use phase::{Moments, Phase, PhaseTable, Quantity};

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid phase: {0}")]
    InvalidPhase(String),
    #[error("invalid phase table: {0}")]
    InvalidTable(String),
    #[error("invalid laminate spec: {0}")]
    InvalidSpec(String),
    #[error("window [{lo}, {hi}] not covered by realization [{cov_lo}, {cov_hi}]")]
    WindowExceeded {
        lo: f64,
        hi: f64,
        cov_lo: f64,
        cov_hi: f64,
    },
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("grid spacing h={h} does not resolve eps={eps} oscillations (need h <= eps*w_min/4 = {limit})")]
    ResolutionTooCoarse { h: f64, eps: f64, limit: f64 },
    #[error("conjugate gradient did not converge: relative residual {residual} after {iters} iterations")]
    CgDidNotConverge { residual: f64, iters: usize },
    #[error("matrix rows are not tangent at the given point (|A s| = {0})")]
    NonTangent(f64),
    #[error("helix fit failed: {0}")]
    FitFailed(String),
    #[error("non-finite value encountered at cell {0}")]
    NonFinite(usize),
    #[error("stray-field padding factor must be >= 2, got {0}")]
    BadPadding(usize),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
