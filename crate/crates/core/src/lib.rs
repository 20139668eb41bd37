//! Numerical laboratory for the quasilinear elliptic system
//!
//! ```text
//! -Δ_p u = λ|u|^{p-2}u + α f |u|^{α-2}|v|^β u   in (0, 1)
//! -Δ_q v = μ|v|^{q-2}v + β f |u|^α |v|^{β-2} v   in (0, 1)
//! u = v = 0 on the boundary
//! ```
//!
//! with a sign-changing weight `f`. The crate computes first eigenpairs, the
//! extremal parameter and the extremal parameters curve, and positive
//! solutions below, on and just above that curve by minimizing the fibering
//! reduction of the energy.

pub mod cli;
pub mod domain;
pub mod eigen;
pub mod error;
pub mod extremal;
pub mod fibering;
pub mod functionals;
pub mod solver;
pub mod verify;

mod banded;
mod newton;
mod optimize;
mod pow;

pub use domain::{
    build_mesh, build_weight, validate_exponents, ExponentReport, GridFunction, Hypothesis, Mesh,
    ProblemConfig, ProblemSpec, WeightConfig, WeightFunction,
};
pub use error::{Error, Result};
pub use functionals::{FunctionalValues, ParameterPair};
