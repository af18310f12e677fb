//! Numerical toolkit for harmonic gradient products.
//!
//! Building blocks, roughly bottom-up:
//!
//! * [`grid`], [`field`], [`calculus`], [`green`]: box grids, complex sampled
//!   fields, fourth-order finite differences, Simpson quadrature and the
//!   spectral Dirichlet Green operator.
//! * [`harmonic`]: closed-form harmonic functions (Calderón exponentials,
//!   harmonic polynomials, point sources).
//! * [`quasimode`]: Gaussian quasi-mode phases and amplitudes concentrating
//!   on a hyperplane.
//! * [`jet`], [`stationary`]: truncated Taylor arithmetic and the
//!   stationary-phase operators `L_j`.
//! * [`density`]: three-gradient integral identities and the structure
//!   recovery that closes the density argument.
//! * [`lincal`]: the two-gradient identity and its obstruction tensors.
//! * [`qls`]: forward solver, Dirichlet-to-Neumann pairing and second
//!   linearization for a coupled quasilinear system.
//! * [`report`], [`harness`]: experiment reports, slope fits and the
//!   config-driven runner behind the CLI.

pub mod bump;
pub mod calculus;
pub mod cheb;
pub mod cutoff;
pub mod density;
pub mod error;
pub mod field;
pub mod green;
pub mod grid;
pub mod harmonic;
pub mod harness;
pub mod jet;
pub mod lincal;
pub mod ode;
pub mod qls;
pub mod quad;
pub mod quasimode;
pub mod report;
pub mod spectral;
pub mod stationary;

pub use error::{Error, Result};
pub use field::{Field, ScalarField, Tensor2Field, Tensor3Field, VectorField};
pub use grid::Grid;
pub use num_complex::Complex64;
