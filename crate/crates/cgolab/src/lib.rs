//! Numerical laboratory for complex geometrical optics (CGO) solutions on
//! cylinders `(0,T) x M0`, the linearized Dirichlet-to-Neumann data of a cubic
//! Helmholtz nonlinearity, and the reconstruction of the coefficient from
//! boundary pairings.
//!
//! The transversal manifold `M0` is the unit disk with a conformal metric
//! `e^{2 phi} I`. Module overview:
//!
//! - [`geometry`]: geodesics, parallel frames, Fermi charts, diameter.
//! - [`quasimode`]: Gaussian beam quasimodes and their residuals.
//! - [`spectral`]: the disk grid and the Dirichlet eigensystem.
//! - [`cylinder`]: the resolvent `S_z`, remainder solves and CGO assembly.
//! - [`dtn`]: Helmholtz solves, linearized DtN maps, noise.
//! - [`reconstruct`]: Fourier slices of the coefficient and the sweep pipeline.
//! - [`harness`]: configuration, dumps and the CLI commands.

pub mod banded;
pub mod cylinder;
pub mod dtn;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod ode;
pub mod quasimode;
pub mod reconstruct;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
