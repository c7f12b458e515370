//! Inverse design of probabilistic linear-optical logic gates.
//!
//! A gate is a 2D silicon region seeded with silica scatterers. Its layout is
//! the zero set of a B-spline level-set surface whose control weights are
//! optimized with adjoint gradients of a frequency-domain field solver. Gate
//! quality is measured on the device transfer matrix through one-fold
//! (single-photon) and two-fold (coincidence) correlation functions.
//!
//! Module map:
//!
//! - [`splines`]: Cox-de Boor bases and the tensor-product level-set surface.
//! - [`topology`]: level set to permittivity, smoothed delta, gradient chaining.
//! - [`solver`]: simulation grid, PML, waveguide modes, sparse solves, overlaps.
//! - [`quantum`]: transfer matrices, correlation functions, truth tables.
//! - [`adjoint`]: cost, adjoint sources, structural gradients, FD oracle.
//! - [`optimizer`]: the design loop with checkpoints.
//! - [`config`], [`io`], [`validate`]: configuration and file formats used by
//!   the `rwgate` command-line tool.

pub mod adjoint;
pub mod config;
pub mod device;
pub mod error;
pub mod io;
pub mod optimizer;
pub mod quantum;
pub mod solver;
pub mod splines;
pub mod topology;
pub mod validate;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Version string embedded in every output file.
pub const TOOL_VERSION: &str = concat!("rwgate ", env!("CARGO_PKG_VERSION"));
