//! 2D frequency-domain field solver.
//!
//! TM polarization (magnetic field in the plane, electric field `E_z` out of
//! it) reduces the curl-curl equation to the scalar Helmholtz problem
//!
//! ```text
//! ∇²E + ω² μ₀ ε(x, y) E = iωμ₀ J
//! ```
//!
//! discretized on a cell-centred grid with a stretched-coordinate PML on all
//! four sides. Units are normalized so that `c = μ₀ = ε₀ = 1`, lengths are in
//! µm and `ω = 2π/λ`.
//!
//! Each row of the assembled operator is multiplied by `Δ² s_x s_y`, which
//! makes it complex symmetric and gives `∂A/∂ε = ω² Δ²` on every cell outside
//! the PML.

mod grid;
mod mode;
mod operator;
mod port;

pub use grid::{build_grid, DeviceLayout, PmlSpec, SimGrid};
pub use mode::{slab_mode, ModeProfile};
pub use operator::{assemble, solve, solve_many, solve_transpose_many, AssembledOperator, DEFAULT_TOLERANCE};
pub use port::{inject_mode_source, port_overlap, Direction, Port, PortSide};
pub(crate) use port::overlap_weights;

use num_complex::Complex64;

/// Which linear system produced a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    /// `A e = b`
    Forward,
    /// `Aᵀ λ = −(∂C/∂e)ᵀ`
    Backward,
}

/// Complex field on the full grid, stored `ix`-major (`ix * ny + iy`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub values: Vec<Complex64>,
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub role: FieldRole,
    /// `‖A x − b‖ / ‖b‖` of the solve that produced this field.
    pub residual: f64,
}

impl FieldSolution {
    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.values[ix * self.ny + iy]
    }
}

/// Current density `J` on grid cells at angular frequency `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDistribution {
    pub current: Vec<Complex64>,
    pub nx: usize,
    pub ny: usize,
    pub omega: f64,
}

impl SourceDistribution {
    pub fn zeros(nx: usize, ny: usize, omega: f64) -> Self {
        Self {
            current: vec![Complex64::new(0.0, 0.0); nx * ny],
            nx,
            ny,
            omega,
        }
    }

    /// Single-cell source whose right-hand side entry equals `strength`.
    ///
    /// In continuum terms this is `iωJ = strength · δ(r − r₀)`.
    pub fn point(nx: usize, ny: usize, omega: f64, ix: usize, iy: usize, spacing: f64, strength: Complex64) -> Self {
        let mut s = Self::zeros(nx, ny, omega);
        s.current[ix * ny + iy] = strength / (Complex64::i() * omega * spacing * spacing);
        s
    }

    pub fn is_zero(&self) -> bool {
        self.current.iter().all(|c| c.norm_sqr() == 0.0)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            current: self.current.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }
}

/// Number of threads the sparse factorization may use. `1` keeps every
/// solve bitwise reproducible.
pub fn set_threads(threads: usize) {
    if threads <= 1 {
        faer::set_global_parallelism(faer::Par::Seq);
    } else {
        faer::set_global_parallelism(faer::Par::rayon(threads));
    }
}
