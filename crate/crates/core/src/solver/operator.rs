use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;

use super::grid::SimGrid;
use super::{FieldRole, FieldSolution, SourceDistribution};
use crate::topology::PermittivityMap;
use crate::{Error, Result};

/// Relative residual every solve must reach.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

const MAX_REFINEMENTS: usize = 3;

/// Factorized system matrix for one permittivity map and frequency.
pub struct AssembledOperator {
    matrix: SparseColMat<usize, Complex64>,
    lu: Lu<usize, Complex64>,
    /// `∂A/∂ε` for each cell (a diagonal matrix).
    deps: Vec<Complex64>,
    /// `Δ² s_x s_y` row scaling, applied to `iωJ` on the right-hand side.
    row_scale: Vec<Complex64>,
    pub omega: f64,
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub tolerance: f64,
}

impl std::fmt::Debug for AssembledOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AssembledOperator")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("omega", &self.omega)
            .field("nnz", &self.matrix.val().len())
            .finish()
    }
}

fn map_lu(e: faer::sparse::linalg::LuError) -> Error {
    match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => {
            Error::Solver(format!("system matrix is singular at pivot {index}"))
        }
        faer::sparse::linalg::LuError::Generic(e) => Error::Solver(format!("factorization failed: {e:?}")),
    }
}

/// Build and factorize the system matrix for permittivity `eps` at `omega`.
pub fn assemble(eps: &PermittivityMap, grid: &SimGrid, omega: f64) -> Result<AssembledOperator> {
    let (nx, ny) = eps.dim();
    if (nx, ny) != (grid.nx, grid.ny) {
        return Err(Error::arg(format!(
            "permittivity map is {nx}x{ny} but the grid is {}x{}",
            grid.nx, grid.ny
        )));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::arg(format!("angular frequency must be positive, got {omega}")));
    }
    if eps.values.iter().any(|e| !e.is_finite()) {
        return Err(Error::arg("permittivity map contains non-finite values"));
    }
    let h2 = grid.spacing * grid.spacing;
    let w2 = omega * omega;
    let sx_c: Vec<_> = (0..nx).map(|i| grid.stretch(i as f64 + 0.5, nx, omega)).collect();
    let sy_c: Vec<_> = (0..ny).map(|j| grid.stretch(j as f64 + 0.5, ny, omega)).collect();
    // face k sits between cells k-1 and k
    let sx_f: Vec<_> = (0..=nx).map(|i| grid.stretch(i as f64, nx, omega)).collect();
    let sy_f: Vec<_> = (0..=ny).map(|j| grid.stretch(j as f64, ny, omega)).collect();

    let n = nx * ny;
    let mut trip = Vec::with_capacity(5 * n);
    let mut deps = Vec::with_capacity(n);
    let mut row_scale = Vec::with_capacity(n);
    for i in 0..nx {
        for j in 0..ny {
            let c = i * ny + j;
            let cx_lo = sy_c[j] / sx_f[i];
            let cx_hi = sy_c[j] / sx_f[i + 1];
            let cy_lo = sx_c[i] / sy_f[j];
            let cy_hi = sx_c[i] / sy_f[j + 1];
            let area = sx_c[i] * sy_c[j] * h2;
            let d = area * w2;
            deps.push(d);
            row_scale.push(area);
            trip.push(Triplet::new(c, c, d * eps.values[[i, j]] - cx_lo - cx_hi - cy_lo - cy_hi));
            if i > 0 {
                trip.push(Triplet::new(c, c - ny, cx_lo));
            }
            if i + 1 < nx {
                trip.push(Triplet::new(c, c + ny, cx_hi));
            }
            if j > 0 {
                trip.push(Triplet::new(c, c - 1, cy_lo));
            }
            if j + 1 < ny {
                trip.push(Triplet::new(c, c + 1, cy_hi));
            }
        }
    }
    let matrix = SparseColMat::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Solver(format!("assembly failed: {e:?}")))?;

    let symbolic = match grid.symbolic.get() {
        Some(s) => s.clone(),
        None => {
            let s = SymbolicLu::try_new(matrix.symbolic())
                .map_err(|e| Error::Solver(format!("symbolic analysis failed: {e:?}")))?;
            grid.symbolic.get_or_init(|| s).clone()
        }
    };
    let lu = Lu::try_new_with_symbolic(symbolic, matrix.as_ref()).map_err(map_lu)?;
    Ok(AssembledOperator {
        matrix,
        lu,
        deps,
        row_scale,
        omega,
        nx,
        ny,
        spacing: grid.spacing,
        tolerance: DEFAULT_TOLERANCE,
    })
}

impl AssembledOperator {
    pub fn size(&self) -> usize {
        self.nx * self.ny
    }

    /// Diagonal of `∂A/∂ε`.
    pub fn deps(&self) -> &[Complex64] {
        &self.deps
    }

    /// Right-hand side `Δ² s_x s_y · iωJ`.
    pub fn rhs(&self, source: &SourceDistribution) -> Result<Vec<Complex64>> {
        if (source.nx, source.ny) != (self.nx, self.ny) {
            return Err(Error::arg("source grid does not match the operator"));
        }
        if (source.omega - self.omega).abs() > 1e-12 * self.omega {
            return Err(Error::arg(format!(
                "source frequency {} differs from the operator frequency {}",
                source.omega, self.omega
            )));
        }
        let iw = Complex64::new(0.0, self.omega);
        Ok(source.current.iter().zip(&self.row_scale).map(|(j, s)| iw * s * j).collect())
    }

    /// `y = A x` or `y = Aᵀ x`.
    pub fn apply(&self, x: &[Complex64], transpose: bool) -> Vec<Complex64> {
        let n = self.size();
        let cp = self.matrix.symbolic().col_ptr();
        let ri = self.matrix.symbolic().row_idx();
        let val = self.matrix.val();
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for col in 0..n {
            let range = cp[col]..cp[col + 1];
            if transpose {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in range {
                    acc += val[k] * x[ri[k]];
                }
                y[col] = acc;
            } else {
                let xc = x[col];
                for k in range {
                    y[ri[k]] += val[k] * xc;
                }
            }
        }
        y
    }

    fn residual(&self, x: &[Complex64], b: &[Complex64], transpose: bool) -> (Vec<Complex64>, f64) {
        let ax = self.apply(x, transpose);
        let r: Vec<_> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let bn = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let rn = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        (r, if bn == 0.0 { rn } else { rn / bn })
    }

    fn lu_solve(&self, rhs: &[&[Complex64]], transpose: bool) -> Vec<Vec<Complex64>> {
        let n = self.size();
        let mut m = Mat::<Complex64>::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
        if transpose {
            self.lu.solve_transpose_in_place(m.as_mut());
        } else {
            self.lu.solve_in_place(m.as_mut());
        }
        (0..rhs.len()).map(|j| m.col(j).iter().copied().collect()).collect()
    }

    /// Solve for every right-hand side with one shared factorization, then
    /// refine each column until its residual meets the tolerance.
    pub fn solve_rhs(&self, rhs: &[Vec<Complex64>], transpose: bool) -> Result<Vec<(Vec<Complex64>, f64)>> {
        let n = self.size();
        if rhs.iter().any(|b| b.len() != n) {
            return Err(Error::arg("right-hand side length does not match the operator"));
        }
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        let refs: Vec<&[Complex64]> = rhs.iter().map(|b| b.as_slice()).collect();
        let mut xs = self.lu_solve(&refs, transpose);
        let mut out = Vec::with_capacity(rhs.len());
        for (x, b) in xs.iter_mut().zip(rhs) {
            let (mut r, mut rel) = self.residual(x, b, transpose);
            let mut steps = 0;
            while rel > self.tolerance && steps < MAX_REFINEMENTS {
                let dx = self.lu_solve(&[&r], transpose).pop().unwrap_or_default();
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
                (r, rel) = self.residual(x, b, transpose);
                steps += 1;
            }
            if !(rel <= self.tolerance) {
                return Err(Error::Solver(format!(
                    "relative residual {rel:.3e} above tolerance {:.1e}",
                    self.tolerance
                )));
            }
            out.push((std::mem::take(x), rel));
        }
        Ok(out)
    }

    fn wrap(&self, values: Vec<Complex64>, residual: f64, role: FieldRole) -> FieldSolution {
        FieldSolution {
            values,
            nx: self.nx,
            ny: self.ny,
            spacing: self.spacing,
            role,
            residual,
        }
    }
}

/// Forward field for one source.
pub fn solve(op: &AssembledOperator, source: &SourceDistribution) -> Result<FieldSolution> {
    Ok(solve_many(op, std::slice::from_ref(source))?.pop().expect("one source in, one field out"))
}

/// Forward fields for several sources sharing the factorization.
pub fn solve_many(op: &AssembledOperator, sources: &[SourceDistribution]) -> Result<Vec<FieldSolution>> {
    let rhs = sources.iter().map(|s| op.rhs(s)).collect::<Result<Vec<_>>>()?;
    Ok(op
        .solve_rhs(&rhs, false)?
        .into_iter()
        .map(|(x, r)| op.wrap(x, r, FieldRole::Forward))
        .collect())
}

/// Solutions of `Aᵀ λ = b` for right-hand sides given directly on the grid.
pub fn solve_transpose_many(op: &AssembledOperator, rhs: &[Vec<Complex64>]) -> Result<Vec<FieldSolution>> {
    Ok(op
        .solve_rhs(rhs, true)?
        .into_iter()
        .map(|(x, r)| op.wrap(x, r, FieldRole::Backward))
        .collect())
}
