//! Gate cost, adjoint solves and the structural gradient.
//!
//! The cost is `C = Σ_r w_r (1 − S_r)` over truth-table rows, with uniform
//! weights `w_r = 1/R` unless given. [`CostForm`] offers two alternatives
//! that weigh poor rows more heavily. `C` is a real function of the complex
//! overlaps `g` and their conjugates; derivatives follow the conjugate
//! coordinate convention
//!
//! ```text
//! dC = 2 Re Σ (∂C/∂g) dg
//! ```
//!
//! so `∂|g|²/∂g = conj(g)`. With `e` the forward field and `A e = b`, the
//! backward field solves `Aᵀ λ = −(∂C/∂e)ᵀ` and
//! `∂C/∂ε_c = 2 Re(λ_c (∂A/∂ε)_c e_c)`, summed over input ports.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::device::{omega_of, simulate, Simulation};
use crate::quantum::{truth_table_eval, GateSpec, RowSuccess, TransferMatrix};
use crate::solver::{
    build_grid, overlap_weights, solve_transpose_many, AssembledOperator, DeviceLayout, FieldRole,
    FieldSolution, PortSide, SimGrid, SourceDistribution,
};
use crate::splines::{rasterize_levelset, ControlGrid, LevelSetField};
use crate::topology::{chain_gradient, permittivity_map, DesignRect, MaterialPair, PermittivityMap, SmoothedDelta};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostValue {
    pub value: f64,
    pub rows: Vec<RowSuccess>,
}

impl CostValue {
    pub fn min_success(&self) -> f64 {
        self.rows.iter().map(|r| r.success).fold(f64::INFINITY, f64::min)
    }
}

/// Row weights: `weights` if given (one per row, finite, non-negative),
/// otherwise uniform and summing to one.
pub fn row_weights(spec: &GateSpec, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = spec.table.len();
    if n == 0 {
        return Err(Error::arg("truth table is empty"));
    }
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) if w.len() != n => Err(Error::arg(format!("{} weights for {n} truth-table rows", w.len()))),
        Some(w) if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) => {
            Err(Error::arg("row weights must be finite and non-negative"))
        }
        Some(w) => Ok(w.to_vec()),
    }
}

/// How row successes `S_r` combine into the cost. Every form is zero when
/// all rows succeed with certainty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "form", deny_unknown_fields)]
pub enum CostForm {
    /// `Σ w_r (1 − S_r)`.
    #[default]
    Linear,
    /// `−Σ w_r ln((S_r + floor) / (1 + floor))`.
    Log { floor: f64 },
    /// `1 + T ln Σ w_r exp(−S_r / T)`, a smooth minimum over rows.
    /// Needs weights summing to one.
    Softmin { temperature: f64 },
}

impl CostForm {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CostForm::Linear => Ok(()),
            CostForm::Log { floor } if floor > 0.0 && floor.is_finite() => Ok(()),
            CostForm::Softmin { temperature } if temperature > 0.0 && temperature.is_finite() => Ok(()),
            other => Err(Error::config(format!("invalid cost form {other:?}"))),
        }
    }

    fn value(&self, s: &[f64], w: &[f64]) -> f64 {
        match *self {
            CostForm::Linear => s.iter().zip(w).map(|(s, w)| w * (1.0 - s)).sum(),
            CostForm::Log { floor } => -s.iter().zip(w).map(|(s, w)| w * ((s + floor) / (1.0 + floor)).ln()).sum::<f64>(),
            CostForm::Softmin { temperature: t } => {
                // shifted by the smallest row for stability
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                let sum: f64 = s.iter().zip(w).map(|(s, w)| w * (-(s - lo) / t).exp()).sum();
                1.0 - lo + t * sum.ln()
            }
        }
    }

    /// `∂C/∂S_r` for every row.
    fn slopes(&self, s: &[f64], w: &[f64]) -> Vec<f64> {
        match *self {
            CostForm::Linear => w.iter().map(|w| -w).collect(),
            CostForm::Log { floor } => s.iter().zip(w).map(|(s, w)| -w / (s + floor)).collect(),
            CostForm::Softmin { temperature: t } => {
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                let e: Vec<f64> = s.iter().zip(w).map(|(s, w)| w * (-(s - lo) / t).exp()).collect();
                let sum: f64 = e.iter().sum();
                e.iter().map(|e| -e / sum).collect()
            }
        }
    }
}

pub fn cost_eval(g: &TransferMatrix, spec: &GateSpec, weights: Option<&[f64]>, form: CostForm) -> Result<CostValue> {
    let w = row_weights(spec, weights)?;
    let report = truth_table_eval(g, spec)?;
    let s: Vec<f64> = report.rows.iter().map(|r| r.success).collect();
    Ok(CostValue {
        value: form.value(&s, &w),
        rows: report.rows,
    })
}

/// `∂C/∂g_ni` for every entry of `g`.
pub fn cost_derivative(
    g: &TransferMatrix,
    spec: &GateSpec,
    weights: Option<&[f64]>,
    form: CostForm,
) -> Result<Array2<Complex64>> {
    let w = row_weights(spec, weights)?;
    let s: Vec<f64> = truth_table_eval(g, spec)?.rows.iter().map(|r| r.success).collect();
    derivative_from_slopes(g, spec, &form.slopes(&s, &w))
}

/// `Σ_r slope_r ∂S_r/∂g_ni`.
fn derivative_from_slopes(g: &TransferMatrix, spec: &GateSpec, slopes: &[f64]) -> Result<Array2<Complex64>> {
    let gm = g.matrix();
    let mut d = Array2::<Complex64>::zeros(gm.dim());
    for ((ins, outs), &f) in spec.port_rows()?.iter().zip(slopes) {
        match (ins.as_slice(), outs.as_slice()) {
            ([i], [n]) => {
                let (i, n) = (i - 1, n - 1);
                d[[i, n]] += f * gm[[i, n]].conj();
            }
            ([l, k], [m, n]) => {
                let (l, k, m, n) = (l - 1, k - 1, m - 1, n - 1);
                let z = gm[[l, m]] * gm[[k, n]] + gm[[l, n]] * gm[[k, m]];
                let zc = f * z.conj();
                d[[l, m]] += zc * gm[[k, n]];
                d[[k, n]] += zc * gm[[l, m]];
                d[[l, n]] += zc * gm[[k, m]];
                d[[k, m]] += zc * gm[[l, n]];
            }
            _ => return Err(Error::arg("only one- and two-qubit gates are supported")),
        }
    }
    Ok(d)
}

/// Adjoint excitation for each input port: a current on the output-port
/// cross-sections whose right-hand side is `−(∂C/∂e)ᵀ`. Rows of `dcdg` that
/// vanish give `None`.
pub fn adjoint_source(grid: &SimGrid, dcdg: &Array2<Complex64>, omega: f64) -> Result<Vec<Option<SourceDistribution>>> {
    let n_out = grid.port_count(PortSide::Output);
    if dcdg.ncols() != n_out || dcdg.nrows() != grid.port_count(PortSide::Input) {
        return Err(Error::arg("cost derivative does not match the device ports"));
    }
    let to_current = 1.0 / (Complex64::i() * omega * grid.cell_area());
    let mut out = Vec::with_capacity(dcdg.nrows());
    for row in dcdg.rows() {
        if row.iter().all(|v| v.norm_sqr() == 0.0) {
            out.push(None);
            continue;
        }
        let mut src = SourceDistribution::zeros(grid.nx, grid.ny, omega);
        for (i, &a) in row.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            for (cell, w) in overlap_weights(grid, PortSide::Output, i + 1)? {
                src.current[cell] -= a * w * to_current;
            }
        }
        out.push(Some(src));
    }
    Ok(out)
}

/// Backward fields `Aᵀ λ = b(src)` sharing the forward factorization.
pub fn backward_solve(op: &AssembledOperator, sources: &[SourceDistribution]) -> Result<Vec<FieldSolution>> {
    let rhs = sources.iter().map(|s| op.rhs(s)).collect::<Result<Vec<_>>>()?;
    solve_transpose_many(op, &rhs)
}

/// `∂C/∂ε` on the cells of the design region.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralGradient {
    /// Derivative with respect to each cell's permittivity, `[ix, iy]` within
    /// the design window.
    pub per_cell: Array2<f64>,
    pub design: DesignRect,
    pub spacing: f64,
}

impl StructuralGradient {
    /// Per unit area, the form [`chain_gradient`] integrates.
    pub fn density(&self) -> Array2<f64> {
        let a = self.spacing * self.spacing;
        self.per_cell.mapv(|v| v / a)
    }

    /// Embed in a full `nx × ny` grid, zero outside the design region.
    pub fn to_grid(&self, nx: usize, ny: usize) -> Array2<f64> {
        let mut full = Array2::zeros((nx, ny));
        let d = self.design;
        full.slice_mut(ndarray::s![d.ix0..d.ix0 + d.nx, d.iy0..d.iy0 + d.ny])
            .assign(&self.per_cell);
        full
    }
}

/// `Σ 2 Re(λ (∂A/∂ε) e)` over matching forward/backward pairs.
pub fn structural_gradient(
    op: &AssembledOperator,
    pairs: &[(&FieldSolution, &FieldSolution)],
    design: DesignRect,
) -> Result<StructuralGradient> {
    if design.ix0 + design.nx > op.nx || design.iy0 + design.ny > op.ny {
        return Err(Error::arg("design region exceeds the operator grid"));
    }
    let mut per_cell = Array2::zeros((design.nx, design.ny));
    let deps = op.deps();
    for (e, lam) in pairs {
        if (e.nx, e.ny) != (op.nx, op.ny) || (lam.nx, lam.ny) != (op.nx, op.ny) {
            return Err(Error::arg("field grid does not match the operator"));
        }
        if e.role != FieldRole::Forward || lam.role != FieldRole::Backward {
            return Err(Error::arg("structural gradient needs a forward and a backward field"));
        }
        for ((a, b), v) in per_cell.indexed_iter_mut() {
            let c = (design.ix0 + a) * op.ny + design.iy0 + b;
            *v += 2.0 * (lam.values[c] * deps[c] * e.values[c]).re;
        }
    }
    Ok(StructuralGradient {
        per_cell,
        design,
        spacing: op.spacing,
    })
}

/// Central differences of `f` at the given entries of `x`.
pub fn fd_gradient<F>(mut f: F, x: &Array2<f64>, indices: &[(usize, usize)], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&Array2<f64>) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let mut work = x.clone();
    let mut out = Vec::with_capacity(indices.len());
    for &idx in indices {
        let x0 = x[idx];
        work[idx] = x0 + step;
        let hi = f(&work)?;
        work[idx] = x0 - step;
        let lo = f(&work)?;
        work[idx] = x0;
        out.push((hi - lo) / (2.0 * step));
    }
    Ok(out)
}

/// A gate to design: grid with cached port modes, target and cost weights.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub grid: SimGrid,
    pub spec: GateSpec,
    pub materials: MaterialPair,
    pub wavelength: f64,
    pub weights: Option<Vec<f64>>,
    pub cost_form: CostForm,
    /// `η = eta_factor · std(Ψ)`.
    pub eta_factor: f64,
    /// Further wavelengths scored together with `wavelength`, each with its
    /// own port modes. Every row at every wavelength enters the cost form
    /// with weight `w_r / (1 + band.len())`; reported successes stay at
    /// `wavelength`.
    pub band: Vec<(f64, SimGrid)>,
}

/// Outcome of one design evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: CostValue,
    pub transfer: TransferMatrix,
    pub delta: SmoothedDelta,
    pub structural: Option<StructuralGradient>,
    /// `∂C/∂P`, present when the gradient was requested.
    pub gradient: Option<Array2<f64>>,
}

impl DesignProblem {
    pub fn new(layout: &DeviceLayout, spec: GateSpec, eta_factor: f64) -> Result<Self> {
        let mut grid = build_grid(layout)?;
        grid.prepare_modes(omega_of(layout.wavelength))?;
        Self::from_grid(grid, spec, layout.materials, layout.wavelength, eta_factor)
    }

    pub fn from_grid(
        grid: SimGrid,
        spec: GateSpec,
        materials: MaterialPair,
        wavelength: f64,
        eta_factor: f64,
    ) -> Result<Self> {
        materials.validate()?;
        if !(eta_factor > 0.0 && eta_factor.is_finite()) {
            return Err(Error::config("eta factor must be positive"));
        }
        if spec.input.max_port() > grid.port_count(PortSide::Input)
            || spec.output.max_port() > grid.port_count(PortSide::Output)
        {
            return Err(Error::config(format!(
                "gate {} uses more ports than the device provides ({} per side)",
                spec.name,
                grid.port_count(PortSide::Input)
            )));
        }
        Ok(Self {
            grid,
            spec,
            materials,
            wavelength,
            weights: None,
            cost_form: CostForm::Linear,
            eta_factor,
            band: Vec::new(),
        })
    }

    /// Also score the design at `wavelengths`.
    pub fn with_band(mut self, wavelengths: &[f64]) -> Result<Self> {
        let mut band = Vec::with_capacity(wavelengths.len());
        for &wl in wavelengths {
            if !(wl > 0.0 && wl.is_finite()) || wl == self.wavelength {
                return Err(Error::config(format!("band wavelength {wl} must be positive and differ from the design wavelength")));
            }
            let mut grid = self.grid.clone();
            grid.prepare_modes(omega_of(wl))?;
            band.push((wl, grid));
        }
        self.band = band;
        Ok(self)
    }

    /// The same device at another free-space wavelength, scored there alone.
    pub fn at_wavelength(&self, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::arg(format!("wavelength must be positive, got {wavelength}")));
        }
        let mut p = Self {
            band: Vec::new(),
            ..self.clone()
        };
        p.grid.prepare_modes(omega_of(wavelength))?;
        p.wavelength = wavelength;
        Ok(p)
    }

    pub fn levelset(&self, control: &ControlGrid) -> Result<LevelSetField> {
        rasterize_levelset(control, &self.grid.design_sampling())
    }

    pub fn delta_for(&self, psi: &LevelSetField) -> SmoothedDelta {
        SmoothedDelta::from_levelset(psi, self.eta_factor)
    }

    pub fn permittivity(&self, control: &ControlGrid, delta: Option<SmoothedDelta>) -> Result<(PermittivityMap, SmoothedDelta)> {
        let psi = self.levelset(control)?;
        let delta = delta.unwrap_or_else(|| self.delta_for(&psi));
        Ok((permittivity_map(&psi, self.materials, delta, &self.grid.background)?, delta))
    }

    /// Cost and, optionally, the structural gradient of a permittivity map.
    pub fn evaluate_eps(
        &self,
        eps: &PermittivityMap,
        with_gradient: bool,
    ) -> Result<(CostValue, TransferMatrix, Option<StructuralGradient>)> {
        let w = self.weights.as_deref();
        let grids: Vec<(f64, &SimGrid)> = std::iter::once((self.wavelength, &self.grid))
            .chain(self.band.iter().map(|(wl, g)| (*wl, g)))
            .collect();
        let share = 1.0 / grids.len() as f64;
        let w0 = row_weights(&self.spec, w)?;
        let (mut sims, mut s_all, mut w_all) = (Vec::new(), Vec::new(), Vec::new());
        let mut rows = Vec::new();
        for &(wl, grid) in &grids {
            let sim = simulate(grid, eps, wl)?;
            let report = truth_table_eval(&sim.transfer, &self.spec)?;
            s_all.extend(report.rows.iter().map(|r| r.success));
            w_all.extend(w0.iter().map(|w| w * share));
            if sims.is_empty() {
                rows = report.rows;
            }
            sims.push(sim);
        }
        let cost = CostValue {
            value: self.cost_form.value(&s_all, &w_all),
            rows,
        };
        let structural = if with_gradient {
            let slopes = self.cost_form.slopes(&s_all, &w_all);
            let mut total: Option<StructuralGradient> = None;
            for (k, (&(wl, grid), sim)) in grids.iter().zip(&sims).enumerate() {
                let part = &slopes[k * w0.len()..(k + 1) * w0.len()];
                let dcdg = derivative_from_slopes(&sim.transfer, &self.spec, part)?;
                let sg = self.backward(grid, sim, &dcdg, wl)?;
                match &mut total {
                    Some(t) => t.per_cell += &sg.per_cell,
                    None => total = Some(sg),
                }
            }
            total
        } else {
            None
        };
        let transfer = sims.swap_remove(0).transfer;
        Ok((cost, transfer, structural))
    }

    /// Adjoint solves for `dcdg` and the resulting `∂C/∂ε`.
    fn backward(&self, grid: &SimGrid, sim: &Simulation, dcdg: &Array2<Complex64>, wavelength: f64) -> Result<StructuralGradient> {
        let sources = adjoint_source(grid, dcdg, omega_of(wavelength))?;
        let (active, srcs): (Vec<usize>, Vec<SourceDistribution>) = sources
            .into_iter()
            .enumerate()
            .filter_map(|(n, s)| s.map(|s| (n, s)))
            .unzip();
        let backward = backward_solve(&sim.operator, &srcs)?;
        let pairs: Vec<_> = active.iter().zip(&backward).map(|(&n, lam)| (&sim.fields[n], lam)).collect();
        structural_gradient(&sim.operator, &pairs, grid.design)
    }

    /// Cost of a control grid and, optionally, `∂C/∂P`. `delta` fixes the
    /// smoothing width; by default it follows the level-set statistics.
    pub fn evaluate(&self, control: &ControlGrid, delta: Option<SmoothedDelta>, with_gradient: bool) -> Result<Evaluation> {
        let psi = self.levelset(control)?;
        let delta = delta.unwrap_or_else(|| self.delta_for(&psi));
        let eps = permittivity_map(&psi, self.materials, delta, &self.grid.background)?;
        let (cost, transfer, structural) = self.evaluate_eps(&eps, with_gradient)?;
        let gradient = match &structural {
            Some(sg) => Some(chain_gradient(&sg.density(), &psi, control, delta, self.materials)?),
            None => None,
        };
        Ok(Evaluation {
            cost,
            transfer,
            delta,
            structural,
            gradient,
        })
    }
}
