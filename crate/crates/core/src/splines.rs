//! B-spline bases (Cox-de Boor) and the tensor-product level-set surface
//!
//! `Ψ(u, v) = Σ_i Σ_j N_{i,kx}(u) N_{j,ky}(v) P_ij`
//!
//! Parameters `(u, v)` live in the knot range; the physical design region is
//! mapped onto it affinely by [`rasterize_levelset`].

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Non-decreasing knot sequence `u_0 ≤ u_1 ≤ … ≤ u_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KnotVector {
    knots: Vec<f64>,
}

impl TryFrom<Vec<f64>> for KnotVector {
    type Error = Error;

    fn try_from(knots: Vec<f64>) -> Result<Self> {
        KnotVector::new(knots)
    }
}

impl From<KnotVector> for Vec<f64> {
    fn from(k: KnotVector) -> Self {
        k.knots
    }
}

impl KnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::arg("knot vector needs at least two knots"));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::arg("knots must be finite"));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::arg("knots must be non-decreasing"));
        }
        Ok(Self { knots })
    }

    /// Clamped uniform knots on `[0, 1]` for `n_ctrl` basis functions.
    pub fn clamped_uniform(n_ctrl: usize, degree: usize) -> Result<Self> {
        if n_ctrl < degree + 1 {
            return Err(Error::arg(format!(
                "{n_ctrl} control points cannot carry a degree-{degree} spline"
            )));
        }
        let interior = n_ctrl - degree - 1;
        let spans = (n_ctrl - degree) as f64;
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..=interior).map(|j| j as f64 / spans));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(knots)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Number of degree-`degree` basis functions this knot vector defines.
    pub fn basis_count(&self, degree: usize) -> usize {
        self.knots.len().saturating_sub(degree + 1)
    }

    /// True when the first and last knots are each repeated `degree + 1` times.
    pub fn is_clamped(&self, degree: usize) -> bool {
        let m = self.knots.len();
        if m < 2 * (degree + 1) {
            return false;
        }
        let first = self.knots[0];
        let last = self.knots[m - 1];
        self.knots[..=degree].iter().all(|&k| k == first)
            && self.knots[m - 1 - degree..].iter().all(|&k| k == last)
    }

    /// Valid parameter interval `[u_k, u_{m-k}]` for degree `k`.
    pub fn parameter_range(&self, degree: usize) -> (f64, f64) {
        let m = self.knots.len();
        (self.knots[degree], self.knots[m - 1 - degree])
    }
}

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    // 0/0 (repeated knots) contributes nothing
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn degree_zero(knots: &[f64], i: usize, u: f64) -> f64 {
    let (lo, hi) = (knots[i], knots[i + 1]);
    if lo <= u && u < hi {
        return 1.0;
    }
    // close the last non-empty span so the basis still sums to one at the end
    let end = knots[knots.len() - 1];
    if u == end && hi == end && lo < hi {
        1.0
    } else {
        0.0
    }
}

fn cox_de_boor(knots: &[f64], i: usize, k: usize, u: f64) -> f64 {
    if k == 0 {
        return degree_zero(knots, i, u);
    }
    let left = ratio(u - knots[i], knots[i + k] - knots[i]);
    let right = ratio(knots[i + k + 1] - u, knots[i + k + 1] - knots[i + 1]);
    let mut acc = 0.0;
    if left != 0.0 {
        acc += left * cox_de_boor(knots, i, k - 1, u);
    }
    if right != 0.0 {
        acc += right * cox_de_boor(knots, i + 1, k - 1, u);
    }
    acc
}

/// `N_{index,degree}(u)` by direct Cox-de Boor recursion.
pub fn basis_eval(knots: &KnotVector, index: usize, degree: usize, u: f64) -> Result<f64> {
    if index + degree + 1 >= knots.len() {
        return Err(Error::arg(format!(
            "basis index {index} with degree {degree} needs more than {} knots",
            knots.len()
        )));
    }
    Ok(cox_de_boor(knots.as_slice(), index, degree, u))
}

/// Every degree-`degree` basis function at `u`, built bottom-up from the
/// degree-zero indicators.
pub fn basis_all(knots: &KnotVector, degree: usize, u: f64) -> Vec<f64> {
    let t = knots.as_slice();
    let spans = t.len() - 1;
    let mut level: Vec<f64> = (0..spans).map(|i| degree_zero(t, i, u)).collect();
    for k in 1..=degree {
        let next: Vec<f64> = (0..spans - k)
            .map(|i| {
                let left = ratio(u - t[i], t[i + k] - t[i]);
                let right = ratio(t[i + k + 1] - u, t[i + k + 1] - t[i + 1]);
                left * level[i] + right * level[i + 1]
            })
            .collect();
        level = next;
    }
    level
}

/// Spline control weights `P_ij` with their knot vectors and degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlGridData", into = "ControlGridData")]
pub struct ControlGrid {
    weights: Array2<f64>,
    degree_x: usize,
    degree_y: usize,
    knots_x: KnotVector,
    knots_y: KnotVector,
}

/// Serialized form: weights as rows over the x index.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlGridData {
    degree_x: usize,
    degree_y: usize,
    knots_x: KnotVector,
    knots_y: KnotVector,
    weights: Vec<Vec<f64>>,
}

impl TryFrom<ControlGridData> for ControlGrid {
    type Error = Error;

    fn try_from(d: ControlGridData) -> Result<Self> {
        let nx = d.weights.len();
        let ny = d.weights.first().map_or(0, Vec::len);
        if d.weights.iter().any(|r| r.len() != ny) {
            return Err(Error::Format("control weight rows differ in length".into()));
        }
        let w = Array2::from_shape_fn((nx, ny), |(i, j)| d.weights[i][j]);
        ControlGrid::new(w, d.degree_x, d.degree_y, d.knots_x, d.knots_y)
    }
}

impl From<ControlGrid> for ControlGridData {
    fn from(g: ControlGrid) -> Self {
        Self {
            degree_x: g.degree_x,
            degree_y: g.degree_y,
            weights: g.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            knots_x: g.knots_x,
            knots_y: g.knots_y,
        }
    }
}

impl ControlGrid {
    pub fn new(
        weights: Array2<f64>,
        degree_x: usize,
        degree_y: usize,
        knots_x: KnotVector,
        knots_y: KnotVector,
    ) -> Result<Self> {
        let (nx, ny) = weights.dim();
        if knots_x.len() != nx + degree_x + 1 || knots_y.len() != ny + degree_y + 1 {
            return Err(Error::arg(format!(
                "knot counts ({}, {}) do not match a {nx}x{ny} grid of degree ({degree_x}, {degree_y})",
                knots_x.len(),
                knots_y.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::arg("control weights must be finite"));
        }
        Ok(Self {
            weights,
            degree_x,
            degree_y,
            knots_x,
            knots_y,
        })
    }

    /// Zero weights over clamped uniform knots.
    pub fn clamped_uniform(nx: usize, ny: usize, degree_x: usize, degree_y: usize) -> Result<Self> {
        Self::new(
            Array2::zeros((nx, ny)),
            degree_x,
            degree_y,
            KnotVector::clamped_uniform(nx, degree_x)?,
            KnotVector::clamped_uniform(ny, degree_y)?,
        )
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Replace the weights, keeping knots and degrees.
    pub fn set_weights(&mut self, weights: Array2<f64>) -> Result<()> {
        if weights.dim() != self.weights.dim() {
            return Err(Error::arg("weight matrix shape changed"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::arg("control weights must be finite"));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn with_weights(&self, weights: Array2<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.set_weights(weights)?;
        Ok(out)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weights.dim()
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.degree_x, self.degree_y)
    }

    pub fn knots_x(&self) -> &KnotVector {
        &self.knots_x
    }

    pub fn knots_y(&self) -> &KnotVector {
        &self.knots_y
    }

    fn check_point(&self, x: f64, y: f64) -> Result<()> {
        let (x0, x1) = self.knots_x.parameter_range(self.degree_x);
        let (y0, y1) = self.knots_y.parameter_range(self.degree_y);
        if !(x0..=x1).contains(&x) || !(y0..=y1).contains(&y) {
            return Err(Error::arg(format!(
                "point ({x}, {y}) outside parameter range [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(())
    }
}

/// `Ψ(x, y)` at a point of the parameter domain.
pub fn surface_eval(grid: &ControlGrid, x: f64, y: f64) -> Result<f64> {
    grid.check_point(x, y)?;
    let bx = basis_all(&grid.knots_x, grid.degree_x, x);
    let by = basis_all(&grid.knots_y, grid.degree_y, y);
    let mut acc = 0.0;
    for (i, &nx) in bx.iter().enumerate() {
        if nx == 0.0 {
            continue;
        }
        for (j, &ny) in by.iter().enumerate() {
            acc += nx * ny * grid.weights[[i, j]];
        }
    }
    Ok(acc)
}

/// `∂Ψ(x, y)/∂P_ij = N_i(x) N_j(y)` for every control weight.
pub fn surface_sensitivity(grid: &ControlGrid, x: f64, y: f64) -> Result<Array2<f64>> {
    grid.check_point(x, y)?;
    let bx = Array1::from(basis_all(&grid.knots_x, grid.degree_x, x));
    let by = Array1::from(basis_all(&grid.knots_y, grid.degree_y, y));
    let (nx, ny) = grid.shape();
    Ok(Array2::from_shape_fn((nx, ny), |(i, j)| bx[i] * by[j]))
}

/// Cell-centred sampling lattice of the design region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingGrid {
    pub nx: usize,
    pub ny: usize,
    /// Cell size in µm.
    pub spacing: f64,
}

/// Sampled level-set values over the design region, indexed `[ix, iy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    pub values: Array2<f64>,
    pub spacing: f64,
}

impl LevelSetField {
    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Population standard deviation of the samples.
    pub fn std_dev(&self) -> f64 {
        let n = self.values.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = self.values.sum() / n;
        (self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Basis values at `samples` cell centres spread over the knot range:
/// row `a` holds every `N_i` at the centre of cell `a`.
pub fn basis_matrix(knots: &KnotVector, degree: usize, samples: usize) -> Array2<f64> {
    let (lo, hi) = knots.parameter_range(degree);
    let n = knots.basis_count(degree);
    let mut out = Array2::zeros((samples, n));
    for a in 0..samples {
        let u = lo + (hi - lo) * (a as f64 + 0.5) / samples as f64;
        for (i, v) in basis_all(knots, degree, u).into_iter().enumerate() {
            out[[a, i]] = v;
        }
    }
    out
}

/// Sample `Ψ` at every cell centre of the design region.
pub fn rasterize_levelset(grid: &ControlGrid, sampling: &SamplingGrid) -> Result<LevelSetField> {
    if sampling.nx == 0 || sampling.ny == 0 {
        return Err(Error::arg("sampling grid is empty"));
    }
    if !(sampling.spacing > 0.0) {
        return Err(Error::arg("sampling spacing must be positive"));
    }
    let bx = basis_matrix(&grid.knots_x, grid.degree_x, sampling.nx);
    let by = basis_matrix(&grid.knots_y, grid.degree_y, sampling.ny);
    let values = bx.dot(&grid.weights).dot(&by.t());
    Ok(LevelSetField {
        values,
        spacing: sampling.spacing,
    })
}
