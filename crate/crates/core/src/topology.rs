//! Level-set to permittivity mapping and the chain rule back to spline weights.
//!
//! The sharp two-material rule (silica where `Ψ < 0`, silicon where `Ψ > 0`)
//! is regularized over a band `|Ψ| < η`:
//!
//! ```text
//! H_η(Ψ) = ½ (1 + Ψ/η + sin(πΨ/η)/π)      ε = ε_inc + (ε_host − ε_inc) H_η(Ψ)
//! δ_η(Ψ) = H_η'(Ψ) = (1 + cos(πΨ/η)) / (2η)
//! ```
//!
//! so `∂ε/∂Ψ = (ε_host − ε_inc) δ_η(Ψ)` exactly, and
//! `∂C/∂P_ij = ∬ ∂C/∂ε · δ_η(Ψ) · (ε_host − ε_inc) · N_i(x) N_j(y) dx dy`.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::splines::{basis_matrix, ControlGrid, LevelSetField};
use crate::{Error, Result};

/// Host (`Ψ > 0`) and inclusion (`Ψ < 0`) relative permittivities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialPair {
    pub eps_host: f64,
    pub eps_inclusion: f64,
}

impl MaterialPair {
    pub fn new(eps_host: f64, eps_inclusion: f64) -> Result<Self> {
        let pair = Self {
            eps_host,
            eps_inclusion,
        };
        pair.validate()?;
        Ok(pair)
    }

    /// Silicon host with silica scatterers at 1.55 µm.
    pub fn silicon_silica() -> Self {
        Self {
            eps_host: 12.085,
            eps_inclusion: 2.085,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_host.is_finite() && self.eps_inclusion.is_finite()) {
            return Err(Error::config("permittivities must be finite"));
        }
        if self.eps_host <= 1.0 || self.eps_inclusion <= 1.0 {
            return Err(Error::config("permittivities must exceed 1"));
        }
        if self.eps_host == self.eps_inclusion {
            return Err(Error::config("host and inclusion permittivities must differ"));
        }
        Ok(())
    }

    /// `ε_host − ε_inclusion`.
    pub fn contrast(&self) -> f64 {
        self.eps_host - self.eps_inclusion
    }

    pub fn max(&self) -> f64 {
        self.eps_host.max(self.eps_inclusion)
    }

    pub fn min(&self) -> f64 {
        self.eps_host.min(self.eps_inclusion)
    }
}

/// Half-width `η` of the regularized interface band, in units of `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedDelta {
    eta: f64,
}

/// Floor for `η` when the level set is (nearly) constant.
pub const MIN_ETA: f64 = 1e-3;

impl SmoothedDelta {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::arg(format!("delta width must be positive, got {eta}")));
        }
        Ok(Self { eta })
    }

    /// `η = factor · std(Ψ)`, floored at [`MIN_ETA`].
    pub fn from_levelset(psi: &LevelSetField, factor: f64) -> Self {
        Self {
            eta: (factor * psi.std_dev()).max(MIN_ETA),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Smoothed delta `δ_η(Ψ)`; integrates to one over `Ψ`.
pub fn delta_eval(psi: f64, delta: SmoothedDelta) -> f64 {
    let eta = delta.eta;
    if psi.abs() >= eta {
        0.0
    } else {
        (1.0 + (PI * psi / eta).cos()) / (2.0 * eta)
    }
}

/// Smoothed Heaviside `H_η(Ψ)`, the antiderivative of [`delta_eval`].
pub fn heaviside_eval(psi: f64, delta: SmoothedDelta) -> f64 {
    let eta = delta.eta;
    if psi <= -eta {
        0.0
    } else if psi >= eta {
        1.0
    } else {
        let r = psi / eta;
        0.5 * (1.0 + r + (PI * r).sin() / PI)
    }
}

/// Index rectangle of the design region inside the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignRect {
    pub ix0: usize,
    pub iy0: usize,
    pub nx: usize,
    pub ny: usize,
}

impl DesignRect {
    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        ix >= self.ix0 && ix < self.ix0 + self.nx && iy >= self.iy0 && iy < self.iy0 + self.ny
    }
}

/// Fixed layout around the design region: waveguides in cladding.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    /// Relative permittivity on the full grid, indexed `[ix, iy]`.
    pub values: Array2<f64>,
    pub design: DesignRect,
    /// Cell size in µm.
    pub spacing: f64,
}

/// Relative permittivity on the full simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityMap {
    pub values: Array2<f64>,
    pub spacing: f64,
    pub design: DesignRect,
}

impl PermittivityMap {
    /// Wrap the background layout unchanged (no design region fill).
    pub fn from_background(bg: &Background) -> Self {
        Self {
            values: bg.values.clone(),
            spacing: bg.spacing,
            design: bg.design,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Copy of the design-region window.
    pub fn design_values(&self) -> Array2<f64> {
        let d = self.design;
        self.values
            .slice(ndarray::s![d.ix0..d.ix0 + d.nx, d.iy0..d.iy0 + d.ny])
            .to_owned()
    }
}

/// Fill the design region from `Ψ`; everything else keeps the background.
pub fn permittivity_map(
    psi: &LevelSetField,
    materials: MaterialPair,
    delta: SmoothedDelta,
    background: &Background,
) -> Result<PermittivityMap> {
    let d = background.design;
    if psi.dim() != (d.nx, d.ny) {
        return Err(Error::arg(format!(
            "level set is {:?} but the design region is {}x{}",
            psi.dim(),
            d.nx,
            d.ny
        )));
    }
    let mut values = background.values.clone();
    if d.ix0 + d.nx > values.dim().0 || d.iy0 + d.ny > values.dim().1 {
        return Err(Error::arg("design region exceeds the background grid"));
    }
    let contrast = materials.contrast();
    for ((a, b), &p) in psi.values.indexed_iter() {
        values[[d.ix0 + a, d.iy0 + b]] = materials.eps_inclusion + contrast * heaviside_eval(p, delta);
    }
    Ok(PermittivityMap {
        values,
        spacing: background.spacing,
        design: d,
    })
}

/// Pull a design-region permittivity sensitivity density back onto the
/// control weights. The result is `∂C/∂P` itself, so a step along its
/// negative decreases `C`.
pub fn chain_gradient(
    dc_deps: &Array2<f64>,
    psi: &LevelSetField,
    grid: &ControlGrid,
    delta: SmoothedDelta,
    materials: MaterialPair,
) -> Result<Array2<f64>> {
    if dc_deps.dim() != psi.dim() {
        return Err(Error::arg(format!(
            "sensitivity grid {:?} does not match level set {:?}",
            dc_deps.dim(),
            psi.dim()
        )));
    }
    let (nx, ny) = psi.dim();
    let area = psi.spacing * psi.spacing;
    let scale = materials.contrast() * area;
    let mut weighted = Array2::zeros((nx, ny));
    for (((a, b), &g), &p) in dc_deps.indexed_iter().zip(psi.values.iter()) {
        let d = delta_eval(p, delta);
        if d != 0.0 {
            weighted[[a, b]] = g * d * scale;
        }
    }
    let (kx, ky) = grid.degrees();
    let bx = basis_matrix(grid.knots_x(), kx, nx);
    let by = basis_matrix(grid.knots_y(), ky, ny);
    Ok(bx.t().dot(&weighted).dot(&by))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::{rasterize_levelset, surface_sensitivity, SamplingGrid};
    use proptest::prelude::*;

    fn bg(nx: usize, ny: usize, design: DesignRect) -> Background {
        Background {
            values: Array2::from_elem((nx, ny), 2.085),
            design,
            spacing: 0.05,
        }
    }

    fn field(values: Array2<f64>) -> LevelSetField {
        LevelSetField { values, spacing: 0.05 }
    }

    #[test]
    fn sign_selects_material() {
        let m = MaterialPair::silicon_silica();
        let d = SmoothedDelta::new(0.1).unwrap();
        let rect = DesignRect { ix0: 1, iy0: 1, nx: 1, ny: 3 };
        let psi = field(Array2::from_shape_vec((1, 3), vec![0.5, -0.3, 0.0]).unwrap());
        let eps = permittivity_map(&psi, m, d, &bg(3, 5, rect)).unwrap();
        assert_eq!(eps.values[[1, 1]], m.eps_host);
        assert_eq!(eps.values[[1, 2]], m.eps_inclusion);
        assert!((eps.values[[1, 3]] - 0.5 * (m.eps_host + m.eps_inclusion)).abs() < 1e-12);
        // outside the design region the background survives
        assert_eq!(eps.values[[0, 0]], 2.085);
        assert_eq!(eps.values[[2, 4]], 2.085);
    }

    #[test]
    fn mismatched_levelset_is_rejected() {
        let rect = DesignRect { ix0: 0, iy0: 0, nx: 2, ny: 2 };
        let psi = field(Array2::zeros((3, 2)));
        let r = permittivity_map(&psi, MaterialPair::silicon_silica(), SmoothedDelta::new(0.1).unwrap(), &bg(4, 4, rect));
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn delta_values_and_support() {
        let d = SmoothedDelta::new(0.25).unwrap();
        assert!((delta_eval(0.0, d) - 4.0).abs() < 1e-12);
        assert_eq!(delta_eval(0.25, d), 0.0);
        assert_eq!(delta_eval(-0.3, d), 0.0);
        assert!(SmoothedDelta::new(0.0).is_err());
        assert!(SmoothedDelta::new(-1.0).is_err());
    }

    #[test]
    fn delta_integrates_to_one() {
        // composite Simpson over [-η, η]
        let d = SmoothedDelta::new(0.37).unwrap();
        let n = 2000;
        let h = 2.0 * d.eta() / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = -d.eta() + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * delta_eval(x, d);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn delta_is_derivative_of_heaviside() {
        let d = SmoothedDelta::new(0.2).unwrap();
        for &p in &[-0.19, -0.1, 0.0, 0.05, 0.15] {
            let h = 1e-6;
            let fd = (heaviside_eval(p + h, d) - heaviside_eval(p - h, d)) / (2.0 * h);
            assert!((fd - delta_eval(p, d)).abs() < 1e-6);
        }
    }

    #[test]
    fn eta_from_statistics() {
        let psi = field(Array2::from_shape_vec((2, 2), vec![1.0, -1.0, 1.0, -1.0]).unwrap());
        assert!((SmoothedDelta::from_levelset(&psi, 0.2).eta() - 0.2).abs() < 1e-12);
        let flat = field(Array2::zeros((3, 3)));
        assert_eq!(SmoothedDelta::from_levelset(&flat, 0.2).eta(), MIN_ETA);
    }

    #[test]
    fn material_validation() {
        assert!(MaterialPair::new(12.0, 12.0).is_err());
        assert!(MaterialPair::new(0.5, 2.0).is_err());
        assert!(MaterialPair::new(12.085, 2.085).is_ok());
    }

    #[test]
    fn chain_gradient_trivial_cases() {
        let grid = ControlGrid::clamped_uniform(4, 5, 3, 3).unwrap();
        let m = MaterialPair::silicon_silica();
        let d = SmoothedDelta::new(0.1).unwrap();
        let psi = field(Array2::from_shape_fn((8, 9), |(a, b)| 0.02 * (a as f64 - b as f64)));
        let g = chain_gradient(&Array2::zeros((8, 9)), &psi, &grid, d, m).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        let far = field(Array2::from_elem((8, 9), 0.5));
        let g = chain_gradient(&Array2::from_elem((8, 9), 1.0), &far, &grid, d, m).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        assert!(chain_gradient(&Array2::zeros((7, 9)), &psi, &grid, d, m).is_err());
    }

    #[test]
    fn chain_gradient_matches_pointwise_quadrature() {
        // independent route: per-cell pointwise sensitivities summed by hand
        let grid = ControlGrid::clamped_uniform(5, 4, 3, 2).unwrap();
        let grid = grid
            .with_weights(Array2::from_shape_fn((5, 4), |(i, j)| ((i * 3 + j * 5) % 7) as f64 / 3.5 - 1.0))
            .unwrap();
        let sampling = SamplingGrid { nx: 10, ny: 12, spacing: 0.04 };
        let psi = rasterize_levelset(&grid, &sampling).unwrap();
        let m = MaterialPair::silicon_silica();
        let d = SmoothedDelta::from_levelset(&psi, 0.6);
        let got = chain_gradient(&Array2::from_elem((10, 12), 1.0), &psi, &grid, d, m).unwrap();

        let mut expect = Array2::<f64>::zeros((5, 4));
        for a in 0..10 {
            for b in 0..12 {
                let x = (a as f64 + 0.5) / 10.0;
                let y = (b as f64 + 0.5) / 12.0;
                let s = surface_sensitivity(&grid, x, y).unwrap();
                let w = delta_eval(psi.values[[a, b]], d) * m.contrast() * 0.04 * 0.04;
                expect = expect + s * w;
            }
        }
        assert!(expect.iter().any(|&v| v.abs() > 1e-3));
        for (g, e) in got.iter().zip(expect.iter()) {
            assert!((g - e).abs() < 1e-8, "{g} vs {e}");
        }
    }

    #[test]
    fn chain_gradient_matches_finite_difference_of_linear_functional() {
        // C = Σ c_ab ε_ab · area, so dC/dε density is c_ab
        let grid = ControlGrid::clamped_uniform(5, 5, 3, 3)
            .unwrap()
            .with_weights(Array2::from_shape_fn((5, 5), |(i, j)| (i as f64 - 2.0) * 0.3 + (j as f64 - 2.1) * 0.2))
            .unwrap();
        let sampling = SamplingGrid { nx: 14, ny: 11, spacing: 0.05 };
        let m = MaterialPair::silicon_silica();
        let rect = DesignRect { ix0: 0, iy0: 0, nx: 14, ny: 11 };
        let background = bg(14, 11, rect);
        let c = Array2::from_shape_fn((14, 11), |(a, b)| ((a * 5 + b * 3) % 7) as f64 - 3.0);
        let psi = rasterize_levelset(&grid, &sampling).unwrap();
        let d = SmoothedDelta::from_levelset(&psi, 0.8);
        let cost = |g: &ControlGrid| {
            let psi = rasterize_levelset(g, &sampling).unwrap();
            let eps = permittivity_map(&psi, m, d, &background).unwrap();
            (&eps.values * &c).sum() * 0.05 * 0.05
        };
        let analytic = chain_gradient(&c, &psi, &grid, d, m).unwrap();
        let h = 1e-6;
        for &(i, j) in &[(1, 1), (2, 3), (4, 0), (3, 2)] {
            let mut wp = grid.weights().clone();
            wp[[i, j]] += h;
            let mut wm = grid.weights().clone();
            wm[[i, j]] -= h;
            let fd = (cost(&grid.with_weights(wp).unwrap()) - cost(&grid.with_weights(wm).unwrap())) / (2.0 * h);
            let a = analytic[[i, j]];
            assert!((fd - a).abs() <= 1e-6 * a.abs().max(1.0), "({i},{j}) fd {fd} vs {a}");
        }
    }

    proptest! {
        #[test]
        fn permittivity_is_monotone_in_psi(p in -1.0f64..1.0, dp in 0.0f64..0.5, eta in 0.01f64..0.5) {
            let m = MaterialPair::silicon_silica();
            let d = SmoothedDelta::new(eta).unwrap();
            let e1 = m.eps_inclusion + m.contrast() * heaviside_eval(p, d);
            let e2 = m.eps_inclusion + m.contrast() * heaviside_eval(p + dp, d);
            prop_assert!(e2 >= e1);
            prop_assert!(e1 >= m.min() && e1 <= m.max());
        }

        #[test]
        fn permittivity_map_is_idempotent(seed in 0u64..500) {
            let rect = DesignRect { ix0: 2, iy0: 1, nx: 4, ny: 3 };
            let background = bg(8, 6, rect);
            let psi = field(Array2::from_shape_fn((4, 3), |(a, b)| (((seed as usize + a * 7 + b * 13) % 11) as f64 - 5.0) * 0.05));
            let d = SmoothedDelta::new(0.1).unwrap();
            let m = MaterialPair::silicon_silica();
            let once = permittivity_map(&psi, m, d, &background).unwrap();
            let again = Background { values: once.values.clone(), design: rect, spacing: 0.05 };
            let twice = permittivity_map(&psi, m, d, &again).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
