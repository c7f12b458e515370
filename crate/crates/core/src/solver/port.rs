use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::SimGrid;
use super::mode::ModeProfile;
use super::{FieldSolution, SourceDistribution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortSide {
    Input,
    Output,
}

/// Propagation direction of a launched mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    PlusX,
    MinusX,
}

impl Direction {
    fn step(self, column: usize) -> usize {
        match self {
            Direction::PlusX => column + 1,
            Direction::MinusX => column - 1,
        }
    }
}

/// Waveguide port: a cross-section at column `plane` spanning rows
/// `y_range.0..y_range.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    /// 1-based, counted from the top waveguide down.
    pub index: usize,
    pub side: PortSide,
    pub plane: usize,
    pub y_range: (usize, usize),
    /// Direction in which a mode launched here travels into the device.
    pub direction: Direction,
    /// Permittivity of the isolated waveguide across `y_range`.
    pub eps_profile: Vec<f64>,
    pub mode: Option<ModeProfile>,
}

impl Port {
    /// Second column of the two-column launch.
    pub fn launch_column(&self) -> usize {
        self.direction.step(self.plane)
    }
}

fn cached_mode(port: &Port, omega: f64) -> Result<&ModeProfile> {
    let mode = port
        .mode
        .as_ref()
        .ok_or_else(|| Error::Mode(format!("{:?} port {} has no cached mode", port.side, port.index)))?;
    if (mode.omega - omega).abs() > 1e-12 * omega {
        return Err(Error::Mode(format!(
            "{:?} port {} mode was computed at ω = {}, not {omega}",
            port.side, port.index, mode.omega
        )));
    }
    Ok(mode)
}

/// One-way mode source at a port carrying power `|amplitude|²`.
///
/// The two-column current sheet cancels the backward wave exactly on the
/// discrete lattice: the field vanishes at the plane and behind it, and in a
/// straight lead ahead of it equals `amplitude/√p · e^{iK(j − plane)Δ} φ(y)`.
pub fn inject_mode_source(
    grid: &SimGrid,
    side: PortSide,
    index: usize,
    amplitude: Complex64,
    omega: f64,
) -> Result<SourceDistribution> {
    let port = grid.port(side, index)?;
    let mode = cached_mode(port, omega)?;
    let h = grid.spacing;
    let a_in = amplitude / mode.power_factor().sqrt();
    let phase = Complex64::from_polar(1.0, mode.k_lattice * h);
    // row-scaled right-hand side entries, divided back into a current density
    let to_current = 1.0 / (Complex64::i() * omega * h * h);
    let near = a_in * phase * to_current;
    let far = -a_in * to_current;
    let mut src = SourceDistribution::zeros(grid.nx, grid.ny, omega);
    let (lo, _) = port.y_range;
    let second = port.launch_column();
    for (k, &phi) in mode.profile.iter().enumerate() {
        let iy = lo + k;
        src.current[port.plane * grid.ny + iy] += near * phi;
        src.current[second * grid.ny + iy] += far * phi;
    }
    Ok(src)
}

/// Normalized amplitude of the port mode in `field` at the port plane:
/// `√p Σ φ(y) e(plane, y) Δ`, so `|g|²` is the carried power fraction.
pub fn port_overlap(field: &FieldSolution, grid: &SimGrid, side: PortSide, index: usize) -> Result<Complex64> {
    if (field.nx, field.ny) != (grid.nx, grid.ny) {
        return Err(Error::arg("field does not match the grid"));
    }
    let port = grid.port(side, index)?;
    let mode = port
        .mode
        .as_ref()
        .ok_or_else(|| Error::Mode(format!("{side:?} port {index} has no cached mode")))?;
    let (lo, _) = port.y_range;
    let sum: Complex64 = mode
        .profile
        .iter()
        .enumerate()
        .map(|(k, &phi)| field.at(port.plane, lo + k) * phi)
        .sum();
    Ok(sum * grid.spacing * mode.power_factor().sqrt())
}

/// Weights `w` with `port_overlap = Σ w_c e_c`, as `(cell index, weight)`.
pub(crate) fn overlap_weights(grid: &SimGrid, side: PortSide, index: usize) -> Result<Vec<(usize, f64)>> {
    let port = grid.port(side, index)?;
    let mode = port
        .mode
        .as_ref()
        .ok_or_else(|| Error::Mode(format!("{side:?} port {index} has no cached mode")))?;
    let scale = grid.spacing * mode.power_factor().sqrt();
    let (lo, _) = port.y_range;
    Ok(mode
        .profile
        .iter()
        .enumerate()
        .map(|(k, &phi)| (port.plane * grid.ny + lo + k, phi * scale))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{assemble, build_grid, solve, DeviceLayout};
    use crate::topology::PermittivityMap;

    /// Straight waveguides through a silicon-filled design region, so each
    /// input couples straight across.
    fn straight_guides() -> SimGrid {
        let layout = DeviceLayout::xgate(1.55, 0.03);
        let mut g = build_grid(&layout).unwrap();
        let d = g.design;
        let bg = g.background.values.clone();
        for ix in d.ix0..d.ix0 + d.nx {
            for iy in 0..g.ny {
                g.background.values[[ix, iy]] = bg[[d.ix0 - 1, iy]];
            }
        }
        g.prepare_modes(g.omega()).unwrap();
        g
    }

    #[test]
    fn source_is_unidirectional_with_unit_power() {
        let g = straight_guides();
        let w = g.omega();
        let eps = PermittivityMap::from_background(&g.background);
        let op = assemble(&eps, &g, w).unwrap();
        let src = inject_mode_source(&g, PortSide::Input, 1, Complex64::new(1.0, 0.0), w).unwrap();
        let f = solve(&op, &src).unwrap();
        let t = port_overlap(&f, &g, PortSide::Output, 1).unwrap();
        let x = port_overlap(&f, &g, PortSide::Output, 2).unwrap();
        assert!((t.norm_sqr() - 1.0).abs() < 0.02, "|t|² = {}", t.norm_sqr());
        assert!(x.norm_sqr() < 1e-3, "cross talk {}", x.norm_sqr());
        // nothing travels backwards into the input lead
        let p = g.port(PortSide::Input, 1).unwrap();
        let behind = f.at(p.plane - 1, (p.y_range.0 + p.y_range.1) / 2).norm();
        let ahead = f.at(p.plane + 2, (p.y_range.0 + p.y_range.1) / 2).norm();
        assert!(behind < 0.01 * ahead, "{behind} vs {ahead}");
    }

    #[test]
    fn missing_mode_is_an_error() {
        let g = build_grid(&DeviceLayout::xgate(1.55, 0.03)).unwrap();
        let r = inject_mode_source(&g, PortSide::Input, 1, Complex64::new(1.0, 0.0), g.omega());
        assert!(matches!(r, Err(Error::Mode(_))));
        assert!(matches!(
            inject_mode_source(&g, PortSide::Input, 3, Complex64::new(1.0, 0.0), g.omega()),
            Err(Error::Argument(_))
        ));
    }
}
