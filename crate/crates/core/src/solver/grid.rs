use std::sync::OnceLock;

use faer::sparse::linalg::solvers::SymbolicLu;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mode::{slab_mode, ModeProfile};
use super::port::{Direction, Port, PortSide};
use crate::splines::SamplingGrid;
use crate::topology::{Background, DesignRect, MaterialPair};
use crate::{Error, Result};

/// Physical description of a gate: design region, waveguide leads, ports.
///
/// The design region spans `design_length` along x (the propagation
/// direction) and `design_height` along y. Ports come in pairs of straight
/// silicon waveguides (the host material) in silica cladding (the inclusion
/// material), numbered from the top (largest y) down on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceLayout {
    /// Free-space wavelength, µm.
    pub wavelength: f64,
    /// Cell size, µm.
    pub spacing: f64,
    pub pml: PmlSpec,
    pub design_length: f64,
    pub design_height: f64,
    pub ports_per_side: usize,
    pub waveguide_width: f64,
    /// Centre-to-centre distance between neighbouring waveguides.
    pub waveguide_pitch: f64,
    /// Straight lead between the PML and the design region on each side.
    pub lead_length: f64,
    /// Cladding included on each side of a port cross-section.
    pub port_margin: f64,
    /// Extra cladding between the outermost features and the PML.
    pub cladding_margin: f64,
    pub materials: MaterialPair,
    /// Lower bound on `λ / (n_max Δ)`.
    pub min_cells_per_wavelength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmlSpec {
    pub cells: usize,
    /// Polynomial grading order of the conductivity profile.
    pub order: f64,
    /// Target normal-incidence reflection.
    pub reflection: f64,
}

impl Default for PmlSpec {
    fn default() -> Self {
        Self {
            cells: 15,
            order: 3.0,
            reflection: 1e-8,
        }
    }
}

impl DeviceLayout {
    fn base(wavelength: f64, spacing: f64, length_waves: f64, ports: usize) -> Self {
        Self {
            wavelength,
            spacing,
            pml: PmlSpec::default(),
            design_length: length_waves * wavelength,
            design_height: 3.2 * wavelength,
            ports_per_side: ports,
            waveguide_width: 0.45,
            waveguide_pitch: 1.2,
            lead_length: 1.0,
            port_margin: wavelength,
            cladding_margin: 0.25,
            materials: MaterialPair::silicon_silica(),
            min_cells_per_wavelength: 12.0,
        }
    }

    /// Two qubits: four waveguides per side around a 2.5λ × 3.2λ region.
    pub fn cnot(wavelength: f64, spacing: f64) -> Self {
        Self::base(wavelength, spacing, 2.5, 4)
    }

    /// One qubit: two waveguides per side around a 1.7λ × 3.2λ region.
    pub fn xgate(wavelength: f64, spacing: f64) -> Self {
        Self::base(wavelength, spacing, 1.7, 2)
    }

    /// Centre y offsets of the waveguides relative to the device axis, top first.
    pub fn waveguide_offsets(&self) -> Vec<f64> {
        let n = self.ports_per_side;
        let mid = (n as f64 - 1.0) / 2.0;
        (0..n).map(|k| (mid - k as f64) * self.waveguide_pitch).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength),
            ("spacing", self.spacing),
            ("design_length", self.design_length),
            ("design_height", self.design_height),
            ("waveguide_width", self.waveguide_width),
            ("lead_length", self.lead_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.pml.cells == 0 {
            return Err(Error::config("PML thickness must be at least one cell"));
        }
        if !(self.pml.reflection > 0.0 && self.pml.reflection < 1.0) || !(self.pml.order >= 0.0) {
            return Err(Error::config("PML reflection must lie in (0, 1) and order be non-negative"));
        }
        if self.ports_per_side == 0 {
            return Err(Error::config("at least one port per side is required"));
        }
        if self.ports_per_side > 1 && !(self.waveguide_pitch > self.waveguide_width) {
            return Err(Error::config("waveguide pitch must exceed the waveguide width"));
        }
        if self.port_margin < self.wavelength {
            return Err(Error::config(format!(
                "port cross-sections need at least one wavelength ({} µm) of cladding, got {}",
                self.wavelength, self.port_margin
            )));
        }
        if self.cladding_margin < 0.0 {
            return Err(Error::config("cladding margin must be non-negative"));
        }
        self.materials.validate()?;
        let n_max = self.materials.max().sqrt();
        let cells = self.wavelength / (n_max * self.spacing);
        if cells < self.min_cells_per_wavelength {
            return Err(Error::config(format!(
                "spacing {} µm resolves the material wavelength with {cells:.2} cells, below the required {}",
                self.spacing, self.min_cells_per_wavelength
            )));
        }
        let outer = self.waveguide_offsets().iter().fold(0.0f64, |m, o| m.max(o.abs())) + self.waveguide_width / 2.0;
        if outer > self.design_height / 2.0 {
            return Err(Error::config("waveguides do not fit the design region height"));
        }
        Ok(())
    }
}

/// Discretized simulation domain with PML, design region, ports and the fixed
/// background layout. Fields are indexed `[ix, iy]`.
#[derive(Debug, Clone)]
pub struct SimGrid {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub wavelength: f64,
    pub pml: PmlSpec,
    pub design: DesignRect,
    pub ports: Vec<Port>,
    pub background: Background,
    pub(crate) symbolic: OnceLock<SymbolicLu<usize>>,
}

fn cells(len: f64, spacing: f64) -> usize {
    (len / spacing).round() as usize
}

/// Lay out the domain described by `layout`.
pub fn build_grid(layout: &DeviceLayout) -> Result<SimGrid> {
    layout.validate()?;
    let dx = layout.spacing;
    let pml = layout.pml.cells;
    let nd_x = cells(layout.design_length, dx);
    let nd_y = cells(layout.design_height, dx);
    let n_lead = cells(layout.lead_length, dx);
    if n_lead < 8 {
        return Err(Error::config(format!("leads need at least 8 cells, got {n_lead}")));
    }
    if nd_x == 0 || nd_y == 0 {
        return Err(Error::config("design region rounds to zero cells"));
    }

    let offsets = layout.waveguide_offsets();
    let port_half = offsets.iter().fold(0.0f64, |m, o| m.max(o.abs())) + layout.waveguide_width / 2.0 + layout.port_margin;
    let half = (layout.design_height / 2.0).max(port_half) + layout.cladding_margin;
    let mut ny_int = (2.0 * half / dx).ceil() as usize + 2;
    if (ny_int - nd_y) % 2 == 1 {
        ny_int += 1;
    }
    let nx = 2 * pml + 2 * n_lead + nd_x;
    let ny = 2 * pml + ny_int;
    let design = DesignRect {
        ix0: pml + n_lead,
        iy0: pml + (ny_int - nd_y) / 2,
        nx: nd_x,
        ny: nd_y,
    };
    // device axis, in µm from the bottom edge of the domain
    let axis = (pml as f64 + ny_int as f64 / 2.0) * dx;
    let y_of = |iy: usize| (iy as f64 + 0.5) * dx;

    let eps_core = layout.materials.eps_host;
    let eps_clad = layout.materials.eps_inclusion;
    let in_guide = |iy: usize, centre: f64| (y_of(iy) - centre).abs() < layout.waveguide_width / 2.0;

    let mut values = Array2::from_elem((nx, ny), eps_clad);
    for &off in &offsets {
        let centre = axis + off;
        for iy in 0..ny {
            if !in_guide(iy, centre) {
                continue;
            }
            for ix in (0..design.ix0).chain(design.ix0 + design.nx..nx) {
                values[[ix, iy]] = eps_core;
            }
        }
    }

    let half_span = layout.waveguide_width / 2.0 + layout.port_margin;
    let mut ports = Vec::with_capacity(2 * offsets.len());
    for (side, plane, direction) in [
        (PortSide::Input, pml + 3, Direction::PlusX),
        (PortSide::Output, nx - pml - 4, Direction::MinusX),
    ] {
        for (k, &off) in offsets.iter().enumerate() {
            let centre = axis + off;
            let lo = ((centre - half_span) / dx).floor().max(0.0) as usize;
            let hi = ((centre + half_span) / dx).ceil() as usize;
            if lo < pml || hi > ny - pml {
                return Err(Error::config("port cross-section reaches into the PML"));
            }
            let profile = (lo..hi).map(|iy| if in_guide(iy, centre) { eps_core } else { eps_clad }).collect();
            ports.push(Port {
                index: k + 1,
                side,
                plane,
                y_range: (lo, hi),
                direction,
                eps_profile: profile,
                mode: None,
            });
        }
    }

    let grid = SimGrid {
        nx,
        ny,
        spacing: dx,
        wavelength: layout.wavelength,
        pml: layout.pml,
        design,
        ports,
        background: Background {
            values,
            design,
            spacing: dx,
        },
        symbolic: OnceLock::new(),
    };
    grid.check_interior()?;
    Ok(grid)
}

impl SimGrid {
    /// Uniform medium of permittivity `eps` with no ports and an empty design
    /// region; `nx`, `ny` count interior cells.
    pub fn homogeneous(nx: usize, ny: usize, spacing: f64, wavelength: f64, pml: PmlSpec, eps: f64) -> Result<Self> {
        if pml.cells == 0 {
            return Err(Error::config("PML thickness must be at least one cell"));
        }
        if !(spacing > 0.0 && wavelength > 0.0) {
            return Err(Error::config("spacing and wavelength must be positive"));
        }
        let (tx, ty) = (nx + 2 * pml.cells, ny + 2 * pml.cells);
        let design = DesignRect {
            ix0: pml.cells,
            iy0: pml.cells,
            nx: 0,
            ny: 0,
        };
        Ok(Self {
            nx: tx,
            ny: ty,
            spacing,
            wavelength,
            pml,
            design,
            ports: Vec::new(),
            background: Background {
                values: Array2::from_elem((tx, ty), eps),
                design,
                spacing,
            },
            symbolic: OnceLock::new(),
        })
    }

    fn check_interior(&self) -> Result<()> {
        let p = self.pml.cells;
        let d = self.design;
        if d.ix0 <= p || d.iy0 <= p || d.ix0 + d.nx >= self.nx - p || d.iy0 + d.ny >= self.ny - p {
            return Err(Error::config("design region must lie strictly inside the PML"));
        }
        for port in &self.ports {
            let lo = port.plane.min(port.launch_column());
            let hi = port.plane.max(port.launch_column());
            if lo <= p || hi >= self.nx - p {
                return Err(Error::config(format!("port {} plane sits in the PML", port.index)));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn design_sampling(&self) -> SamplingGrid {
        SamplingGrid {
            nx: self.design.nx,
            ny: self.design.ny,
            spacing: self.spacing,
        }
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    pub fn ports_on(&self, side: PortSide) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(move |p| p.side == side)
    }

    /// Port `index` (1-based) on `side`.
    pub fn port(&self, side: PortSide, index: usize) -> Result<&Port> {
        self.ports_on(side)
            .find(|p| p.index == index)
            .ok_or_else(|| Error::arg(format!("no {side:?} port {index}")))
    }

    pub fn port_count(&self, side: PortSide) -> usize {
        self.ports_on(side).count()
    }

    /// Solve every port's fundamental mode at `omega` and cache it.
    pub fn prepare_modes(&mut self, omega: f64) -> Result<()> {
        let dx = self.spacing;
        for port in &mut self.ports {
            if port.mode.as_ref().is_some_and(|m| m.omega == omega) {
                continue;
            }
            port.mode = Some(slab_mode(&port.eps_profile, omega, dx)?);
        }
        Ok(())
    }

    pub fn mode(&self, side: PortSide, index: usize) -> Result<&ModeProfile> {
        self.port(side, index)?
            .mode
            .as_ref()
            .ok_or_else(|| Error::Mode(format!("{side:?} port {index} has no cached mode")))
    }

    /// Stretch factor `1 + iσ(pos)/ω` along an axis of `n` cells. `pos` is in
    /// cell units measured from the low edge (cell `i` centre = `i + ½`).
    pub(crate) fn stretch(&self, pos: f64, n: usize, omega: f64) -> num_complex::Complex64 {
        let p = self.pml.cells as f64;
        let depth = (p - pos).max(pos - (n as f64 - p)).max(0.0);
        if depth == 0.0 {
            return num_complex::Complex64::new(1.0, 0.0);
        }
        let thickness = p * self.spacing;
        let sigma_max = -(self.pml.order + 1.0) * self.pml.reflection.ln() / (2.0 * thickness);
        let sigma = sigma_max * (depth / p).powf(self.pml.order);
        num_complex::Complex64::new(1.0, sigma / omega)
    }
}
