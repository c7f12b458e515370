//! Full-device simulation: one forward solve per input port, overlaps at every
//! output port.

use num_complex::Complex64;

use crate::quantum::TransferMatrix;
use crate::solver::{
    assemble, inject_mode_source, port_overlap, solve_many, AssembledOperator, FieldSolution, PortSide, SimGrid,
};
use crate::topology::PermittivityMap;
use crate::{Error, Result};

/// Angular frequency for a free-space wavelength in µm.
pub fn omega_of(wavelength: f64) -> f64 {
    2.0 * std::f64::consts::PI / wavelength
}

#[derive(Debug)]
pub struct Simulation {
    pub operator: AssembledOperator,
    /// Forward field for input port `n` at index `n − 1`.
    pub fields: Vec<FieldSolution>,
    pub transfer: TransferMatrix,
}

/// Solve the device for unit-power launches at every input port. Port modes
/// must already be cached at this wavelength (see [`SimGrid::prepare_modes`]).
pub fn simulate(grid: &SimGrid, eps: &PermittivityMap, wavelength: f64) -> Result<Simulation> {
    let omega = omega_of(wavelength);
    let n_in = grid.port_count(PortSide::Input);
    if n_in == 0 || grid.port_count(PortSide::Output) == 0 {
        return Err(Error::arg("device has no ports"));
    }
    let operator = assemble(eps, grid, omega)?;
    let sources = (1..=n_in)
        .map(|n| inject_mode_source(grid, PortSide::Input, n, Complex64::new(1.0, 0.0), omega))
        .collect::<Result<Vec<_>>>()?;
    let fields = solve_many(&operator, &sources)?;
    let transfer = transfer_from_fields(grid, &fields, wavelength)?;
    Ok(Simulation {
        operator,
        fields,
        transfer,
    })
}

/// Row `n` holds the output-port overlaps of the field launched from input `n`.
pub fn transfer_from_fields(grid: &SimGrid, fields: &[FieldSolution], wavelength: f64) -> Result<TransferMatrix> {
    let n_out = grid.port_count(PortSide::Output);
    let rows = fields
        .iter()
        .map(|f| (1..=n_out).map(|i| port_overlap(f, grid, PortSide::Output, i)).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    TransferMatrix::from_rows(&rows, wavelength)
}

pub fn transfer_matrix(grid: &SimGrid, eps: &PermittivityMap, wavelength: f64) -> Result<TransferMatrix> {
    Ok(simulate(grid, eps, wavelength)?.transfer)
}
