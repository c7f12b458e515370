//! Output files: JSON documents, CSV tables and binary field dumps.
//!
//! Complex numbers are written as `[re, im]` pairs. Every document carries the
//! tool version and the configuration that produced it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::optimizer::HistoryEntry;
use crate::quantum::{correlation_for, gate_success, Correlation, GateSpec, TransferMatrix};
use crate::solver::FieldSolution;
use crate::{Error, Result};

pub const GMATRIX_FORMAT: &str = "rwgate-gmatrix-v1";
pub const CORRELATION_FORMAT: &str = "rwgate-correlation-v1";
pub const FIELD_FORMAT: &str = "rwgate-field-v1";

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn pair(c: Complex64) -> [f64; 2] {
    [c.re, c.im]
}

/// Transfer matrix document, `g[n][i]` from input `n` to output `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GMatrixDoc {
    pub format: String,
    pub tool_version: String,
    pub gate: String,
    pub wavelength: f64,
    pub g: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl GMatrixDoc {
    pub fn new(g: &TransferMatrix, gate: &str, config: serde_json::Value) -> Self {
        Self {
            format: GMATRIX_FORMAT.into(),
            tool_version: crate::TOOL_VERSION.into(),
            gate: gate.into(),
            wavelength: g.wavelength,
            g: g.matrix().rows().into_iter().map(|r| r.iter().map(|&c| pair(c)).collect()).collect(),
            config,
        }
    }

    pub fn transfer(&self) -> Result<TransferMatrix> {
        if self.format != GMATRIX_FORMAT {
            return Err(Error::Format(format!("unexpected format {:?}", self.format)));
        }
        let rows: Vec<Vec<Complex64>> = self
            .g
            .iter()
            .map(|r| r.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
            .collect();
        TransferMatrix::from_rows(&rows, self.wavelength).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Correlation data for one input state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCorrelation {
    pub input: String,
    pub input_ports: Vec<usize>,
    pub target: String,
    pub target_ports: Vec<usize>,
    /// `onefold` or `twofold`.
    pub kind: String,
    /// One row for one-fold vectors, the full matrix for two-fold.
    pub gamma: Vec<Vec<f64>>,
    pub success: f64,
}

impl StateCorrelation {
    pub fn from_correlation(
        corr: &Correlation,
        input: String,
        input_ports: Vec<usize>,
        target: String,
        target_ports: Vec<usize>,
        success: f64,
    ) -> Self {
        let (kind, gamma) = match corr {
            Correlation::OneFold(v) => ("onefold", vec![v.values.clone()]),
            Correlation::TwoFold(m) => ("twofold", m.values.rows().into_iter().map(|r| r.to_vec()).collect()),
        };
        Self {
            input,
            input_ports,
            target,
            target_ports,
            kind: kind.into(),
            gamma,
            success,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDoc {
    pub format: String,
    pub tool_version: String,
    pub gate: String,
    pub wavelength: f64,
    pub states: Vec<StateCorrelation>,
    pub min_success: f64,
    pub config: serde_json::Value,
}

impl CorrelationDoc {
    pub fn build(g: &TransferMatrix, spec: &GateSpec, config: serde_json::Value) -> Result<Self> {
        spec.check_ports(g)?;
        let ports = spec.port_rows()?;
        let states = spec
            .table
            .iter()
            .zip(ports)
            .map(|((a, b), (ins, outs))| {
                let corr = correlation_for(g, spec, a)?;
                let success = gate_success(&corr, spec, a)?;
                Ok(StateCorrelation::from_correlation(&corr, a.to_string(), ins, b.to_string(), outs, success))
            })
            .collect::<Result<Vec<_>>>()?;
        let min_success = states.iter().map(|s| s.success).fold(f64::INFINITY, f64::min);
        Ok(Self {
            format: CORRELATION_FORMAT.into(),
            tool_version: crate::TOOL_VERSION.into(),
            gate: spec.name.clone(),
            wavelength: g.wavelength,
            states,
            min_success,
            config,
        })
    }

    /// Column names and values for one sweep row: every Γ entry of every
    /// input state.
    pub fn sweep_columns(&self) -> (Vec<String>, Vec<f64>) {
        let mut names = Vec::new();
        let mut values = Vec::new();
        for s in &self.states {
            for (m, row) in s.gamma.iter().enumerate() {
                for (n, &v) in row.iter().enumerate() {
                    names.push(if s.kind == "onefold" {
                        format!("gamma_{}_{}", s.input, n + 1)
                    } else {
                        format!("gamma_{}_{}{}", s.input, m + 1, n + 1)
                    });
                    values.push(v);
                }
            }
        }
        (names, values)
    }
}

/// `iteration,cost,min_success,row_<state>…,gradient_norm,step_scale,eta`.
pub fn write_history_csv(path: &Path, history: &[HistoryEntry], row_labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["iteration".to_string(), "cost".into(), "min_success".into()];
    header.extend(row_labels.iter().map(|l| format!("row_{l}")));
    header.extend(["gradient_norm".into(), "step_scale".into(), "eta".into()]);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for h in history {
        let mut rec = vec![h.iteration.to_string(), fmt(h.cost), fmt(h.min_success)];
        rec.extend(h.rows.iter().map(|&r| fmt(r)));
        rec.extend([fmt(h.gradient_norm), fmt(h.step_scale), fmt(h.eta)]);
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shortest decimal that parses back to the same value.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Rows of `(wavelength, values…)` under `header`.
pub fn write_sweep_csv(path: &Path, header: &[String], rows: &[(f64, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for (wl, vals) in rows {
        let mut rec = vec![fmt(*wl)];
        rec.extend(vals.iter().map(|&v| fmt(v)));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header line of a field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub format: String,
    pub tool_version: String,
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub wavelength: f64,
    pub port: usize,
    /// Cell order of the payload.
    pub order: String,
    pub config: serde_json::Value,
}

impl FieldHeader {
    pub fn new(field: &FieldSolution, wavelength: f64, port: usize, config: serde_json::Value) -> Self {
        Self {
            format: FIELD_FORMAT.into(),
            tool_version: crate::TOOL_VERSION.into(),
            nx: field.nx,
            ny: field.ny,
            spacing: field.spacing,
            wavelength,
            port,
            order: "row-major [ix][iy], little-endian f64 (re, im)".into(),
            config,
        }
    }
}

/// One JSON header line, then `16 · nx · ny` bytes of `(re, im)` pairs.
pub fn write_field(path: &Path, header: &FieldHeader, values: &[Complex64]) -> Result<()> {
    if values.len() != header.nx * header.ny {
        return Err(Error::arg("field length does not match the header"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let head = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    let io = |e| Error::io(path, e);
    w.write_all(head.as_bytes()).map_err(io)?;
    w.write_all(b"\n").map_err(io)?;
    for v in values {
        w.write_all(&v.re.to_le_bytes()).map_err(io)?;
        w.write_all(&v.im.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_field(path: &Path) -> Result<(FieldHeader, Vec<Complex64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let header: FieldHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if header.format != FIELD_FORMAT {
        return Err(Error::Format(format!("{}: unexpected format {:?}", path.display(), header.format)));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    let n = header.nx * header.ny;
    if payload.len() != 16 * n {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, expected {}",
            path.display(),
            payload.len(),
            16 * n
        )));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    Ok((header, values))
}

/// `x,y,intensity` per cell, coordinates at cell centres in µm.
pub fn write_intensity_csv(path: &Path, field: &FieldSolution) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["x", "y", "intensity"]).map_err(|e| csv_err(path, e))?;
    for ix in 0..field.nx {
        for iy in 0..field.ny {
            let v = field.at(ix, iy);
            let x = (ix as f64 + 0.5) * field.spacing;
            let y = (iy as f64 + 0.5) * field.spacing;
            w.write_record([fmt(x), fmt(y), fmt(v.re * v.re + v.im * v.im)])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Permittivity or sensitivity map as `x,y,value`.
pub fn write_grid_csv(path: &Path, values: &Array2<f64>, spacing: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["x", "y", "value"]).map_err(|e| csv_err(path, e))?;
    for ((ix, iy), &v) in values.indexed_iter() {
        let x = (ix as f64 + 0.5) * spacing;
        let y = (iy as f64 + 0.5) * spacing;
        w.write_record([fmt(x), fmt(y), fmt(v)]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
