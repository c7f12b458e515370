//! Run configuration for the command-line tool.
//!
//! Configs are TOML; unknown keys anywhere are rejected. Everything is
//! checked by [`RunConfig::validate`] before a grid is built.
//!
//! ```toml
//! gate = "xgate"
//! wavelength = 1.55
//! cells_per_wavelength = 42
//! seed = 3
//!
//! [spline]
//! control_x = 10
//! control_y = 13
//!
//! [optimizer]
//! max_iters = 200
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjoint::{CostForm, DesignProblem};
use crate::optimizer::{control_template, OptimizerConfig};
use crate::quantum::GateSpec;
use crate::solver::{DeviceLayout, PmlSpec};
use crate::splines::ControlGrid;
use crate::topology::MaterialPair;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Cnot,
    Xgate,
    /// Truth table read from `spec_file`.
    Custom,
}

/// Geometry overrides; unset values follow the gate defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutConfig {
    /// Design region length along x, in wavelengths.
    pub design_length_waves: Option<f64>,
    /// Design region height along y, in wavelengths.
    pub design_height_waves: Option<f64>,
    pub ports_per_side: Option<usize>,
    pub waveguide_width: Option<f64>,
    pub waveguide_pitch: Option<f64>,
    pub lead_length: Option<f64>,
    pub port_margin: Option<f64>,
    pub cladding_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplineConfig {
    pub control_x: usize,
    pub control_y: usize,
    pub degree: usize,
    /// Smoothing width as a multiple of the level-set standard deviation.
    pub eta_factor: f64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            control_x: 10,
            control_y: 13,
            degree: 2,
            eta_factor: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gate: GateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_file: Option<PathBuf>,
    /// Free-space wavelength, µm.
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    /// Grid resolution as free-space wavelength over cell size.
    #[serde(default = "default_cells")]
    pub cells_per_wavelength: f64,
    /// Further wavelengths (µm) the optimizer scores alongside `wavelength`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub band_wavelengths: Vec<f64>,
    #[serde(default = "MaterialPair::silicon_silica")]
    pub materials: MaterialPair,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default)]
    pub pml: PmlSpec,
    #[serde(default)]
    pub spline: SplineConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub cost: CostForm,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Truth table of a custom gate, filled from `spec_file` on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_spec: Option<GateSpec>,
}

fn default_wavelength() -> f64 {
    1.55
}

fn default_cells() -> f64 {
    42.0
}

fn default_seed() -> u64 {
    1
}

impl RunConfig {
    /// Defaults for a built-in gate.
    pub fn for_gate(gate: GateKind) -> Self {
        Self {
            gate,
            spec_file: None,
            wavelength: default_wavelength(),
            cells_per_wavelength: default_cells(),
            band_wavelengths: Vec::new(),
            materials: MaterialPair::silicon_silica(),
            layout: LayoutConfig::default(),
            pml: PmlSpec::default(),
            spline: SplineConfig::default(),
            optimizer: OptimizerConfig::default(),
            cost: CostForm::default(),
            seed: default_seed(),
            output_dir: None,
            custom_spec: None,
        }
    }

    /// Parse TOML text. Relative `spec_file` paths resolve against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if cfg.gate == GateKind::Custom && cfg.custom_spec.is_none() {
            let file = cfg
                .spec_file
                .clone()
                .ok_or_else(|| Error::config("gate = \"custom\" requires spec_file"))?;
            let path = match base {
                Some(b) if file.is_relative() => b.join(&file),
                _ => file,
            };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let spec: GateSpec = if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
            } else {
                toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
            };
            cfg.custom_spec = Some(spec);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    pub fn spec(&self) -> Result<GateSpec> {
        match self.gate {
            GateKind::Cnot => Ok(GateSpec::cnot()),
            GateKind::Xgate => Ok(GateSpec::xgate()),
            GateKind::Custom => {
                let s = self
                    .custom_spec
                    .clone()
                    .ok_or_else(|| Error::config("custom gate has no truth table"))?;
                GateSpec::new(s.name, s.input, s.output, s.table).map_err(|e| Error::config(e.to_string()))
            }
        }
    }

    pub fn spacing(&self) -> f64 {
        self.wavelength / self.cells_per_wavelength
    }

    pub fn device_layout(&self) -> Result<DeviceLayout> {
        let spec = self.spec()?;
        let spacing = self.spacing();
        let mut l = match self.gate {
            GateKind::Cnot => DeviceLayout::cnot(self.wavelength, spacing),
            _ => DeviceLayout::xgate(self.wavelength, spacing),
        };
        let lc = &self.layout;
        let wl = self.wavelength;
        if let Some(v) = lc.design_length_waves {
            l.design_length = v * wl;
        }
        if let Some(v) = lc.design_height_waves {
            l.design_height = v * wl;
        }
        l.ports_per_side = lc
            .ports_per_side
            .unwrap_or_else(|| spec.input.max_port().max(spec.output.max_port()));
        if let Some(v) = lc.waveguide_width {
            l.waveguide_width = v;
        }
        if let Some(v) = lc.waveguide_pitch {
            l.waveguide_pitch = v;
        }
        if let Some(v) = lc.lead_length {
            l.lead_length = v;
        }
        if let Some(v) = lc.port_margin {
            l.port_margin = v;
        }
        if let Some(v) = lc.cladding_margin {
            l.cladding_margin = v;
        }
        l.pml = self.pml;
        l.materials = self.materials;
        Ok(l)
    }

    /// Optimizer settings with the run seed applied.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            ..self.optimizer.clone()
        }
    }

    /// Grid, port modes and target for this run.
    pub fn problem(&self) -> Result<DesignProblem> {
        let mut p = DesignProblem::new(&self.device_layout()?, self.spec()?, self.spline.eta_factor)?;
        p.cost_form = self.cost;
        p.with_band(&self.band_wavelengths)
    }

    /// Spline layout with zero weights.
    pub fn template(&self) -> Result<ControlGrid> {
        control_template(self.spline.control_x, self.spline.control_y, self.spline.degree)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::config(format!("wavelength must be positive, got {}", self.wavelength)));
        }
        if !(self.cells_per_wavelength > 0.0 && self.cells_per_wavelength.is_finite()) {
            return Err(Error::config("cells_per_wavelength must be positive"));
        }
        let spec = self.spec()?;
        let layout = self.device_layout()?;
        layout.validate()?;
        if spec.input.max_port() > layout.ports_per_side || spec.output.max_port() > layout.ports_per_side {
            return Err(Error::config(format!(
                "gate {} needs {} ports per side but the layout has {}",
                spec.name,
                spec.input.max_port().max(spec.output.max_port()),
                layout.ports_per_side
            )));
        }
        let s = &self.spline;
        if s.degree == 0 || s.degree > 5 {
            return Err(Error::config(format!("spline degree must be 1 to 5, got {}", s.degree)));
        }
        if s.control_x <= s.degree || s.control_y <= s.degree {
            return Err(Error::config(format!(
                "a degree-{} spline needs more than {} control points per axis",
                s.degree, s.degree
            )));
        }
        if !(s.eta_factor > 0.0 && s.eta_factor.is_finite()) {
            return Err(Error::config("eta_factor must be positive"));
        }
        for &wl in &self.band_wavelengths {
            if !(wl > 0.0 && wl.is_finite()) || wl == self.wavelength {
                return Err(Error::config(format!(
                    "band wavelength {wl} must be positive and differ from the design wavelength"
                )));
            }
        }
        self.cost.validate()?;
        self.optimizer_config().validate()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("config echo: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
