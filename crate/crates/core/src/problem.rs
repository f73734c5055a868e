//! Problem description and the common shape of solver results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MeasureDensity, Support};
use crate::potentials::{conductor_grid, frostman_check_against, ExternalField, FrostmanReport, Kernel, SurfaceLayer};
use crate::specfun::RieszParams;

/// Interaction family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family", content = "s")]
pub enum KernelFamily {
    /// |x − t|^{−s} in the Robin regime.
    Riesz(f64),
    /// s = d − 2 for d ≥ 3, −log for d = 2.
    Coulomb,
    /// −log|x − t| on the segment.
    Log,
}

/// Conductor dimension, kernel, and the point charge γ at height h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub d: usize,
    pub family: KernelFamily,
    pub gamma: f64,
    pub height: f64,
}

impl ProblemSpec {
    pub fn new(d: usize, family: KernelFamily, gamma: f64, height: f64) -> Result<Self> {
        let spec = Self { d, family, gamma, height };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::Invalid(format!("height must be positive, got {}", self.height)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Invalid(format!("charge must be finite, got {}", self.gamma)));
        }
        match self.family {
            KernelFamily::Riesz(s) => {
                RieszParams::robin(self.d, s)?;
            }
            KernelFamily::Coulomb if self.d < 2 => {
                return Err(Error::Regime { regime: "Coulomb", detail: "needs d >= 2".into() })
            }
            KernelFamily::Log if self.d != 1 => {
                return Err(Error::Regime { regime: "log segment", detail: format!("needs d = 1, got {}", self.d) })
            }
            _ => {}
        }
        Ok(())
    }

    pub fn kernel(&self) -> Kernel {
        match self.family {
            KernelFamily::Riesz(s) => Kernel::Riesz(s),
            KernelFamily::Coulomb if self.d == 2 => Kernel::Log,
            KernelFamily::Coulomb => Kernel::Riesz(self.d as f64 - 2.0),
            KernelFamily::Log => Kernel::Log,
        }
    }

    pub fn field(&self) -> ExternalField {
        ExternalField { gamma: self.gamma, height: self.height, kernel: self.kernel() }
    }
}

/// Equilibrium measure with its Frostman diagnostics.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub support: Support,
    /// Absolutely continuous part.
    pub measure: MeasureDensity,
    /// Mass of a uniform layer on the unit sphere (Coulomb problems).
    pub surface_mass: f64,
    /// Equilibrium constant; closed form when available, else the Frostman
    /// estimate.
    pub f_q: f64,
    pub frostman: FrostmanReport,
}

/// Serializable summary of an [`EquilibriumResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub support: String,
    pub endpoints: Vec<f64>,
    pub mass: f64,
    pub surface_mass: f64,
    pub f_q: f64,
    pub frostman: FrostmanReport,
}

impl EquilibriumResult {
    /// Package `measure` (plus a surface layer on |x| = 1 of mass
    /// `surface_mass`) after checking it against `q` on a grid of `n` points.
    pub fn certify(measure: MeasureDensity, surface_mass: f64, q: &ExternalField, f_q: Option<f64>, n: usize) -> Self {
        let layers = [SurfaceLayer { radius: 1.0, mass: surface_mass }];
        let mut grid = conductor_grid(&measure, n);
        if surface_mass > 0.0 {
            grid.push(1.0);
        }
        let frostman = frostman_check_against(&measure, &layers, q, &grid, f_q);
        Self { support: measure.support().clone(), f_q: f_q.unwrap_or(frostman.f_q), measure, surface_mass, frostman }
    }

    pub fn mass(&self) -> f64 {
        self.measure.mass() + self.surface_mass
    }

    pub fn summary(&self) -> EquilibriumSummary {
        EquilibriumSummary {
            support: self.support.describe(),
            endpoints: self.support.endpoints(),
            mass: self.mass(),
            surface_mass: self.surface_mass,
            f_q: self.f_q,
            frostman: self.frostman.clone(),
        }
    }
}
