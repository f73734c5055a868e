//! Coulomb equilibrium on the unit ball: s = d − 2 for d ≥ 3 and the
//! logarithmic kernel on the disk, for every sign and size of the charge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MeasureDensity, Piece, Support};
use crate::potentials::{frostman_check_against, ExternalField, FrostmanReport, SurfaceLayer};
use crate::problem::{EquilibriumResult, KernelFamily, ProblemSpec};
use crate::specfun::sphere_area;

const NODES: usize = 64;
const CERTIFY_POINTS: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoulombRegime {
    /// γ ≤ γ̃: all mass in the volume part on B_{R0}.
    I,
    /// γ̃ < γ < 0: volume part on B_1 plus a layer on the sphere.
    II,
    /// γ ≥ 0: the uniform measure on the sphere.
    III,
}

#[derive(Debug, Clone)]
pub struct CoulombResult {
    pub regime: CoulombRegime,
    pub d: usize,
    pub gamma: f64,
    pub height: f64,
    pub gamma_tilde: f64,
    pub r0: Option<f64>,
    pub volume_part: Option<MeasureDensity>,
    /// Coefficient of the normalized surface measure on |x| = 1.
    pub surface_mass: f64,
    pub equilibrium: EquilibriumResult,
}

impl CoulombResult {
    pub fn field(&self) -> ExternalField {
        problem(self.d, self.gamma, self.height).field()
    }

    /// Radius of the outermost part of the support.
    pub fn outer_radius(&self) -> f64 {
        self.r0.unwrap_or(1.0)
    }
}

fn problem(d: usize, gamma: f64, h: f64) -> ProblemSpec {
    ProblemSpec { d, family: KernelFamily::Coulomb, gamma, height: h }
}

/// γ̃ = −(1 + h²)^{d/2}.
pub fn gamma_tilde(d: usize, h: f64) -> f64 {
    -(1.0 + h * h).powf(0.5 * d as f64)
}

/// Radius of the support for γ ≤ γ̃; undefined when |γ| ≤ 1.
pub fn support_radius(d: usize, gamma: f64, h: f64) -> Option<f64> {
    let t = gamma.abs().powf(2.0 / d as f64) - 1.0;
    (gamma < 0.0 && t > 0.0).then(|| h / t.sqrt())
}

/// Radial density of τ per unit volume.
pub fn tau_density(d: usize, gamma: f64, h: f64, r: f64) -> f64 {
    let df = d as f64;
    -df * gamma * h * h * (r * r + h * h).powf(-1.0 - 0.5 * df) / sphere_area(d - 1)
}

/// τ(B_r) = −γ r^d / (r² + h²)^{d/2}.
pub fn tau_mass(d: usize, gamma: f64, h: f64, r: f64) -> f64 {
    -gamma * (r / (r * r + h * h).sqrt()).powi(d as i32)
}

pub fn solve_coulomb(d: usize, gamma: f64, h: f64) -> Result<CoulombResult> {
    let spec = problem(d, gamma, h);
    spec.validate()?;
    let kernel = spec.kernel();
    let q = spec.field();
    let gt = gamma_tilde(d, h);
    let (regime, r0) = if gamma <= gt {
        (CoulombRegime::I, support_radius(d, gamma, h).map(|r| r.min(1.0)))
    } else if gamma < 0.0 {
        (CoulombRegime::II, None)
    } else {
        (CoulombRegime::III, None)
    };
    let (volume_part, surface_mass) = match regime {
        CoulombRegime::III => (None, 1.0),
        _ => {
            let radius = r0.unwrap_or(1.0);
            let piece = Piece::from_smooth(0.0, radius, 0.0, 0.0, NODES, |r| tau_density(d, gamma, h, r))?;
            let tau = MeasureDensity::from_pieces(Support::ball(radius, d)?, vec![0.0], vec![piece])?;
            let surface = if regime == CoulombRegime::II { 1.0 - gamma / gt } else { 0.0 };
            (Some(tau), surface)
        }
    };
    let outer = r0.unwrap_or(1.0);
    let f_q = kernel.eval(outer) + q.eval(outer);
    let measure =
        volume_part.clone().unwrap_or_else(|| MeasureDensity::zero(Support::ball(1.0, d).expect("unit ball")));
    let equilibrium = EquilibriumResult::certify(measure, surface_mass, &q, Some(f_q), CERTIFY_POINTS);
    let total = equilibrium.mass();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Invariant(format!("total mass {total}")));
    }
    Ok(CoulombResult { regime, d, gamma, height: h, gamma_tilde: gt, r0, volume_part, surface_mass, equilibrium })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoulombReport {
    pub regime: CoulombRegime,
    pub frostman: FrostmanReport,
    /// |U^μ + Q − F| at the outer radius.
    pub boundary_residual: f64,
    /// Q nonincreasing along the radial grid.
    pub q_decreasing: bool,
}

impl CoulombReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.frostman.passes(tol) && self.boundary_residual <= tol
    }
}

/// Check U^μ + Q against the closed-form constant on `n` equispaced radii
/// of [0, 1].
pub fn verify_coulomb(result: &CoulombResult, n: usize) -> CoulombReport {
    let q = result.field();
    let outer = result.outer_radius();
    let mut grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1).max(1) as f64).collect();
    if !grid.iter().any(|&r| r == outer) {
        grid.push(outer);
        grid.sort_by(f64::total_cmp);
    }
    let layers = [SurfaceLayer { radius: 1.0, mass: result.surface_mass }];
    let mu = &result.equilibrium.measure;
    let f = result.equilibrium.f_q;
    let frostman = frostman_check_against(mu, &layers, &q, &grid, Some(f));
    let edge = frostman_check_against(mu, &layers, &q, &[outer], Some(f));
    let qs: Vec<f64> = grid.iter().map(|&r| q.eval(r)).collect();
    CoulombReport {
        regime: result.regime,
        frostman,
        boundary_residual: edge.sup_residual_on_support.max(-edge.min_margin_off_support.min(0.0)),
        q_decreasing: qs.windows(2).all(|w| w[1] <= w[0]),
    }
}
