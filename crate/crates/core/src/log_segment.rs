//! Logarithmic equilibrium on [−1, 1] for a charge γ at (0, y).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MeasureDensity, Piece, Support};
use crate::potentials::{ExternalField, Kernel};
use crate::problem::EquilibriumResult;
use crate::roots::brent;

const PI: f64 = std::f64::consts::PI;
const NODES: usize = 64;
const CERTIFY_POINTS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogRegime {
    AttrShrunk,
    AttrFull,
    RepOneCut,
    RepTwoCut,
}

#[derive(Debug, Clone)]
pub struct LogSegmentResult {
    pub regime: LogRegime,
    pub gamma: f64,
    pub y: f64,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    /// Zero of the first factor of η_{Q,I} (attractive regime).
    pub r_star: Option<f64>,
    /// Endpoint r_s of the attractive support [−r_s, r_s].
    pub support_radius: Option<f64>,
    /// Inner endpoint of the two-cut support.
    pub r_tilde: Option<f64>,
    pub equilibrium: EquilibriumResult,
}

pub fn gamma_minus(y: f64) -> f64 {
    let w = (1.0 + y * y).sqrt();
    w / (y - w)
}

pub fn gamma_plus(y: f64) -> f64 {
    y * ((y * y + 1.0).sqrt() + y)
}

/// (γ₋, γ₊) as roots of the sign conditions on η_{Q,I}: vanishing edge
/// coefficient at ±1, and vanishing density at 0.
pub fn critical_charges_numeric(y: f64) -> Result<(f64, f64)> {
    let edge = |g: f64| eta_factor(1.0, y, g, 1.0);
    let centre = |g: f64| eta_factor(1.0, y, g, 0.0);
    let gm = brent(edge, -1e6, -1.0 - 1e-12, 1e-15, 300)?;
    let gp = brent(centre, 1e-12, 1e6, 1e-15, 300)?;
    Ok((gm, gp))
}

fn eta_factor(r: f64, y: f64, g: f64, x: f64) -> f64 {
    1.0 + g - g * y * (y * y + r * r).sqrt() / (x * x + y * y)
}

/// Density of the signed equilibrium measure η_{Q,[−r,r]} at x.
pub fn eta_density(r: f64, y: f64, gamma: f64, x: f64) -> Result<f64> {
    if !(x.abs() < r) {
        return Err(Error::Domain(format!("|x| = {} outside (-{r}, {r})", x.abs())));
    }
    Ok(eta_factor(r, y, gamma, x) / (PI * ((r - x) * (r + x)).sqrt()))
}

/// η_{Q,[−r,r]} as a density with hard edges.
pub fn eta_measure(r: f64, y: f64, gamma: f64, n: usize) -> Result<MeasureDensity> {
    let piece = Piece::from_smooth(-r, r, 0.5, 0.5, n, |x| eta_factor(r, y, gamma, x) / PI)?;
    MeasureDensity::from_pieces(Support::interval(-r, r)?, vec![0.5, 0.5], vec![piece])
}

/// Zero of the first factor of η_{Q,I}, when it lies in (0, 1).
pub fn r_star(gamma: f64, y: f64) -> Option<f64> {
    let x2 = gamma * y * (y * y + 1.0).sqrt() / (1.0 + gamma) - y * y;
    (x2 > 0.0 && x2 < 1.0).then(|| x2.sqrt())
}

/// Endpoint of the attractive support: the r with vanishing edge
/// coefficient of η_{Q,[−r,r]}.
pub fn support_radius(gamma: f64, y: f64) -> Option<f64> {
    let q = gamma / (1.0 + gamma);
    let v = q * q - 1.0;
    (gamma < -1.0 && v > 0.0).then(|| y * v.sqrt())
}

/// Inner endpoint of the two-cut support.
pub fn r_tilde(gamma: f64, y: f64) -> Option<f64> {
    let v = gamma * gamma - (2.0 * gamma + 1.0) * y * y;
    (gamma > 0.0 && v >= 0.0).then(|| v.sqrt() / (1.0 + gamma))
}

/// Two-cut density on K_{r̃}.
pub fn two_cut_density(gamma: f64, y: f64, x: f64) -> f64 {
    let rt = r_tilde(gamma, y).unwrap_or(0.0);
    let ax = x.abs();
    if ax <= rt || ax >= 1.0 {
        return 0.0;
    }
    (1.0 + gamma) * ax * ((ax - rt) * (ax + rt)).sqrt() / (PI * (x * x + y * y) * ((1.0 - x) * (1.0 + x)).sqrt())
}

fn two_cut_measure(gamma: f64, y: f64, rt: f64, n: usize) -> Result<MeasureDensity> {
    // Soft edges (exponent −1/2) at ±r̃, hard edges at ±1.
    let smooth = |x: f64| {
        let ax = x.abs();
        (1.0 + gamma) * ax * (ax + rt).sqrt() / (PI * (x * x + y * y) * (1.0 + ax).sqrt())
    };
    let support = Support::symmetric_two(rt)?;
    let left = Piece::from_smooth(-1.0, -rt, 0.5, -0.5, n, smooth)?;
    let right = Piece::from_smooth(rt, 1.0, -0.5, 0.5, n, smooth)?;
    MeasureDensity::from_pieces(support, vec![0.5, -0.5, -0.5, 0.5], vec![left, right])
}

fn shrunk_measure(gamma: f64, y: f64, r: f64, n: usize) -> Result<MeasureDensity> {
    let piece = Piece::from_smooth(-r, r, -0.5, -0.5, n, |x| -(1.0 + gamma) / (PI * (x * x + y * y)))?;
    MeasureDensity::from_pieces(Support::interval(-r, r)?, vec![-0.5, -0.5], vec![piece])
}

pub fn solve_log_segment(gamma: f64, y: f64) -> Result<LogSegmentResult> {
    if !(y > 0.0) || !gamma.is_finite() {
        return Err(Error::Invalid(format!("need y > 0 and finite gamma, got y = {y}, gamma = {gamma}")));
    }
    let (gm, gp) = (gamma_minus(y), gamma_plus(y));
    let q = ExternalField::new(gamma, y, Kernel::Log)?;
    let (regime, measure, rs, rt) = if gamma < gm {
        let r = support_radius(gamma, y).ok_or_else(|| Error::Invariant("no attractive support radius".into()))?;
        (LogRegime::AttrShrunk, shrunk_measure(gamma, y, r, NODES)?, Some(r), None)
    } else if gamma < 0.0 {
        (LogRegime::AttrFull, eta_measure(1.0, y, gamma, NODES)?, None, None)
    } else if gamma <= gp {
        (LogRegime::RepOneCut, eta_measure(1.0, y, gamma, NODES)?, None, None)
    } else {
        let rt = r_tilde(gamma, y).ok_or_else(|| Error::Invariant("no two-cut endpoint".into()))?;
        (LogRegime::RepTwoCut, two_cut_measure(gamma, y, rt, NODES)?, None, Some(rt))
    };
    Ok(LogSegmentResult {
        regime,
        gamma,
        y,
        gamma_minus: gm,
        gamma_plus: gp,
        r_star: if gamma < gm { r_star(gamma, y) } else { None },
        support_radius: rs,
        r_tilde: rt,
        equilibrium: EquilibriumResult::certify(measure, 0.0, &q, None, CERTIFY_POINTS),
    })
}

/// Checks of the algebraic equation satisfied by the two-cut measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    /// max |π² ω′(x)² − |R(x)|| / |R(x)| over the grid.
    pub max_relative_residual: f64,
    /// ω′(x)/√(x − r̃) as x → r̃⁺ (finite, nonzero for a square-root edge).
    pub soft_edge_coefficient: f64,
    /// ω′(x)√(1 − x) as x → 1⁻.
    pub hard_edge_coefficient: f64,
    pub points: usize,
}

/// |R(x)| of the algebraic equation for the two-cut measure.
pub fn r_polynomial_abs(gamma: f64, y: f64, x: f64) -> f64 {
    let rt = r_tilde(gamma, y).unwrap_or(0.0);
    let x2 = x * x;
    ((1.0 + gamma).powi(2) * x2 * (x2 - rt * rt) / ((x2 + y * y).powi(2) * (1.0 - x2))).abs()
}

pub fn cauchy_transform_check(result: &LogSegmentResult, grid: &[f64]) -> Result<CauchyReport> {
    let rt = match (result.regime, result.r_tilde) {
        (LogRegime::RepTwoCut, Some(rt)) => rt,
        _ => return Err(Error::Regime { regime: "two-cut", detail: format!("{:?}", result.regime) }),
    };
    let (g, y) = (result.gamma, result.y);
    let mu = &result.equilibrium.measure;
    let mut worst = 0.0f64;
    let mut points = 0;
    for &x in grid {
        if x.abs() <= rt || x.abs() >= 1.0 {
            continue;
        }
        let lhs = PI * PI * mu.density_at(x).powi(2);
        let r = r_polynomial_abs(g, y, x);
        worst = worst.max((lhs - r).abs() / r);
        points += 1;
    }
    let e = 1e-10;
    Ok(CauchyReport {
        max_relative_residual: worst,
        soft_edge_coefficient: mu.density_at(rt + e) / e.sqrt(),
        hard_edge_coefficient: mu.density_at(1.0 - e) * e.sqrt(),
        points,
    })
}
