//! Potentials, energies, the point-charge external field and Frostman checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Layout, MeasureDensity};
use crate::quadrature::{chebyshev_points, composite_rule, CompositeOpts, SingPoint};
use crate::specfun::{hyp2f1_series, hyp2f1_unit, RieszParams};

/// Interaction kernel: |x − y|^{−s} or −log|x − y|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Riesz(f64),
    Log,
}

impl Kernel {
    /// Riesz kernel for s > 0, logarithmic for s = 0.
    pub fn from_params(p: &RieszParams) -> Self {
        if p.s == 0.0 {
            Kernel::Log
        } else {
            Kernel::Riesz(p.s)
        }
    }

    pub fn s(&self) -> f64 {
        match *self {
            Kernel::Riesz(s) => s,
            Kernel::Log => 0.0,
        }
    }

    pub fn eval(&self, dist: f64) -> f64 {
        match *self {
            Kernel::Riesz(s) => dist.powf(-s),
            Kernel::Log => -dist.ln(),
        }
    }
}

/// Field of a charge γ placed at height h above the centre of the conductor:
/// Q(x) = γ k(√(|x|² + h²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalField {
    pub gamma: f64,
    pub height: f64,
    pub kernel: Kernel,
}

impl ExternalField {
    pub fn new(gamma: f64, height: f64, kernel: Kernel) -> Result<Self> {
        if !(height > 0.0) || !height.is_finite() || !gamma.is_finite() {
            return Err(Error::Invalid(format!("charge γ={gamma} at height {height}")));
        }
        Ok(Self { gamma, height, kernel })
    }

    pub fn zero(kernel: Kernel) -> Self {
        Self { gamma: 0.0, height: 1.0, kernel }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.gamma == 0.0 {
            return 0.0;
        }
        match self.kernel {
            Kernel::Riesz(s) => self.gamma * (x * x + self.height * self.height).powf(-0.5 * s),
            Kernel::Log => -0.5 * self.gamma * (x * x + self.height * self.height).ln(),
        }
    }
}

/// Average of k(|ρe − ru|) over u uniform on S^{d−1}; infinite when the
/// average diverges.
pub(crate) fn kernel_avg(kernel: Kernel, d: usize, rho: f64, r: f64) -> f64 {
    let (lo, hi) = if rho < r { (rho, r) } else { (r, rho) };
    if d == 1 {
        return 0.5 * (kernel.eval(hi - lo) + kernel.eval(hi + lo));
    }
    let s = match kernel {
        Kernel::Log => {
            // Only the planar logarithmic kernel is harmonic-averaged here.
            return if d == 2 { -hi.ln() } else { f64::NAN };
        }
        Kernel::Riesz(s) => s,
    };
    let df = d as f64;
    if d >= 3 && s == df - 2.0 {
        return hi.powf(2.0 - df);
    }
    if hi == 0.0 {
        return f64::INFINITY;
    }
    let q = lo / hi;
    if q * q < 0.25 {
        let f = hyp2f1_series(0.5 * s, 0.5 * s - 0.5 * df + 1.0, 0.5 * df, q * q).unwrap_or(f64::NAN);
        return hi.powf(-s) * f;
    }
    if d == 3 {
        if lo == hi && s >= 2.0 {
            return f64::INFINITY;
        }
        return power_difference(hi + lo, hi - lo, 2.0 - s) / (2.0 * lo * hi);
    }
    // (ρ + r)^{−s} ₂F₁(s/2, (d−1)/2; d−1; 4ρr/(ρ + r)²), expanded about 1.
    let w = ((hi - lo) / (hi + lo)).powi(2);
    let f = hyp2f1_unit(0.5 * s, 0.5 * (df - 1.0), df - 1.0, w).unwrap_or(f64::NAN);
    (hi + lo).powf(-s) * f
}

/// (a^e − b^e)/e, tending to log(a/b) as e → 0.
fn power_difference(a: f64, b: f64, e: f64) -> f64 {
    if e == 0.0 {
        return (a / b).ln();
    }
    ((e * a.ln()).exp_m1() - (e * b.ln()).exp_m1()) / e
}

/// Spherical average of the kernel between radii ρ and r in R^d.
pub fn kernel_radial(kernel: Kernel, d: usize, rho: f64, r: f64) -> Result<f64> {
    if !(rho >= 0.0 && r >= 0.0) {
        return Err(Error::Domain(format!("negative radius ({rho}, {r})")));
    }
    if kernel == Kernel::Log && d > 2 {
        return Err(Error::Domain(format!("logarithmic kernel in dimension {d}")));
    }
    let v = kernel_avg(kernel, d, rho, r);
    if !v.is_finite() {
        return Err(Error::Domain(format!("kernel average diverges at ρ = r = {rho}")));
    }
    Ok(v)
}

/// Singular behaviour of the radial kernel average at r = ρ.
fn radial_sing(kernel: Kernel, d: usize, rho: f64) -> SingPoint {
    let e = kernel.s() - (d as f64 - 1.0);
    if e > -1.0 || rho == 0.0 {
        SingPoint::graded(rho, e.max(0.0))
    } else {
        SingPoint::power(rho, 0.0)
    }
}

fn point_sing(kernel: Kernel, x: f64) -> SingPoint {
    match kernel {
        Kernel::Riesz(s) => SingPoint::power(x, s),
        Kernel::Log => SingPoint::graded(x, 0.0),
    }
}

/// Points closer to a piece boundary than the quadrature can resolve are
/// moved onto it, so that the kernel singularity and the endpoint merge.
fn snap(mu: &MeasureDensity, x: f64) -> f64 {
    let tol = 1e-13 * (1.0 + x.abs());
    for p in mu.pieces() {
        for e in [p.lo, p.hi] {
            if (x - e).abs() <= tol {
                return e;
            }
        }
    }
    x
}

/// U^μ(x); x is a position for line measures and a radius for radial ones.
pub fn potential(mu: &MeasureDensity, kernel: Kernel, x: f64) -> f64 {
    let x = snap(mu, x);
    match mu.layout() {
        Layout::Line => {
            let sp = point_sing(kernel, x);
            mu.pieces().iter().map(|p| p.integrate(&[sp], |y| kernel.eval((x - y).abs()))).sum()
        }
        Layout::Radial(d) => {
            let sp = radial_sing(kernel, d, x);
            if kernel == Kernel::Log && x != 0.0 {
                // r log r near the origin
                mu.integrate(&[sp, SingPoint::graded(0.0, 0.0)], |r| kernel_avg(kernel, d, x, r))
            } else {
                mu.integrate(&[sp], |r| kernel_avg(kernel, d, x, r))
            }
        }
    }
}

/// Potential of a uniform unit mass on the sphere of radius `radius`.
pub fn sphere_potential(kernel: Kernel, d: usize, radius: f64, x: f64) -> f64 {
    kernel_avg(kernel, d, x, radius)
}

/// Potentials at many points, evaluated in parallel.
pub fn potential_grid(mu: &MeasureDensity, kernel: Kernel, xs: &[f64]) -> Vec<f64> {
    xs.par_iter().map(|&x| potential(mu, kernel, x)).collect()
}

/// I(μ, ν) = ∫ U^μ dν.
pub fn mutual_energy(mu: &MeasureDensity, nu: &MeasureDensity, kernel: Kernel) -> f64 {
    if mu.is_empty() || nu.is_empty() {
        return 0.0;
    }
    let mut sings: Vec<SingPoint> =
        mu.pieces().iter().flat_map(|p| [SingPoint::graded(p.lo, 0.0), SingPoint::graded(p.hi, 0.0)]).collect();
    sings.sort_by(|a, b| a.at.partial_cmp(&b.at).unwrap());
    sings.dedup_by(|a, b| a.at == b.at);
    let layout = nu.layout();
    nu.pieces()
        .par_iter()
        .map(|p| {
            // Gather nodes first so the potentials can be evaluated in parallel.
            let mut all = sings.clone();
            if p.exp_lo != 0.0 {
                all.push(SingPoint::power(p.anchor_lo, p.exp_lo));
            }
            if p.exp_hi != 0.0 {
                all.push(SingPoint::power(p.anchor_hi, p.exp_hi));
            }
            let rule = composite_rule(p.lo, p.hi, &all, CompositeOpts { order: 16, ..Default::default() });
            let us: Vec<f64> = rule.nodes.par_iter().map(|&x| potential(mu, kernel, x)).collect();
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .zip(&us)
                .map(|((&x, &w), &u)| w * p.density_at(x) * layout.volume(x) * u)
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// I(μ) = ∫∫ k dμ dμ.
pub fn energy(mu: &MeasureDensity, kernel: Kernel) -> f64 {
    mutual_energy(mu, mu, kernel)
}

/// I_Q(μ) = I(μ) + 2∫Q dμ.
pub fn weighted_energy(mu: &MeasureDensity, q: &ExternalField) -> f64 {
    if mu.is_empty() {
        return 0.0;
    }
    energy(mu, q.kernel) + 2.0 * mu.integrate(&[], |x| q.eval(x))
}

/// Outcome of checking U^μ + Q = F on the support and ≥ F off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostmanReport {
    pub f_q: f64,
    pub sup_residual_on_support: f64,
    /// Smallest U^μ + Q − F over off-support grid points (+∞ if none).
    pub min_margin_off_support: f64,
    pub on_support_points: usize,
    pub off_support_points: usize,
}

impl FrostmanReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.sup_residual_on_support <= tol && self.min_margin_off_support >= -tol
    }
}

/// A uniform surface layer of the given mass on the sphere |x| = radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceLayer {
    pub radius: f64,
    pub mass: f64,
}

/// Frostman check of μ (plus optional surface layers) against Q on `grid`.
/// Points of the grid inside the support give F_Q (their mean) and the
/// on-support residual; the rest give the off-support margin.
pub fn frostman_check_with(
    mu: &MeasureDensity,
    layers: &[SurfaceLayer],
    q: &ExternalField,
    grid: &[f64],
) -> FrostmanReport {
    frostman_check_against(mu, layers, q, grid, None)
}

/// As [`frostman_check_with`], measuring residuals against a known
/// constant `f` when given.
pub fn frostman_check_against(
    mu: &MeasureDensity,
    layers: &[SurfaceLayer],
    q: &ExternalField,
    grid: &[f64],
    f: Option<f64>,
) -> FrostmanReport {
    let d = match mu.layout() {
        Layout::Line => 1,
        Layout::Radial(d) => d,
    };
    let radial = mu.layout() != Layout::Line;
    let on_layer = |x: f64| layers.iter().any(|l| l.mass > 0.0 && (x - l.radius).abs() < 1e-14);
    let total: Vec<(f64, bool, f64)> = grid
        .par_iter()
        .map(|&x| {
            let mut u = if mu.is_empty() { 0.0 } else { potential(mu, q.kernel, x) };
            for l in layers {
                u += l.mass * sphere_potential(q.kernel, d, l.radius, x);
            }
            let xr = if radial { x.abs() } else { x };
            let inside = (!mu.is_empty() && mu.support().contains(xr)) || on_layer(xr);
            (x, inside, u + q.eval(x))
        })
        .collect();
    let on: Vec<f64> = total.iter().filter(|t| t.1).map(|t| t.2).collect();
    let f_q = match f {
        Some(f) => f,
        None if on.is_empty() => f64::NAN,
        None => on.iter().sum::<f64>() / on.len() as f64,
    };
    let sup = on.iter().map(|v| (v - f_q).abs()).fold(0.0, f64::max);
    let off: Vec<f64> = total.iter().filter(|t| !t.1).map(|t| t.2 - f_q).collect();
    FrostmanReport {
        f_q,
        sup_residual_on_support: sup,
        min_margin_off_support: off.iter().copied().fold(f64::INFINITY, f64::min),
        on_support_points: on.len(),
        off_support_points: off.len(),
    }
}

pub fn frostman_check(mu: &MeasureDensity, q: &ExternalField, grid: &[f64]) -> FrostmanReport {
    frostman_check_with(mu, &[], q, grid)
}

/// Evaluation grid over the conductor: [−1, 1] for line measures, [0, 1]
/// for radial ones, avoiding the support endpoints themselves.
pub fn conductor_grid(mu: &MeasureDensity, n: usize) -> Vec<f64> {
    let (a, b) = if mu.layout() == Layout::Line { (-1.0, 1.0) } else { (0.0, 1.0) };
    let ends = mu.support().endpoints();
    chebyshev_points(n, a, b).into_iter().filter(|x| ends.iter().all(|e| (x - e).abs() > 1e-9)).collect()
}
