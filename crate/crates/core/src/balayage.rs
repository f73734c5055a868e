//! Balayage (sweeping) of measures onto balls, intervals and symmetric
//! two-interval sets.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_density, Layout, MeasureDensity, Piece, Support, SupportKind};
use crate::potentials::{potential, Kernel};
use crate::quadrature::{chebyshev_points, composite_rule, gauss_jacobi, CompositeOpts, SingPoint};
use crate::specfun::{ball_robin_constant, sphere_area, sphere_constants, RieszParams};

/// Default number of nodes for closed-form densities.
pub const DEFAULT_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalayageMethod {
    ClosedForm,
    Superposition,
    IntegralEquation,
}

#[derive(Debug, Clone)]
pub struct BalayageResult {
    pub measure: MeasureDensity,
    /// ‖σ̂‖ / ‖σ‖.
    pub mass_retained: f64,
    pub method: BalayageMethod,
    /// Sup-norm of U^σ̂ − U^σ on the verification grid, when computed.
    pub residual: Option<f64>,
}

/// The point y = (0, h) ∈ R^{d+1} swept onto B_R ⊂ R^d.
#[derive(Debug, Clone, Copy)]
pub struct PointToBall {
    p: RieszParams,
    h: f64,
    radius: f64,
    prefactor: f64,
}

impl PointToBall {
    pub fn new(p: RieszParams, h: f64, radius: f64) -> Result<Self> {
        if !p.is_robin() {
            return Err(Error::Regime { regime: "Robin", detail: format!("d = {}, s = {}", p.d, p.s) });
        }
        if !(h > 0.0 && radius > 0.0) {
            return Err(Error::Invalid(format!("height {h}, radius {radius}")));
        }
        let k = sphere_constants(&p, radius)?;
        let prefactor = (2.0 * h).powf(p.alpha) / (k.w_sd * k.a_d);
        Ok(Self { p, h, radius, prefactor })
    }

    /// ∫_0^∞ v^{α/2} (v + R² + h²)^{−(d − s/2)} (v + ε)^{−1} dv with
    /// ε = R² − r², through v = u/(1 − u).
    fn inner_integral(&self, eps: f64) -> f64 {
        let (d, s, a) = (self.p.dim(), self.p.s, self.p.alpha);
        let big = self.radius * self.radius + self.h * self.h;
        let pw = d - 0.5 * s;
        let mut sings = vec![SingPoint::power(0.0, -0.5 * a)];
        let e1 = 1.0 - 0.5 * d;
        if e1 != 0.0 {
            sings.push(SingPoint::power(1.0, e1));
        }
        if eps != 1.0 {
            let pole = eps / (eps - 1.0);
            sings.push(SingPoint::power(pole, 1.0));
        }
        if big != 1.0 {
            sings.push(SingPoint::power(big / (big - 1.0), pw));
        }
        let rule = composite_rule(0.0, 1.0, &sings, CompositeOpts::default());
        rule.integrate(|u| {
            let w = 1.0 - u;
            u.powf(0.5 * a) * w.powf(0.5 * d - 1.0) * (u + big * w).powf(-pw) / (u + eps * w)
        })
    }

    /// (R² − r²)^{α/2} times the density; analytic in r up to r = R.
    pub fn smooth_factor(&self, r: f64) -> f64 {
        let (d, s, a) = (self.p.dim(), self.p.s, self.p.alpha);
        let eps = (self.radius - r) * (self.radius + r);
        let first = eps.powf(0.5 * a) * (r * r + self.h * self.h).powf(-(d - 0.5 * s));
        let sin = (0.5 * a * std::f64::consts::PI).sin();
        self.prefactor * (first + sin / std::f64::consts::PI * self.inner_integral(eps))
    }

    pub fn density(&self, r: f64) -> f64 {
        let eps = (self.radius - r) * (self.radius + r);
        self.smooth_factor(r) * eps.powf(-0.5 * self.p.alpha)
    }

    /// lim (R² − |x|²)^{α/2} density as |x| → R, in closed form.
    pub fn boundary_coefficient(&self) -> Result<f64> {
        let k = sphere_constants(&self.p, self.radius)?;
        Ok(self.h.powf(self.p.alpha) * k.k1_sd / (self.radius * self.radius + self.h * self.h).powf(0.5 * self.p.dim()))
    }

    /// Mass predicted by cap(B_R)·U^{ω_R}(y), with U^{ω_R}(y) by
    /// Gauss–Jacobi quadrature of the equilibrium density.
    pub fn mass_formula(&self) -> Result<f64> {
        let p = &self.p;
        let k = sphere_constants(p, self.radius)?;
        let (rr, h, s, a) = (self.radius, self.h, p.s, p.alpha);
        // r ∈ [0, R]; the point −h marks the complex singularities ±ih.
        let sings = [SingPoint::power(rr, 0.5 * a), SingPoint::power(-h, 0.0)];
        let rule = composite_rule(0.0, rr, &sings, CompositeOpts::default());
        let u = rule.integrate(|r| {
            let f = k.c_r * ((rr - r) * (rr + r)).powf(-0.5 * a) * (r * r + h * h).powf(-0.5 * s);
            let vol = if p.d == 1 { 2.0 } else { sphere_area(p.d - 1) * r.powi(p.d as i32 - 1) };
            f * vol
        });
        Ok(u / ball_robin_constant(p, self.radius))
    }

    pub fn measure(&self, n_nodes: usize) -> Result<MeasureDensity> {
        let (rr, ea) = (self.radius, 0.5 * self.p.alpha);
        if self.p.d == 1 {
            let support = Support::interval(-rr, rr)?;
            let piece = Piece::from_smooth(-rr, rr, ea, ea, n_nodes, |x| self.smooth_factor(x.abs()))?;
            MeasureDensity::from_pieces(support, vec![ea, ea], vec![piece])
        } else {
            let support = Support::ball(rr, self.p.d)?;
            let piece = Piece::from_smooth(0.0, rr, 0.0, ea, n_nodes, |r| self.smooth_factor(r) * (rr + r).powf(-ea))?;
            MeasureDensity::from_pieces(support, vec![ea], vec![piece])
        }
    }
}

/// Bal(δ_y, B_R) for y = (0, h).
pub fn bal_point_to_ball(p: &RieszParams, h: f64, radius: f64) -> Result<BalayageResult> {
    let b = PointToBall::new(*p, h, radius)?;
    let measure = b.measure(DEFAULT_NODES)?;
    let mass = measure.mass();
    if !mass.is_finite() {
        return Err(Error::NonConvergence("point-to-ball balayage quadrature".into()));
    }
    Ok(BalayageResult { measure, mass_retained: mass, method: BalayageMethod::ClosedForm, residual: None })
}

fn gamma_s(kernel: Kernel) -> (f64, f64) {
    let alpha = 1.0 - kernel.s();
    (alpha, (0.5 * alpha * std::f64::consts::PI).sin() / std::f64::consts::PI)
}

/// Robin constant of [a, b] for the kernel on the line.
pub fn interval_robin_constant(kernel: Kernel, a: f64, b: f64) -> Result<f64> {
    let h = 0.5 * (b - a);
    match kernel {
        Kernel::Log => Ok((2.0 / h).ln()),
        Kernel::Riesz(s) => Ok(ball_robin_constant(&RieszParams::robin(1, s)?, h)),
    }
}

/// Green function of C \ [a, b] with pole at infinity, at real t ∉ [a, b].
fn interval_green(a: f64, b: f64, t: f64) -> f64 {
    let u = ((2.0 * t - a - b) / (b - a)).abs();
    (u + (u * u - 1.0).sqrt()).ln()
}

/// Smooth factor (w.r.t. ((x − a)(b − x))^{−α/2}) of Bal(δ_t, [a, b]).
/// For the log kernel the potential is matched exactly on [a, b], which
/// removes a multiple of the arcsine law.
fn point_interval_smooth(kernel: Kernel, t: f64, a: f64, b: f64, x: f64) -> f64 {
    let (alpha, gs) = gamma_s(kernel);
    let mut g = gs * ((t - b).abs() * (t - a).abs()).powf(0.5 * alpha) / (x - t).abs();
    if kernel == Kernel::Log {
        let f = (4.0 / (b - a)).ln();
        g -= interval_green(a, b, t) / f / std::f64::consts::PI;
    }
    g
}

fn check_line_kernel(kernel: Kernel) -> Result<()> {
    match kernel {
        Kernel::Log => Ok(()),
        Kernel::Riesz(s) if s > 0.0 && s < 1.0 => Ok(()),
        Kernel::Riesz(s) => Err(Error::Regime { regime: "segment", detail: format!("need 0 <= s < 1, got {s}") }),
    }
}

/// Bal(δ_t, [a, b]) for real t outside [a, b].
pub fn bal_point_to_interval(kernel: Kernel, t: f64, a: f64, b: f64) -> Result<BalayageResult> {
    check_line_kernel(kernel)?;
    if !(b > a) || (t >= a && t <= b) {
        return Err(Error::Invalid(format!("point {t} must lie outside [{a}, {b}]")));
    }
    let ea = 0.5 * (1.0 - kernel.s());
    let piece = Piece::from_smooth(a, b, ea, ea, DEFAULT_NODES, |x| point_interval_smooth(kernel, t, a, b, x))?;
    let measure = MeasureDensity::from_pieces(Support::interval(a, b)?, vec![ea, ea], vec![piece])?;
    let mass = measure.mass();
    Ok(BalayageResult { measure, mass_retained: mass, method: BalayageMethod::ClosedForm, residual: None })
}

/// Balayage of a line measure supported off [a, b] by superposition of
/// point-mass balayages.
pub fn bal_superpose(kernel: Kernel, source: &MeasureDensity, a: f64, b: f64) -> Result<BalayageResult> {
    check_line_kernel(kernel)?;
    if source.layout() != Layout::Line {
        return Err(Error::Invalid("superposition is implemented for line measures".into()));
    }
    for p in source.pieces() {
        if p.hi > a && p.lo < b {
            return Err(Error::Invalid(format!("source piece [{}, {}] overlaps the target [{a}, {b}]", p.lo, p.hi)));
        }
    }
    let ea = 0.5 * (1.0 - kernel.s());
    let piece = Piece::from_smooth(a, b, ea, ea, DEFAULT_NODES, |x| {
        source.integrate(&[SingPoint::power(x, 1.0)], |t| point_interval_smooth(kernel, t, a, b, x))
    })?;
    let measure = MeasureDensity::from_pieces(Support::interval(a, b)?, vec![ea, ea], vec![piece])?;
    let mass = measure.mass();
    Ok(BalayageResult {
        measure,
        mass_retained: mass / source.mass(),
        method: BalayageMethod::Superposition,
        residual: None,
    })
}

/// Controls for the integral-equation solver.
#[derive(Debug, Clone, Copy)]
pub struct CollocationOpts {
    /// Number of basis functions per interval.
    pub degree: usize,
    pub cond_cap: f64,
    /// Fail when the verified residual exceeds this; None skips verification.
    pub verify_tol: Option<f64>,
}

impl Default for CollocationOpts {
    fn default() -> Self {
        Self { degree: 48, cond_cap: 1e12, verify_tol: Some(1e-5) }
    }
}

/// Solution of U^μ = f on an interval or a symmetric pair of intervals.
#[derive(Debug, Clone)]
pub struct PotentialSolution {
    pub measure: MeasureDensity,
    pub degree: usize,
    pub condition: f64,
    pub residual: Option<f64>,
}

/// Orthogonal family diagonalizing the kernel on an interval under the
/// weight ((x − a)(b − x))^{−α/2}: Gegenbauer C_n^{(s/2)} for Riesz,
/// Chebyshev T_n for log.
#[derive(Debug, Clone, Copy)]
struct SpectralBasis {
    kernel: Kernel,
}

impl SpectralBasis {
    fn eval(&self, n: usize, x: f64, out: &mut [f64]) {
        out[0] = 1.0;
        if n == 1 {
            return;
        }
        match self.kernel {
            Kernel::Log => {
                out[1] = x;
                for k in 1..n - 1 {
                    out[k + 1] = 2.0 * x * out[k] - out[k - 1];
                }
            }
            Kernel::Riesz(s) => {
                let lam = 0.5 * s;
                out[1] = 2.0 * lam * x;
                for k in 1..n - 1 {
                    let kf = k as f64;
                    out[k + 1] = (2.0 * (kf + lam) * x * out[k] - (kf + 2.0 * lam - 1.0) * out[k - 1]) / (kf + 1.0);
                }
            }
        }
    }

    /// Eigenvalues of the self-interaction on an interval of half-length h.
    fn eigenvalues(&self, n: usize, h: f64) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        let mut mu = vec![0.0; n];
        match self.kernel {
            Kernel::Log => {
                mu[0] = pi * (2f64.ln() - h.ln());
                for (k, m) in mu.iter_mut().enumerate().skip(1) {
                    *m = pi / k as f64;
                }
            }
            Kernel::Riesz(s) => {
                mu[0] = pi / (0.5 * pi * s).cos();
                for k in 1..n {
                    mu[k] = mu[k - 1] * (k as f64 - 1.0 + s) / k as f64;
                }
            }
        }
        mu
    }
}

enum Geometry {
    Interval { a: f64, b: f64, even: bool },
    Pair { t: f64 },
}

/// Solve U^μ = f on `target` (an interval, or K_t = [−1, −t] ∪ [t, 1] with
/// f even) for μ with hard exponents α/2 at every endpoint.
pub fn solve_potential_equation<F>(
    kernel: Kernel,
    target: &Support,
    rhs: F,
    even: bool,
    opts: CollocationOpts,
) -> Result<PotentialSolution>
where
    F: Fn(f64) -> f64 + Sync,
{
    check_line_kernel(kernel)?;
    let geom = match target.kind {
        SupportKind::Interval(a, b) => Geometry::Interval { a, b, even: even && (a + b).abs() < 1e-15 },
        SupportKind::TwoIntervals(e) if target.is_symmetric() && e[2] > 0.0 => Geometry::Pair { t: e[2] },
        _ => return Err(Error::Invalid(format!("unsupported target {:?}", target.kind))),
    };
    let (a, b) = match geom {
        Geometry::Interval { a, b, .. } => (a, b),
        Geometry::Pair { t } => (t, 1.0),
    };
    // The equation is sampled once, at the collocation points of the largest
    // degree; smaller systems reuse a subset of rows.
    let mut ncoef = opts.degree.max(2);
    loop {
        match assemble_and_solve(kernel, &geom, a, b, &rhs, ncoef, opts.cond_cap) {
            Ok((coef, cond)) => {
                let measure = build_measure(kernel, &geom, target, a, b, &coef)?;
                let residual = match opts.verify_tol {
                    None => None,
                    Some(tol) => {
                        let r = verify(kernel, &measure, a, b, &rhs, 3 * ncoef);
                        if !(r <= tol) {
                            return Err(Error::BalayageResidual { residual: r, tol });
                        }
                        Some(r)
                    }
                };
                return Ok(PotentialSolution { measure, degree: ncoef, condition: cond, residual });
            }
            Err(Error::IllConditioned(c)) if ncoef > 6 => {
                log::debug!("collocation degree {ncoef} ill-conditioned ({c:e}); reducing");
                ncoef = ncoef * 3 / 4;
            }
            Err(e) => return Err(e),
        }
    }
}

fn basis_index(geom: &Geometry, j: usize) -> usize {
    match geom {
        Geometry::Interval { even: true, .. } => 2 * j,
        _ => j,
    }
}

fn assemble_and_solve<F>(
    kernel: Kernel,
    geom: &Geometry,
    a: f64,
    b: f64,
    rhs: &F,
    ncoef: usize,
    cond_cap: f64,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(f64) -> f64 + Sync,
{
    let basis = SpectralBasis { kernel };
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let nmax = basis_index(geom, ncoef - 1) + 1;
    let mu = basis.eigenvalues(nmax, h);
    let ea = 0.5 * (1.0 - kernel.s());
    let rows: Vec<f64> = match geom {
        Geometry::Interval { even: true, .. } => {
            chebyshev_points(4 * ncoef, a, b).into_iter().filter(|x| *x > m).collect()
        }
        _ => chebyshev_points(2 * ncoef, a, b),
    };
    let cross_rule = match geom {
        Geometry::Pair { .. } => Some(gauss_jacobi(nmax + 40, -ea, -ea)),
        _ => None,
    };
    let row_data: Vec<(Vec<f64>, f64)> = rows
        .par_iter()
        .map(|&x| {
            let xi = (x - m) / h;
            let mut p = vec![0.0; nmax];
            basis.eval(nmax, xi, &mut p);
            let mut row: Vec<f64> = (0..ncoef)
                .map(|j| {
                    let k = basis_index(geom, j);
                    mu[k] * p[k]
                })
                .collect();
            if let Geometry::Pair { t } = geom {
                // Mirror image [−1, −t]: ∫_t^1 k(x + y) v(y) dy.
                let near = x + t < 0.5 * h;
                let mut acc = vec![0.0; ncoef];
                let mut q = vec![0.0; nmax];
                let mut add = |y: f64, w: f64| {
                    basis.eval(nmax, (y - m) / h, &mut q);
                    let kv = kernel.eval(x + y) * w;
                    for (j, acc_j) in acc.iter_mut().enumerate() {
                        *acc_j += kv * q[j];
                    }
                };
                if near {
                    let sings = [
                        SingPoint::power(*t, ea),
                        SingPoint::power(1.0, ea),
                        SingPoint::power(-x, kernel.s().max(0.5)),
                    ];
                    let rule = composite_rule(*t, 1.0, &sings, CompositeOpts::default());
                    for (&y, &w) in rule.nodes.iter().zip(&rule.weights) {
                        add(y, w * ((y - t) * (1.0 - y)).powf(-ea));
                    }
                } else {
                    let g = cross_rule.as_ref().unwrap();
                    let scale = h.powf(1.0 - 2.0 * ea);
                    for (&u, &w) in g.nodes.iter().zip(&g.weights) {
                        add(m + h * u, w * scale);
                    }
                }
                for (r, v) in row.iter_mut().zip(acc) {
                    *r += v;
                }
            }
            (row, rhs(x))
        })
        .collect();
    let nr = row_data.len();
    let mut mat = DMatrix::<f64>::zeros(nr, ncoef);
    let mut vec = DVector::<f64>::zeros(nr);
    for (i, (row, f)) in row_data.iter().enumerate() {
        for j in 0..ncoef {
            mat[(i, j)] = row[j];
        }
        vec[i] = *f;
    }
    // Column equilibration before the solve.
    let mut colscale = vec![1.0; ncoef];
    for j in 0..ncoef {
        let n = mat.column(j).norm();
        if n > 0.0 {
            colscale[j] = 1.0 / n;
            mat.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let sv = mat.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= cond_cap) {
        return Err(Error::IllConditioned(cond));
    }
    let qr = mat.qr();
    let qtb = qr.q().transpose() * &vec;
    let sol = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::NonConvergence("least squares: singular triangular factor".into()))?;
    let coef = (0..ncoef).map(|j| sol[j] * colscale[j]).collect();
    Ok((coef, cond))
}

fn build_measure(
    kernel: Kernel,
    geom: &Geometry,
    target: &Support,
    a: f64,
    b: f64,
    coef: &[f64],
) -> Result<MeasureDensity> {
    let basis = SpectralBasis { kernel };
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let ncoef = coef.len();
    let nmax = basis_index(geom, ncoef - 1) + 1;
    let ea = 0.5 * (1.0 - kernel.s());
    let g = |y: f64| {
        let mut p = vec![0.0; nmax];
        basis.eval(nmax, (y - m) / h, &mut p);
        (0..ncoef).map(|j| coef[j] * p[basis_index(geom, j)]).sum::<f64>()
    };
    let n_out = (nmax + 8).max(32);
    let exps = vec![ea; target.endpoints().len()];
    match geom {
        Geometry::Interval { .. } => {
            let piece = Piece::from_smooth(a, b, ea, ea, n_out, g)?;
            MeasureDensity::from_pieces(target.clone(), exps, vec![piece])
        }
        Geometry::Pair { t } => {
            let right = Piece::from_smooth(*t, 1.0, ea, ea, n_out, g)?;
            let left = Piece::from_smooth(-1.0, -t, ea, ea, n_out, |y| g(-y))?;
            MeasureDensity::from_pieces(target.clone(), exps, vec![left, right])
        }
    }
}

fn verify<F: Fn(f64) -> f64 + Sync>(kernel: Kernel, mu: &MeasureDensity, a: f64, b: f64, rhs: &F, n: usize) -> f64 {
    let xs = chebyshev_points(n, a, b);
    xs.par_iter()
        .map(|&x| (potential(mu, kernel, x) - rhs(x)).abs())
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Bal(σ, K) on an interval or a symmetric two-interval set by solving
/// U^σ̂ = U^σ on K.
pub fn balayage_onto(
    kernel: Kernel,
    source: &MeasureDensity,
    target: &Support,
    opts: CollocationOpts,
) -> Result<BalayageResult> {
    let even = source.support().is_symmetric() && target.is_symmetric();
    let sol = solve_potential_equation(kernel, target, |x| potential(source, kernel, x), even, opts)?;
    let mass = sol.measure.mass();
    Ok(BalayageResult {
        measure: sol.measure,
        mass_retained: mass / source.mass(),
        method: BalayageMethod::IntegralEquation,
        residual: sol.residual,
    })
}

/// Bal(σ, K_r) for a source inside (−r, r).
pub fn bal_to_two_intervals(
    kernel: Kernel,
    source: &MeasureDensity,
    r: f64,
    opts: CollocationOpts,
) -> Result<BalayageResult> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Invalid(format!("inner radius {r} outside (0, 1)")));
    }
    for p in source.pieces() {
        if p.lo < -r || p.hi > r {
            return Err(Error::Invalid(format!("source piece [{}, {}] reaches K_{r}", p.lo, p.hi)));
        }
    }
    balayage_onto(kernel, source, &Support::symmetric_two(r)?, opts)
}

/// Equilibrium measure ω_K and Robin constant F_K of an interval or a
/// symmetric two-interval set.
pub fn unweighted_equilibrium(
    kernel: Kernel,
    target: &Support,
    opts: CollocationOpts,
) -> Result<(MeasureDensity, f64)> {
    let sol = solve_potential_equation(kernel, target, |_| 1.0, true, opts)?;
    let m = sol.measure.mass();
    if !(m > 0.0) {
        return Err(Error::Invariant(format!("capacity solve produced mass {m}")));
    }
    Ok((sol.measure.scaled(1.0 / m), 1.0 / m))
}

/// Density of a measure by sampling a closure, with hard exponents on an
/// interval; convenience for sources in tests and the CLI.
pub fn interval_density<F: FnMut(f64) -> f64>(kernel: Kernel, a: f64, b: f64, f: F) -> Result<MeasureDensity> {
    let ea = 0.5 * (1.0 - kernel.s());
    make_density(Support::interval(a, b)?, &[ea, ea], f, DEFAULT_NODES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{potential, Kernel};
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn ball_boundary_coefficient_matches_closed_form() {
        let p = RieszParams::robin(3, 2.0).unwrap();
        let b = PointToBall::new(p, 1.0, 1.0).unwrap();
        let lam = b.boundary_coefficient().unwrap();
        assert!(close(b.smooth_factor(1.0), lam, 1e-12));
        // Extrapolate the product towards the edge.
        let near = b.density(1.0 - 1e-6) * (1.0 - (1.0f64 - 1e-6).powi(2)).powf(0.5);
        assert!(close(near, lam, 1e-5));
    }

    #[test]
    fn ball_mass_matches_capacity_formula() {
        for (d, s, h, rr) in [(3, 2.0, 1.0, 1.0), (2, 1.0, 1.0, 0.7), (3, 1.5, 0.5, 1.3), (1, 0.5, 1.0, 1.0)] {
            let p = RieszParams::robin(d, s).unwrap();
            let res = bal_point_to_ball(&p, h, rr).unwrap();
            let formula = PointToBall::new(p, h, rr).unwrap().mass_formula().unwrap();
            assert!(close(res.mass_retained, formula, 1e-10), "d={d} s={s}: {} vs {formula}", res.mass_retained);
        }
        // (d, s) = (3, 2), h = 1, R = 1: m = 1 − 1/√2.
        let p = RieszParams::robin(3, 2.0).unwrap();
        assert!(close(bal_point_to_ball(&p, 1.0, 1.0).unwrap().mass_retained, 0.29289321881345248, 1e-10));
    }

    #[test]
    fn ball_balayage_reproduces_point_potential() {
        let p = RieszParams::robin(3, 2.0).unwrap();
        let res = bal_point_to_ball(&p, 1.0, 1.0).unwrap();
        let k = Kernel::Riesz(2.0);
        for x in [0.0, 0.5, 0.95] {
            let u = potential(&res.measure, k, x);
            let want = (x * x + 1.0f64).powf(-1.0);
            assert!(close(u, want, 1e-9), "x={x}: {u} vs {want}");
        }
        // Off the ball the swept potential is smaller.
        let mut mu = res.measure.clone();
        mu = mu.scaled(1.0);
        assert!(potential(&mu, k, 1.5) < (1.5f64 * 1.5 + 1.0).powf(-1.0));
        let p = RieszParams::robin(3, 1.5).unwrap();
        let res = bal_point_to_ball(&p, 1.0, 1.0).unwrap();
        let u = potential(&res.measure, Kernel::Riesz(1.5), 0.5);
        assert!(close(u, 1.25f64.powf(-0.75), 1e-9));
    }

    #[test]
    fn ball_mass_decreases_with_height() {
        let p = RieszParams::robin(3, 2.0).unwrap();
        let masses: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&h| PointToBall::new(p, h, 1.0).unwrap().mass_formula().unwrap())
            .collect();
        assert!(masses.windows(2).all(|w| w[1] < w[0]));
        assert!(masses[0] < 1.0);
    }

    #[test]
    fn interval_balayage_reproduces_point_potential() {
        let k = Kernel::Riesz(0.5);
        let res = bal_point_to_interval(k, 2.0, -1.0, 1.0).unwrap();
        assert!(close(potential(&res.measure, k, 0.0), 2f64.powf(-0.5), 1e-10));
        for x in [-0.9, 0.3, 0.99] {
            assert!(close(potential(&res.measure, k, x), (2.0 - x).powf(-0.5), 1e-10));
        }
        // Mass from the capacity formula: U^{ω}(t)/F.
        let p = RieszParams::robin(1, 0.5).unwrap();
        let c = sphere_constants(&p, 1.0).unwrap().c_r;
        let om =
            make_density(Support::interval(-1.0, 1.0).unwrap(), &[0.25, 0.25], |x| c * (1.0 - x * x).powf(-0.25), 64)
                .unwrap();
        let want = potential(&om, k, 2.0) / ball_robin_constant(&p, 1.0);
        assert!(close(res.mass_retained, want, 1e-10));
    }

    #[test]
    fn log_interval_balayage_is_exact_on_the_interval() {
        let res = bal_point_to_interval(Kernel::Log, -1.7, -1.0, 1.0).unwrap();
        for x in [-0.99, 0.0, 0.6] {
            assert!(close(potential(&res.measure, Kernel::Log, x), -(x + 1.7f64).ln(), 1e-10));
        }
        assert!(res.mass_retained < 1.0);
    }

    #[test]
    fn point_balayage_mirror_symmetry() {
        let k = Kernel::Riesz(0.3);
        let r = bal_point_to_interval(k, 1.5, -1.0, 1.0).unwrap().measure;
        let l = bal_point_to_interval(k, -1.5, -1.0, 1.0).unwrap().measure;
        for ((x, v), (y, w)) in r.nodal().iter().zip(l.nodal().iter().rev()) {
            assert!((x + y).abs() <= 1e-14);
            assert!((v - w).abs() <= 1e-13 * v.abs());
        }
    }

    #[test]
    fn superposition_of_a_narrow_source() {
        let k = Kernel::Riesz(0.5);
        let eps = 1e-3;
        let src =
            make_density(Support::interval(2.0 - eps, 2.0 + eps).unwrap(), &[0.0, 0.0], |_| 0.5 / eps, 16).unwrap();
        let sup = bal_superpose(k, &src, -1.0, 1.0).unwrap();
        let pt = bal_point_to_interval(k, 2.0, -1.0, 1.0).unwrap();
        assert!(close(sup.mass_retained, pt.mass_retained, 1e-6));
        assert!(close(potential(&sup.measure, k, 0.2), potential(&src, k, 0.2), 1e-9));
    }

    #[test]
    fn spectral_solver_recovers_interval_equilibrium() {
        for k in [Kernel::Riesz(0.5), Kernel::Log] {
            let t = Support::interval(-1.0, 1.0).unwrap();
            let (om, f) = unweighted_equilibrium(k, &t, CollocationOpts::default()).unwrap();
            let want = match k {
                Kernel::Log => 2f64.ln(),
                Kernel::Riesz(s) => ball_robin_constant(&RieszParams::robin(1, s).unwrap(), 1.0),
            };
            assert!(close(f, want, 1e-12));
            assert!(close(om.mass(), 1.0, 1e-12));
        }
    }

    #[test]
    fn log_two_interval_capacity() {
        // cap(K_r) = √(1 − r²)/2 for the logarithmic kernel.
        for r in [0.1, 0.5, 0.8] {
            let (_, f) =
                unweighted_equilibrium(Kernel::Log, &Support::symmetric_two(r).unwrap(), CollocationOpts::default())
                    .unwrap();
            let want = -((1.0 - r * r).sqrt() / 2.0).ln();
            assert!(close(f, want, 1e-10), "r={r}: {f} vs {want}");
        }
    }

    #[test]
    fn two_interval_balayage_of_central_bump() {
        let k = Kernel::Riesz(0.5);
        let w = 0.02;
        let src =
            make_density(Support::interval(-w, w).unwrap(), &[0.0, 0.0], |x| 0.75 / w * (1.0 - (x / w).powi(2)), 16)
                .unwrap();
        let res = bal_to_two_intervals(k, &src, 0.5, CollocationOpts::default()).unwrap();
        assert!(res.residual.unwrap() < 1e-6);
        assert!(res.mass_retained < 1.0 && res.mass_retained > 0.0);
        // Even by construction.
        let m = &res.measure;
        for x in [0.55, 0.7, 0.93] {
            assert!(close(m.density_at(x), m.density_at(-x), 1e-14));
        }
        // Quotient against the arcsine-type equilibrium density decreases in |x|.
        let p = RieszParams::robin(1, 0.5).unwrap();
        let c = sphere_constants(&p, 1.0).unwrap().c_r;
        let xs: Vec<f64> = (0..40).map(|i| 0.51 + 0.48 * i as f64 / 39.0).collect();
        let q: Vec<f64> = xs.iter().map(|&x| m.density_at(x) / (c * (1.0 - x * x).powf(-0.25))).collect();
        assert!(q.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn transitivity_on_nested_intervals() {
        let k = Kernel::Riesz(0.5);
        let once = bal_point_to_interval(k, 1.8, -1.0, 1.0).unwrap().measure;
        let inner = Support::interval(-0.6, 0.4).unwrap();
        let twice = balayage_onto(k, &once, &inner, CollocationOpts::default()).unwrap().measure;
        let direct = bal_point_to_interval(k, 1.8, -0.6, 0.4).unwrap().measure;
        for x in [-0.5, -0.1, 0.2, 0.35] {
            let (a, b) = (twice.density_at(x), direct.density_at(x));
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{x}: {a} vs {b}");
        }
        assert!(close(twice.mass(), direct.mass(), 1e-8));
    }

    #[test]
    fn arcsine_is_its_own_balayage() {
        let src =
            make_density(Support::interval(-1.0, 1.0).unwrap(), &[0.5, 0.5], |x| 1.0 / (PI * (1.0 - x * x).sqrt()), 32)
                .unwrap();
        let res = balayage_onto(Kernel::Log, &src, &Support::interval(-1.0, 1.0).unwrap(), CollocationOpts::default())
            .unwrap();
        assert!(close(res.mass_retained, 1.0, 1e-10));
    }

    #[test]
    fn point_balayage_domination_and_energy() {
        let k = Kernel::Riesz(0.5);
        let res = bal_point_to_interval(k, 1.4, -1.0, 1.0).unwrap();
        for x in [-2.0, -1.3, 1.2, 1.39, 1.41, 3.0] {
            assert!(potential(&res.measure, k, x) <= (x - 1.4f64).abs().powf(-0.5) + 1e-8);
        }
        // Spread the point into a small interval to have finite energy.
        let eps = 0.05;
        let src =
            make_density(Support::interval(1.4 - eps, 1.4 + eps).unwrap(), &[0.0, 0.0], |_| 0.5 / eps, 16).unwrap();
        let bal = bal_superpose(k, &src, -1.0, 1.0).unwrap();
        assert!(crate::potentials::energy(&bal.measure, k) <= crate::potentials::energy(&src, k));
        assert!(bal.mass_retained > 0.0 && bal.mass_retained <= 1.0);
    }

    #[test]
    fn point_balayage_quotient_increases_towards_the_charge() {
        let k = Kernel::Riesz(0.5);
        let m = bal_point_to_interval(k, 1.6, -1.0, 1.0).unwrap().measure;
        let q: Vec<f64> = (0..50)
            .map(|i| -0.98 + 1.96 * i as f64 / 49.0)
            .map(|x| m.density_at(x) * (1.0 - x * x).powf(0.25))
            .collect();
        assert!(q.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn superposition_is_linear() {
        let k = Kernel::Riesz(0.3);
        let eps = 0.01;
        let bump = |c: f64| {
            make_density(Support::interval(c - eps, c + eps).unwrap(), &[0.0, 0.0], |_| 0.25 / eps, 16).unwrap()
        };
        let (l, r) = (bump(-1.5), bump(1.5));
        let bl = bal_superpose(k, &l, -1.0, 1.0).unwrap().measure;
        let br = bal_superpose(k, &r, -1.0, 1.0).unwrap().measure;
        for x in [-0.9, -0.2, 0.4, 0.95] {
            let sym = 0.5 * (br.density_at(x) + br.density_at(-x));
            assert!(close(bl.density_at(x) + br.density_at(x), 2.0 * sym, 1e-10));
        }
        let mass = l.integrate(&[], |t| bal_point_to_interval(k, t, -1.0, 1.0).unwrap().mass_retained);
        assert!(close(bl.mass(), mass, 1e-8));
    }

    #[test]
    fn ball_density_mass_by_quadrature_decreases_with_height() {
        let p = RieszParams::robin(2, 1.5).unwrap();
        let m: Vec<f64> =
            [1.0, 2.0, 4.0, 8.0].iter().map(|&h| bal_point_to_ball(&p, h, 1.0).unwrap().mass_retained).collect();
        assert!(m.windows(2).all(|w| w[1] < w[0]) && m[0] < 1.0 && m[3] > 0.0);
    }
}
