//! Mass-corrected iterated balayage on the segment: starting from the signed
//! equilibrium measure η on [−1, 1], sweep negative parts onto the positive
//! support and restore the mass with multiples of ω_I until the measure is
//! positive on a symmetric pair of intervals K_{r*}.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::balayage::{solve_potential_equation, unweighted_equilibrium, CollocationOpts, PotentialSolution};
use crate::ball_riesz::{critical_charges, SignedBall};
use crate::error::{Error, Result};
use crate::geometry::{MeasureDensity, Piece, Support};
use crate::log_segment;
use crate::potentials::{potential, ExternalField, Kernel};
use crate::problem::EquilibriumResult;
use crate::quadrature::{chebyshev_points, Barycentric};
use crate::roots::brent;
use crate::specfun::{sphere_constants, RieszParams};

const NODES: usize = 64;
const RHS_POINTS: usize = 64;
const CERTIFY_POINTS: usize = 128;

#[derive(Debug, Clone, Copy)]
pub struct IterationOpts {
    pub tol_r: f64,
    pub tol_c: f64,
    pub max_iter: usize,
    pub collocation: CollocationOpts,
    /// Balayage residual allowed for the accepted solve of each step.
    pub step_tol: f64,
    /// Largest allowed |mass_k − m(σ₀)|.
    pub mass_tol: f64,
}

impl Default for IterationOpts {
    fn default() -> Self {
        Self {
            tol_r: 1e-8,
            tol_c: 1e-10,
            max_iter: 200,
            collocation: CollocationOpts { verify_tol: None, ..CollocationOpts::default() },
            step_tol: 1e-5,
            mass_tol: 1e-6,
        }
    }
}

/// Per-step summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub r_k: f64,
    pub c_k: f64,
    pub c_partial: f64,
    pub mass: f64,
    pub residual: f64,
    /// σ′_k/ω′_I increasing in |x| at the nodes.
    pub quotient_increasing: bool,
    /// σ_k ≤ σ_{k−1} at the nodes of σ_k.
    pub below_previous: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub states: Vec<StepRecord>,
    pub converged: bool,
    pub r_star: f64,
    pub c_star: f64,
    /// Robin constant W(I) of the segment.
    pub robin_constant: f64,
    /// Spread of U^{σ_K} − U^{σ₀} over K_{r*}.
    pub potential_identity_spread: f64,
    /// |mean(U^{σ_K} − U^{σ₀}) + c* W(I)|.
    pub potential_identity_offset: f64,
}

#[derive(Serialize)]
struct JsonlRecord {
    k: usize,
    r_k: f64,
    c_k: f64,
    mass: f64,
    residual: f64,
}

impl IterationTrace {
    /// One JSON object per step: {k, r_k, c_k, mass, residual}.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.states {
            let rec = JsonlRecord { k: s.k, r_k: s.r_k, c_k: s.c_k, mass: s.mass, residual: s.residual };
            let line = serde_json::to_string(&rec).map_err(|e| Error::Parse(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// A symmetric measure on K_r (on [−1, 1] when r = 0) with hard edges.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub r: f64,
    pub measure: MeasureDensity,
}

impl Iterate {
    pub fn new(r: f64, measure: MeasureDensity) -> Result<Self> {
        let ok = match measure.pieces().last() {
            Some(p) => p.hi == 1.0 && (p.lo == r || (r == 0.0 && p.lo == -1.0)),
            None => false,
        };
        if !ok || !measure.support().is_symmetric() {
            return Err(Error::Invalid(format!("not a symmetric measure on K_{r}")));
        }
        Ok(Self { r, measure })
    }

    fn right(&self) -> &Piece {
        self.measure.pieces().last().unwrap()
    }
}

/// The kernel-dependent data shared by every step.
#[derive(Debug, Clone, Copy)]
pub struct Iteration {
    pub kernel: Kernel,
    /// ω′_I(x) = c_I (1 − x²)^{−α/2}.
    pub c_i: f64,
    /// W(I).
    pub robin_constant: f64,
    pub opts: IterationOpts,
    ea: f64,
}

impl Iteration {
    pub fn new(kernel: Kernel, opts: IterationOpts) -> Result<Self> {
        let (c_i, ea) = match kernel {
            Kernel::Log => (1.0 / std::f64::consts::PI, 0.5),
            Kernel::Riesz(s) if s > 0.0 && s < 1.0 => {
                let p = RieszParams::robin(1, s)?;
                (sphere_constants(&p, 1.0)?.c_r, 0.5 * p.alpha)
            }
            Kernel::Riesz(s) => {
                return Err(Error::Regime { regime: "segment", detail: format!("need 0 <= s < 1, got {s}") })
            }
        };
        let interval = Support::interval(-1.0, 1.0)?;
        let (_, robin_constant) = unweighted_equilibrium(kernel, &interval, opts.collocation)?;
        Ok(Self { kernel, c_i, robin_constant, opts, ea })
    }

    pub fn omega_density(&self, x: f64) -> f64 {
        self.c_i * ((1.0 - x) * (1.0 + x)).powf(-self.ea)
    }

    /// σ′/ω′_I at x in the right component.
    pub fn quotient(&self, sigma: &Iterate, x: f64) -> f64 {
        let p = sigma.right();
        p.smooth_at(x) * ((x - p.lo) / (1.0 + x)).powf(-self.ea) / self.c_i
    }

    /// c* = lim_{x→1} σ′/ω′_I.
    pub fn c_max(&self, sigma: &Iterate) -> f64 {
        let p = sigma.right();
        p.smooth_at(1.0) * (0.5 * (1.0 - p.lo)).powf(-self.ea) / self.c_i
    }

    /// t_c: the point where σ′/ω′_I crosses c, or None if σ − cω_I ≥ 0.
    pub fn crossing(&self, sigma: &Iterate, c: f64) -> Result<Option<f64>> {
        let start = if sigma.r == 0.0 {
            self.quotient(sigma, 0.0)
        } else {
            // Sign of the hard-edge coefficient decides the limit at r⁺.
            let g = sigma.right().smooth_at(sigma.r);
            if g == 0.0 {
                -c
            } else {
                g.signum() * f64::INFINITY
            }
        };
        if start >= c {
            return Ok(None);
        }
        let cmax = self.c_max(sigma);
        if !(c < cmax) {
            return Err(Error::Invalid(format!("c = {c} is not below c* = {cmax}")));
        }
        let f = |t: f64| self.quotient(sigma, t) - c;
        let mut a = sigma.r;
        let mut step = 1e-12;
        while sigma.r > 0.0 && !(f(a) < 0.0 && f(a).is_finite()) {
            a = sigma.r + step;
            step *= 2.0;
            if a >= 1.0 {
                return Err(Error::NoRoot("quotient never falls below c".into()));
            }
        }
        Ok(Some(brent(f, a, 1.0, 1e-15, 300)?))
    }

    /// Interpolant of U^σ over the right component of σ.
    fn potential_interpolant(&self, sigma: &Iterate) -> impl Fn(f64) -> f64 + Sync {
        let nodes = chebyshev_points(RHS_POINTS, sigma.r, 1.0);
        let values: Vec<f64> = nodes.iter().map(|&x| potential(&sigma.measure, self.kernel, x)).collect();
        let bary = Barycentric::new(&nodes);
        move |x: f64| bary.eval(&values, x)
    }

    fn solve_on(
        &self,
        t: f64,
        rhs: &(dyn Fn(f64) -> f64 + Sync),
        c: f64,
        verify: Option<f64>,
    ) -> Result<PotentialSolution> {
        let f = self.robin_constant;
        let opts = CollocationOpts { verify_tol: verify, ..self.opts.collocation };
        solve_potential_equation(self.kernel, &Support::symmetric_two(t)?, |x| rhs(x) - c * f, true, opts)
    }

    /// J(σ − cω_I) = Bal(σ − cω_I, K_{t_c}), by solving U^J = U^σ − c W(I)
    /// on K_{t_c}.
    pub fn j_map(&self, sigma: &Iterate, c: f64) -> Result<(Iterate, Option<f64>)> {
        let rhs = self.potential_interpolant(sigma);
        self.j_map_with(sigma, c, &rhs, Some(self.opts.step_tol))
    }

    fn j_map_with(
        &self,
        sigma: &Iterate,
        c: f64,
        rhs: &(dyn Fn(f64) -> f64 + Sync),
        verify: Option<f64>,
    ) -> Result<(Iterate, Option<f64>)> {
        match self.crossing(sigma, c)? {
            None if c == 0.0 => Ok((sigma.clone(), Some(0.0))),
            None => Err(Error::Invalid("sigma - c omega has no negative part".into())),
            Some(t) => {
                let sol = self.solve_on(t, rhs, c, verify)?;
                Ok((Iterate::new(t, sol.measure)?, sol.residual))
            }
        }
    }

    /// c_σ with m(J(σ − c_σ ω_I)) = m_target, by Brent's method on a
    /// bracket [0, c_hi] with c_hi moved towards c* until the mass drops
    /// below the target.
    pub fn find_c_sigma(&self, sigma: &Iterate, m_target: f64) -> Result<f64> {
        let rhs = self.potential_interpolant(sigma);
        self.find_c_with(sigma, m_target, &rhs)
    }

    fn find_c_with(&self, sigma: &Iterate, m_target: f64, rhs: &(dyn Fn(f64) -> f64 + Sync)) -> Result<f64> {
        let mass = |c: f64| -> f64 {
            self.j_map_with(sigma, c, rhs, None).map(|(j, _)| j.measure.mass() - m_target).unwrap_or(f64::NAN)
        };
        let f0 = mass(0.0);
        if !f0.is_finite() {
            return Err(Error::NonConvergence("balayage of the negative part failed".into()));
        }
        if f0 <= 1e-13 * m_target {
            if f0 < -1e-9 * m_target {
                return Err(Error::NoRoot(format!("F(0) - m = {f0} < 0")));
            }
            return Ok(0.0);
        }
        let cmax = self.c_max(sigma);
        let mut hi = 0.5 * cmax;
        let mut tries = 0;
        while !(mass(hi) < 0.0) {
            hi = 0.5 * (hi + cmax);
            tries += 1;
            if tries > 60 {
                return Err(Error::NoRoot("F(c) stays above the target mass".into()));
            }
        }
        brent(mass, 0.0, hi, 1e-15 * cmax.max(1.0), 200)
    }

    /// Run σ_{k+1} = J(σ_k − c_k ω_I) from σ₀.
    pub fn iterate(&self, sigma0: Iterate) -> Result<(Iterate, IterationTrace)> {
        let m = sigma0.measure.mass();
        let mut trace = IterationTrace { robin_constant: self.robin_constant, ..Default::default() };
        let mut sigma = sigma0.clone();
        let mut c_partial = 0.0;
        for k in 0..self.opts.max_iter {
            let rhs = self.potential_interpolant(&sigma);
            let c = self.find_c_with(&sigma, m, &rhs)?;
            let (next, residual) = self.j_map_with(&sigma, c, &rhs, Some(self.opts.step_tol))?;
            let mass = next.measure.mass();
            if (mass - m).abs() > self.opts.mass_tol {
                return Err(Error::Invariant(format!("step {k}: mass {mass} drifted from {m}")));
            }
            if next.r < sigma.r {
                return Err(Error::Invariant(format!("step {k}: inner radius decreased to {}", next.r)));
            }
            c_partial += c;
            let rec = StepRecord {
                k,
                r_k: next.r,
                c_k: c,
                c_partial,
                mass,
                residual: residual.unwrap_or(0.0),
                quotient_increasing: self.quotient_increasing(&next),
                below_previous: below(&next, &sigma),
            };
            log::debug!("step {k}: r = {:.12}, c = {:.3e}, mass = {:.12}", rec.r_k, c, mass);
            trace.states.push(rec);
            let dr = next.r - sigma.r;
            sigma = next;
            if c <= self.opts.tol_c && dr < self.opts.tol_r {
                trace.converged = true;
                break;
            }
        }
        trace.r_star = sigma.r;
        trace.c_star = c_partial;
        self.potential_identity(&sigma0, &sigma, &mut trace);
        if !trace.converged {
            return Err(Error::IterationLimit(self.opts.max_iter));
        }
        Ok((sigma, trace))
    }

    fn quotient_increasing(&self, sigma: &Iterate) -> bool {
        let p = sigma.right();
        let q: Vec<f64> = p.nodes.iter().filter(|&&x| x >= 0.0).map(|&x| self.quotient(sigma, x)).collect();
        let scale = q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        q.windows(2).all(|w| w[1] >= w[0] - 1e-10 * scale)
    }

    fn potential_identity(&self, sigma0: &Iterate, last: &Iterate, trace: &mut IterationTrace) {
        let xs: Vec<f64> = chebyshev_points(24, last.r, 1.0);
        let diffs: Vec<f64> = xs
            .iter()
            .map(|&x| potential(&last.measure, self.kernel, x) - potential(&sigma0.measure, self.kernel, x))
            .collect();
        let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        trace.potential_identity_spread = hi - lo;
        trace.potential_identity_offset = (mean + trace.c_star * self.robin_constant).abs();
    }

    /// Replace the hard inner edge of a converged iterate by a soft one:
    /// remove the residual edge coefficient δ and renormalize. Returns the
    /// measure and δ relative to the largest smooth-factor value.
    pub fn soft_refit(&self, sigma: &Iterate, mass: f64) -> Result<(MeasureDensity, f64)> {
        let r = sigma.r;
        if r == 0.0 {
            return Ok((sigma.measure.clone(), 0.0));
        }
        let p = sigma.right().clone();
        let ea = self.ea;
        let delta = p.smooth_at(r);
        let gmax = p.smooth_values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let g = |x: f64| (p.smooth_at(x) - delta * (1.0 - x) / (1.0 - r)) / (x - r);
        let n = p.nodes.len().max(NODES);
        let right = Piece::from_smooth(r, 1.0, ea - 1.0, ea, n, g)?;
        let left = Piece::from_smooth(-1.0, -r, ea, ea - 1.0, n, |x| g(-x))?;
        let mu = MeasureDensity::from_pieces(
            Support::symmetric_two(r)?,
            vec![ea, ea - 1.0, ea - 1.0, ea],
            vec![left, right],
        )?;
        let m = mu.mass();
        Ok((mu.scaled(mass / m), delta.abs() / gmax))
    }
}

/// σ_k ≤ σ_{k−1} at the nodes of σ_k (tolerance relative to the size of
/// the values compared).
fn below(next: &Iterate, prev: &Iterate) -> bool {
    next.measure.nodal().iter().all(|&(x, v)| {
        let w = prev.measure.density_at(x);
        v <= w + 1e-7 * (1.0 + w.abs())
    })
}

/// Result of the segment solver.
#[derive(Debug, Clone)]
pub struct SegmentResult {
    pub gamma_plus: f64,
    pub equilibrium: EquilibriumResult,
    pub trace: IterationTrace,
    /// The signed measure η_{Q,I} the iteration started from.
    pub eta: MeasureDensity,
    /// The last iterate before the soft-edge refit.
    pub last_iterate: Iterate,
    /// |edge coefficient| of the last iterate at r*, relative to its largest
    /// smooth-factor value.
    pub edge_ratio: f64,
    /// m₁ = ‖Bal(δ_y, I)‖ (Riesz kernels).
    pub bal_mass: Option<f64>,
}

/// The signed equilibrium measure η_{Q,I} for a charge γ at height y.
pub fn segment_eta(kernel: Kernel, gamma: f64, y: f64) -> Result<(MeasureDensity, Option<f64>)> {
    match kernel {
        Kernel::Log => Ok((log_segment::eta_measure(1.0, y, gamma, NODES)?, None)),
        Kernel::Riesz(s) => {
            let p = RieszParams::robin(1, s)?;
            let q = ExternalField::new(gamma, y, kernel)?;
            let eta = SignedBall::new(&p, &q, 1.0)?;
            Ok((eta.measure(false, NODES)?, Some(eta.bal_mass)))
        }
    }
}

/// Critical repulsive charge γ₊ of the segment.
pub fn segment_gamma_plus(kernel: Kernel, y: f64) -> Result<f64> {
    match kernel {
        Kernel::Log => Ok(log_segment::gamma_plus(y)),
        Kernel::Riesz(s) => Ok(critical_charges(&RieszParams::robin(1, s)?, y)?.1),
    }
}

/// Equilibrium on [−1, 1] for s ∈ [0, 1) (s = 0 is the logarithmic kernel)
/// and a repulsive charge γ ≥ 0 at height y, through iterated balayage.
pub fn solve_segment_riesz(s: f64, gamma: f64, y: f64, opts: &IterationOpts) -> Result<SegmentResult> {
    let kernel = if s == 0.0 { Kernel::Log } else { Kernel::Riesz(s) };
    if !(gamma >= 0.0) {
        return Err(Error::Regime { regime: "repulsive", detail: format!("need gamma >= 0, got {gamma}") });
    }
    let it = Iteration::new(kernel, *opts)?;
    let gamma_plus = segment_gamma_plus(kernel, y)?;
    let (eta, bal_mass) = segment_eta(kernel, gamma, y)?;
    let sigma0 = Iterate::new(0.0, eta.clone())?;
    let (last, trace) = it.iterate(sigma0)?;
    let (measure, edge_ratio) = it.soft_refit(&last, eta.mass())?;
    let q = ExternalField::new(gamma, y, kernel)?;
    let equilibrium = EquilibriumResult::certify(measure, 0.0, &q, None, CERTIFY_POINTS);
    Ok(SegmentResult { gamma_plus, equilibrium, trace, eta, last_iterate: last, edge_ratio, bal_mass })
}

/// Value of a density at `x0` from the right by Richardson extrapolation of
/// samples at x0 + h, x0 + h/2, x0 + h/4.
pub fn richardson_edge_value(mu: &MeasureDensity, x0: f64, h: f64) -> f64 {
    let f = |t: f64| mu.density_at(x0 + t);
    let (a, b, c) = (f(h), f(0.5 * h), f(0.25 * h));
    let r1 = 2.0 * b - a;
    let r2 = 2.0 * c - b;
    (4.0 * r2 - r1) / 3.0
}
