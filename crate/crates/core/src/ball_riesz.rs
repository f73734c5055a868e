//! Riesz equilibrium on the unit ball in the Robin regime, for a charge γ
//! at height h above the centre.

use serde::{Deserialize, Serialize};

use crate::balayage::{PointToBall, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::geometry::{MeasureDensity, Piece, Support};
use crate::iterated_balayage::{solve_segment_riesz, IterationOpts};
use crate::potentials::{ExternalField, Kernel};
use crate::problem::EquilibriumResult;
use crate::roots::brent;
use crate::specfun::{ball_robin_constant, gamma_fn, gauss_2f1, sphere_constants, RieszParams};

/// Grid size used to certify closed-form ball measures.
pub const CERTIFY_POINTS: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallRegime {
    AttractiveShrunk,
    AttractiveFull,
    RepulsiveFull,
    RepulsiveShellConjectured,
}

#[derive(Debug, Clone)]
pub struct BallRegimeResult {
    pub regime: BallRegime,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub r_gamma: Option<f64>,
    pub equilibrium: Option<EquilibriumResult>,
    /// η_{Q,1} on the closed ball, kept when no certified measure exists.
    pub signed: Option<MeasureDensity>,
    /// Density of η_{Q,1} at the origin.
    pub eta_at_origin: f64,
}

fn check(p: &RieszParams, q: &ExternalField) -> Result<()> {
    if !p.is_robin() {
        return Err(Error::Regime { regime: "Robin", detail: format!("d = {}, s = {}", p.d, p.s) });
    }
    if q.kernel != Kernel::Riesz(p.s) {
        return Err(Error::Invalid(format!("field kernel {:?} does not match s = {}", q.kernel, p.s)));
    }
    Ok(())
}

/// The signed equilibrium measure η_{Q,R} = −γ Bal(δ_y, B_R) + (1 + γ m_R) ω_R,
/// through its smooth factor G with η′ = G(r)(R² − r²)^{−α/2}.
#[derive(Debug, Clone, Copy)]
pub struct SignedBall {
    p: RieszParams,
    gamma: f64,
    radius: f64,
    bal: PointToBall,
    /// m_R.
    pub bal_mass: f64,
    c_r: f64,
}

impl SignedBall {
    pub fn new(p: &RieszParams, q: &ExternalField, radius: f64) -> Result<Self> {
        check(p, q)?;
        let bal = PointToBall::new(*p, q.height, radius)?;
        Ok(Self {
            p: *p,
            gamma: q.gamma,
            radius,
            bal,
            bal_mass: bal.mass_formula()?,
            c_r: sphere_constants(p, radius)?.c_r,
        })
    }

    pub fn smooth(&self, r: f64) -> f64 {
        -self.gamma * self.bal.smooth_factor(r) + (1.0 + self.gamma * self.bal_mass) * self.c_r
    }

    pub fn density(&self, r: f64) -> f64 {
        let eps = (self.radius - r) * (self.radius + r);
        self.smooth(r) * eps.powf(-0.5 * self.p.alpha)
    }

    /// H(R): the boundary coefficient lim (R² − r²)^{α/2} η′(r).
    pub fn boundary_coefficient(&self) -> Result<f64> {
        Ok(-self.gamma * self.bal.boundary_coefficient()? + (1.0 + self.gamma * self.bal_mass) * self.c_r)
    }

    /// Constant value of U^η + Q on B_R.
    pub fn frostman_constant(&self) -> f64 {
        (1.0 + self.gamma * self.bal_mass) * ball_robin_constant(&self.p, self.radius)
    }

    /// η as a density. With `soft` the edge coefficient is taken to vanish
    /// and the density is stored with exponent α/2 − 1 at R.
    pub fn measure(&self, soft: bool, n: usize) -> Result<MeasureDensity> {
        let rr = self.radius;
        let ea = 0.5 * self.p.alpha;
        let e = if soft { ea - 1.0 } else { ea };
        if self.p.d == 1 {
            let piece =
                Piece::from_smooth(-rr, rr, e, e, n, |x| self.smooth(x.abs()) * ((rr - x) * (rr + x)).powf(e - ea))?;
            MeasureDensity::from_pieces(Support::interval(-rr, rr)?, vec![e, e], vec![piece])
        } else {
            let piece = Piece::from_smooth(0.0, rr, 0.0, e, n, |r| {
                self.smooth(r) * (rr + r).powf(-ea) * (rr - r).powf(e - ea)
            })?;
            MeasureDensity::from_pieces(Support::ball(rr, self.p.d)?, vec![e], vec![piece])
        }
    }
}

/// H(R) for the field q.
#[allow(non_snake_case)]
pub fn H_of_R(p: &RieszParams, q: &ExternalField, radius: f64) -> Result<f64> {
    SignedBall::new(p, q, radius)?.boundary_coefficient()
}

/// Left side of the support equation, z^{s/2+1} ₂F₁(1+s/2, 1+d/2; 2+s/2; −z).
fn support_lhs(p: &RieszParams, z: f64) -> Result<f64> {
    let s = p.s;
    Ok(z.powf(0.5 * s + 1.0) * gauss_2f1(1.0 + 0.5 * s, 1.0 + 0.5 * p.dim(), 2.0 + 0.5 * s, -z)?)
}

/// R_γ from the hypergeometric support equation, cross-checked against the
/// root of H.
pub fn solve_r_gamma(p: &RieszParams, q: &ExternalField) -> Result<f64> {
    check(p, q)?;
    let g = q.gamma;
    if !(g < -1.0) {
        return Err(Error::NoRoot(format!("the support equation needs gamma < -1, got {g}")));
    }
    let a = p.alpha;
    let rhs = -gamma_fn(0.5 * a)? * gamma_fn(2.0 + 0.5 * p.s)? / (g * gamma_fn(1.0 + 0.5 * p.dim())?);
    // The left side increases from 0; search in log z.
    let f = |lz: f64| support_lhs(p, lz.exp()).map(|v| v - rhs).unwrap_or(f64::NAN);
    let (mut lo, mut hi) = (-20.0f64, 0.0f64);
    while f(lo) > 0.0 && lo > -700.0 {
        lo -= 20.0;
    }
    while f(hi) < 0.0 {
        hi += 2.0;
        if hi > 60.0 {
            return Err(Error::NoRoot(format!("support equation has no root below z = e^60 for gamma = {g}")));
        }
    }
    let lz = brent(f, lo, hi, 1e-15, 200)?;
    let r = q.height * (0.5 * lz).exp();
    let rh = r_gamma_from_h(p, q, r)?;
    if (rh - r).abs() > 1e-8 * r.max(1e-300) {
        return Err(Error::RootMismatch(format!("support equation gives {r}, root of H gives {rh}")));
    }
    Ok(r)
}

/// Root of H near `guess`, bracketed independently by geometric scanning.
fn r_gamma_from_h(p: &RieszParams, q: &ExternalField, guess: f64) -> Result<f64> {
    let h = |r: f64| H_of_R(p, q, r).unwrap_or(f64::NAN);
    let (mut lo, mut hi) = (guess / 1.25, guess * 1.25);
    let mut tries = 0;
    while !(h(lo) > 0.0) {
        lo /= 1.25;
        tries += 1;
        if tries > 200 {
            return Err(Error::NoRoot("H stays non-positive".into()));
        }
    }
    while !(h(hi) < 0.0) {
        hi *= 1.25;
        tries += 1;
        if tries > 200 {
            return Err(Error::NoRoot("H stays non-negative".into()));
        }
    }
    brent(h, lo, hi, 1e-14 * guess, 200)
}

/// Root of H on [1e−6 h, 10³ h] by log-scaled scanning and Brent, without
/// using the support equation.
pub fn root_of_h(p: &RieszParams, q: &ExternalField) -> Result<f64> {
    check(p, q)?;
    let h = |r: f64| H_of_R(p, q, r).unwrap_or(f64::NAN);
    let mut a = 1e-6 * q.height;
    let mut ha = h(a);
    while a < 1e3 * q.height {
        let b = a * 1.5;
        let hb = h(b);
        if ha > 0.0 && hb <= 0.0 {
            return brent(h, a, b, 1e-15 * b, 200);
        }
        a = b;
        ha = hb;
    }
    Err(Error::NoRoot(format!("H has no sign change for gamma = {}", q.gamma)))
}

/// Critical charges (γ₋, γ₊) of the unit ball for a charge at `height`.
pub fn critical_charges(p: &RieszParams, height: f64) -> Result<(f64, f64)> {
    let bal = PointToBall::new(*p, height, 1.0)?;
    let c1 = sphere_constants(p, 1.0)?.c_r;
    let m1 = bal.mass_formula()?;
    let lam = bal.boundary_coefficient()?;
    let at0 = bal.density(0.0);
    Ok((c1 / (lam - m1 * c1), c1 / (at0 - m1 * c1)))
}

/// Equilibrium measure of the unit ball in the field q.
pub fn solve_ball(p: &RieszParams, q: &ExternalField) -> Result<BallRegimeResult> {
    check(p, q)?;
    let (gm, gp) = critical_charges(p, q.height)?;
    let full = SignedBall::new(p, q, 1.0)?;
    let eta_at_origin = full.density(0.0);
    let g = q.gamma;
    let mut out = BallRegimeResult {
        regime: BallRegime::AttractiveFull,
        gamma_minus: gm,
        gamma_plus: gp,
        r_gamma: None,
        equilibrium: None,
        signed: None,
        eta_at_origin,
    };
    if g <= gm {
        let r = if g == gm { 1.0 } else { solve_r_gamma(p, q)?.min(1.0) };
        let eta = SignedBall::new(p, q, r)?;
        let mu = eta.measure(true, DEFAULT_NODES)?;
        out.regime = BallRegime::AttractiveShrunk;
        out.r_gamma = Some(r);
        out.equilibrium = Some(EquilibriumResult::certify(mu, 0.0, q, Some(eta.frostman_constant()), CERTIFY_POINTS));
    } else if g <= gp {
        out.regime = if g < 0.0 { BallRegime::AttractiveFull } else { BallRegime::RepulsiveFull };
        out.r_gamma = Some(1.0);
        let mu = full.measure(false, DEFAULT_NODES)?;
        out.equilibrium = Some(EquilibriumResult::certify(mu, 0.0, q, Some(full.frostman_constant()), CERTIFY_POINTS));
    } else {
        out.regime = BallRegime::RepulsiveShellConjectured;
        out.signed = Some(full.measure(false, DEFAULT_NODES)?);
        if p.d == 1 {
            let seg = solve_segment_riesz(p.s, g, q.height, &IterationOpts::default())?;
            out.equilibrium = Some(seg.equilibrium);
        }
    }
    Ok(out)
}
