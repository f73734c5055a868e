//! Gamma, Beta, Gauss hypergeometric function and the closed-form constants
//! of the Riesz equilibrium problem on balls.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Largest |z| accepted by [`gauss_2f1`].
pub const Z_CAP: f64 = 1e12;

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// sin(πx) with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).floor();
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r == 0.5 {
        return 1.0;
    }
    if r == 1.5 {
        return -1.0;
    }
    (PI * r).sin()
}

fn lanczos_sum(x: f64) -> f64 {
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    acc
}

/// Γ(x) for real x away from the poles.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("gamma of {x}")));
    }
    if is_nonpositive_integer(x) {
        return Err(Error::Pole(x));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return PI / (sin_pi(x) * gamma_unchecked(1.0 - x));
    }
    if x == x.round() && x <= 171.0 {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return f;
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * ((z + 0.5) * t.ln() - t).exp() * lanczos_sum(z)
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma of {x}")));
    }
    if x < 0.5 {
        return Ok((PI / sin_pi(x)).ln() - ln_gamma(1.0 - x)?);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln())
}

/// 1/Γ(x), zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        0.0
    } else {
        1.0 / gamma_unchecked(x)
    }
}

/// B(x, y) = Γ(x)Γ(y)/Γ(x+y).
pub fn beta_fn(x: f64, y: f64) -> Result<f64> {
    if x > 0.0 && y > 0.0 && x + y > 150.0 {
        return Ok((ln_gamma(x)? + ln_gamma(y)? - ln_gamma(x + y)?).exp());
    }
    Ok(gamma_fn(x)? * gamma_fn(y)? * rgamma(x + y))
}

/// Power series of ₂F₁; caller guarantees |z| < 1.
pub(crate) fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..200_000u32 {
        let nf = n as f64;
        let ratio = (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        term *= ratio;
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        // Once the term ratio is below 1 in modulus the tail is bounded by a
        // geometric series.
        let r = ratio.abs();
        if r < 1.0 && term.abs() * r / (1.0 - r) <= 1e-17 * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence(format!("2F1({a}, {b}; {c}; {z}) series")))
}

/// F(a, b; c; w) for w close to 1 through the connection formula in 1 − w.
fn hyp2f1_near_one(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    let d = c - a - b;
    if (d - d.round()).abs() < 1e-3 {
        if w <= 0.995 {
            return hyp2f1_series(a, b, c, w);
        }
        return Err(Error::NonConvergence(format!("2F1({a}, {b}; {c}; {w}) with near-integer c-a-b")));
    }
    let v = 1.0 - w;
    let gc = gamma_unchecked(c);
    let t1 = gc * gamma_unchecked(d) * rgamma(c - a) * rgamma(c - b);
    let t2 = gc * gamma_unchecked(-d) * rgamma(a) * rgamma(b);
    let mut out = 0.0;
    if t1 != 0.0 {
        out += t1 * hyp2f1_series(a, b, 1.0 - d, v)?;
    }
    if t2 != 0.0 {
        out += t2 * v.powf(d) * hyp2f1_series(c - a, c - b, 1.0 + d, v)?;
    }
    Ok(out)
}

/// Digamma function ψ(x) for x > 0.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 16.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    let tail = x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 * (1.0 / 240.0 - x2 / 132.0))));
    acc + x.ln() - 0.5 / x - tail
}

/// ₂F₁(a, b; c; 1 − w) for 0 ≤ w ≤ 1/2 and a, b, c > 0, including the
/// logarithmic case c = a + b. Infinite when the sum diverges at w = 0.
pub(crate) fn hyp2f1_unit(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    let d = c - a - b;
    if d.abs() < 1e-9 {
        if w == 0.0 {
            return Ok(f64::INFINITY);
        }
        let lw = w.ln();
        let mut coef = 1.0;
        let (mut pa, mut pb, mut p1) = (digamma(a), digamma(b), digamma(1.0));
        let mut sum = 0.0;
        for n in 0..10_000u32 {
            let nf = n as f64;
            let term = coef * (2.0 * p1 - pa - pb - lw);
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() && n > 2 {
                return Ok(sum * gamma_unchecked(c) * rgamma(a) * rgamma(b));
            }
            coef *= (a + nf) * (b + nf) / ((nf + 1.0) * (nf + 1.0)) * w;
            pa += 1.0 / (a + nf);
            pb += 1.0 / (b + nf);
            p1 += 1.0 / (nf + 1.0);
        }
        return Err(Error::NonConvergence(format!("2F1({a}, {b}; {c}; 1-{w})")));
    }
    if (d - d.round()).abs() < 1e-9 {
        return Err(Error::NonConvergence(format!("2F1({a}, {b}; {c}; 1-{w}) with integer c-a-b")));
    }
    if w == 0.0 {
        return Ok(if d > 0.0 {
            gamma_unchecked(c) * gamma_unchecked(d) * rgamma(c - a) * rgamma(c - b)
        } else {
            f64::INFINITY
        });
    }
    let gc = gamma_unchecked(c);
    // Γ(±d) through Γ(1 ± d)/(±d) keeps full accuracy for small d.
    let t1 = gc * gamma_unchecked(1.0 + d) / d * rgamma(c - a) * rgamma(c - b);
    let t2 = -gc * gamma_unchecked(1.0 - d) / d * rgamma(a) * rgamma(b);
    let mut out = 0.0;
    if t1 != 0.0 {
        out += t1 * hyp2f1_series(a, b, 1.0 - d, w)?;
    }
    if t2 != 0.0 {
        out += t2 * w.powf(d) * hyp2f1_series(c - a, c - b, 1.0 + d, w)?;
    }
    Ok(out)
}

/// Gauss hypergeometric function ₂F₁(a, b; c; z) on the negative real axis.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
        return Err(Error::Domain("non-finite 2F1 argument".into()));
    }
    if is_nonpositive_integer(c) {
        return Err(Error::Domain(format!("2F1 with c = {c}")));
    }
    if z > 0.0 || z < -Z_CAP {
        return Err(Error::Domain(format!("2F1 supports -{Z_CAP:e} <= z <= 0, got {z}")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z > -0.5 {
        return hyp2f1_series(a, b, c, z);
    }
    // Pfaff: F(a,b;c;z) = (1-z)^{-a} F(a, c-b; c; z/(z-1)).
    let w = z / (z - 1.0);
    let pre = (1.0 - z).powf(-a);
    let inner = if w <= 0.75 { hyp2f1_series(a, c - b, c, w)? } else { hyp2f1_near_one(a, c - b, c, w)? };
    Ok(pre * inner)
}

/// Surface area of the unit n-sphere S^n ⊂ R^{n+1}; A_0 = 2.
pub fn sphere_area(n: usize) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) * rgamma(h)
}

/// Dimension d, Riesz exponent s and α = d − s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszParams {
    pub d: usize,
    pub s: f64,
    pub alpha: f64,
}

impl RieszParams {
    pub fn new(d: usize, s: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Invalid("dimension must be at least 1".into()));
        }
        if !s.is_finite() || s < 0.0 || s >= d as f64 {
            return Err(Error::Invalid(format!("need 0 <= s < d, got s = {s}, d = {d}")));
        }
        Ok(Self { d, s, alpha: d as f64 - s })
    }

    /// Parameters in the Robin regime max(0, d−2) < s < d.
    pub fn robin(d: usize, s: f64) -> Result<Self> {
        let p = Self::new(d, s)?;
        if !p.is_robin() {
            return Err(Error::Regime {
                regime: "Robin",
                detail: format!("need max(0, d-2) < s < d, got d = {d}, s = {s}"),
            });
        }
        Ok(p)
    }

    /// The logarithmic kernel on the line (s = 0, α = 1).
    pub fn log_segment() -> Self {
        Self { d: 1, s: 0.0, alpha: 1.0 }
    }

    pub fn is_robin(&self) -> bool {
        let lo = (self.d as f64 - 2.0).max(0.0);
        self.s > lo && self.s < self.d as f64
    }

    pub fn dim(&self) -> f64 {
        self.d as f64
    }
}

/// Closed-form constants attached to the ball B_R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereConstants {
    /// Surface area of S^d.
    pub a_d: f64,
    /// Riesz s-energy of the normalized measure on S^d.
    pub w_sd: f64,
    /// Equilibrium density constant of B_R.
    pub c_r: f64,
    /// Boundary coefficient of the point-mass balayage.
    pub k1_sd: f64,
}

fn sphere_energy(p: &RieszParams) -> f64 {
    let (d, s) = (p.dim(), p.s);
    match p.d {
        1 => 2f64.powf(-s) * PI.sqrt().recip() * gamma_unchecked((1.0 - s) / 2.0) * rgamma(1.0 - s / 2.0),
        2 => 2f64.powf(1.0 - s) / (2.0 - s),
        _ => {
            gamma_unchecked((d + 1.0) / 2.0)
                * gamma_unchecked(p.alpha)
                * rgamma((p.alpha + 1.0) / 2.0)
                * rgamma(d - s / 2.0)
        }
    }
}

type ConstKey = (usize, u64, u64);

fn constants_cache() -> &'static Mutex<HashMap<ConstKey, SphereConstants>> {
    static CACHE: OnceLock<Mutex<HashMap<ConstKey, SphereConstants>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn sphere_constants(p: &RieszParams, radius: f64) -> Result<SphereConstants> {
    if !p.is_robin() {
        return Err(Error::Regime { regime: "Robin", detail: format!("d = {}, s = {}", p.d, p.s) });
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Invalid(format!("radius must be positive, got {radius}")));
    }
    let key = (p.d, p.s.to_bits(), radius.to_bits());
    if let Some(c) = constants_cache().lock().unwrap().get(&key) {
        return Ok(*c);
    }
    let (d, s, a) = (p.dim(), p.s, p.alpha);
    let a_d = sphere_area(p.d);
    let w_sd = sphere_energy(p);
    let c_r = PI.powf(-d / 2.0) * gamma_unchecked(1.0 + s / 2.0) * rgamma(1.0 - a / 2.0) / radius.powf(s);
    let k1_sd = 2f64.powf(a) * sin_pi(a / 2.0) * beta_fn(d / 2.0, a / 2.0)? / (PI * a_d * w_sd);
    let out = SphereConstants { a_d, w_sd, c_r, k1_sd };
    constants_cache().lock().unwrap().insert(key, out);
    Ok(out)
}

/// Robin constant F_R = W(B_R) of the ball for the Riesz kernel.
pub fn ball_robin_constant(p: &RieszParams, radius: f64) -> f64 {
    radius.powf(-p.s) * gamma_unchecked(1.0 + p.s / 2.0) * gamma_unchecked(p.alpha / 2.0) * rgamma(p.dim() / 2.0)
}

/// Robin constant of [−R, R] for the logarithmic kernel.
pub fn log_interval_robin_constant(radius: f64) -> f64 {
    (2.0 / radius).ln()
}

/// Radial profile of the equilibrium density ω_R of B_R.
pub fn ball_equilibrium_density(p: &RieszParams, radius: f64, r: f64) -> Result<f64> {
    let c = sphere_constants(p, radius)?;
    Ok(c.c_r * (radius * radius - r * r).powf(-p.alpha / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn digamma_values() {
        // ψ(1) = −γ_E, ψ(1/2) = −γ_E − 2 ln 2.
        let euler = 0.57721566490153286;
        assert!((digamma(1.0) + euler).abs() < 1e-15);
        assert!((digamma(0.5) + euler + 2.0 * std::f64::consts::LN_2).abs() < 1e-14);
        assert!((digamma(12.5) - 2.4851956512749120).abs() < 1e-14);
    }

    #[test]
    fn unit_argument_hypergeometric() {
        // Complete elliptic integral: F(1/2, 1/2; 1; 1 − w) = (2/π) K(1 − w).
        let v = hyp2f1_unit(0.5, 0.5, 1.0, 0.1).unwrap();
        assert!((v - 1.6412644143423708).abs() < 1e-14);
        // Connection formula branch against the direct series.
        let direct = hyp2f1_series(0.4, 0.5, 1.0, 0.7).unwrap();
        assert!((hyp2f1_unit(0.4, 0.5, 1.0, 0.3).unwrap() - direct).abs() < 1e-13);
        assert!(hyp2f1_unit(0.5, 0.5, 1.0, 0.0).unwrap().is_infinite());
    }
    #[test]
    fn gamma_trivial_values() {
        assert_eq!(gamma_fn(1.0).unwrap(), 1.0);
        assert!(rel(gamma_fn(0.5).unwrap(), PI.sqrt()) < 1e-14);
        assert!(rel(gamma_fn(5.0).unwrap(), 24.0) < 1e-15);
        assert!(matches!(gamma_fn(0.0), Err(Error::Pole(_))));
        assert!(matches!(gamma_fn(-3.0), Err(Error::Pole(_))));
    }

    #[test]
    fn gamma_against_high_precision_values() {
        // mpmath, 30 digits.
        let cases = [
            (0.1, 9.513_507_698_668_731_3),
            (1.25, 0.906_402_477_055_477_08),
            (0.75, 1.225_416_702_465_177_6),
            (7.3, 1_271.423_633_663_908_8),
            (33.7, 3.032_162_654_739_871_8e36),
            (49.9, 4.118_011_034_253_035_2e62),
            (-0.5, -3.544_907_701_811_032),
            (-2.25, -1.742_814_865_728_252_7),
        ];
        for (x, g) in cases {
            assert!(rel(gamma_fn(x).unwrap(), g) < 1e-12, "x = {x}");
        }
        assert!((ln_gamma(33.7).unwrap() - 84.002_339_460_149_258_6).abs() < 1e-11);
    }

    #[test]
    fn beta_is_gamma_quotient() {
        let b = beta_fn(1.5, 0.25).unwrap();
        let g = gamma_fn(1.5).unwrap() * gamma_fn(0.25).unwrap() / gamma_fn(1.75).unwrap();
        assert!(rel(b, g) < 1e-15);
    }

    #[test]
    fn hypergeometric_trivial_values() {
        assert_eq!(gauss_2f1(1.0, 1.0, 2.0, 0.0).unwrap(), 1.0);
        assert!(rel(gauss_2f1(1.0, 1.0, 2.0, -1.0).unwrap(), 2f64.ln()) < 1e-13);
        assert!(rel(gauss_2f1(1.5, 2.5, 2.5, -1.0).unwrap(), 2f64.powf(-1.5)) < 1e-13);
        assert!(matches!(gauss_2f1(1.0, 1.0, 2.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(gauss_2f1(1.0, 1.0, -2.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn hypergeometric_against_high_precision_values() {
        // mpmath.hyp2f1 at 30 digits.
        let cases = [
            (2.0, 2.5, 3.0, -0.3, 0.644_236_398_969_974_68),
            (2.0, 2.5, 3.0, -3.0, 0.092_592_592_592_592_593),
            (1.25, 1.5, 2.25, -40.0, 0.026_459_327_536_031_425),
            (1.25, 1.5, 2.25, -1e4, 4.135_201_692_211_847_3e-5),
            (2.0, 2.5, 3.0, -1e6, 2.662_666_67e-12),
            (0.25, 0.5, 1.25, -0.75, 0.941_612_557_080_287_32),
            (1.0, 0.5, 1.25, -7.0, 0.412_467_879_242_162_27),
            (1.25, 2.5, 2.25, -1e9, 4.344_261_712_616_386_9e-12),
        ];
        for (a, b, c, z, v) in cases {
            let got = gauss_2f1(a, b, c, z).unwrap();
            let tol = if z == -1e6 { 1e-9 } else { 1e-12 };
            assert!(rel(got, v) < tol, "({a},{b},{c},{z}): {got} vs {v}");
        }
    }

    #[test]
    fn sphere_constants_examples() {
        let p = RieszParams::robin(1, 0.5).unwrap();
        let c = sphere_constants(&p, 1.0).unwrap();
        assert!(rel(c.c_r, 0.417_313_420_837_036_593_140_714_866) < 1e-12);
        assert!(rel(c.w_sd, 1.180_340_599_016_096_226_045_337_94) < 1e-12);
        let p = RieszParams::robin(2, 1.0).unwrap();
        assert!(rel(sphere_constants(&p, 1.0).unwrap().w_sd, 1.0) < 1e-14);
        let p = RieszParams::robin(3, 2.0).unwrap();
        let c1 = sphere_constants(&p, 1.0).unwrap().c_r;
        let c2 = sphere_constants(&p, 2.0).unwrap().c_r;
        assert!(rel(c2, c1 / 4.0) < 1e-14);
        assert!(rel(c1, 0.101_321_183_642_337_771_443_879_463) < 1e-12);
        let p = RieszParams::robin(3, 1.5).unwrap();
        let c1 = sphere_constants(&p, 1.0).unwrap().c_r;
        let c2 = sphere_constants(&p, 2.0).unwrap().c_r;
        assert!(rel(c2, c1 / 2f64.powf(1.5)) < 1e-14);
        assert!(sphere_constants(&RieszParams::new(3, 1.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn sphere_energy_branches_agree_with_general_formula() {
        for (d, s) in [(1usize, 0.3), (1, 0.7), (2, 0.4), (2, 1.6), (3, 1.2), (4, 2.5), (5, 3.9)] {
            let p = RieszParams::robin(d, s).unwrap();
            let w = sphere_constants(&p, 1.0).unwrap().w_sd;
            let df = d as f64;
            let general = 2f64.powf(df - s - 1.0) * gamma_unchecked((df + 1.0) / 2.0) * gamma_unchecked((df - s) / 2.0)
                / (PI.sqrt() * gamma_unchecked(df - s / 2.0));
            assert!(rel(w, general) < 1e-12, "d = {d}, s = {s}");
        }
    }

    #[test]
    fn robin_constant_matches_potential_at_center() {
        // U^{ω_R}(0) = c_R A_{d-1} Γ(α/2)Γ(1-α/2)/2.
        for (d, s) in [(1usize, 0.5), (3, 2.0), (2, 1.3)] {
            let p = RieszParams::robin(d, s).unwrap();
            let c = sphere_constants(&p, 1.0).unwrap();
            let a = p.alpha;
            let u0 = c.c_r * sphere_area(d - 1) * gamma_unchecked(a / 2.0) * gamma_unchecked(1.0 - a / 2.0) / 2.0;
            assert!(rel(u0, ball_robin_constant(&p, 1.0)) < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn gamma_recurrence(x in 0.01f64..20.0) {
            let lhs = gamma_fn(x + 1.0).unwrap();
            let rhs = x * gamma_fn(x).unwrap();
            prop_assert!(rel(lhs, rhs) < 1e-12);
        }

        #[test]
        fn gamma_reflection(x in 0.01f64..0.99) {
            let lhs = gamma_fn(x).unwrap() * gamma_fn(1.0 - x).unwrap();
            prop_assert!(rel(lhs, PI / (PI * x).sin()) < 1e-12);
        }

        #[test]
        fn sol_hypergeometric_positive_and_monotone(
            d in 1usize..5, frac in 0.05f64..0.95, z in 0.0f64..9.9,
        ) {
            let lo = (d as f64 - 2.0).max(0.0);
            let s = lo + frac * (d as f64 - lo);
            let f = |z: f64| gauss_2f1(1.0 + s / 2.0, 1.0 + d as f64 / 2.0, 2.0 + s / 2.0, z).unwrap();
            let (a, b) = (f(-z - 0.1), f(-z));
            prop_assert!(a > 0.0 && b > 0.0);
            prop_assert!(a < b);
        }

        #[test]
        fn pfaff_branch_is_continuous(a in 0.1f64..2.0, b in 0.1f64..2.5, dc in 0.3f64..2.0) {
            let c = a.max(b) + dc;
            let below = gauss_2f1(a, b, c, -0.5 + 1e-12).unwrap();
            let above = gauss_2f1(a, b, c, -0.5 - 1e-12).unwrap();
            prop_assert!(rel(below, above) < 1e-11);
            let below = gauss_2f1(a, b, c, -3.0 + 1e-12).unwrap();
            let above = gauss_2f1(a, b, c, -3.0 - 1e-12).unwrap();
            prop_assert!(rel(below, above) < 1e-10);
        }
    }
}
