//! Gauss–Jacobi rules, composite rules adapted to endpoint and interior
//! singularities, and barycentric interpolation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::specfun::{gamma_fn, rgamma};

/// Nodes and weights on [−1, 1] for the weight (1−x)^a (1+x)^b.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Three-term recurrence of the orthonormal Jacobi polynomials.
#[derive(Debug, Clone)]
pub struct JacobiRecurrence {
    alpha: Vec<f64>,
    sqrt_beta: Vec<f64>,
    p0: f64,
}

impl JacobiRecurrence {
    /// Coefficients for degrees 0..=n.
    pub fn new(n: usize, a: f64, b: f64) -> Self {
        let ab = a + b;
        let mut alpha = Vec::with_capacity(n + 1);
        let mut sqrt_beta = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let kf = k as f64;
            let al =
                if k == 0 { (b - a) / (ab + 2.0) } else { (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0)) };
            alpha.push(al);
            let be = if k == 0 {
                0.0
            } else if k == 1 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * kf * (kf + a) * (kf + b) * (kf + ab)
                    / ((2.0 * kf + ab).powi(2) * (2.0 * kf + ab + 1.0) * (2.0 * kf + ab - 1.0))
            };
            sqrt_beta.push(be.sqrt());
        }
        let mu0 = 2f64.powf(ab + 1.0)
            * gamma_fn(a + 1.0).expect("a > -1")
            * gamma_fn(b + 1.0).expect("b > -1")
            * rgamma(ab + 2.0);
        Self { alpha, sqrt_beta, p0: mu0.sqrt().recip() }
    }

    /// Orthonormal p_0..p_{m−1} at x.
    pub fn eval(&self, x: f64, out: &mut [f64]) {
        let m = out.len();
        if m == 0 {
            return;
        }
        out[0] = self.p0;
        if m > 1 {
            out[1] = (x - self.alpha[0]) * self.p0 / self.sqrt_beta[1];
        }
        for k in 1..m.saturating_sub(1) {
            out[k + 1] = ((x - self.alpha[k]) * out[k] - self.sqrt_beta[k] * out[k - 1]) / self.sqrt_beta[k + 1];
        }
    }

    /// p_n(x), p_n'(x) and Σ_{k<n} p_k(x)².
    fn eval_with_derivative(&self, n: usize, x: f64) -> (f64, f64, f64) {
        let (mut pm, mut p) = (0.0, self.p0);
        let (mut dm, mut dp) = (0.0, 0.0);
        let mut sumsq = 0.0;
        for k in 0..n {
            sumsq += p * p;
            let sb = if k == 0 { 0.0 } else { self.sqrt_beta[k] };
            let pn = ((x - self.alpha[k]) * p - sb * pm) / self.sqrt_beta[k + 1];
            let dn = ((x - self.alpha[k]) * dp + p - sb * dm) / self.sqrt_beta[k + 1];
            pm = p;
            p = pn;
            dm = dp;
            dp = dn;
        }
        (p, dp, sumsq)
    }
}

type RuleKey = (usize, u64, u64);

fn rule_cache() -> &'static Mutex<HashMap<RuleKey, Arc<GaussRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<GaussRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// n-point Gauss–Jacobi rule for (1−x)^a (1+x)^b, a, b > −1. Cached.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Arc<GaussRule> {
    assert!(n >= 1 && a > -1.0 && b > -1.0, "invalid Gauss-Jacobi request");
    let key = (n, a.to_bits(), b.to_bits());
    if let Some(r) = rule_cache().lock().unwrap().get(&key) {
        return r.clone();
    }
    let rule = Arc::new(compute_gauss_jacobi(n, a, b));
    rule_cache().lock().unwrap().insert(key, rule.clone());
    rule
}

pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    gauss_jacobi(n, 0.0, 0.0)
}

fn compute_gauss_jacobi(n: usize, a: f64, b: f64) -> GaussRule {
    let rec = JacobiRecurrence::new(n, a, b);
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jm[(k, k)] = rec.alpha[k];
        if k + 1 < n {
            jm[(k, k + 1)] = rec.sqrt_beta[k + 1];
            jm[(k + 1, k)] = rec.sqrt_beta[k + 1];
        }
    }
    let eig = SymmetricEigen::new(jm);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = rec.eval_with_derivative(n, *x);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, _, sumsq) = rec.eval_with_derivative(n, *x);
        weights.push(1.0 / sumsq);
    }
    GaussRule { nodes, weights }
}

/// Kind of a singular point of an integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sing {
    /// Integrand is |x − p|^{−e} times an analytic function (e < 1).
    Power(f64),
    /// Logarithmic or mixed singularity of strength at most |x − p|^{−e};
    /// resolved by dyadic refinement.
    Graded(f64),
}

impl Sing {
    fn exponent(self) -> f64 {
        match self {
            Sing::Power(e) | Sing::Graded(e) => e,
        }
    }

    fn merge(self, other: Sing) -> Sing {
        match (self, other) {
            (Sing::Power(a), Sing::Power(b)) => Sing::Power(a + b),
            (x, y) => Sing::Graded(x.exponent().max(0.0) + y.exponent().max(0.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingPoint {
    pub at: f64,
    pub kind: Sing,
}

impl SingPoint {
    pub fn power(at: f64, e: f64) -> Self {
        Self { at, kind: Sing::Power(e) }
    }
    pub fn graded(at: f64, e: f64) -> Self {
        Self { at, kind: Sing::Graded(e) }
    }
}

/// Plain quadrature rule: ∫ f ≈ Σ w_i f(x_i).
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Controls for [`composite_rule`].
#[derive(Debug, Clone, Copy)]
pub struct CompositeOpts {
    pub order: usize,
    /// Panels are refined until every external singular point is at least
    /// `kappa` panel lengths away.
    pub kappa: f64,
    /// Largest panel as a fraction of the interval.
    pub max_fraction: f64,
}

impl Default for CompositeOpts {
    fn default() -> Self {
        Self { order: 20, kappa: 1.0, max_fraction: 0.25 }
    }
}

struct Builder<'a> {
    points: &'a [SingPoint],
    opts: CompositeOpts,
    max_len: f64,
    min_len: f64,
    small_len: f64,
    out: Rule,
}

impl Builder<'_> {
    fn external_distance(&self, l: f64, r: f64, tol: f64) -> f64 {
        let mut d = f64::INFINITY;
        for p in self.points {
            let x = p.at;
            if x < l - tol {
                d = d.min(l - x);
            } else if x > r + tol {
                d = d.min(x - r);
            }
        }
        d
    }

    fn emit_jacobi(&mut self, l: f64, r: f64, left: Option<f64>, right: Option<f64>) {
        let h = 0.5 * (r - l);
        // Refined panels near a singularity only see low-degree content.
        let n = if r - l <= self.small_len { self.opts.order.min(12) } else { self.opts.order };
        match (left, right) {
            (Some(e), None) if e != 0.0 => {
                let g = gauss_jacobi(n, 0.0, -e);
                for (&t, &w) in g.nodes.iter().zip(&g.weights) {
                    self.out.nodes.push(l + h * (1.0 + t));
                    self.out.weights.push(w * h * (1.0 + t).powf(e));
                }
            }
            (None, Some(e)) if e != 0.0 => {
                let g = gauss_jacobi(n, -e, 0.0);
                for (&t, &w) in g.nodes.iter().zip(&g.weights) {
                    self.out.nodes.push(l + h * (1.0 + t));
                    self.out.weights.push(w * h * (1.0 - t).powf(e));
                }
            }
            _ => {
                let g = gauss_legendre(n);
                for (&t, &w) in g.nodes.iter().zip(&g.weights) {
                    self.out.nodes.push(l + h * (1.0 + t));
                    self.out.weights.push(w * h);
                }
            }
        }
    }

    /// Smallest panel worth grading towards a |x − p|^{−e} singularity: below
    /// it, rounding in x − p costs more than the Jacobi end panel.
    fn graded_floor(&self, p: f64, e: f64) -> f64 {
        if e > 0.0 {
            self.min_len.max(p.abs() * 10f64.powf(-11.0 / (1.0 + e)))
        } else {
            self.min_len
        }
    }

    fn panel(&mut self, l: f64, r: f64, kl: Option<Sing>, kr: Option<Sing>, depth: u32) {
        let len = r - l;
        let m = 0.5 * (l + r);
        let can_split = len > self.min_len && depth < 200;
        if can_split && kl.is_some() && kr.is_some() {
            self.panel(l, m, kl, None, depth + 1);
            self.panel(m, r, None, kr, depth + 1);
            return;
        }
        let tol = 1e-15 * (1.0 + l.abs().max(r.abs()));
        let near = self.external_distance(l, r, tol) < self.opts.kappa * len;
        let graded_left = matches!(kl, Some(Sing::Graded(e)) if len > self.graded_floor(l, e));
        let graded_right = matches!(kr, Some(Sing::Graded(e)) if len > self.graded_floor(r, e));
        if can_split && (len > self.max_len || near || graded_left || graded_right) {
            self.panel(l, m, kl, None, depth + 1);
            self.panel(m, r, None, kr, depth + 1);
            return;
        }
        let exp = |k: Option<Sing>| k.map(|s| s.exponent());
        match (kl, kr) {
            (Some(_), Some(_)) => {
                // Only reachable at the resolution floor.
                self.emit_jacobi(l, r, None, None)
            }
            _ => self.emit_jacobi(l, r, exp(kl), exp(kr)),
        }
    }
}

/// Composite rule on [a, b] adapted to the given singular points. Points at
/// an endpoint or inside the interval act as breakpoints; points outside
/// drive geometric refinement.
pub fn composite_rule(a: f64, b: f64, sings: &[SingPoint], opts: CompositeOpts) -> Rule {
    assert!(b > a, "empty interval [{a}, {b}]");
    let scale = b - a;
    let tol = 1e-14 * (1.0 + a.abs().max(b.abs()));
    let mut at_a: Option<Sing> = None;
    let mut at_b: Option<Sing> = None;
    let mut interior: Vec<SingPoint> = Vec::new();
    for p in sings {
        if (p.at - a).abs() <= tol {
            at_a = Some(at_a.map_or(p.kind, |k| k.merge(p.kind)));
        } else if (p.at - b).abs() <= tol {
            at_b = Some(at_b.map_or(p.kind, |k| k.merge(p.kind)));
        } else if p.at > a && p.at < b {
            interior.push(*p);
        }
    }
    interior.sort_by(|x, y| x.at.partial_cmp(&y.at).unwrap());
    let mut merged: Vec<SingPoint> = Vec::new();
    for p in interior {
        match merged.last_mut() {
            Some(q) if (q.at - p.at).abs() <= tol => q.kind = q.kind.merge(p.kind),
            _ => merged.push(p),
        }
    }
    let mut breaks: Vec<(f64, Option<Sing>)> = vec![(a, at_a)];
    breaks.extend(merged.iter().map(|p| (p.at, Some(p.kind))));
    breaks.push((b, at_b));
    let mut builder = Builder {
        points: sings,
        opts,
        max_len: opts.max_fraction * scale,
        min_len: 1e-12 * scale.max(a.abs()).max(b.abs()),
        small_len: 0.05 * scale,
        out: Rule::default(),
    };
    for w in breaks.windows(2) {
        let (l, kl) = w[0];
        let (r, kr) = w[1];
        builder.panel(l, r, kl, kr, 0);
    }
    builder.out
}

/// Barycentric interpolation through a fixed node set.
#[derive(Debug, Clone)]
pub struct Barycentric {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Barycentric {
    pub fn new(nodes: &[f64]) -> Self {
        let n = nodes.len();
        let lo = nodes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = if hi > lo { 4.0 / (hi - lo) } else { 1.0 };
        let mut logw = vec![0.0; n];
        let mut sign = vec![1.0; n];
        for j in 0..n {
            for k in 0..n {
                if k != j {
                    let d = (nodes[j] - nodes[k]) * scale;
                    logw[j] -= d.abs().ln();
                    if d < 0.0 {
                        sign[j] = -sign[j];
                    }
                }
            }
        }
        let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights = logw.iter().zip(&sign).map(|(l, s)| s * (l - mx).exp()).collect();
        Self { nodes: nodes.to_vec(), weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn eval(&self, values: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xj, &wj), &fj) in self.nodes.iter().zip(&self.weights).zip(values) {
            let d = x - xj;
            if d == 0.0 {
                return fj;
            }
            let t = wj / d;
            num += t * fj;
            den += t;
        }
        num / den
    }
}

/// m Chebyshev points of the first kind mapped to [a, b], increasing.
pub fn chebyshev_points(m: usize, a: f64, b: f64) -> Vec<f64> {
    (0..m)
        .map(|k| {
            let t = -((2 * k + 1) as f64 * std::f64::consts::PI / (2 * m) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::beta_fn;

    #[test]
    fn legendre_integrates_polynomials() {
        let g = gauss_legendre(10);
        let s: f64 = g.nodes.iter().zip(&g.weights).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_moments() {
        for &(a, b) in &[(-0.5, -0.5), (-0.25, 0.0), (0.0, -0.75), (0.5, -0.3), (1.5, 2.0)] {
            let g = gauss_jacobi(24, a, b);
            // ∫ (1−x)^a (1+x)^b x^0 dx and the first moment via Beta functions.
            let m0 = 2f64.powf(a + b + 1.0) * beta_fn(a + 1.0, b + 1.0).unwrap();
            let s0: f64 = g.weights.iter().sum();
            assert!(((s0 - m0) / m0).abs() < 1e-13, "{a} {b}");
            // ∫ (1+x)^{b+k} ... check: Σ w (1+x)^3 = 2^{a+b+4} B(a+1, b+4).
            let m3 = 2f64.powf(a + b + 4.0) * beta_fn(a + 1.0, b + 4.0).unwrap();
            let s3: f64 = g.nodes.iter().zip(&g.weights).map(|(x, w)| w * (1.0 + x).powi(3)).sum();
            assert!(((s3 - m3) / m3).abs() < 1e-13);
        }
    }

    #[test]
    fn composite_rule_endpoint_power() {
        // ∫_0^1 x^{-0.7} dx = 1/0.3 with an external point nearby.
        let r = composite_rule(
            0.0,
            1.0,
            &[SingPoint::power(0.0, 0.7), SingPoint::graded(-1e-6, 0.0)],
            CompositeOpts::default(),
        );
        let v = r.integrate(|x| x.powf(-0.7));
        assert!((v - 1.0 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn composite_rule_interior_log() {
        // ∫_{-1}^{1} log|x - 0.3| dx.
        let p = 0.3f64;
        let exact = (1.0 - p) * (1.0 - p).ln() + (1.0 + p) * (1.0 + p).ln() - 2.0;
        let r = composite_rule(-1.0, 1.0, &[SingPoint::graded(p, 0.0)], CompositeOpts::default());
        let v = r.integrate(|x| (x - p).abs().ln());
        assert!((v - exact).abs() < 1e-13, "{v} {exact}");
    }

    #[test]
    fn composite_rule_mixed_power() {
        // ∫_0^1 (1 + x^{0.5}) x^{-0.5} (1-x)^{-0.25} dx.
        let exact = beta_fn(0.5, 0.75).unwrap() + beta_fn(1.0, 0.75).unwrap();
        let r = composite_rule(
            0.0,
            1.0,
            &[SingPoint::graded(0.0, 0.5), SingPoint::power(1.0, 0.25)],
            CompositeOpts::default(),
        );
        let v = r.integrate(|x| (1.0 + x.sqrt()) / x.sqrt() * (1.0 - x).powf(-0.25));
        assert!((v - exact).abs() < 1e-11, "{v} {exact}");
    }

    #[test]
    fn barycentric_reproduces_polynomials() {
        let g = gauss_jacobi(40, -0.25, -0.25);
        let b = Barycentric::new(&g.nodes);
        let f = |x: f64| x.powi(39) - 3.0 * x.powi(7) + 0.5;
        let vals: Vec<f64> = g.nodes.iter().map(|&x| f(x)).collect();
        for x in [-1.0, -0.3, 0.123, 0.99, 1.0] {
            assert!((b.eval(&vals, x) - f(x)).abs() < 1e-12);
        }
    }
}
