//! Supports, densities with explicit endpoint singularities, quadrature over
//! them, Jordan decomposition and CSV serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{chebyshev_points, composite_rule, gauss_jacobi, Barycentric, CompositeOpts, SingPoint};
use crate::roots::brent;
use crate::specfun::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointClass {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportKind {
    Empty,
    Ball(f64),
    Shell(f64, f64),
    Interval(f64, f64),
    TwoIntervals([f64; 4]),
}

/// Support of a radial or segment measure. Ball and shell radii refer to a
/// d-dimensional ball; intervals live on the line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub kind: SupportKind,
    pub dim: usize,
    pub classes: Vec<EndpointClass>,
}

fn default_class(x: f64) -> EndpointClass {
    if (x.abs() - 1.0).abs() < 1e-12 {
        EndpointClass::Hard
    } else {
        EndpointClass::Soft
    }
}

impl Support {
    fn build(kind: SupportKind, dim: usize) -> Result<Self> {
        let s = Self { kind, dim, classes: Vec::new() };
        let classes = s.endpoints().into_iter().map(default_class).collect();
        let s = Self { classes, ..s };
        s.validate()?;
        Ok(s)
    }

    pub fn empty(dim: usize) -> Self {
        Self { kind: SupportKind::Empty, dim, classes: Vec::new() }
    }

    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        Self::build(SupportKind::Ball(radius), dim)
    }

    pub fn shell(inner: f64, outer: f64, dim: usize) -> Result<Self> {
        Self::build(SupportKind::Shell(inner, outer), dim)
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::build(SupportKind::Interval(a, b), 1)
    }

    pub fn two_intervals(a: [f64; 4]) -> Result<Self> {
        Self::build(SupportKind::TwoIntervals(a), 1)
    }

    /// K_r = [−1, −r] ∪ [r, 1].
    pub fn symmetric_two(r: f64) -> Result<Self> {
        Self::two_intervals([-1.0, -r, r, 1.0])
    }

    /// Replace the default classification (hard iff |endpoint| = 1).
    pub fn with_classes(mut self, classes: Vec<EndpointClass>) -> Result<Self> {
        if classes.len() != self.endpoints().len() {
            return Err(Error::Invalid("one endpoint class per endpoint".into()));
        }
        self.classes = classes;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            SupportKind::Empty => true,
            SupportKind::Ball(r) => r > 0.0 && self.dim >= 1,
            SupportKind::Shell(r, rr) => 0.0 <= r && r < rr,
            SupportKind::Interval(a, b) => a < b,
            SupportKind::TwoIntervals(a) => a[0] < a[1] && a[1] < a[2] && a[2] < a[3],
        };
        if !ok || !self.endpoints().iter().all(|x| x.is_finite()) {
            return Err(Error::Invalid(format!("malformed support {:?}", self.kind)));
        }
        Ok(())
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.kind, SupportKind::Ball(_) | SupportKind::Shell(..)) && self.dim >= 2
    }

    pub fn endpoints(&self) -> Vec<f64> {
        match self.kind {
            SupportKind::Empty => vec![],
            SupportKind::Ball(r) => vec![r],
            SupportKind::Shell(r, rr) => vec![r, rr],
            SupportKind::Interval(a, b) => vec![a, b],
            SupportKind::TwoIntervals(a) => a.to_vec(),
        }
    }

    /// Component intervals in the storage variable (radius or position).
    pub fn components(&self) -> Vec<(f64, f64)> {
        match self.kind {
            SupportKind::Empty => vec![],
            SupportKind::Ball(r) => vec![(0.0, r)],
            SupportKind::Shell(r, rr) => vec![(r, rr)],
            SupportKind::Interval(a, b) => vec![(a, b)],
            SupportKind::TwoIntervals(a) => vec![(a[0], a[1]), (a[2], a[3])],
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.components().iter().any(|&(a, b)| x >= a && x <= b)
    }

    pub fn is_symmetric(&self) -> bool {
        match self.kind {
            SupportKind::Interval(a, b) => (a + b).abs() < 1e-14,
            SupportKind::TwoIntervals(a) => (a[0] + a[3]).abs() < 1e-14 && (a[1] + a[2]).abs() < 1e-14,
            _ => true,
        }
    }

    pub fn describe(&self) -> String {
        let pts: Vec<String> = self.endpoints().iter().map(|x| format!("{x:.17e}")).collect();
        let name = match self.kind {
            SupportKind::Empty => "empty",
            SupportKind::Ball(_) => "ball",
            SupportKind::Shell(..) => "shell",
            SupportKind::Interval(..) => "interval",
            SupportKind::TwoIntervals(_) => "two_intervals",
        };
        format!("{name} {}", pts.join(" ")).trim().to_string()
    }

    fn from_components(comps: &[(f64, f64)], dim: usize, radial: bool) -> Result<Self> {
        match (radial, comps) {
            (_, []) => Ok(Self::empty(dim)),
            (true, [(a, b)]) if *a == 0.0 => Self::ball(*b, dim),
            (true, [(a, b)]) => Self::shell(*a, *b, dim),
            (false, [(a, b)]) => Self::interval(*a, *b),
            (false, [(a, b), (c, d)]) => Self::two_intervals([*a, *b, *c, *d]),
            _ => Err(Error::SignChanges(comps.len())),
        }
    }
}

/// How the storage variable maps to space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Density on the line, in the position variable.
    Line,
    /// Radial profile of a density on a ball in R^dim.
    Radial(usize),
}

impl Layout {
    /// Volume element attached to the storage variable.
    pub fn volume(&self, x: f64) -> f64 {
        match *self {
            Layout::Line => 1.0,
            Layout::Radial(d) => sphere_area(d - 1) * x.powi(d as i32 - 1),
        }
    }
}

/// A weighted polynomial w(x)·g(x) restricted to [lo, hi], with
/// w(x) = (x − a)^{−β_a} (b − x)^{−β_b} anchored at [a, b] ⊇ [lo, hi] and g
/// given by its values at Gauss–Jacobi nodes of [a, b].
#[derive(Debug, Clone)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub anchor_lo: f64,
    pub anchor_hi: f64,
    pub exp_lo: f64,
    pub exp_hi: f64,
    pub nodes: Vec<f64>,
    /// Density values at the nodes.
    pub values: Vec<f64>,
    smooth: Vec<f64>,
    gj_weights: Vec<f64>,
    bary: Arc<Barycentric>,
}

impl Piece {
    /// Sample `density` at n Gauss–Jacobi nodes of [a, b] matching the
    /// exponents.
    pub fn sample<F: FnMut(f64) -> f64>(
        a: f64,
        b: f64,
        exp_lo: f64,
        exp_hi: f64,
        n: usize,
        mut density: F,
    ) -> Result<Self> {
        if !(b > a) || exp_lo >= 1.0 || exp_hi >= 1.0 {
            return Err(Error::Invalid(format!("piece [{a}, {b}] with exponents ({exp_lo}, {exp_hi})")));
        }
        let rule = gauss_jacobi(n, -exp_hi, -exp_lo);
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        let mut nodes = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut smooth = Vec::with_capacity(n);
        let mut gj_weights = Vec::with_capacity(n);
        for (&t, &lam) in rule.nodes.iter().zip(&rule.weights) {
            let x = m + h * t;
            let v = density(x);
            if !v.is_finite() {
                return Err(Error::Invalid(format!("non-finite density {v} at {x}")));
            }
            let w = (h * (1.0 + t)).powf(-exp_lo) * (h * (1.0 - t)).powf(-exp_hi);
            nodes.push(x);
            values.push(v);
            smooth.push(v / w);
            gj_weights.push(lam * h.powf(1.0 - exp_lo - exp_hi));
        }
        let bary = Arc::new(Barycentric::new(&rule.nodes));
        Ok(Self { lo: a, hi: b, anchor_lo: a, anchor_hi: b, exp_lo, exp_hi, nodes, values, smooth, gj_weights, bary })
    }

    /// Build from values of the smooth factor g at the nodes.
    pub fn from_smooth<F: FnMut(f64) -> f64>(
        a: f64,
        b: f64,
        exp_lo: f64,
        exp_hi: f64,
        n: usize,
        mut g: F,
    ) -> Result<Self> {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        Self::sample(a, b, exp_lo, exp_hi, n, |x| {
            let t = (x - m) / h;
            g(x) * (h * (1.0 + t)).powf(-exp_lo) * (h * (1.0 - t)).powf(-exp_hi)
        })
    }

    pub fn is_full(&self) -> bool {
        self.lo == self.anchor_lo && self.hi == self.anchor_hi
    }

    fn xi(&self, x: f64) -> f64 {
        (2.0 * x - self.anchor_lo - self.anchor_hi) / (self.anchor_hi - self.anchor_lo)
    }

    pub fn weight(&self, x: f64) -> f64 {
        let mut w = 1.0;
        if self.exp_lo != 0.0 {
            w *= (x - self.anchor_lo).powf(-self.exp_lo);
        }
        if self.exp_hi != 0.0 {
            w *= (self.anchor_hi - x).powf(-self.exp_hi);
        }
        w
    }

    /// Smooth factor g at x (any x, by barycentric interpolation).
    pub fn smooth_at(&self, x: f64) -> f64 {
        self.bary.eval(&self.smooth, self.xi(x))
    }

    pub fn smooth_values(&self) -> &[f64] {
        &self.smooth
    }

    pub fn density_at(&self, x: f64) -> f64 {
        self.smooth_at(x) * self.weight(x)
    }

    fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.values.iter_mut().for_each(|v| *v *= c);
        p.smooth.iter_mut().for_each(|v| *v *= c);
        p
    }

    fn restricted(&self, lo: f64, hi: f64) -> Option<Self> {
        let (lo, hi) = (lo.max(self.lo), hi.min(self.hi));
        if hi <= lo {
            return None;
        }
        let mut p = self.clone();
        p.lo = lo;
        p.hi = hi;
        Some(p)
    }

    fn anchor_sings(&self) -> Vec<SingPoint> {
        let mut v = Vec::new();
        if self.exp_lo != 0.0 {
            v.push(SingPoint::power(self.anchor_lo, self.exp_lo));
        }
        if self.exp_hi != 0.0 {
            v.push(SingPoint::power(self.anchor_hi, self.exp_hi));
        }
        v
    }

    /// ∫_{lo}^{hi} density(y) f(y) dy, with `sings` describing the
    /// singularities of f.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, sings: &[SingPoint], mut f: F) -> f64 {
        let len = self.hi - self.lo;
        let far = sings.iter().all(|p| p.at < self.lo - 0.25 * len || p.at > self.hi + 0.25 * len);
        if self.is_full() && far {
            return self.nodes.iter().zip(&self.gj_weights).zip(&self.smooth).map(|((&x, &w), &g)| w * g * f(x)).sum();
        }
        let mut all = self.anchor_sings();
        all.extend_from_slice(sings);
        let rule = composite_rule(self.lo, self.hi, &all, CompositeOpts::default());
        rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * self.density_at(x) * f(x)).sum()
    }

    fn mass(&self, layout: Layout) -> f64 {
        self.integrate(&[], |x| layout.volume(x))
    }
}

/// A (possibly signed) measure given as a sum of weighted-polynomial pieces.
#[derive(Debug, Clone)]
pub struct MeasureDensity {
    support: Support,
    layout: Layout,
    exponents: Vec<f64>,
    pieces: Vec<Piece>,
    mass: f64,
}

impl MeasureDensity {
    pub fn from_pieces(support: Support, exponents: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        support.validate()?;
        if exponents.len() != support.endpoints().len() {
            return Err(Error::Invalid("one exponent per support endpoint".into()));
        }
        let layout = if support.is_radial() { Layout::Radial(support.dim) } else { Layout::Line };
        let mass = pieces.iter().map(|p| p.mass(layout)).sum();
        Ok(Self { support, layout, exponents, pieces, mass })
    }

    pub fn zero(support: Support) -> Self {
        let layout = if support.is_radial() { Layout::Radial(support.dim) } else { Layout::Line };
        let exponents = vec![0.0; support.endpoints().len()];
        Self { support, layout, exponents, pieces: Vec::new(), mass: 0.0 }
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Density at x (radius for radial measures).
    pub fn density_at(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for p in &self.pieces {
            let inside =
                (x >= p.lo && x < p.hi) || (x == p.hi && !self.pieces.iter().any(|q| q.lo == p.hi && q.hi > q.lo));
            if inside {
                v += p.density_at(x);
            }
        }
        v
    }

    /// All (node, value) pairs, piece by piece.
    pub fn nodal(&self) -> Vec<(f64, f64)> {
        self.pieces
            .iter()
            .flat_map(|p| {
                p.nodes.iter().zip(&p.values).filter(|(x, _)| **x >= p.lo && **x <= p.hi).map(|(x, v)| (*x, *v))
            })
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            support: self.support.clone(),
            layout: self.layout,
            exponents: self.exponents.clone(),
            pieces: self.pieces.iter().map(|p| p.scaled(c)).collect(),
            mass: c * self.mass,
        }
    }

    /// Σ c_i μ_i as a superposition of pieces, declared on `support`.
    pub fn combine(support: Support, exponents: Vec<f64>, terms: &[(f64, &MeasureDensity)]) -> Result<Self> {
        let mut pieces = Vec::new();
        let mut layout = None;
        for (c, m) in terms {
            if m.is_empty() {
                continue;
            }
            if *layout.get_or_insert(m.layout) != m.layout {
                return Err(Error::Invalid("cannot combine radial and line measures".into()));
            }
            pieces.extend(m.pieces.iter().map(|p| p.scaled(*c)));
        }
        let mass = terms.iter().map(|(c, m)| c * m.mass).sum();
        let layout = if support.is_radial() { Layout::Radial(support.dim) } else { Layout::Line };
        if exponents.len() != support.endpoints().len() {
            return Err(Error::Invalid("one exponent per support endpoint".into()));
        }
        Ok(Self { support, layout, exponents, pieces, mass })
    }

    /// The same density restricted to the given components.
    pub fn restrict(&self, comps: &[(f64, f64)]) -> Result<Self> {
        let radial = self.layout != Layout::Line;
        let support = Support::from_components(comps, self.support.dim, radial)?;
        let mut pieces = Vec::new();
        for &(a, b) in comps {
            for p in &self.pieces {
                if let Some(q) = p.restricted(a, b) {
                    pieces.push(q);
                }
            }
        }
        let old = self.support.endpoints();
        let exponents = support
            .endpoints()
            .iter()
            .map(|e| old.iter().position(|o| (o - e).abs() < 1e-14).map_or(0.0, |i| self.exponents[i]))
            .collect();
        let mut support = support;
        let classes = support
            .endpoints()
            .iter()
            .map(|e| {
                old.iter().position(|o| (o - e).abs() < 1e-14).map_or(EndpointClass::Soft, |i| self.support.classes[i])
            })
            .collect();
        support.classes = classes;
        Self::from_pieces(support, exponents, pieces)
    }

    /// Smooth factor at a support endpoint: lim |x − e|^{β} · density.
    pub fn edge_coefficient(&self, endpoint: f64) -> Option<f64> {
        let tol = 1e-14 * (1.0 + endpoint.abs());
        let mut found = None;
        for p in &self.pieces {
            let at_lo = (p.anchor_lo - endpoint).abs() <= tol && (p.lo - endpoint).abs() <= tol;
            let at_hi = (p.anchor_hi - endpoint).abs() <= tol && (p.hi - endpoint).abs() <= tol;
            if at_lo || at_hi {
                let g = p.smooth_at(endpoint);
                let other = if at_lo {
                    if p.exp_hi != 0.0 {
                        (p.anchor_hi - endpoint).powf(-p.exp_hi)
                    } else {
                        1.0
                    }
                } else if p.exp_lo != 0.0 {
                    (endpoint - p.anchor_lo).powf(-p.exp_lo)
                } else {
                    1.0
                };
                *found.get_or_insert(0.0) += g * other;
            }
        }
        found
    }

    /// ∫ f dμ, with `sings` the singular points of f.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, sings: &[SingPoint], mut f: F) -> f64 {
        let layout = self.layout;
        self.pieces.iter().map(|p| p.integrate(sings, |x| f(x) * layout.volume(x))).sum()
    }

    /// Jordan decomposition at the sign changes of the density.
    pub fn decompose(&self, max_changes: usize) -> Result<SignedDecomposition> {
        let mut cuts: Vec<f64> = self.pieces.iter().flat_map(|p| [p.lo, p.hi]).collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let comps = self.support.components();
        let scale = self.nodal().iter().map(|(_, v)| v.abs()).fold(0.0f64, f64::max);
        let zero_tol = 1e-13 * scale;
        let sgn = |v: f64| {
            if v > zero_tol {
                1i8
            } else if v < -zero_tol {
                -1
            } else {
                0
            }
        };
        // Sign-homogeneous cells between cuts and roots.
        let mut cells: Vec<(f64, f64, i8)> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !comps.iter().any(|&(c, d)| a >= c - 1e-15 && b <= d + 1e-15) || b - a <= 0.0 {
                continue;
            }
            let xs = chebyshev_points(240, a, b);
            let vals: Vec<f64> = xs.iter().map(|&x| self.density_at(x)).collect();
            let mut start = a;
            let mut last: Option<(f64, f64, i8)> = None;
            for (&x, &v) in xs.iter().zip(&vals) {
                let s = sgn(v);
                if s == 0 {
                    continue;
                }
                if let Some((px, _, ps)) = last {
                    if ps != s {
                        let root = brent(|t| self.density_at(t), px, x, 1e-15, 200)?;
                        cells.push((start, root, ps));
                        start = root;
                    }
                }
                last = Some((x, v, s));
            }
            cells.push((start, b, last.map_or(0, |l| l.2)));
        }
        // Merge neighbours of equal sign.
        let mut merged: Vec<(f64, f64, i8)> = Vec::new();
        for c in cells {
            match merged.last_mut() {
                Some(l) if l.2 == c.2 && (l.1 - c.0).abs() < 1e-15 => l.1 = c.1,
                _ => merged.push(c),
            }
        }
        let mut crossings = Vec::new();
        for w in merged.windows(2) {
            if w[0].2 != w[1].2 && w[0].2 != 0 && w[1].2 != 0 && (w[0].1 - w[1].0).abs() < 1e-15 {
                crossings.push(w[0].1);
            }
        }
        if crossings.len() > max_changes {
            return Err(Error::SignChanges(crossings.len()));
        }
        let pos: Vec<(f64, f64)> = merged.iter().filter(|c| c.2 > 0).map(|c| (c.0, c.1)).collect();
        let neg: Vec<(f64, f64)> = merged.iter().filter(|c| c.2 < 0).map(|c| (c.0, c.1)).collect();
        let positive_part =
            if pos.is_empty() { Self::zero(Support::empty(self.support.dim)) } else { self.restrict(&pos)? };
        let negative_part = if neg.is_empty() {
            Self::zero(Support::empty(self.support.dim))
        } else {
            self.restrict(&neg)?.scaled(-1.0)
        };
        let mut radii: Vec<f64> = crossings.iter().map(|c| c.abs()).collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let crossing_radius = if radii.len() == 1 { Some(radii[0]) } else { None };
        Ok(SignedDecomposition { positive_part, negative_part, crossing_radius, crossings })
    }
}

/// Build a density on `support` by sampling, with one exponent per support
/// endpoint. `sampler` receives the radius (radial) or position (line).
pub fn make_density<F: FnMut(f64) -> f64>(
    support: Support,
    exponents: &[f64],
    mut sampler: F,
    n_nodes: usize,
) -> Result<MeasureDensity> {
    if n_nodes < 8 {
        return Err(Error::Invalid("need at least 8 nodes".into()));
    }
    support.validate()?;
    let ends = support.endpoints();
    if exponents.len() != ends.len() {
        return Err(Error::Invalid(format!("support has {} endpoints, got {} exponents", ends.len(), exponents.len())));
    }
    let exp_of = |x: f64| ends.iter().position(|e| *e == x).map_or(0.0, |i| exponents[i]);
    let mut pieces = Vec::new();
    for (a, b) in support.components() {
        pieces.push(Piece::sample(a, b, exp_of(a), exp_of(b), n_nodes, &mut sampler)?);
    }
    MeasureDensity::from_pieces(support, exponents.to_vec(), pieces)
}

/// σ = σ⁺ − σ⁻ with the sign-change locations.
#[derive(Debug, Clone)]
pub struct SignedDecomposition {
    pub positive_part: MeasureDensity,
    pub negative_part: MeasureDensity,
    /// The unique |x| at which the density changes sign, if unique.
    pub crossing_radius: Option<f64>,
    pub crossings: Vec<f64>,
}

/// Metadata carried in the `#` header of a density CSV file.
pub type CsvMeta = BTreeMap<String, String>;

pub fn write_csv<W: Write>(m: &MeasureDensity, meta: &CsvMeta, mut w: W) -> Result<()> {
    let mut head = String::new();
    writeln!(head, "# riesz-equilibrium density").unwrap();
    for (k, v) in meta {
        writeln!(head, "# {k} = {v}").unwrap();
    }
    writeln!(head, "# support = {}", m.support.describe()).unwrap();
    let classes: Vec<&str> = m
        .support
        .classes
        .iter()
        .map(|c| match c {
            EndpointClass::Hard => "hard",
            EndpointClass::Soft => "soft",
        })
        .collect();
    writeln!(head, "# classes = {}", classes.join(" ")).unwrap();
    let exps: Vec<String> = m.exponents.iter().map(|e| format!("{e:.17e}")).collect();
    writeln!(head, "# exponents = {}", exps.join(" ")).unwrap();
    writeln!(head, "# dim = {}", m.support.dim).unwrap();
    for p in &m.pieces {
        writeln!(
            head,
            "# piece = {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {}",
            p.lo,
            p.hi,
            p.anchor_lo,
            p.anchor_hi,
            p.exp_lo,
            p.exp_hi,
            p.nodes.len()
        )
        .unwrap();
    }
    let col = if m.layout == Layout::Line { "x" } else { "radius" };
    writeln!(head, "{col},density").unwrap();
    w.write_all(head.as_bytes())?;
    for p in &m.pieces {
        for (x, v) in p.nodes.iter().zip(&p.values) {
            writeln!(w, "{x:.16e},{v:.16e}")?;
        }
    }
    Ok(())
}

fn parse_f(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")))
}

/// Read a density written by [`write_csv`]; returns the measure and the
/// metadata that is not part of the measure itself.
pub fn read_csv<R: BufRead>(r: R) -> Result<(MeasureDensity, CsvMeta)> {
    let mut meta = CsvMeta::new();
    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut pieces_spec: Vec<Vec<f64>> = Vec::new();
    let mut header_seen = false;
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                let (k, v) = (k.trim().to_string(), v.trim().to_string());
                if k == "piece" {
                    pieces_spec.push(v.split_whitespace().map(parse_f).collect::<Result<_>>()?);
                } else {
                    meta.insert(k, v);
                }
            }
            continue;
        }
        if !header_seen {
            header_seen = true;
            if t.starts_with("x,") || t.starts_with("radius,") {
                continue;
            }
        }
        let (a, b) = t.split_once(',').ok_or_else(|| Error::Parse(format!("bad row {t:?}")))?;
        rows.push((parse_f(a)?, parse_f(b)?));
    }
    let dim: usize = meta
        .remove("dim")
        .ok_or_else(|| Error::Parse("missing dim".into()))?
        .parse()
        .map_err(|_| Error::Parse("bad dim".into()))?;
    let sup = meta.remove("support").ok_or_else(|| Error::Parse("missing support".into()))?;
    let mut it = sup.split_whitespace();
    let name = it.next().unwrap_or("");
    let pts: Vec<f64> = it.map(parse_f).collect::<Result<_>>()?;
    let kind = match (name, pts.as_slice()) {
        ("empty", []) => SupportKind::Empty,
        ("ball", [r]) => SupportKind::Ball(*r),
        ("shell", [a, b]) => SupportKind::Shell(*a, *b),
        ("interval", [a, b]) => SupportKind::Interval(*a, *b),
        ("two_intervals", [a, b, c, d]) => SupportKind::TwoIntervals([*a, *b, *c, *d]),
        _ => return Err(Error::Parse(format!("bad support {sup:?}"))),
    };
    let classes = meta
        .remove("classes")
        .unwrap_or_default()
        .split_whitespace()
        .map(|c| match c {
            "hard" => Ok(EndpointClass::Hard),
            "soft" => Ok(EndpointClass::Soft),
            _ => Err(Error::Parse(format!("bad class {c}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let exponents: Vec<f64> =
        meta.remove("exponents").unwrap_or_default().split_whitespace().map(parse_f).collect::<Result<_>>()?;
    let support = Support { kind, dim, classes };
    let mut pieces = Vec::new();
    let mut offset = 0;
    for spec in pieces_spec {
        if spec.len() != 7 {
            return Err(Error::Parse("piece line needs 7 fields".into()));
        }
        let n = spec[6] as usize;
        let chunk =
            rows.get(offset..offset + n).ok_or_else(|| Error::Parse("fewer rows than declared".into()))?.to_vec();
        offset += n;
        let mut k = 0;
        let mut p = Piece::sample(spec[2], spec[3], spec[4], spec[5], n, |x| {
            let (rx, rv) = chunk[k];
            k += 1;
            if (rx - x).abs() > 1e-12 * (1.0 + x.abs()) {
                f64::NAN
            } else {
                rv
            }
        })
        .map_err(|_| Error::Parse("rows do not match the declared quadrature nodes".into()))?;
        p.lo = spec[0];
        p.hi = spec[1];
        pieces.push(p);
    }
    if offset != rows.len() {
        return Err(Error::Parse("more rows than declared".into()));
    }
    Ok((MeasureDensity::from_pieces(support, exponents, pieces)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{sphere_constants, RieszParams};
    use std::f64::consts::PI;

    #[test]
    fn arcsine_mass() {
        let s = Support::interval(-1.0, 1.0).unwrap();
        let m = make_density(s, &[0.5, 0.5], |x| 1.0 / (PI * (1.0 - x * x).sqrt()), 64).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_density_mass() {
        let s = Support::interval(0.0, 1.0).unwrap();
        let m = make_density(s, &[0.0, 0.0], |_| 1.0, 16).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ball_equilibrium_mass() {
        let p = RieszParams::robin(3, 2.0).unwrap();
        let c = sphere_constants(&p, 1.0).unwrap().c_r;
        let s = Support::ball(1.0, 3).unwrap();
        let m = make_density(s, &[0.5], |r| c / (1.0 - r * r).sqrt(), 32).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-12);
        let p = RieszParams::robin(2, 1.0).unwrap();
        for radius in [0.3, 1.0, 2.5] {
            let c = sphere_constants(&p, radius).unwrap().c_r;
            let s = Support::ball(radius, 2).unwrap();
            let m = make_density(s, &[0.5], |r| c * (radius * radius - r * r).powf(-0.5), 32).unwrap();
            assert!((m.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn restriction_integrates_partial_mass() {
        let s = Support::interval(-1.0, 1.0).unwrap();
        let m = make_density(s, &[0.5, 0.5], |x| 1.0 / (PI * (1.0 - x * x).sqrt()), 64).unwrap();
        let r = m.restrict(&[(0.5, 1.0)]).unwrap();
        // Arcsine CDF: (1/π)(asin(1) − asin(0.5)) = 1/3.
        assert!((r.mass() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.support().classes, vec![EndpointClass::Soft, EndpointClass::Hard]);
    }

    #[test]
    fn decomposition_of_positive_density() {
        let s = Support::interval(-1.0, 1.0).unwrap();
        let m = make_density(s, &[0.5, 0.5], |x| 1.0 / (PI * (1.0 - x * x).sqrt()), 32).unwrap();
        let d = m.decompose(4).unwrap();
        assert!(d.negative_part.is_empty());
        assert!((d.positive_part.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decomposition_reassembles() {
        let s = Support::interval(-1.0, 1.0).unwrap();
        let f = |x: f64| (x * x - 0.3) / (1.0 - x * x).sqrt();
        let m = make_density(s, &[0.5, 0.5], f, 40).unwrap();
        let d = m.decompose(4).unwrap();
        assert_eq!(d.crossings.len(), 2);
        assert!((d.crossing_radius.unwrap() - 0.3f64.sqrt()).abs() < 1e-13);
        let scale = m.nodal().iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
        for (x, v) in m.nodal() {
            let re = d.positive_part.density_at(x) - d.negative_part.density_at(x);
            assert!((re - v).abs() <= 1e-12 * scale, "{x}: {re} vs {v}");
        }
        let total = d.positive_part.mass() - d.negative_part.mass();
        assert!((total - m.mass()).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let s = Support::symmetric_two(0.4).unwrap();
        let m = make_density(s, &[0.5, -0.5, -0.5, 0.5], |x: f64| (x * x - 0.16).sqrt() / (1.0 - x * x).sqrt(), 24)
            .unwrap();
        let mut meta = CsvMeta::new();
        meta.insert("gamma".into(), "5".into());
        let mut buf = Vec::new();
        write_csv(&m, &meta, &mut buf).unwrap();
        let (back, meta2) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(meta2.get("gamma").unwrap(), "5");
        assert_eq!(back.support(), m.support());
        assert!((back.mass() - m.mass()).abs() < 1e-14);
        for ((x, v), (y, w)) in back.nodal().iter().zip(m.nodal()) {
            assert_eq!(*x, y);
            assert!((v - w).abs() <= 1e-15 * w.abs());
        }
    }
}
