//! Discrete weighted energy minimization, used as an independent check of
//! the continuum solvers.
//!
//! N charges confined to the closed unit ball of R^d (the segment [−1, 1]
//! for d = 1) minimize
//!
//! E = Σ_{i≠j} k(|x_i − x_j|)/N² + (2/N) Σ Q(x_i)
//!
//! by projected gradient descent with a monotone line search, finished with
//! damped Newton steps on the same projected path.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Kernel;
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOpts {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when every projected force component is below this.
    pub tol: f64,
    pub bootstrap: usize,
}

impl Default for OracleOpts {
    fn default() -> Self {
        Self { restarts: 3, max_iter: 2_000, tol: 1e-8, bootstrap: 200 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub d: usize,
    /// Coordinates, point after point.
    pub points: Vec<f64>,
    pub energy: f64,
    /// Energy after every accepted step.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest projected force component at exit (force = N ∂E/∂x).
    pub max_projected_force: f64,
    pub seed: u64,
}

impl PointConfiguration {
    pub fn len(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    /// Signed positions for d = 1, radii otherwise.
    pub fn coordinates(&self) -> Vec<f64> {
        if self.d == 1 {
            self.points.clone()
        } else {
            (0..self.len()).map(|i| norm(self.point(i))).collect()
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> =
            if self.d == 1 { vec!["x".into()] } else { (0..self.d).map(|k| format!("x{k}")).collect() };
        writeln!(w, "index,{}", cols.join(","))?;
        for i in 0..self.len() {
            let c: Vec<String> = self.point(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{i},{}", c.join(","))?;
        }
        Ok(())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Energy {
    d: usize,
    n: usize,
    kernel: Kernel,
    gamma: f64,
    h2: f64,
}

impl Energy {
    /// k as a function of the squared distance, with two derivatives.
    fn phi(&self, r2: f64) -> (f64, f64, f64) {
        match self.kernel {
            Kernel::Riesz(s) => {
                let a = 0.5 * s;
                let v = r2.powf(-a);
                (v, -a * v / r2, a * (a + 1.0) * v / (r2 * r2))
            }
            Kernel::Log => (-0.5 * r2.ln(), -0.5 / r2, 0.5 / (r2 * r2)),
        }
    }

    fn field(&self, x: &[f64]) -> (f64, f64, f64) {
        let (v, d1, d2) = self.phi(x.iter().map(|v| v * v).sum::<f64>() + self.h2);
        (self.gamma * v, self.gamma * d1, self.gamma * d2)
    }

    fn diff(&self, x: &[f64], i: usize, j: usize) -> ([f64; MAX_DIM], f64) {
        let d = self.d;
        let mut u = [0.0; MAX_DIM];
        let mut r2 = 0.0;
        for k in 0..d {
            u[k] = x[i * d + k] - x[j * d + k];
            r2 += u[k] * u[k];
        }
        (u, r2)
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let (n, d) = (self.n as f64, self.d);
        let per: f64 = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let pairs: f64 = (i + 1..self.n).map(|j| self.phi(self.diff(x, i, j).1).0).sum();
                2.0 * pairs / (n * n) + 2.0 * self.field(&x[i * d..(i + 1) * d]).0 / n
            })
            .sum();
        if per.is_nan() {
            f64::INFINITY
        } else {
            per
        }
    }

    /// Force N ∂E/∂x.
    fn force(&self, x: &[f64]) -> Vec<f64> {
        let (n, d) = (self.n as f64, self.d);
        let mut g = vec![0.0; x.len()];
        g.par_chunks_mut(d).enumerate().for_each(|(i, gi)| {
            for j in (0..self.n).filter(|&j| j != i) {
                let (u, r2) = self.diff(x, i, j);
                let c = 4.0 * self.phi(r2).1 / n;
                for k in 0..d {
                    gi[k] += c * u[k];
                }
            }
            let xi = &x[i * d..(i + 1) * d];
            let c = 4.0 * self.field(xi).1;
            for k in 0..d {
                gi[k] += c * xi[k];
            }
        });
        g
    }

    /// N ∂²E/∂x².
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let (n, d) = (self.n as f64, self.d);
        let m = x.len();
        let rows: Vec<Vec<f64>> = (0..self.n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut block = vec![vec![0.0; m]; d];
                let mut add = |j: usize, u: &[f64], d1: f64, d2: f64, sign: f64| {
                    for a in 0..d {
                        for b in 0..d {
                            let e = if a == b { 2.0 * d1 } else { 0.0 } + 4.0 * d2 * u[a] * u[b];
                            block[a][j * d + b] += sign * e;
                        }
                    }
                };
                for j in (0..self.n).filter(|&j| j != i) {
                    let (u, r2) = self.diff(x, i, j);
                    let (_, d1, d2) = self.phi(r2);
                    add(i, &u, 2.0 * d1 / n, 2.0 * d2 / n, 1.0);
                    add(j, &u, 2.0 * d1 / n, 2.0 * d2 / n, -1.0);
                }
                let xi = &x[i * d..(i + 1) * d];
                let (_, d1, d2) = self.field(xi);
                add(i, xi, 2.0 * d1, 2.0 * d2, 1.0);
                block
            })
            .collect();
        DMatrix::from_fn(m, m, |r, c| rows[r][c])
    }
}

const MAX_DIM: usize = 8;

fn project(x: &mut [f64], d: usize) {
    for p in x.chunks_mut(d) {
        let r = norm(p);
        if r > 1.0 {
            p.iter_mut().for_each(|v| *v /= r);
        }
    }
}

/// Outward unit normal of every boundary point pushed outward by the force.
fn active_normals(x: &[f64], g: &[f64], d: usize) -> Vec<Option<Vec<f64>>> {
    x.chunks(d)
        .zip(g.chunks(d))
        .map(|(p, gp)| {
            let r = norm(p);
            let gn: f64 = p.iter().zip(gp).map(|(a, b)| a * b).sum::<f64>() / r;
            (r >= 1.0 - 1e-14 && gn < 0.0).then(|| p.iter().map(|a| a / r).collect())
        })
        .collect()
}

/// Force with the outward normal component removed at the boundary.
fn projected_force(x: &[f64], g: &[f64], d: usize) -> Vec<f64> {
    let mut out = g.to_vec();
    for (i, nrm) in active_normals(x, g, d).into_iter().enumerate() {
        if let Some(nv) = nrm {
            let gi = &mut out[i * d..(i + 1) * d];
            let gn: f64 = gi.iter().zip(&nv).map(|(a, b)| a * b).sum();
            gi.iter_mut().zip(&nv).for_each(|(c, a)| *c -= gn * a);
        }
    }
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, c| m.max(c.abs()))
}

fn random_start(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = Vec::with_capacity(n * d);
    while x.len() < n * d {
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm(&p) < 1.0 {
            x.extend(p);
        }
    }
    x
}

/// Gradient steps before switching to damped Newton steps.
const WARMUP: usize = 200;

struct Descent<'a> {
    e: &'a Energy,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    trace: Vec<f64>,
}

impl Descent<'_> {
    /// Backtrack along the projected path x + t·dir; accept on sufficient
    /// decrease.
    fn line_search(&mut self, dir: &[f64], mut t: f64, tries: usize) -> Option<f64> {
        let d = self.e.d;
        for _ in 0..tries {
            let mut xn: Vec<f64> = self.x.iter().zip(dir).map(|(a, b)| a + t * b).collect();
            project(&mut xn, d);
            let decrease: f64 = self.g.iter().zip(xn.iter().zip(&self.x)).map(|(gi, (a, b))| gi * (a - b)).sum::<f64>()
                / self.e.n as f64;
            let fnew = self.e.energy(&xn);
            if fnew <= self.f + 1e-4 * decrease && decrease < 0.0 {
                self.g = self.e.force(&xn);
                self.x = xn;
                self.f = fnew;
                self.trace.push(fnew);
                return Some(t);
            }
            t *= 0.5;
        }
        None
    }

    fn newton_direction(&self, lambda: f64) -> Option<Vec<f64>> {
        let d = self.e.d;
        let m = self.x.len();
        let mut h = self.e.hessian(&self.x);
        let rhs = DVector::from_vec(projected_force(&self.x, &self.g, d));
        let scale = (0..m).map(|k| h[(k, k)].abs()).sum::<f64>() / m as f64;
        for (i, nrm) in active_normals(&self.x, &self.g, d).into_iter().enumerate() {
            let Some(nv) = nrm else { continue };
            // P H P with P removing the normal of point i; normal pinned.
            let rows: Vec<usize> = (i * d..(i + 1) * d).collect();
            for c in 0..m {
                let dot: f64 = (0..d).map(|a| nv[a] * h[(rows[a], c)]).sum();
                for a in 0..d {
                    h[(rows[a], c)] -= nv[a] * dot;
                }
            }
            for r in 0..m {
                let dot: f64 = (0..d).map(|a| nv[a] * h[(r, rows[a])]).sum();
                for a in 0..d {
                    h[(r, rows[a])] -= nv[a] * dot;
                }
            }
            for a in 0..d {
                for b in 0..d {
                    h[(rows[a], rows[b])] += scale * nv[a] * nv[b];
                }
            }
        }
        for k in 0..m {
            h[(k, k)] += lambda * scale;
        }
        let chol = h.cholesky()?;
        Some((-chol.solve(&rhs)).as_slice().to_vec())
    }
}

fn descend(e: &Energy, x: Vec<f64>, opts: &OracleOpts, seed: u64) -> PointConfiguration {
    let d = e.d;
    let f = e.energy(&x);
    let g = e.force(&x);
    let mut s = Descent { e, x, f, g, trace: vec![f] };
    let mut t = 1e-2;
    let mut lambda = 1e-3;
    let mut pg = max_abs(&projected_force(&s.x, &s.g, d));
    let mut it = 0;
    while it < opts.max_iter && pg >= opts.tol {
        it += 1;
        if it <= WARMUP {
            let (x0, g0) = (s.x.clone(), s.g.clone());
            let dir: Vec<f64> = g0.iter().map(|v| -v).collect();
            let Some(_) = s.line_search(&dir, t, 60) else { break };
            let (mut ss, mut sy) = (0.0, 0.0);
            for k in 0..x0.len() {
                let dx = s.x[k] - x0[k];
                ss += dx * dx;
                sy += dx * (s.g[k] - g0[k]);
            }
            t = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e2) } else { (2.0 * t).min(1e2) };
        } else {
            let mut done = false;
            while lambda < 1e12 {
                if let Some(dir) = s.newton_direction(lambda) {
                    if s.line_search(&dir, 1.0, 4).is_some() {
                        lambda = (lambda / 4.0).max(1e-12);
                        done = true;
                        break;
                    }
                }
                lambda *= 16.0;
            }
            if !done {
                break;
            }
        }
        pg = max_abs(&projected_force(&s.x, &s.g, d));
    }
    log::debug!("descent seed {seed}: {it} steps, E = {}, force {pg:e}", s.f);
    PointConfiguration {
        d,
        points: s.x,
        energy: s.f,
        energy_trace: s.trace,
        iterations: it,
        converged: pg < opts.tol,
        max_projected_force: pg,
        seed,
    }
}

/// Minimize the discrete energy from `opts.restarts` seeded random starts and
/// keep the lowest.
pub fn minimize(spec: &ProblemSpec, n: usize, seed: u64, opts: &OracleOpts) -> Result<PointConfiguration> {
    spec.validate()?;
    if n < 16 {
        return Err(Error::Invalid(format!("need at least 16 points, got {n}")));
    }
    let e = Energy { d: spec.d, n, kernel: spec.kernel(), gamma: spec.gamma, h2: spec.height * spec.height };
    let best = (0..opts.restarts.max(1) as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            descend(&e, random_start(n, spec.d, &mut rng), opts, s)
        })
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .expect("at least one restart");
    if !best.converged {
        log::warn!(
            "discrete minimization stopped at force {:e} after {} steps",
            best.max_projected_force,
            best.iterations
        );
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    /// Components in the signed coordinate (d = 1) or in the radius.
    pub components: Vec<(f64, f64)>,
    /// r of K_r = [−1, −r] ∪ [r, 1] (d = 1) or the inner shell radius.
    pub inner: Option<f64>,
    pub inner_se: Option<f64>,
    /// Largest |x|.
    pub outer: f64,
    pub outer_se: f64,
}

/// Consecutive spacings this many times the median open a gap.
const GAP_FACTOR: f64 = 10.0;

fn components(sorted: &[f64]) -> Vec<(f64, f64)> {
    let gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let mut m = gaps.clone();
    m.sort_by(f64::total_cmp);
    let median = m.get(m.len() / 2).copied().unwrap_or(0.0);
    let mut out = Vec::new();
    let mut start = sorted[0];
    for (k, &g) in gaps.iter().enumerate() {
        if g > GAP_FACTOR * median && median > 0.0 {
            out.push((start, sorted[k]));
            start = sorted[k + 1];
        }
    }
    out.push((start, *sorted.last().unwrap()));
    out
}

fn estimate(d: usize, coords: &[f64]) -> (Vec<(f64, f64)>, Option<f64>, f64) {
    let mut v = coords.to_vec();
    v.sort_by(f64::total_cmp);
    let outer = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if d == 1 {
        let comps = components(&v);
        // Gap straddling the origin: average the two edges.
        let inner = comps.windows(2).find(|w| w[0].1 < 0.0 && w[1].0 > 0.0).map(|w| 0.5 * (w[1].0 - w[0].1));
        return (comps, inner, outer);
    }
    // In a filled ball the smallest of N radii is about R N^{−1/d}.
    let hole = v[0] > 3.0 * outer * (v.len() as f64).powf(-1.0 / d as f64);
    let inner = hole.then_some(v[0]);
    (vec![(inner.unwrap_or(0.0), outer)], inner, outer)
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len().max(2) - 1) as f64).sqrt()
}

/// Gap detection on sorted coordinates, with bootstrap standard errors.
pub fn empirical_support(config: &PointConfiguration, bootstrap: usize, seed: u64) -> SupportEstimate {
    let coords = config.coordinates();
    let (comps, inner, outer) = estimate(config.d, &coords);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inners = Vec::new();
    let mut outers = Vec::new();
    for _ in 0..bootstrap {
        let sample: Vec<f64> = (0..coords.len()).map(|_| coords[rng.gen_range(0..coords.len())]).collect();
        let (_, i, o) = estimate(config.d, &sample);
        outers.push(o);
        if let Some(i) = i {
            inners.push(i);
        }
    }
    SupportEstimate {
        components: comps,
        inner,
        inner_se: (inner.is_some() && inners.len() > 1).then(|| std_dev(&inners)),
        outer,
        outer_se: if outers.len() > 1 { std_dev(&outers) } else { 0.0 },
    }
}

/// Sup distance between the empirical CDF of `xs` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
