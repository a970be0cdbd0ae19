//! Quadrature on the line and over the complex plane.
//!
//! Plane integrals are split into the Voronoi cells of the declared
//! singular points. Each cell is integrated in polar coordinates around its
//! site with double-exponential rules in both the angle and the radius, so
//! the algebraic singularity at the site sits at a radial endpoint. Radii
//! beyond twice the site scale are mapped by r → 1/r. Oscillatory factors
//! e^{i(pz+p̄z̄)} are handled inside a disk directly and outside it by an
//! angular Fourier expansion reduced to Bessel transforms.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{bessel_j_seq, bessel_j_zeros, BiIndex};

const TMAX: f64 = 7.0;

/// Shared evaluation counter.
#[derive(Debug)]
pub struct Budget {
    used: AtomicU64,
    limit: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget {
            used: AtomicU64::new(0),
            limit,
        }
    }

    fn take(&self, n: u64) -> bool {
        self.used.fetch_add(n, Ordering::Relaxed) + n <= self.limit
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    pub fn exhausted(&self) -> bool {
        self.used() > self.limit
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LineOpts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_level: u32,
    pub max_level: u32,
    pub fixed_level: Option<u32>,
    /// Nodes closer than this to an endpoint are dropped.
    pub min_dist: f64,
}

impl Default for LineOpts {
    fn default() -> Self {
        LineOpts {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            min_level: 2,
            max_level: 8,
            fixed_level: None,
            min_dist: 1e-300,
        }
    }
}

impl LineOpts {
    pub fn tol(rel_tol: f64) -> Self {
        LineOpts {
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineEstimate {
    pub value: C64,
    pub error: f64,
    /// Integral of |f|, for roundoff floors.
    pub l1: f64,
    pub evals: u64,
    pub converged: bool,
}

/// Distance of the tanh-sinh node at t to its nearer endpoint on [−1, 1] and
/// the node weight.
#[inline]
fn de_node(t: f64) -> (f64, f64) {
    let u = 0.5 * PI * t.abs().sinh();
    let e = (-2.0 * u).exp();
    let comp = 2.0 * e / (1.0 + e);
    let w = 0.5 * PI * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
    (comp, w)
}

/// Tanh-sinh quadrature on [a, b] with level halving. `f` returns the
/// integrand and an error bound for it (nonzero for nested integrals).
pub fn tanh_sinh<F>(
    a: f64,
    b: f64,
    opts: &LineOpts,
    budget: &Budget,
    mut f: F,
) -> Result<LineEstimate>
where
    F: FnMut(f64) -> Result<(C64, f64)>,
{
    let half = 0.5 * (b - a);
    if half == 0.0 {
        return Ok(LineEstimate {
            value: C64::new(0.0, 0.0),
            error: 0.0,
            l1: 0.0,
            evals: 0,
            converged: true,
        });
    }
    let trunc = (opts.rel_tol * 1e-4).clamp(1e-19, 1e-8);
    let min_d = opts.min_dist.max(1e-300);
    let (max_level, fixed) = match opts.fixed_level {
        Some(l) => (l, true),
        None => (opts.max_level, false),
    };
    let mut raw = C64::new(0.0, 0.0);
    let mut raw_abs = 0.0;
    let mut raw_err = 0.0;
    let mut evals = 0u64;
    let mut hist: Vec<C64> = vec![];
    let mut error = f64::INFINITY;
    let mut converged = false;
    let mut out_of_budget = false;
    // node range fixed by the level-0 sweep
    let mut tlim = [TMAX, TMAX];
    for level in 0..=max_level {
        let h = 0.5f64.powi(level as i32);
        let (start, step) = if level == 0 { (0.0, 1.0) } else { (h, 2.0 * h) };
        if level == 0 {
            let (v, e) = f(a + half)?;
            evals += 1;
            let w = 0.5 * PI * half.abs();
            raw += v * w;
            raw_abs += v.norm() * w;
            raw_err += e * w;
        }
        for (si, side) in [1.0f64, -1.0].into_iter().enumerate() {
            let mut small = 0;
            let mut k = if level == 0 { 1 } else { 0 };
            loop {
                let t = start + k as f64 * step;
                k += 1;
                if t > tlim[si] {
                    break;
                }
                let (comp, w) = de_node(t);
                let d = half.abs() * comp;
                if d < min_d || w == 0.0 {
                    break;
                }
                if !budget.take(1) {
                    out_of_budget = true;
                    break;
                }
                let x = if side > 0.0 {
                    b - half.signum() * d
                } else {
                    a + half.signum() * d
                };
                let (v, e) = f(x)?;
                evals += 1;
                let wt = w * half.abs();
                let term = v * wt;
                if !term.re.is_finite() || !term.im.is_finite() {
                    return Err(Error::Singularity(format!("non-finite integrand at {x}")));
                }
                raw += term;
                raw_abs += term.norm();
                raw_err += e * wt;
                if level == 0 && raw.norm() > 0.0 && term.norm() <= trunc * raw.norm() {
                    small += 1;
                    if small >= 2 {
                        tlim[si] = t;
                        break;
                    }
                } else {
                    small = 0;
                }
            }
        }
        let est = raw * h;
        hist.push(est);
        let roundoff = 4.0 * f64::EPSILON * raw_abs * h;
        if hist.len() >= 2 {
            let n = hist.len();
            let d1 = (hist[n - 1] - hist[n - 2]).norm();
            let bailey = if n >= 3 {
                let d2 = (hist[n - 2] - hist[n - 3]).norm();
                if d2 > d1 && d2 > 0.0 {
                    d1 * d1 / d2
                } else {
                    d1
                }
            } else {
                d1
            };
            error = bailey.max(roundoff) + raw_err * h;
            let target = (opts.rel_tol * est.norm())
                .max(opts.abs_tol)
                .max(roundoff * 4.0);
            if !fixed && level >= opts.min_level && error <= target {
                converged = true;
                break;
            }
            if fixed && level == max_level {
                converged = error <= target;
            }
        }
        if out_of_budget {
            break;
        }
    }
    if opts.fixed_level == Some(0) {
        error = 0.0;
        converged = true;
    }
    let h = 0.5f64.powi((hist.len() as i32 - 1).max(0));
    Ok(LineEstimate {
        value: *hist.last().unwrap(),
        error,
        l1: raw_abs * h,
        evals,
        converged,
    })
}

/// Convenience wrapper for plain integrands.
pub fn integrate_line<F>(a: f64, b: f64, opts: &LineOpts, mut f: F) -> Result<LineEstimate>
where
    F: FnMut(f64) -> Result<C64>,
{
    let budget = Budget::new(u64::MAX / 2);
    tanh_sinh(a, b, opts, &budget, |x| Ok((f(x)?, 0.0)))
}

/// ∫_a^∞ via x = a + s/(1−s).
pub fn integrate_half_line<F>(a: f64, opts: &LineOpts, mut f: F) -> Result<LineEstimate>
where
    F: FnMut(f64) -> Result<C64>,
{
    let budget = Budget::new(u64::MAX / 2);
    let o = LineOpts {
        min_dist: opts.min_dist.max(1e-150),
        ..*opts
    };
    tanh_sinh(0.0, 1.0, &o, &budget, |s| {
        let u = 1.0 - s;
        let x = a + s / u;
        let v = f(x)?;
        if v == C64::new(0.0, 0.0) {
            return Ok((v, 0.0));
        }
        Ok((v / (u * u), 0.0))
    })
}

/// n-point Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl24() -> &'static (Vec<f64>, Vec<f64>) {
    static T: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    T.get_or_init(|| gauss_legendre(24))
}

fn gl_interval<F: FnMut(f64) -> Result<C64>>(a: f64, b: f64, mut f: F) -> Result<C64> {
    let (x, w) = gl24();
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    let mut s = C64::new(0.0, 0.0);
    for (xi, wi) in x.iter().zip(w) {
        s += f(m + h * xi)? * (wi * h);
    }
    Ok(s)
}

/// Wynn ε-algorithm on a sequence of partial sums: (estimate, error).
pub fn wynn_epsilon(seq: &[C64]) -> (C64, f64) {
    let n = seq.len();
    if n < 3 {
        let last = *seq.last().unwrap_or(&C64::new(0.0, 0.0));
        let err = if n == 2 {
            (seq[1] - seq[0]).norm()
        } else {
            f64::INFINITY
        };
        return (last, err);
    }
    let mut prev: Vec<C64> = vec![C64::new(0.0, 0.0); n + 1];
    let mut cur: Vec<C64> = seq.to_vec();
    let mut evens: Vec<C64> = vec![seq[n - 1]];
    let mut k = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            if d.norm() == 0.0 {
                return (cur[i + 1], 0.0);
            }
            next.push(prev[i + 1] + d.inv());
        }
        prev = cur;
        cur = next;
        k += 1;
        if k % 2 == 0 {
            evens.push(*cur.last().unwrap());
        }
    }
    let m = evens.len();
    let est = evens[m - 1];
    let err = if m >= 2 {
        (evens[m - 1] - evens[m - 2]).norm()
    } else {
        (seq[n - 1] - seq[n - 2]).norm()
    };
    (est, err)
}

/// Point singularity [z − z₀]^{−strength}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub location: C64,
    pub strength: BiIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadPlan {
    pub singularities: Vec<Singularity>,
    /// Total exponent D with |f| ~ |z|^{−Re D} at infinity.
    pub decay_at_infinity: C64,
    /// p in e^{i(pz+p̄z̄)}.
    pub oscillation: Option<C64>,
    pub target_rel_error: f64,
    pub max_evaluations: u64,
    pub abs_floor: f64,
    pub length_scale: f64,
    pub fixed_level: Option<u32>,
}

impl QuadPlan {
    pub fn new(singularities: Vec<Singularity>, decay_at_infinity: C64) -> Result<Self> {
        let p = QuadPlan {
            singularities,
            decay_at_infinity,
            oscillation: None,
            target_rel_error: 1e-8,
            max_evaluations: 200_000_000,
            abs_floor: 0.0,
            length_scale: 1.0,
            fixed_level: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Plan for integrands carrying e^{i(pz+p̄z̄)}; no decay requirement.
    pub fn oscillatory(singularities: Vec<Singularity>, p: C64) -> Result<Self> {
        let mut plan = QuadPlan::new_unchecked(singularities);
        plan.oscillation = Some(p);
        plan.validate()?;
        Ok(plan)
    }

    fn new_unchecked(singularities: Vec<Singularity>) -> Self {
        QuadPlan {
            singularities,
            decay_at_infinity: C64::new(0.0, 0.0),
            oscillation: None,
            target_rel_error: 1e-8,
            max_evaluations: 200_000_000,
            abs_floor: 0.0,
            length_scale: 1.0,
            fixed_level: None,
        }
    }

    pub fn with_tol(mut self, rel: f64) -> Self {
        self.target_rel_error = rel;
        self
    }

    pub fn with_budget(mut self, n: u64) -> Self {
        self.max_evaluations = n;
        self
    }

    pub fn with_floor(mut self, abs: f64) -> Self {
        self.abs_floor = abs;
        self
    }

    pub fn with_scale(mut self, l: f64) -> Self {
        self.length_scale = l;
        self
    }

    pub fn with_fixed_level(mut self, level: Option<u32>) -> Self {
        self.fixed_level = level;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.singularities {
            let sig = s.strength.sum().re;
            if sig >= 2.0 || !sig.is_finite() {
                return Err(Error::Plan(format!(
                    "singularity at {} has Re(α+ᾱ) = {sig} ≥ 2, not integrable",
                    s.location
                )));
            }
            if !s.location.re.is_finite() || !s.location.im.is_finite() {
                return Err(Error::Plan("non-finite singularity location".into()));
            }
        }
        if self.oscillation.is_none() && self.decay_at_infinity.re <= 2.0 {
            return Err(Error::Plan(format!(
                "decay exponent Re D = {} ≤ 2, integral diverges at infinity",
                self.decay_at_infinity.re
            )));
        }
        if let Some(p) = self.oscillation {
            if p.norm() == 0.0 || !p.norm().is_finite() {
                return Err(Error::Plan("oscillation momentum must be nonzero".into()));
            }
        }
        if !(self.target_rel_error > 0.0) || !(self.length_scale > 0.0) {
            return Err(Error::Plan("tolerance and scale must be positive".into()));
        }
        Ok(())
    }
}

/// Integration point z = base + offset, with the offset kept exact so that
/// differences to the base survive when |offset| ≪ ulp(base).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePoint {
    pub base: C64,
    pub offset: C64,
}

impl PlanePoint {
    pub fn at(z: C64) -> Self {
        PlanePoint {
            base: z,
            offset: C64::new(0.0, 0.0),
        }
    }

    pub fn z(&self) -> C64 {
        self.base + self.offset
    }

    /// z − c.
    pub fn minus(&self, c: C64) -> C64 {
        if self.base == c {
            self.offset
        } else {
            (self.base - c) + self.offset
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: C64,
    pub abs_error_estimate: f64,
    pub evaluations: u64,
    pub converged: bool,
}

struct Geometry {
    sites: Vec<C64>,
    scale: Vec<f64>,
    /// Radius below which the disk around a site is dropped.
    core: Vec<f64>,
    /// Radius beyond which only the asymptotic power law is left.
    far: Vec<f64>,
    clip: Option<(C64, f64)>,
}

impl Geometry {
    fn new(locs: &[C64], length_scale: f64, clip: Option<(C64, f64)>) -> Self {
        let mut sites: Vec<C64> = vec![];
        for &z in locs {
            if !sites
                .iter()
                .any(|s| (s - z).norm() <= 1e-12 * (1.0 + z.norm()))
            {
                sites.push(z);
            }
        }
        if sites.is_empty() {
            sites.push(clip.map(|c| c.0).unwrap_or(C64::new(0.0, 0.0)));
        }
        let scale = sites
            .iter()
            .map(|s| {
                let dmin = sites
                    .iter()
                    .filter(|t| *t != s)
                    .map(|t| (t - s).norm())
                    .fold(f64::INFINITY, f64::min);
                length_scale.min(0.5 * dmin)
            })
            .collect();
        let core = vec![0.0; sites.len()];
        let far = sites
            .iter()
            .map(|s| 8.0 * sites.iter().map(|t| (t - s).norm()).fold(0.0, f64::max))
            .collect();
        Geometry {
            sites,
            scale,
            core,
            far,
            clip,
        }
    }

    /// A disk of radius ε around a site of strength σ holds ~ε^{2−σ} of the
    /// integral; drop it when that is far below the tolerance.
    fn with_cores(mut self, sings: &[Singularity], tol: f64) -> Self {
        for (i, s) in self.sites.iter().enumerate() {
            let sigma = sings
                .iter()
                .filter(|x| (x.location - s).norm() <= 1e-12 * (1.0 + s.norm()))
                .map(|x| x.strength.sum().re)
                .fold(f64::NEG_INFINITY, f64::max);
            if sigma.is_finite() && sigma < 2.0 {
                let p = 1.0 / (2.0 - sigma).max(0.05);
                self.core[i] = self.scale[i] * (tol * 1e-3).max(1e-300).powf(p).max(0.0);
            }
        }
        self
    }

    /// Distance from site i to its cell boundary along direction θ.
    fn rho(&self, i: usize, th: f64) -> f64 {
        let s = self.sites[i];
        let (st, ct) = th.sin_cos();
        let mut r = f64::INFINITY;
        for (j, t) in self.sites.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = t - s;
            let proj = d.re * ct + d.im * st;
            if proj > 0.0 {
                r = r.min(0.5 * d.norm_sqr() / proj);
            }
        }
        if let Some((c, rad)) = self.clip {
            let q = s - c;
            let b = q.re * ct + q.im * st;
            let disc = b * b - (q.norm_sqr() - rad * rad);
            r = r.min(-b + disc.max(0.0).sqrt());
        }
        r
    }

    fn breakpoints(&self, i: usize) -> Vec<f64> {
        let s = self.sites[i];
        let mut out: Vec<f64> = vec![];
        let others: Vec<C64> = self
            .sites
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| *t)
            .collect();
        for t in &others {
            let d = t - s;
            let phi = d.im.atan2(d.re);
            out.push(phi + 0.5 * PI);
            out.push(phi - 0.5 * PI);
        }
        for a in 0..others.len() {
            for b in a + 1..others.len() {
                if let Some(cc) = circumcenter(s, others[a], others[b]) {
                    let d = cc - s;
                    out.push(d.im.atan2(d.re));
                }
            }
        }
        if let Some((c, rad)) = self.clip {
            for t in &others {
                // bisector: points z with Re((z − m)·conj(d)) = 0
                let m = 0.5 * (s + t);
                let d = t - s;
                let u = C64::new(-d.im, d.re) / d.norm();
                let q = m - c;
                let b = q.re * u.re + q.im * u.im;
                let disc = b * b - (q.norm_sqr() - rad * rad);
                if disc > 0.0 {
                    for sgn in [-1.0, 1.0] {
                        let lam = -b + sgn * disc.sqrt();
                        let p = m + u * lam - s;
                        out.push(p.im.atan2(p.re));
                    }
                }
            }
        }
        let mut v: Vec<f64> = out.into_iter().map(|a| a.rem_euclid(2.0 * PI)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        v
    }

    fn pieces(&self) -> Vec<(usize, f64, f64)> {
        let mut out = vec![];
        for i in 0..self.sites.len() {
            let bp = self.breakpoints(i);
            let mut edges: Vec<(f64, f64)> = vec![];
            if bp.is_empty() {
                edges.push((0.0, 2.0 * PI));
            } else {
                for k in 0..bp.len() {
                    let a = bp[k];
                    let b = if k + 1 < bp.len() {
                        bp[k + 1]
                    } else {
                        bp[0] + 2.0 * PI
                    };
                    if b - a > 1e-12 {
                        edges.push((a, b));
                    }
                }
            }
            for (a, b) in edges {
                let n = ((b - a) / (0.5 * PI)).ceil().max(1.0) as usize;
                let w = (b - a) / n as f64;
                for k in 0..n {
                    out.push((i, a + k as f64 * w, a + (k + 1) as f64 * w));
                }
            }
        }
        out
    }
}

fn circumcenter(a: C64, b: C64, c: C64) -> Option<C64> {
    let b1 = b - a;
    let c1 = c - a;
    let d = 2.0 * (b1.re * c1.im - b1.im * c1.re);
    if d.abs() < 1e-14 * (b1.norm() * c1.norm()) {
        return None;
    }
    let ux = (c1.im * b1.norm_sqr() - b1.im * c1.norm_sqr()) / d;
    let uy = (b1.re * c1.norm_sqr() - c1.re * b1.norm_sqr()) / d;
    Some(a + C64::new(ux, uy))
}

fn level_opts(tol: f64, fixed: Option<u32>) -> LineOpts {
    let (min_level, max_level) = if tol >= 1e-5 { (1, 7) } else { (2, 8) };
    LineOpts {
        rel_tol: tol,
        abs_tol: 0.0,
        min_level,
        max_level,
        fixed_level: fixed,
        min_dist: 1e-300,
    }
}

/// ∫ d²z f over the cells of `geo`, times e^{i(pz+p̄z̄)} when `osc` is set.
fn integrate_cells<F>(
    f: &F,
    geo: &Geometry,
    osc: Option<C64>,
    tol: f64,
    fixed: Option<u32>,
    budget: &Budget,
) -> Result<(C64, f64, f64, bool)>
where
    F: Fn(&PlanePoint) -> Result<C64> + Sync,
{
    let pieces = geo.pieces();
    let outer = level_opts(tol, fixed);
    let inner = level_opts(tol * 0.1, fixed);
    let phase = |z: C64| -> C64 {
        match osc {
            Some(p) => C64::new(0.0, 2.0 * (p * z).re).exp(),
            None => C64::new(1.0, 0.0),
        }
    };
    let results: Vec<Result<LineEstimate>> = pieces
        .par_iter()
        .map(|&(i, a, b)| {
            let s = geo.sites[i];
            let ell = geo.scale[i];
            tanh_sinh(a, b, &outer, budget, |th| {
                let dir = C64::from_polar(1.0, th);
                let rho = geo.rho(i, th);
                let r0 = rho.min(2.0 * ell);
                let o1 = LineOpts {
                    min_dist: 1e-140 * r0,
                    ..inner
                };
                let seg1 = tanh_sinh(geo.core[i].min(0.5 * r0), r0, &o1, budget, |r| {
                    let z = PlanePoint {
                        base: s,
                        offset: dir * r,
                    };
                    Ok((f(&z)? * phase(z.z()) * r, 0.0))
                })?;
                let mut v = seg1.value;
                let mut e = seg1.error;
                // geometric shells up to the far radius, then r = far/v
                let far = geo.far[i].max(2.0 * ell);
                let mut lo = 2.0 * ell;
                while lo < rho.min(far) {
                    let hi = (8.0 * lo).min(rho).min(far);
                    let seg = tanh_sinh(lo, hi, &inner, budget, |r| {
                        let z = PlanePoint {
                            base: s,
                            offset: dir * r,
                        };
                        Ok((f(&z)? * phase(z.z()) * r, 0.0))
                    })?;
                    v += seg.value;
                    e += seg.error;
                    lo = hi;
                }
                if rho > far {
                    let v0 = if rho.is_finite() { far / rho } else { 0.0 };
                    let o2 = LineOpts {
                        min_dist: 1e-150,
                        ..inner
                    };
                    let seg2 = tanh_sinh(v0, 1.0, &o2, budget, |vv| {
                        let r = far / vv;
                        let z = PlanePoint {
                            base: s,
                            offset: dir * r,
                        };
                        let fz = f(&z)?;
                        if fz == C64::new(0.0, 0.0) {
                            return Ok((fz, 0.0));
                        }
                        Ok((fz * phase(z.z()) * r * (r / vv), 0.0))
                    })?;
                    v += seg2.value;
                    e += seg2.error;
                }
                Ok((v, e))
            })
        })
        .collect();
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    let mut l1 = 0.0;
    let mut conv = true;
    for r in results {
        let r = r?;
        total += r.value;
        err += r.error;
        l1 += r.l1;
        conv &= r.converged;
    }
    Ok((total, err, l1, conv))
}

/// ∫ d²z f(z) under `plan`, returning the estimate even when the target was
/// not reached.
pub fn integrate_plane_estimate<F>(f: F, plan: &QuadPlan) -> Result<IntegralEstimate>
where
    F: Fn(&PlanePoint) -> Result<C64> + Sync,
{
    plan.validate()?;
    let budget = Budget::new(plan.max_evaluations);
    let locs: Vec<C64> = plan.singularities.iter().map(|s| s.location).collect();
    let tol = plan.target_rel_error;
    let (value, err, l1) = match plan.oscillation {
        None => {
            let geo =
                Geometry::new(&locs, plan.length_scale, None).with_cores(&plan.singularities, tol);
            let (v, e, l1, _) = integrate_cells(&f, &geo, None, tol, plan.fixed_level, &budget)?;
            (v, e, l1)
        }
        Some(p) => {
            let c = if locs.is_empty() {
                C64::new(0.0, 0.0)
            } else {
                locs.iter().sum::<C64>() / locs.len() as f64
            };
            let spread = locs.iter().map(|z| (z - c).norm()).fold(0.0, f64::max);
            let rad = (2.0 * spread).max(2.0 * plan.length_scale);
            let geo = Geometry::new(&locs, plan.length_scale, Some((c, rad)))
                .with_cores(&plan.singularities, tol);
            let (v, e, l1, _) = integrate_cells(&f, &geo, Some(p), tol, plan.fixed_level, &budget)?;
            let (tv, te) = exterior_hankel(&f, c, rad, p, tol, &budget)?;
            (v + tv, e + te, l1 + tv.norm())
        }
    };
    let target = (tol * value.norm())
        .max(plan.abs_floor)
        .max(16.0 * f64::EPSILON * l1);
    Ok(IntegralEstimate {
        value,
        abs_error_estimate: err,
        evaluations: budget.used().min(plan.max_evaluations),
        converged: err <= target && !budget.exhausted(),
    })
}

/// ∫ d²z f(z); NonConvergence when the target cannot be met within budget.
pub fn integrate_plane<F>(f: F, plan: &QuadPlan) -> Result<IntegralEstimate>
where
    F: Fn(&PlanePoint) -> Result<C64> + Sync,
{
    let est = integrate_plane_estimate(f, plan)?;
    if !est.converged {
        return Err(Error::NonConvergence {
            what: "plane integral".into(),
            estimate: est.abs_error_estimate,
        });
    }
    Ok(est)
}

const NMODES: usize = 64;
const NANG: usize = 128;

/// Σ_m 2π i^m e^{−imφ_p} e^{i(pc+p̄c̄)} ∫_R^∞ r g_m(r) J_m(2|p|r) dr with g_m
/// the angular Fourier modes of f around c.
fn exterior_hankel<F>(
    f: &F,
    c: C64,
    rad: f64,
    p: C64,
    tol: f64,
    budget: &Budget,
) -> Result<(C64, f64)>
where
    F: Fn(&PlanePoint) -> Result<C64> + Sync,
{
    let pm = p.norm();
    let phip = p.im.atan2(p.re);
    let k = 2.0 * pm;
    let twiddle: Vec<C64> = (0..NANG)
        .map(|j| C64::from_polar(1.0, -2.0 * PI * j as f64 / NANG as f64))
        .collect();
    let mode_coef: Vec<C64> = (-(NMODES as i64)..=NMODES as i64)
        .map(|m| {
            let im = C64::new(0.0, 1.0).powi(m.rem_euclid(4) as i32);
            2.0 * PI * im * C64::from_polar(1.0, -(m as f64) * phip)
        })
        .collect();
    let global = C64::new(0.0, 2.0 * (p * c).re).exp();
    let radial = |r: f64| -> Result<C64> {
        if !budget.take(NANG as u64) {
            return Err(Error::NonConvergence {
                what: "exterior Hankel tail: budget".into(),
                estimate: f64::NAN,
            });
        }
        let vals: Vec<C64> = (0..NANG)
            .map(|j| {
                f(&PlanePoint {
                    base: c,
                    offset: C64::from_polar(r, 2.0 * PI * j as f64 / NANG as f64),
                })
            })
            .collect::<Result<_>>()?;
        let js = bessel_j_seq(NMODES, k * r);
        let mut acc = C64::new(0.0, 0.0);
        for (idx, m) in (-(NMODES as i64)..=NMODES as i64).enumerate() {
            let mut g = C64::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                g += v * twiddle[((m.rem_euclid(NANG as i64) as usize) * j) % NANG];
            }
            g /= NANG as f64;
            let ma = m.unsigned_abs() as usize;
            let jm = if m < 0 && ma % 2 == 1 {
                -js[ma]
            } else {
                js[ma]
            };
            acc += mode_coef[idx] * g * jm;
        }
        Ok(acc * r)
    };
    let half_period = PI / k;
    // geometric lead-in until intervals reach half a period
    let mut a = rad;
    let mut lead = C64::new(0.0, 0.0);
    let mut width = (0.25 * rad).min(half_period);
    while width < half_period {
        lead += gl_interval(a, a + width, &radial)?;
        a += width;
        width = (width * 2.0).min(half_period);
    }
    let mut sums: Vec<C64> = vec![lead];
    let mut last_est = C64::new(f64::NAN, 0.0);
    let mut stable = 0;
    for _ in 0..4000 {
        let piece = gl_interval(a, a + half_period, &radial)?;
        a += half_period;
        let s = *sums.last().unwrap() + piece;
        sums.push(s);
        if sums.len() >= 8 {
            let window = &sums[sums.len().saturating_sub(40)..];
            let (est, werr) = wynn_epsilon(window);
            let diff = (est - last_est).norm();
            let scale = est.norm().max(1e-300);
            if diff <= tol * 0.1 * scale && werr <= tol * scale {
                stable += 1;
                if stable >= 2 {
                    return Ok((est * global, diff.max(werr)));
                }
            } else {
                stable = 0;
            }
            last_est = est;
        }
    }
    Err(Error::NonConvergence {
        what: "exterior Hankel tail".into(),
        estimate: f64::NAN,
    })
}

/// ∫₀^∞ dr r f(r) J_n(2|p| r), split at the zeros of J_n and accelerated.
pub fn integrate_radial_oscillatory<F>(
    f_radial: F,
    n: i64,
    p_mag: f64,
    plan: &QuadPlan,
) -> Result<IntegralEstimate>
where
    F: Fn(f64) -> Result<C64>,
{
    if !(p_mag > 0.0) {
        return Err(Error::Plan("|p| must be positive".into()));
    }
    let tol = plan.target_rel_error;
    let k = 2.0 * p_mag;
    let budget = Budget::new(plan.max_evaluations);
    let ma = n.unsigned_abs() as usize;
    let sgn = if n < 0 && ma % 2 == 1 { -1.0 } else { 1.0 };
    let jn = |x: f64| sgn * bessel_j_seq(ma, x)[ma];
    let g = |r: f64| -> Result<C64> { Ok(f_radial(r)? * r * jn(k * r)) };
    let mut zeros: Vec<f64> = bessel_j_zeros(ma as i64, 64)
        .into_iter()
        .map(|z| z / k)
        .collect();
    let opts = LineOpts {
        rel_tol: tol * 0.1,
        ..LineOpts::default()
    };
    let first = tanh_sinh(0.0, zeros[0], &opts, &budget, |r| Ok((g(r)?, 0.0)))?;
    let mut evals = first.evals;
    let mut sums = vec![first.value];
    let mut last_est = C64::new(f64::NAN, 0.0);
    let mut stable = 0;
    let mut idx = 0;
    let mut err = f64::INFINITY;
    while idx < 3000 {
        if idx + 1 >= zeros.len() {
            let more = bessel_j_zeros(ma as i64, zeros.len() * 2);
            zeros = more.into_iter().map(|z| z / k).collect();
        }
        let (a, b) = (zeros[idx], zeros[idx + 1]);
        idx += 1;
        let piece = gl_interval(a, b, &g)?;
        evals += 24;
        if !budget.take(24) {
            break;
        }
        let s = *sums.last().unwrap() + piece;
        sums.push(s);
        if sums.len() >= 8 {
            let window = &sums[sums.len().saturating_sub(40)..];
            let (est, werr) = wynn_epsilon(window);
            let diff = (est - last_est).norm();
            let scale = est.norm().max(plan.abs_floor).max(1e-300);
            err = diff.max(werr) + first.error;
            if err <= tol * scale {
                stable += 1;
                if stable >= 2 {
                    return Ok(IntegralEstimate {
                        value: est,
                        abs_error_estimate: err,
                        evaluations: evals,
                        converged: true,
                    });
                }
            } else {
                stable = 0;
            }
            last_est = est;
        }
    }
    Err(Error::NonConvergence {
        what: "radial oscillatory integral: acceleration stagnated".into(),
        estimate: err,
    })
}

/// ∫ d²z e^{i(pz+p̄z̄)} [z]^{−α} by angular reduction to a Bessel transform.
pub fn fourier_power(alpha: &BiIndex, p: C64, plan: &QuadPlan) -> Result<IntegralEstimate> {
    let n = alpha.gap();
    let sigma = alpha.sum();
    let phi = p.im.atan2(p.re);
    let est =
        integrate_radial_oscillatory(|r| Ok(C64::new(r, 0.0).powc(-sigma)), n, p.norm(), plan)?;
    let pref = 2.0 * PI * crate::specfun::i_pow(n) * C64::from_polar(1.0, n as f64 * phi);
    Ok(IntegralEstimate {
        value: est.value * pref,
        abs_error_estimate: est.abs_error_estimate * 2.0 * PI,
        ..est
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_rules() {
        let e = integrate_line(0.0, 1.0, &LineOpts::tol(1e-13), |x| {
            Ok(C64::new(x.powf(-0.9), 0.0))
        })
        .unwrap();
        assert!((e.value.re - 10.0).abs() < 1e-10, "{e:?}");
        let e = integrate_half_line(0.0, &LineOpts::tol(1e-12), |x| {
            Ok(C64::new((-x).exp(), 0.0))
        })
        .unwrap();
        assert!((e.value.re - 1.0).abs() < 1e-11, "{e:?}");
        let (x, w) = gauss_legendre(24);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(46)).sum();
        assert!((s - 2.0 / 47.0).abs() < 1e-14);
    }

    #[test]
    fn wynn_alternating() {
        let mut s = C64::new(0.0, 0.0);
        let mut seq = vec![];
        for k in 0..20 {
            s += C64::new(if k % 2 == 0 { 1.0 } else { -1.0 } / (k as f64 + 1.0), 0.0);
            seq.push(s);
        }
        let (est, _) = wynn_epsilon(&seq);
        assert!((est.re - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_calibration() {
        let plan = QuadPlan::new(vec![], C64::new(10.0, 0.0))
            .unwrap()
            .with_tol(1e-11);
        let e =
            integrate_plane(|z| Ok(C64::new((-z.z().norm_sqr()).exp() / PI, 0.0)), &plan).unwrap();
        assert!((e.value - 1.0).norm() < 1e-10, "{e:?}");
    }

    #[test]
    fn plan_rejects_nonintegrable() {
        let s = Singularity {
            location: C64::new(0.0, 0.0),
            strength: BiIndex::diag(C64::new(1.0, 0.0)),
        };
        assert!(matches!(
            QuadPlan::new(vec![s], C64::new(3.0, 0.0)),
            Err(Error::Plan(_))
        ));
        assert!(matches!(
            QuadPlan::new(vec![], C64::new(2.0, 0.0)),
            Err(Error::Plan(_))
        ));
    }
}
