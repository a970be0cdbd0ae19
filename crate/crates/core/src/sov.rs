//! Separation-of-variables eigenfunctions of the homogeneous SL(2,C) chain,
//! Sklyanin measures, monodromy entries as finite-difference operators and
//! matrix elements compared against their closed forms.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::diagrams::{eval_diagram, rewrite_chain, rewrite_cross, Diagram};
use crate::error::{Error, Result};
use crate::planequad::{fourier_power, integrate_plane, IntegralEstimate, QuadPlan, Singularity};
use crate::rational::QC;
use crate::specfun::{power_bi, BiIndex, SeparatedPoint, Spin};
use crate::symalg::{
    ba_closed_form, txx_closed_form, AFactorProduct, AffineExpr, ConjRule, ParamValue, SPIN,
};

fn default_regularization() -> f64 {
    0.05
}

/// Homogeneous chain of `n` sites carrying one spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub spin: Spin,
    /// Imaginary offset of ν for ket variables (bra variables get its negative).
    #[serde(default = "default_regularization")]
    pub regularization: f64,
}

impl ChainConfig {
    pub fn new(n: usize, spin: Spin) -> Result<Self> {
        let c = ChainConfig {
            n,
            spin,
            regularization: default_regularization(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_regularization(mut self, r: f64) -> Result<Self> {
        self.regularization = r;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n) {
            return Err(Error::Invalid(format!(
                "chain length N = {} outside 1..=3",
                self.n
            )));
        }
        if !(self.regularization > 0.0) || !self.regularization.is_finite() {
            return Err(Error::Invalid(
                "regularization must be a positive real".into(),
            ));
        }
        if !self.spin.nu_s.is_finite() {
            return Err(Error::Invalid("non-finite spin".into()));
        }
        Ok(())
    }

    fn check_len(&self, what: &str, len: usize, want: usize) -> Result<()> {
        if len != want {
            return Err(Error::Invalid(format!(
                "{what} has length {len}, expected {want} for N = {}",
                self.n
            )));
        }
        Ok(())
    }
}

fn x_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

fn spin_e() -> AffineExpr {
    AffineExpr::param(SPIN)
}

/// a(s + ix) a(s̄ − i x̄).
fn r_unit(x: &str) -> AFactorProduct {
    AFactorProduct::a(spin_e() + AffineExpr::i_param(x)).times(&AFactorProduct::a(
        AffineExpr::param_bar(SPIN) - AffineExpr::param_bar(x) * QC::i(),
    ))
}

/// Adds Λ̃_k(x_1) Λ̃_{k−1}(x_2) ⋯ Λ̃_1(x_k) with outputs `outs` (k = outs.len())
/// and shift point `z0`; new integration vertices are named from `tag`.
fn add_layers(mut d: Diagram, outs: &[String], xs: &[String], z0: &str, tag: &str) -> Diagram {
    let k = outs.len();
    let x = &xs[0];
    let one = AffineExpr::int(1);
    let ix = AffineExpr::i_param(x);
    d = d.edge(z0, &outs[k - 1], spin_e() - ix.clone());
    if k == 1 {
        return d;
    }
    for _ in 1..k {
        d.prefactor = d.prefactor.times(&r_unit(x));
    }
    let ws: Vec<String> = (1..k).map(|i| format!("{tag}{i}")).collect();
    for i in 0..k - 1 {
        d = d
            .vertex(&ws[i])
            .edge(
                &outs[i + 1],
                &outs[i],
                spin_e().scale(QC::int(2)) - one.clone(),
            )
            .edge(&outs[i], &ws[i], one.clone() - spin_e() - ix.clone())
            .edge(&outs[i + 1], &ws[i], one.clone() - spin_e() + ix.clone());
    }
    add_layers(d, &ws, &xs[1..], z0, &format!("{tag}{k}_"))
}

fn conj_rule(name: &str) -> ConjRule {
    if name == SPIN {
        ConjRule::Spin
    } else {
        ConjRule::Point
    }
}

/// Complex conjugate of a-factor products and propagators, continued
/// analytically in the parameters.
fn conj_expr(e: &AffineExpr) -> AffineExpr {
    e.analytic_conj(conj_rule)
}

fn conj_factor(e: &AffineExpr) -> AffineExpr {
    conj_expr(e).swap()
}

fn conj_product(p: &AFactorProduct) -> Result<AFactorProduct> {
    if !p.extra_powers.is_empty() || !p.bracket_num.is_empty() || !p.bracket_den.is_empty() {
        return Err(Error::Invalid(
            "conjugation of bracket or point powers is not supported".into(),
        ));
    }
    if p.phase_power != AffineExpr::zero() {
        return Err(Error::Invalid(
            "conjugation of phase monomials is not supported".into(),
        ));
    }
    let mut out = AFactorProduct::one();
    out.numerator = p.numerator.iter().map(conj_factor).collect();
    out.denominator = p.denominator.iter().map(conj_factor).collect();
    out.sign_power = conj_factor(&p.sign_power);
    out.scalar = p.scalar.clone();
    Ok(out)
}

fn check_distinct(z: &[C64], z0: C64) -> Result<()> {
    for (i, a) in z.iter().enumerate() {
        if !a.re.is_finite() || !a.im.is_finite() {
            return Err(Error::Invalid("non-finite point".into()));
        }
        if *a == z0 {
            return Err(Error::Singularity(format!("z{} coincides with z0", i + 1)));
        }
        for (j, b) in z.iter().enumerate().skip(i + 1) {
            if a == b {
                return Err(Error::Singularity(format!("z{} = z{}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// Diagram of Ψ_A(x|z − z0) with points z1..zN, z0 and parameters s, x1..xN.
pub fn psi_a_diagram(
    cfg: &ChainConfig,
    x: &[SeparatedPoint],
    z: &[C64],
    z0: C64,
) -> Result<Diagram> {
    cfg.validate()?;
    cfg.check_len("x", x.len(), cfg.n)?;
    cfg.check_len("z", z.len(), cfg.n)?;
    check_distinct(z, z0)?;
    let outs = x_names("z", cfg.n);
    let xs = x_names("x", cfg.n);
    let mut d = Diagram::new().point("z0", z0);
    for (name, zk) in outs.iter().zip(z) {
        d = d.point(name, *zk);
    }
    for (name, xk) in xs.iter().zip(x) {
        d = d.param(name, ParamValue::point(xk));
    }
    d = d.param(SPIN, ParamValue::spin(&cfg.spin));
    Ok(add_layers(d, &outs, &xs, "z0", "w"))
}

/// Ψ_A(x|z − z0): exact at N = 1, one plane integral at N = 2.
pub fn psi_a(
    cfg: &ChainConfig,
    x: &[SeparatedPoint],
    z: &[C64],
    z0: C64,
    tol: f64,
) -> Result<IntegralEstimate> {
    let d = psi_a_diagram(cfg, x, z, z0)?;
    eval_diagram(&d, tol)
}

/// Ψ_B(p, x|z) for N ≤ 2; x has N − 1 entries.
pub fn psi_b(
    cfg: &ChainConfig,
    p: C64,
    x: &[SeparatedPoint],
    z: &[C64],
    tol: f64,
) -> Result<IntegralEstimate> {
    cfg.validate()?;
    cfg.check_len("x", x.len(), cfg.n - 1)?;
    cfg.check_len("z", z.len(), cfg.n)?;
    let plane = |w: C64| C64::new(0.0, 2.0 * (p * w).re).exp();
    match cfg.n {
        1 => Ok(IntegralEstimate {
            value: plane(z[0]),
            abs_error_estimate: 0.0,
            evaluations: 0,
            converged: true,
        }),
        2 => {
            if p.norm() == 0.0 {
                return Err(Error::Invalid("Ψ_B at N = 2 needs p ≠ 0".into()));
            }
            if z[0] == z[1] {
                return Err(Error::Singularity("z1 = z2".into()));
            }
            let s = cfg.spin.as_index();
            let xi = &x[0];
            let i = C64::new(0.0, 1.0);
            let one = C64::new(1.0, 0.0);
            // [w − z1]^{s+ix−1}[w − z2]^{s−ix−1}
            let e1 = BiIndex::with_gap(s.alpha() + i * xi.x() - one, s.gap() + xi.n);
            let e2 = BiIndex::with_gap(s.alpha() - i * xi.x() - one, s.gap() - xi.n);
            let plan = QuadPlan::oscillatory(
                vec![
                    Singularity {
                        location: z[0],
                        strength: e1.neg(),
                    },
                    Singularity {
                        location: z[1],
                        strength: e2.neg(),
                    },
                ],
                p,
            )?
            .with_tol(tol);
            let est = integrate_plane(
                |w| Ok(power_bi(w.minus(z[0]), &e1)? * power_bi(w.minus(z[1]), &e2)?),
                &plan,
            )?;
            let mut a = crate::symalg::Assignment::new();
            a.set_point("x1", xi).set_spin(SPIN, &cfg.spin);
            let r = r_unit("x1").eval(&a)?;
            let gamma = BiIndex::with_gap(one - 2.0 * s.alpha(), -2 * s.gap());
            let pref = p.norm() * r * power_bi(z[0] - z[1], &gamma)?;
            Ok(IntegralEstimate {
                value: est.value * pref,
                abs_error_estimate: est.abs_error_estimate * pref.norm(),
                ..est
            })
        }
        _ => Err(Error::Invalid("Ψ_B is evaluated for N ≤ 2".into())),
    }
}

fn bracket_product(x: &[SeparatedPoint]) -> C64 {
    let mut v = C64::new(1.0, 0.0);
    for k in 0..x.len() {
        for j in k + 1..x.len() {
            v *= (x[k].x() - x[j].x()) * (x[k].x_bar() - x[j].x_bar());
        }
    }
    v
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// μ^(A)_N(x) = (1/N!) π^{−N²}(2π)^{−N} Π_{k<j}[x_k − x_j] with N = x.len().
pub fn measure_a(x: &[SeparatedPoint]) -> C64 {
    let n = x.len();
    bracket_product(x) * (PI.powi(-((n * n) as i32)) / (2.0 * PI).powi(n as i32) / factorial(n))
}

/// μ^(B)_N(x) = (1/(N−1)!) 2π^{−N²}(2π)^{−N} Π_{k<j}[x_k − x_j] with N = x.len() + 1.
pub fn measure_b(x: &[SeparatedPoint]) -> C64 {
    let n = x.len() + 1;
    bracket_product(x)
        * (2.0 * PI.powi(-((n * n) as i32)) / (2.0 * PI).powi(n as i32) / factorial(n - 1))
}

// ---------------------------------------------------------------------------
// monodromy matrix

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entry {
    A,
    B,
}

/// Entry of T(u) = L₁(u)⋯L_N(u); `u_bar` labels the antiholomorphic copy and
/// is carried for completeness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonodromyEntry {
    pub which: Entry,
    #[serde(rename = "N")]
    pub n: usize,
    pub u: C64,
    pub u_bar: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpinOp {
    Id,
    S0,
    Minus,
    Plus,
}

#[derive(Debug, Clone)]
struct OpTerm {
    coef: C64,
    upow: u32,
    ops: Vec<SpinOp>,
}

fn l_entry(i: usize, j: usize) -> Vec<OpTerm> {
    let ic = C64::new(0.0, 1.0);
    let one = C64::new(1.0, 0.0);
    let t = |coef, upow, op| OpTerm {
        coef,
        upow,
        ops: vec![op],
    };
    match (i, j) {
        (0, 0) => vec![t(one, 1, SpinOp::Id), t(ic, 0, SpinOp::S0)],
        (0, 1) => vec![t(ic, 0, SpinOp::Minus)],
        (1, 0) => vec![t(ic, 0, SpinOp::Plus)],
        _ => vec![t(one, 1, SpinOp::Id), t(-ic, 0, SpinOp::S0)],
    }
}

fn monodromy_terms(which: Entry, n: usize) -> Vec<OpTerm> {
    let mut t: Vec<Vec<Vec<OpTerm>>> = (0..2)
        .map(|i| (0..2).map(|j| l_entry(i, j)).collect())
        .collect();
    for _ in 1..n {
        let mut next: Vec<Vec<Vec<OpTerm>>> = vec![vec![vec![], vec![]], vec![vec![], vec![]]];
        for i in 0..2 {
            for j in 0..2 {
                for m in 0..2 {
                    for a in &t[i][m] {
                        for b in l_entry(m, j) {
                            let mut ops = a.ops.clone();
                            ops.extend(b.ops);
                            next[i][j].push(OpTerm {
                                coef: a.coef * b.coef,
                                upow: a.upow + b.upow,
                                ops,
                            });
                        }
                    }
                }
            }
        }
        t = next;
    }
    match which {
        Entry::A => t[0][0].clone(),
        Entry::B => t[0][1].clone(),
    }
}

impl MonodromyEntry {
    pub fn new(which: Entry, n: usize, u: C64) -> Self {
        MonodromyEntry {
            which,
            n,
            u,
            u_bar: u.conj(),
        }
    }

    /// Highest power of u with a nonzero operator coefficient.
    pub fn degree(&self) -> u32 {
        monodromy_terms(self.which, self.n)
            .iter()
            .map(|t| t.upow)
            .max()
            .unwrap_or(0)
    }
}

const STENCIL_OFF: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];
const STENCIL_W: [f64; 4] = [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];

fn stencil_value(f: &dyn Fn(&[C64]) -> Result<C64>, z: &[C64]) -> Result<C64> {
    let v = f(z).map_err(|e| match e {
        Error::Singularity(m) | Error::Pole(m) => {
            Error::Stencil(format!("stencil point hits a singularity: {m}"))
        }
        other => other,
    })?;
    if !v.re.is_finite() || !v.im.is_finite() {
        return Err(Error::Stencil("non-finite value on the stencil".into()));
    }
    Ok(v)
}

/// Π_{k∈sites} ∂_{z_k} f by tensor 4th-order central differences, with
/// ∂_z = (∂_x − i∂_y)/2.
fn holomorphic_derivative(
    f: &dyn Fn(&[C64]) -> Result<C64>,
    z: &[C64],
    sites: &[usize],
    h: f64,
) -> Result<C64> {
    let m = sites.len();
    if m == 0 {
        return stencil_value(f, z);
    }
    let mut total = C64::new(0.0, 0.0);
    for dirs in 0..(1usize << m) {
        let mut dir_factor = C64::new(1.0, 0.0);
        for j in 0..m {
            dir_factor *= if dirs >> j & 1 == 1 {
                C64::new(0.0, -0.5)
            } else {
                C64::new(0.5, 0.0)
            };
        }
        for idx in 0..4usize.pow(m as u32) {
            let mut pt = z.to_vec();
            let mut w = dir_factor;
            let mut rest = idx;
            for j in 0..m {
                let digit = rest % 4;
                rest /= 4;
                let step = if dirs >> j & 1 == 1 {
                    C64::new(0.0, h)
                } else {
                    C64::new(h, 0.0)
                };
                pt[sites[j]] += step * STENCIL_OFF[digit];
                w *= STENCIL_W[digit] / h;
            }
            total += w * stencil_value(f, &pt)?;
        }
    }
    Ok(total)
}

/// Applies A_N(u) or B_N(u) to f at z with finite-difference step h.
pub fn apply_monodromy_entry(
    entry: &MonodromyEntry,
    spin: &Spin,
    f: &dyn Fn(&[C64]) -> Result<C64>,
    z: &[C64],
    h: f64,
) -> Result<C64> {
    if entry.n == 0 || entry.n > 2 {
        return Err(Error::Invalid(format!(
            "monodromy entries are applied for N ≤ 2, got {}",
            entry.n
        )));
    }
    if z.len() != entry.n {
        return Err(Error::Invalid("point count differs from N".into()));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Stencil(format!("step h = {h} must be positive")));
    }
    let s = spin.s();
    let terms = monodromy_terms(entry.which, entry.n);
    let n = entry.n;
    let mut derivs: Vec<Option<C64>> = vec![None; 1 << n];
    let mut total = C64::new(0.0, 0.0);
    for t in &terms {
        // Π_k (a_k + b_k ∂_k) expanded over subsets of differentiated sites
        let ab: Vec<(C64, C64)> = t
            .ops
            .iter()
            .zip(z)
            .map(|(op, zk)| match op {
                SpinOp::Id => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
                SpinOp::S0 => (s, *zk),
                SpinOp::Minus => (C64::new(0.0, 0.0), C64::new(-1.0, 0.0)),
                SpinOp::Plus => (2.0 * s * zk, zk * zk),
            })
            .collect();
        let mut acc = C64::new(0.0, 0.0);
        for mask in 0..(1usize << n) {
            let mut c = C64::new(1.0, 0.0);
            for (k, (a, b)) in ab.iter().enumerate() {
                c *= if mask >> k & 1 == 1 { *b } else { *a };
            }
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            let d = match derivs[mask] {
                Some(v) => v,
                None => {
                    let sites: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
                    let v = holomorphic_derivative(f, z, &sites, h)?;
                    derivs[mask] = Some(v);
                    v
                }
            };
            acc += c * d;
        }
        total += t.coef * entry.u.powu(t.upow) * acc;
    }
    Ok(total)
}

/// Step `frac` × (distance from the z_k to each other and to `singular`).
pub fn stencil_step(z: &[C64], singular: &[C64], frac: f64) -> Result<f64> {
    let mut d = f64::INFINITY;
    for (i, a) in z.iter().enumerate() {
        for b in z.iter().skip(i + 1).chain(singular) {
            d = d.min((a - b).norm());
        }
    }
    if d == 0.0 {
        return Err(Error::Stencil(
            "evaluation point sits on a singularity".into(),
        ));
    }
    if !d.is_finite() {
        d = z.iter().map(|a| a.norm()).fold(1.0, f64::max);
    }
    Ok(frac * d)
}

fn check_step(h: f64, dist: f64) -> Result<f64> {
    if 2.0 * h >= 0.5 * dist {
        return Err(Error::Stencil(format!(
            "stencil of step {h} reaches a singularity at distance {dist}"
        )));
    }
    Ok(h)
}

/// Relative step for exact functions and for quadrature-backed ones.
pub const EXACT_STEP: f64 = 1e-3;
pub const QUADRATURE_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenCheck {
    pub lhs: C64,
    pub rhs: C64,
    pub rel_residual: f64,
    pub h: f64,
}

impl EigenCheck {
    fn new(lhs: C64, rhs: C64, h: f64) -> Self {
        EigenCheck {
            lhs,
            rhs,
            rel_residual: (lhs - rhs).norm() / rhs.norm().max(1e-300),
            h,
        }
    }
}

/// A_N(u)Ψ_A against Π(u − x_k)Ψ_A at z (eigenfunction shifted by z0 = 0).
pub fn check_a_eigen(
    cfg: &ChainConfig,
    x: &[SeparatedPoint],
    z: &[C64],
    u: C64,
    h: Option<f64>,
    tol: f64,
) -> Result<EigenCheck> {
    cfg.validate()?;
    if cfg.n > 2 {
        return Err(Error::Invalid("eigen-equation checks run for N ≤ 2".into()));
    }
    let z0 = C64::new(0.0, 0.0);
    let h = match h {
        Some(h) => check_step(h, stencil_step(z, &[z0], 1.0)?)?,
        None => stencil_step(
            z,
            &[z0],
            if cfg.n == 1 {
                EXACT_STEP
            } else {
                QUADRATURE_STEP
            },
        )?,
    };
    let f = |zz: &[C64]| -> Result<C64> { Ok(psi_a(cfg, x, zz, z0, tol)?.value) };
    let lhs = apply_monodromy_entry(
        &MonodromyEntry::new(Entry::A, cfg.n, u),
        &cfg.spin,
        &f,
        z,
        h,
    )?;
    let lambda: C64 = x.iter().map(|xk| u - xk.x()).product();
    Ok(EigenCheck::new(lhs, lambda * f(z)?, h))
}

/// B_N(u)Ψ_B against p Π(u − x_k)Ψ_B at z.
pub fn check_b_eigen(
    cfg: &ChainConfig,
    p: C64,
    x: &[SeparatedPoint],
    z: &[C64],
    u: C64,
    h: Option<f64>,
    tol: f64,
) -> Result<EigenCheck> {
    cfg.validate()?;
    if cfg.n > 2 {
        return Err(Error::Invalid("eigen-equation checks run for N ≤ 2".into()));
    }
    let h = match h {
        Some(h) => check_step(h, stencil_step(z, &[], 1.0)?)?,
        None => {
            let h = stencil_step(
                z,
                &[],
                if cfg.n == 1 {
                    EXACT_STEP
                } else {
                    QUADRATURE_STEP
                },
            )?;
            // resolve the plane wave as well
            h.min(if p.norm() > 0.0 { 0.05 / p.norm() } else { h })
        }
    };
    let f = |zz: &[C64]| -> Result<C64> { Ok(psi_b(cfg, p, x, zz, tol)?.value) };
    let lhs = apply_monodromy_entry(
        &MonodromyEntry::new(Entry::B, cfg.n, u),
        &cfg.spin,
        &f,
        z,
        h,
    )?;
    let lambda: C64 = p * x.iter().map(|xk| u - xk.x()).product::<C64>();
    Ok(EigenCheck::new(lhs, lambda * f(z)?, h))
}

// ---------------------------------------------------------------------------
// matrix elements

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixElement {
    pub numeric: C64,
    pub closed: C64,
    pub rel_dev: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
    pub converged: bool,
    pub regularization: f64,
    pub method: String,
}

impl MatrixElement {
    fn new(est: &IntegralEstimate, closed: C64, reg: f64, method: &str) -> Self {
        MatrixElement {
            numeric: est.value,
            closed,
            rel_dev: (est.value - closed).norm() / closed.norm().max(1e-300),
            error_estimate: est.abs_error_estimate,
            evaluations: est.evaluations,
            converged: est.converged,
            regularization: reg,
            method: method.into(),
        }
    }
}

fn regularize(x: &[SeparatedPoint], off: f64) -> Vec<SeparatedPoint> {
    x.iter().map(|p| p.with_offset(off)).collect()
}

/// Integrand diagram of ⟨Ψ_A(x′)|T_{z0}|Ψ_A(x)⟩ with z1..zN as vertices; x
/// and x′ are used as given (offsets included).
pub fn t_diagram(
    cfg: &ChainConfig,
    x: &[SeparatedPoint],
    xp: &[SeparatedPoint],
    z0: C64,
) -> Result<Diagram> {
    cfg.validate()?;
    cfg.check_len("x", x.len(), cfg.n)?;
    cfg.check_len("x′", xp.len(), cfg.n)?;
    if z0 == C64::new(0.0, 0.0) {
        return Err(Error::Invalid("z0 must differ from 0".into()));
    }
    let outs = x_names("z", cfg.n);
    let xs = x_names("x", cfg.n);
    let xps = x_names("xp", cfg.n);
    let ket = add_layers(Diagram::new(), &outs, &xs, "z0", "w");
    let bra = add_layers(Diagram::new(), &outs, &xps, "o", "v");
    let mut d = Diagram::new()
        .point("z0", z0)
        .point("o", C64::new(0.0, 0.0));
    for o in &outs {
        d = d.vertex(o);
    }
    for v in ket.internal_vertices.iter().chain(&bra.internal_vertices) {
        d = d.vertex(v);
    }
    d.edges.extend(ket.edges.iter().cloned());
    for e in &bra.edges {
        d = d.edge(&e.from, &e.to, conj_expr(&e.index));
    }
    d.prefactor = ket.prefactor.times(&conj_product(&bra.prefactor)?);
    for (n, v) in xs.iter().zip(x) {
        d = d.param(n, ParamValue::point(v));
    }
    for (n, v) in xps.iter().zip(xp) {
        d = d.param(n, ParamValue::point(v));
    }
    Ok(d.param(SPIN, ParamValue::spin(&cfg.spin)))
}

fn line_index(d: &Diagram, a: &str, b: &str) -> Result<AffineExpr> {
    d.edges
        .iter()
        .find(|e| (e.from == a && e.to == b) || (e.from == b && e.to == a))
        .map(|e| e.index.clone())
        .ok_or_else(|| Error::Pattern(format!("no line between `{a}` and `{b}`")))
}

fn is_hub_with_leaves(d: &Diagram) -> bool {
    d.internal_vertices.iter().any(|h| {
        d.edges
            .iter()
            .all(|e| !(d.is_vertex(&e.from) && d.is_vertex(&e.to)) || e.from == *h || e.to == *h)
    })
}

/// N = 2 matrix-element diagram reduced to one hub with two leaves: chain
/// over z1, then the cross relation at z2.
pub fn t_diagram_reduced(d: &Diagram) -> Result<Diagram> {
    let d = rewrite_chain(&d.normalize(), "z1")?;
    let inc: Vec<String> = d
        .incident("z2")
        .iter()
        .map(|&k| {
            if d.edges[k].from == "z2" {
                d.edges[k].to.clone()
            } else {
                d.edges[k].from.clone()
            }
        })
        .collect();
    let one = AffineExpr::int(1);
    let mut last = Error::Pattern("no cross arrangement reduces the diagram".into());
    let pts = ["o", "z0"];
    let legs = ["w1", "v1"];
    for (p1, p2) in [(pts[0], pts[1]), (pts[1], pts[0])] {
        for (l1, l2) in [(legs[0], legs[1]), (legs[1], legs[0])] {
            if ![p1, p2, l1, l2].iter().all(|n| inc.iter().any(|m| m == n)) {
                continue;
            }
            let ap = one.clone() - line_index(&d, p2, "z2")?;
            let bp = one.clone() - line_index(&d, l2, "z2")?;
            match rewrite_cross(&d, "z2", [p1, p2, l1, l2], &ap, &bp) {
                Ok(r) if is_hub_with_leaves(&r) => return Ok(r),
                Ok(_) => {}
                Err(e) => last = e,
            }
        }
    }
    Err(last)
}

/// T_{z0}(x, x′) by quadrature against the closed form, at one regularization.
pub fn matrix_element_t(
    cfg: &ChainConfig,
    x: &[SeparatedPoint],
    xp: &[SeparatedPoint],
    z0: C64,
    target: f64,
) -> Result<MatrixElement> {
    let xr = regularize(x, cfg.regularization);
    let xpr = regularize(xp, -cfg.regularization);
    let d = t_diagram(cfg, &xr, &xpr, z0)?;
    let (d, method) = match cfg.n {
        1 => (d, "plane quadrature"),
        2 => (
            t_diagram_reduced(&d)?,
            "chain and cross rewrites, then nested quadrature",
        ),
        _ => {
            return Err(Error::Invalid(
                "matrix element T is evaluated for N ≤ 2".into(),
            ))
        }
    };
    let est = eval_diagram(&d, target * 0.1)?;
    let closed = txx_closed_form(&xr, &xpr, &cfg.spin, z0)?.value()?;
    Ok(MatrixElement::new(&est, closed, cfg.regularization, method))
}

/// Regularizations whose polynomial extrapolation reaches zero offset.
pub const REGULARIZATION_LADDER: [f64; 6] = [0.1, 0.085, 0.07, 0.055, 0.04, 0.025];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationRow {
    pub regularization: f64,
    pub numeric: C64,
    pub closed: C64,
    /// Deviation from the closed form at the same regularization.
    pub rel_dev: f64,
    /// Deviation from the closed form without regularization.
    pub rel_dev_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSweep {
    pub rows: Vec<RegularizationRow>,
    pub extrapolated: C64,
    pub closed_limit: C64,
    pub rel_dev: f64,
}

/// Numeric T_{z0} at each regularization, polynomially extrapolated to zero
/// and compared with the unregularized closed form.
pub fn t_regularization_sweep(
    cfg: &ChainConfig,
    x: &[SeparatedPoint],
    xp: &[SeparatedPoint],
    z0: C64,
    regs: &[f64],
    target: f64,
) -> Result<RegularizationSweep> {
    if regs.is_empty() {
        return Err(Error::Invalid("empty regularization list".into()));
    }
    let closed_limit =
        txx_closed_form(&regularize(x, 0.0), &regularize(xp, 0.0), &cfg.spin, z0)?.value()?;
    let mut rows = vec![];
    for &r in regs {
        let m = matrix_element_t(&cfg.with_regularization(r)?, x, xp, z0, target)?;
        rows.push(RegularizationRow {
            regularization: r,
            numeric: m.numeric,
            closed: m.closed,
            rel_dev: m.rel_dev,
            rel_dev_limit: (m.numeric - closed_limit).norm() / closed_limit.norm(),
        });
    }
    // Neville extrapolation to zero
    let xs: Vec<f64> = rows.iter().map(|r| r.regularization).collect();
    let mut p: Vec<C64> = rows.iter().map(|r| r.numeric).collect();
    for k in 1..p.len() {
        for i in (k..p.len()).rev() {
            p[i] = (p[i] * xs[i - k] - p[i - 1] * xs[i]) / (xs[i - k] - xs[i]);
        }
    }
    let extrapolated = *p.last().unwrap();
    Ok(RegularizationSweep {
        rows,
        extrapolated,
        closed_limit,
        rel_dev: (extrapolated - closed_limit).norm() / closed_limit.norm(),
    })
}

/// ⟨Ψ_B(p, u)|Ψ_A(x)⟩ by quadrature against the closed form (N = 1).
pub fn matrix_element_ba(
    cfg: &ChainConfig,
    p: C64,
    u: &[SeparatedPoint],
    x: &[SeparatedPoint],
    target: f64,
) -> Result<MatrixElement> {
    cfg.validate()?;
    cfg.check_len("x", x.len(), cfg.n)?;
    cfg.check_len("u", u.len(), cfg.n - 1)?;
    if cfg.n != 1 {
        return Err(Error::Plan(
            "⟨Ψ_B|Ψ_A⟩ is evaluated by quadrature only at N = 1; at N = 2 it is an oscillatory 8-dimensional integral".into(),
        ));
    }
    let xr = regularize(x, cfg.regularization);
    let s = cfg.spin.as_index();
    let i = C64::new(0.0, 1.0);
    // Ψ_A = [z]^{−α} with α = s − ix; the bra contributes e^{−i(pz+p̄z̄)}
    let alpha = BiIndex::with_gap(s.alpha() - i * xr[0].x(), s.gap() - xr[0].n);
    let plan = QuadPlan::oscillatory(vec![], -p)?.with_tol(target * 0.1);
    let est = fourier_power(&alpha, -p, &plan)?;
    let closed = ba_closed_form(p, u, &xr, &cfg.spin)?.value()?;
    Ok(MatrixElement::new(
        &est,
        closed,
        cfg.regularization,
        "Bessel-reduced radial integral",
    ))
}

// ---------------------------------------------------------------------------
// group action

/// SL(2,C) element [[a, b], [c, d]] with ad − bc = 1.
pub fn check_unimodular(g: &[C64; 4]) -> Result<()> {
    let det = g[0] * g[3] - g[1] * g[2];
    if (det - 1.0).norm() > 1e-12 {
        return Err(Error::Invalid(format!("det g = {det} ≠ 1")));
    }
    Ok(())
}

/// (T_g φ)(z) = [a − cz]^{−2s} φ((dz − b)/(a − cz)).
pub fn group_action(spin: &Spin, g: &[C64; 4], phi: &dyn Fn(C64) -> C64, z: C64) -> Result<C64> {
    check_unimodular(g)?;
    let den = g[0] - g[2] * z;
    let s = spin.as_index();
    let e = BiIndex::with_gap(-2.0 * s.alpha(), -2 * s.gap());
    if den == C64::new(0.0, 0.0) {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(power_bi(den, &e)? * phi((g[3] * z - g[1]) / den))
}

fn gaussian(center: C64, width: f64) -> impl Fn(C64) -> C64 + Sync {
    move |z: C64| {
        C64::new((-(z - center).norm_sqr() / (width * width)).exp(), 0.0)
            * C64::from_polar(1.0, z.re)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitarityCheck {
    pub before: C64,
    pub after: C64,
    pub rel_dev: f64,
}

/// ⟨T_g φ|T_g ψ⟩ against ⟨φ|ψ⟩ for Gaussian wave packets φ, ψ.
pub fn check_unitarity(
    spin: &Spin,
    g: &[C64; 4],
    centers: [C64; 2],
    width: f64,
    tol: f64,
) -> Result<UnitarityCheck> {
    check_unimodular(g)?;
    let phi = gaussian(centers[0], width);
    let psi = gaussian(centers[1], width);
    let zero = BiIndex::diag(C64::new(0.0, 0.0));
    let mid = (centers[0] + centers[1]) / 2.0;
    let plain = QuadPlan::new(
        vec![Singularity {
            location: mid,
            strength: zero,
        }],
        C64::new(50.0, 0.0),
    )?
    .with_tol(tol)
    .with_scale(width);
    let before = integrate_plane(|w| Ok(phi(w.z()).conj() * psi(w.z())), &plain)?.value;
    let mut sites = vec![];
    if g[2] != C64::new(0.0, 0.0) {
        sites.push(Singularity {
            location: g[0] / g[2],
            strength: zero,
        });
    }
    // preimages of the packet centres keep the quadrature on the support
    for c in centers {
        let den = g[3] + g[2] * c;
        if den != C64::new(0.0, 0.0) {
            sites.push(Singularity {
                location: (g[1] + g[0] * c) / den,
                strength: zero,
            });
        }
    }
    let plan = QuadPlan::new(sites, C64::new(4.0, 0.0))?.with_tol(tol);
    let after = integrate_plane(
        |w| Ok(group_action(spin, g, &phi, w.z())?.conj() * group_action(spin, g, &psi, w.z())?),
        &plan,
    )?
    .value;
    Ok(UnitarityCheck {
        before,
        after,
        rel_dev: (after - before).norm() / before.norm(),
    })
}
