//! Sum-integrals Σ_n ∫dν over separated or Mellin variables of a-factor
//! products, with pole-separation checks and tail extrapolation.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::planequad::{gauss_legendre, integrate_line, wynn_epsilon, LineOpts};
use crate::rational::Q;
use crate::report::Report;
use crate::specfun::{a_factor, power_bi, BiIndex, LogValue, SeparatedPoint};
use crate::symalg::{AFactorProduct, AffineExpr, Assignment, CompiledProduct, ParamValue, Scalar};

/// How the lattice label and ν of a variable enter its two slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// u = −in/2 + ν, ū = in/2 + ν.
    Point,
    /// γ = iν − n/2, γ̄ = iν + n/2.
    Mellin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbVariable {
    pub name: String,
    pub kind: VarKind,
    pub n_max: u32,
    pub nu_cutoff: f64,
    #[serde(default)]
    pub nu_offset: f64,
    /// n runs over ℤ + 1/2 (Mellin variables only).
    #[serde(default)]
    pub half_lattice: bool,
}

/// Truncation and quadrature settings shared by all variables of a case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MbOptions {
    pub n_max: u32,
    pub nu_cutoff: f64,
    /// Number of nested truncation boxes, each twice the previous.
    pub rungs: u32,
    pub gl_order: usize,
    pub max_evaluations: u64,
}

impl Default for MbOptions {
    fn default() -> Self {
        MbOptions {
            n_max: 32,
            nu_cutoff: 16.0,
            rungs: 4,
            gl_order: 16,
            max_evaluations: 200_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub variables: Vec<MbVariable>,
    pub rungs: u32,
    pub gl_order: usize,
    pub max_evaluations: u64,
}

impl ContourSpec {
    pub fn new(variables: Vec<MbVariable>, o: &MbOptions) -> Self {
        ContourSpec {
            variables,
            rungs: o.rungs,
            gl_order: o.gl_order,
            max_evaluations: o.max_evaluations,
        }
    }

    pub fn uniform(vars: &[(&str, VarKind)], o: &MbOptions) -> Self {
        let variables = vars
            .iter()
            .map(|(n, k)| MbVariable {
                name: n.to_string(),
                kind: *k,
                n_max: o.n_max,
                nu_cutoff: o.nu_cutoff,
                nu_offset: 0.0,
                half_lattice: false,
            })
            .collect();
        Self::new(variables, o)
    }
}

/// Integrand Σ∫ measure × product, with the external parameters fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct MBIntegrand {
    pub product: AFactorProduct,
    pub measure: Scalar,
    pub params: Assignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbEstimate {
    pub value: C64,
    pub abs_error_estimate: f64,
    /// Distance between the largest truncation and the extrapolated value.
    pub tail_estimate: f64,
    /// Raw truncated values for the nested boxes, smallest first.
    pub raw: Vec<C64>,
    pub tail_exponent: Option<C64>,
    pub n_max: u32,
    pub nu_cutoff: f64,
    pub evaluations: u64,
    pub converged: bool,
}

fn var_value(kind: VarKind, n2: i64, t: f64, off: f64) -> ParamValue {
    let nu = C64::new(t, off);
    match kind {
        VarKind::Point => ParamValue::point(&SeparatedPoint::new(n2 / 2, nu)),
        VarKind::Mellin => ParamValue::mellin(n2, nu),
    }
}

/// d(α + ᾱ)/dν of one unit of the variable, and d(hol)/dν.
fn nu_rates(kind: VarKind) -> (C64, C64) {
    match kind {
        VarKind::Point => (C64::new(2.0, 0.0), C64::new(1.0, 0.0)),
        VarKind::Mellin => (C64::new(0.0, 2.0), C64::new(0.0, 1.0)),
    }
}

fn lattice(v: &MbVariable) -> Vec<i64> {
    let m = v.n_max as i64;
    if v.half_lattice {
        (-m - 1..=m).map(|k| 2 * k + 1).collect()
    } else {
        (-m..=m).map(|k| 2 * k).collect()
    }
}

fn expr_deps(e: &AffineExpr, names: &[String]) -> Vec<usize> {
    let mut d: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| e.depends_on(n))
        .map(|(i, _)| i)
        .collect();
    d.sort();
    d
}

/// Splits the product into a constant part, per-variable parts depending on
/// that variable alone, and per-depth mixed parts.
struct Split {
    constant: AFactorProduct,
    own: Vec<AFactorProduct>,
    mixed: Vec<AFactorProduct>,
}

fn split(p: &AFactorProduct, names: &[String]) -> Split {
    let k = names.len();
    let mut s = Split {
        constant: AFactorProduct::scalar(p.scalar.coef, p.scalar.pi_power),
        own: vec![AFactorProduct::one(); k],
        mixed: vec![AFactorProduct::one(); k],
    };
    fn slot<'s>(s: &'s mut Split, deps: &[usize]) -> &'s mut AFactorProduct {
        match deps {
            [] => &mut s.constant,
            [d] => &mut s.own[*d],
            _ => &mut s.mixed[*deps.last().unwrap()],
        }
    }
    for e in &p.numerator {
        slot(&mut s, &expr_deps(e, names)).numerator.push(e.clone());
    }
    for e in &p.denominator {
        slot(&mut s, &expr_deps(e, names))
            .denominator
            .push(e.clone());
    }
    for e in &p.bracket_num {
        slot(&mut s, &expr_deps(e, names))
            .bracket_num
            .push(e.clone());
    }
    for e in &p.bracket_den {
        slot(&mut s, &expr_deps(e, names))
            .bracket_den
            .push(e.clone());
    }
    for x in &p.extra_powers {
        slot(&mut s, &expr_deps(&x.exponent, names))
            .extra_powers
            .push(x.clone());
    }
    slot(&mut s, &expr_deps(&p.sign_power, names)).sign_power = p.sign_power.clone();
    slot(&mut s, &expr_deps(&p.phase_power, names)).phase_power = p.phase_power.clone();
    s
}

fn is_trivial(p: &AFactorProduct) -> bool {
    p.numerator.is_empty()
        && p.denominator.is_empty()
        && p.bracket_num.is_empty()
        && p.bracket_den.is_empty()
        && p.extra_powers.is_empty()
        && p.sign_power.is_constant()
        && p.phase_power.is_constant()
}

#[derive(Debug, Clone, Copy)]
struct Node {
    n2: i64,
    t: f64,
    w: f64,
    /// First box containing the node.
    kmin: usize,
}

struct Engine<'a> {
    spec: &'a ContourSpec,
    names: Vec<String>,
    full: CompiledProduct,
    own: Vec<Option<CompiledProduct>>,
    mixed: Vec<Option<CompiledProduct>>,
    constant: LogValue,
    base: Vec<ParamValue>,
    /// ν-coefficient s with α + ᾱ = … + i s ν, per (factor, variable).
    rates: Vec<Vec<f64>>,
    evals: AtomicU64,
}

fn add_log(a: LogValue, b: LogValue) -> LogValue {
    match (a, b) {
        (LogValue::Log(x), LogValue::Log(y)) => LogValue::Log(x + y),
        _ => LogValue::Zero,
    }
}

impl<'a> Engine<'a> {
    fn new(ig: &MBIntegrand, spec: &'a ContourSpec) -> Result<Self> {
        let names: Vec<String> = spec.variables.iter().map(|v| v.name.clone()).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        for (i, v) in spec.variables.iter().enumerate() {
            if names[..i].contains(&v.name) {
                return Err(Error::Invalid(format!(
                    "duplicate integration variable {}",
                    v.name
                )));
            }
            if v.half_lattice && v.kind == VarKind::Point {
                return Err(Error::Invalid(format!(
                    "{}: separated points live on the integer lattice",
                    v.name
                )));
            }
            if !(v.nu_cutoff > 0.0) || !v.nu_offset.is_finite() {
                return Err(Error::Invalid(format!(
                    "{}: bad ν cutoff or offset",
                    v.name
                )));
            }
        }
        let full = ig.product.compile(&refs, &ig.params)?;
        let s = split(&ig.product, &names);
        let compile = |p: &AFactorProduct| -> Result<Option<CompiledProduct>> {
            if is_trivial(p) {
                Ok(None)
            } else {
                Ok(Some(p.compile(&refs, &ig.params)?))
            }
        };
        let own = s.own.iter().map(compile).collect::<Result<Vec<_>>>()?;
        let mixed = s.mixed.iter().map(compile).collect::<Result<Vec<_>>>()?;
        let constant = add_log(s.constant.log_eval(&ig.params)?, ig.measure.log_value());
        let base: Vec<ParamValue> = spec
            .variables
            .iter()
            .map(|v| var_value(v.kind, if v.half_lattice { 1 } else { 0 }, 0.0, v.nu_offset))
            .collect();
        let mut rates = vec![];
        for (j, (_, terms)) in full.factor_terms().iter().enumerate() {
            let mut r = vec![0.0; names.len()];
            let mut lam = vec![C64::new(0.0, 0.0); names.len()];
            for &(i, _, k) in terms {
                lam[i] += k * nu_rates(spec.variables[i].kind).0;
            }
            for i in 0..names.len() {
                if lam[i].re.abs() > 1e-12 {
                    return Err(Error::Invalid(format!(
                        "a-factor #{j}: {} must enter with a purely imaginary ν coefficient",
                        names[i]
                    )));
                }
                r[i] = lam[i].im;
            }
            rates.push(r);
        }
        Ok(Engine {
            spec,
            names,
            full,
            own,
            mixed,
            constant,
            base,
            rates,
            evals: AtomicU64::new(0),
        })
    }

    /// Every variable-dependent a-factor must keep its poles off the
    /// contour: Re(α+ᾱ) < 2 for numerators and > 0 for denominators.
    fn check_poles(&self) -> Result<()> {
        for (j, (is_num, sum, _, deps)) in self.full.factor_sums(&self.base).into_iter().enumerate()
        {
            if deps.is_empty() {
                continue;
            }
            let r = sum.re;
            let ok = if is_num { r < 2.0 - 1e-9 } else { r > 1e-9 };
            if !ok {
                let vars: Vec<&str> = deps.iter().map(|&i| self.names[i].as_str()).collect();
                return Err(Error::PoleOnContour(format!(
                    "{} a-factor #{j} in {} has Re(α+ᾱ) = {r:.6} on the contour",
                    if is_num { "numerator" } else { "denominator" },
                    vars.join(",")
                )));
            }
        }
        Ok(())
    }

    /// Frequency of e^{iων} carried by the extra powers, per variable.
    fn oscillation(&self) -> Result<Vec<f64>> {
        let mut om = vec![C64::new(0.0, 0.0); self.names.len()];
        for (abs, ln_r, terms) in self.full.extra_terms() {
            for (i, _, k) in terms {
                let (sum_rate, hol_rate) = nu_rates(self.spec.variables[i].kind);
                om[i] += k * ln_r * if abs { hol_rate } else { sum_rate };
            }
        }
        om.iter()
            .enumerate()
            .map(|(i, w)| {
                if w.re.abs() > 1e-12 {
                    Err(Error::TailDivergence(format!(
                        "extra powers grow exponentially in ν_{}",
                        self.names[i]
                    )))
                } else {
                    Ok(w.im)
                }
            })
            .collect()
    }

    /// Power of the box size L at which the truncated tail decays.
    fn tail_exponent(&self) -> C64 {
        let sums = self.full.factor_sums(&self.base);
        let mut best: Option<C64> = None;
        for v in 0..self.names.len() {
            let off = self.spec.variables[v].nu_offset;
            let mut tau = C64::new(2.0, 0.0);
            for (j, (is_num, sum, _, deps)) in sums.iter().enumerate() {
                if !deps.contains(&v) {
                    continue;
                }
                let rest = *sum + self.rates[j][v] * off;
                let e = 1.0 - rest;
                tau += if *is_num { e } else { -e };
            }
            for (is_num, terms) in self.full.bracket_terms() {
                if terms.iter().any(|t| t.0 == v) {
                    tau += if is_num { 2.0 } else { -2.0 };
                }
            }
            if best.map_or(true, |b| tau.re > b.re) {
                best = Some(tau);
            }
        }
        best.unwrap_or(C64::new(-f64::INFINITY, 0.0))
    }

    /// Pole-aware panel breakpoints in ν for variable v at lattice label n2.
    fn breakpoints(&self, v: usize, n2: i64, lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
        let var = &self.spec.variables[v];
        let mut vals = self.base.clone();
        vals[v] = var_value(var.kind, n2, 0.0, var.nu_offset);
        let mut pts: Vec<f64> = extra.to_vec();
        let mut t = lo.ceil();
        while t < hi {
            pts.push(t);
            t += 1.0;
        }
        for (j, (is_num, sum, gap, deps)) in self.full.factor_sums(&vals).into_iter().enumerate() {
            if deps != [v] {
                continue;
            }
            let s = self.rates[j][v];
            if s == 0.0 {
                continue;
            }
            let g = gap.re.abs();
            let p = if is_num { 2.0 + g } else { -g };
            let c = sum.im / s;
            let d = ((p - sum.re) / s).abs();
            let mut h = d.max(1e-3);
            while h < 1.0 {
                pts.push(c - h);
                pts.push(c + h);
                h *= 3.0;
            }
        }
        pts.push(lo);
        pts.push(hi);
        pts.retain(|x| *x >= lo && *x <= hi);
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        pts
    }

    fn nodes(&self, v: usize, scales: &[f64]) -> Vec<Node> {
        let var = &self.spec.variables[v];
        let (gx, gw) = gauss_legendre(self.spec.gl_order);
        let lam = var.nu_cutoff;
        let cuts: Vec<f64> = scales.iter().flat_map(|f| [-lam * f, lam * f]).collect();
        let mut out = vec![];
        for n2 in lattice(var) {
            let nabs = n2.abs() as f64 / 2.0;
            let bp = self.breakpoints(v, n2, -lam, lam, &cuts);
            for win in bp.windows(2) {
                let (a, b) = (win[0], win[1]);
                let mid = 0.5 * (a + b);
                let kmin = scales
                    .iter()
                    .position(|f| {
                        let nk = var.n_max as f64 * f + if var.half_lattice { 0.5 } else { 0.0 };
                        nabs <= nk + 1e-9 && mid.abs() <= lam * f
                    })
                    .unwrap_or(scales.len());
                if kmin == scales.len() {
                    continue;
                }
                let h = 0.5 * (b - a);
                for (x, w) in gx.iter().zip(&gw) {
                    out.push(Node {
                        n2,
                        t: mid + h * x,
                        w: w * h,
                        kmin,
                    });
                }
            }
        }
        out
    }

    fn recurse(
        &self,
        d: usize,
        grids: &[Vec<Node>],
        own: &[Vec<LogValue>],
        vals: &mut Vec<ParamValue>,
        acc: LogValue,
        k: usize,
    ) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); k];
        let var = &self.spec.variables[d];
        let last = d + 1 == grids.len();
        for (i, node) in grids[d].iter().enumerate() {
            vals[d] = var_value(var.kind, node.n2, node.t, var.nu_offset);
            let mut l = add_log(acc, own[d][i]);
            if let LogValue::Zero = l {
                continue;
            }
            if let Some(m) = &self.mixed[d] {
                l = add_log(l, m.log_eval(vals)?);
                self.evals.fetch_add(1, Ordering::Relaxed);
            }
            if last {
                let LogValue::Log(x) = l else { continue };
                let val = x.exp() * node.w;
                if !val.re.is_finite() || !val.im.is_finite() {
                    return Err(Error::Singularity(format!(
                        "non-finite sum-integrand at ν = {}",
                        node.t
                    )));
                }
                for o in out.iter_mut().skip(node.kmin) {
                    *o += val;
                }
            } else {
                let inner = self.recurse(d + 1, grids, own, vals, l, k)?;
                for (j, o) in out.iter_mut().enumerate().skip(node.kmin) {
                    *o += inner[j] * node.w;
                }
            }
        }
        Ok(out)
    }

    fn own_logs(&self, d: usize, grid: &[Node]) -> Result<Vec<LogValue>> {
        let var = &self.spec.variables[d];
        let mut vals = self.base.clone();
        grid.iter()
            .map(|nd| match &self.own[d] {
                None => Ok(LogValue::Log(C64::new(0.0, 0.0))),
                Some(p) => {
                    vals[d] = var_value(var.kind, nd.n2, nd.t, var.nu_offset);
                    self.evals.fetch_add(1, Ordering::Relaxed);
                    p.log_eval(&vals)
                }
            })
            .collect()
    }

    fn boxed(&self, tau: C64) -> Result<MbEstimate> {
        let k = self.spec.rungs.max(1) as usize;
        let scales: Vec<f64> = (0..k).map(|i| 0.5f64.powi((k - 1 - i) as i32)).collect();
        let grids: Vec<Vec<Node>> = (0..self.names.len())
            .map(|v| self.nodes(v, &scales))
            .collect();
        let work: f64 = grids.iter().map(|g| g.len() as f64).product();
        if work > self.spec.max_evaluations as f64 {
            return Err(Error::NonConvergence {
                what: format!(
                    "sum-integral needs {work:.3e} evaluations, budget {}",
                    self.spec.max_evaluations
                ),
                estimate: f64::NAN,
            });
        }
        let own = (0..grids.len())
            .map(|d| self.own_logs(d, &grids[d]))
            .collect::<Result<Vec<_>>>()?;
        let mut vals = self.base.clone();
        let raw = self.recurse(0, &grids, &own, &mut vals, self.constant, k)?;
        let (value, err) = richardson(&raw, tau);
        let top = *raw.last().unwrap();
        let v0 = &self.spec.variables[0];
        Ok(MbEstimate {
            value,
            abs_error_estimate: err,
            tail_estimate: (top - value).norm(),
            raw,
            tail_exponent: Some(tau),
            n_max: v0.n_max,
            nu_cutoff: v0.nu_cutoff,
            evaluations: self.evals.load(Ordering::Relaxed) + work as u64,
            converged: err.is_finite(),
        })
    }

    /// Single variable with an e^{iων} factor: each ν-line is summed over
    /// half periods and accelerated; the n-sum is cut once terms die out.
    fn oscillatory(&self, omega: f64, tol: f64) -> Result<MbEstimate> {
        let var = &self.spec.variables[0];
        let (gx, gw) = gauss_legendre(self.spec.gl_order);
        let period = PI / omega.abs();
        let mut vals = self.base.clone();
        let mut line = |n2: i64| -> Result<(C64, f64)> {
            let mut total = C64::new(0.0, 0.0);
            let mut err = 0.0;
            for side in [1.0f64, -1.0] {
                let mut partial = C64::new(0.0, 0.0);
                let mut seq = vec![];
                let mut last = C64::new(f64::NAN, 0.0);
                let mut stable = 0;
                let mut done = None;
                for j in 0..20000usize {
                    let (a, b) = (j as f64 * period, (j + 1) as f64 * period);
                    let (lo, hi) = if side > 0.0 { (a, b) } else { (-b, -a) };
                    let bp = if hi - lo > 0.0 && j < 64 {
                        self.breakpoints(0, n2, lo, hi, &[])
                    } else {
                        vec![lo, hi]
                    };
                    for win in bp.windows(2) {
                        let h = 0.5 * (win[1] - win[0]);
                        let m = 0.5 * (win[1] + win[0]);
                        for (x, w) in gx.iter().zip(&gw) {
                            vals[0] = var_value(var.kind, n2, m + h * x, var.nu_offset);
                            if let LogValue::Log(l) = self.full.log_eval(&vals)? {
                                partial += l.exp() * (w * h);
                            }
                        }
                        self.evals.fetch_add(gx.len() as u64, Ordering::Relaxed);
                    }
                    seq.push(partial);
                    if seq.len() >= 8 {
                        let window = &seq[seq.len().saturating_sub(30)..];
                        let (est, werr) = wynn_epsilon(window);
                        let diff = (est - last).norm();
                        let e = diff.max(werr);
                        if e <= tol * 1e-2 * est.norm().max(1e-300) || e < 1e-15 {
                            stable += 1;
                            if stable >= 2 {
                                done = Some((est, e));
                                break;
                            }
                        } else {
                            stable = 0;
                        }
                        last = est;
                    }
                }
                let Some((est, e)) = done else {
                    return Err(Error::NonConvergence {
                        what: "oscillatory ν-line did not settle".into(),
                        estimate: f64::NAN,
                    });
                };
                total += est;
                err += e;
            }
            Ok((total, err))
        };
        let mut sum = C64::new(0.0, 0.0);
        let mut err = 0.0;
        let mut small = 0;
        let mut converged = false;
        let mut raw = vec![];
        let m = var.n_max as i64;
        let offs: Vec<i64> = if var.half_lattice {
            (0..=m).collect()
        } else {
            (0..=m).collect()
        };
        for k in offs {
            let labels: Vec<i64> = if var.half_lattice {
                vec![2 * k + 1, -2 * k - 1]
            } else if k == 0 {
                vec![0]
            } else {
                vec![2 * k, -2 * k]
            };
            let mut shell = C64::new(0.0, 0.0);
            for n2 in labels {
                let (v, e) = line(n2)?;
                shell += v;
                err += e;
            }
            sum += shell;
            raw.push(sum);
            if shell.norm() <= tol * 1e-2 * sum.norm() {
                small += 1;
                if small >= 3 {
                    converged = true;
                    break;
                }
            } else {
                small = 0;
            }
        }
        let last_shell = if raw.len() >= 2 {
            (raw[raw.len() - 1] - raw[raw.len() - 2]).norm()
        } else {
            f64::INFINITY
        };
        let c = match self.constant {
            LogValue::Log(l) => l.exp(),
            LogValue::Zero => C64::new(0.0, 0.0),
        };
        Ok(MbEstimate {
            value: sum * c,
            abs_error_estimate: (err + last_shell) * c.norm(),
            tail_estimate: last_shell * c.norm(),
            raw: raw.iter().map(|r| r * c).collect(),
            tail_exponent: None,
            n_max: var.n_max,
            nu_cutoff: f64::INFINITY,
            evaluations: self.evals.load(Ordering::Relaxed),
            converged,
        })
    }
}

/// Cascaded Richardson over boxes of ratio 2 with tail ~ L^τ, L^{τ−1}, …
fn richardson(raw: &[C64], tau: C64) -> (C64, f64) {
    let mut table = raw.to_vec();
    let mut prev_best = None;
    let mut j = 0;
    while table.len() > 1 {
        let q = C64::new(2.0, 0.0).powc(tau - j as f64);
        prev_best = table.last().copied();
        table = table
            .windows(2)
            .map(|w| (w[1] - q * w[0]) / (1.0 - q))
            .collect();
        j += 1;
    }
    let best = table[0];
    let err = match prev_best {
        Some(p) => (best - p).norm(),
        None => f64::INFINITY,
    };
    (best, err)
}

/// Evaluates measure × Σ_n ∫dν product over the contour variables.
pub fn evaluate_mb(integrand: &MBIntegrand, contour: &ContourSpec) -> Result<MbEstimate> {
    evaluate_mb_tol(integrand, contour, 1e-6)
}

/// As [`evaluate_mb`], with the relative target used by adaptive stopping.
pub fn evaluate_mb_tol(
    integrand: &MBIntegrand,
    contour: &ContourSpec,
    tol: f64,
) -> Result<MbEstimate> {
    let eng = Engine::new(integrand, contour)?;
    if contour.variables.is_empty() {
        let v = match add_log(
            integrand.product.log_eval(&integrand.params)?,
            integrand.measure.log_value(),
        ) {
            LogValue::Log(l) => l.exp(),
            LogValue::Zero => C64::new(0.0, 0.0),
        };
        return Ok(MbEstimate {
            value: v,
            abs_error_estimate: 0.0,
            tail_estimate: 0.0,
            raw: vec![v],
            tail_exponent: None,
            n_max: 0,
            nu_cutoff: 0.0,
            evaluations: 1,
            converged: true,
        });
    }
    eng.check_poles()?;
    let om = eng.oscillation()?;
    if om.iter().any(|w| w.abs() > 1e-9) {
        if contour.variables.len() != 1 {
            return Err(Error::Invalid(
                "oscillatory sum-integrals are supported in one variable".into(),
            ));
        }
        return eng.oscillatory(om[0], tol);
    }
    let tau = eng.tail_exponent();
    if !(tau.re < -1e-9) {
        return Err(Error::TailDivergence(format!(
            "truncated tail decays like L^({tau:.4}), not integrable"
        )));
    }
    let mut est = eng.boxed(tau)?;
    est.converged = est.converged && est.abs_error_estimate <= tol * est.value.norm().max(1e-300);
    Ok(est)
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

fn pt(name: &str) -> AffineExpr {
    AffineExpr::i_param(name)
}

/// a(1 + i(p − q)).
fn a_one_plus_i(p: &AffineExpr, q: &AffineExpr) -> AffineExpr {
    AffineExpr::int(1) + p.clone() - q.clone()
}

fn sum_i(prefix: &str, n: usize) -> AffineExpr {
    (1..=n).fold(AffineExpr::zero(), |acc, k| {
        acc + pt(&format!("{prefix}{k}"))
    })
}

/// Both sides of the complex Gustafson integral for N ≤ 3.
pub fn gustafson_sides(
    x: &[SeparatedPoint],
    xp: &[SeparatedPoint],
) -> Result<(MBIntegrand, Vec<String>, AFactorProduct, Assignment)> {
    let n = x.len();
    if n == 0 || n > 3 || xp.len() != n {
        return Err(Error::Invalid(
            "Gustafson integral needs 1 ≤ N ≤ 3 points on each side".into(),
        ));
    }
    let mut params = Assignment::new();
    for k in 0..n {
        params.set_point(&format!("x{}", k + 1), &x[k]);
        params.set_point(&format!("y{}", k + 1), &xp[k]);
    }
    let vars: Vec<String> = (1..n).map(|j| format!("u{j}")).collect();
    let mut p = AFactorProduct::one();
    for k in 1..=n {
        for u in &vars {
            p = p.times(&AFactorProduct::a(a_one_plus_i(
                &pt(&format!("x{k}")),
                &pt(u),
            )));
            p = p.times(&AFactorProduct::a(a_one_plus_i(
                &pt(u),
                &pt(&format!("y{k}")),
            )));
        }
    }
    for j in 0..vars.len() {
        for m in 0..j {
            p = p.times(&AFactorProduct::inv_a(a_one_plus_i(
                &pt(&vars[j]),
                &pt(&vars[m]),
            )));
            p = p.times(&AFactorProduct::inv_a(a_one_plus_i(
                &pt(&vars[m]),
                &pt(&vars[j]),
            )));
        }
    }
    let d = n as i64 - 1;
    let measure = Scalar::new(
        Q::new(1, factorial(n - 1) * 2i64.pow(d as u32)),
        -(d as i32),
    );
    let mut rhs = AFactorProduct::one();
    for k in 1..=n {
        for j in 1..=n {
            rhs = rhs.times(&AFactorProduct::a(a_one_plus_i(
                &pt(&format!("x{k}")),
                &pt(&format!("y{j}")),
            )));
        }
    }
    rhs = rhs.times(&AFactorProduct::inv_a(a_one_plus_i(
        &sum_i("x", n),
        &sum_i("y", n),
    )));
    Ok((
        MBIntegrand {
            product: p,
            measure,
            params: params.clone(),
        },
        vars,
        rhs,
        params,
    ))
}

/// Complex Gustafson integral: sum-integral over N−1 separated variables
/// against the closed product.
pub fn verify_gustafson(
    x: &[SeparatedPoint],
    xp: &[SeparatedPoint],
    opts: &MbOptions,
    target: f64,
) -> Result<Report> {
    let t0 = Instant::now();
    let (ig, vars, rhs_p, params) = gustafson_sides(x, xp)?;
    let names: Vec<(&str, VarKind)> = vars.iter().map(|v| (v.as_str(), VarKind::Point)).collect();
    let contour = ContourSpec::uniform(&names, opts);
    let est = evaluate_mb_tol(&ig, &contour, target)?;
    let rhs = rhs_p.eval(&params)?;
    let err = est.abs_error_estimate;
    Ok(
        Report::new("gustafson", "complex Gustafson integral", target)
            .compare(
                est.value,
                rhs,
                err,
                est.converged && err <= target * rhs.norm(),
            )
            .with_evals(est.evaluations)
            .with_details(json!({
                "N": x.len(),
                "n_max": est.n_max,
                "nu_cutoff": est.nu_cutoff,
                "tail_estimate": est.tail_estimate,
                "tail_exponent": est.tail_exponent.map(|t| [t.re, t.im]),
                "raw": est.raw.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            }))
            .timed(t0),
    )
}

fn half(e: AffineExpr) -> AffineExpr {
    e.scale(crate::rational::QC::frac(1, 2))
}

/// Picks the lattice (integer or half-integer n) on which every a-factor of
/// the product has an integral gap.
fn choose_lattice(product: &AFactorProduct, var: &str, params: &Assignment) -> Result<bool> {
    for half_lattice in [false, true] {
        let mut a = params.clone();
        a.set(
            var,
            ParamValue::mellin(if half_lattice { 1 } else { 0 }, C64::new(0.0, 0.0)),
        );
        let ok = product
            .numerator
            .iter()
            .chain(&product.denominator)
            .chain(product.extra_powers.iter().map(|x| &x.exponent))
            .all(|e| e.eval(&a).is_ok());
        if ok {
            return Ok(half_lattice);
        }
    }
    Err(Error::Constraint(format!(
        "no lattice for {var} makes every gap integral"
    )))
}

fn mellin_point(p: &SeparatedPoint) -> ParamValue {
    ParamValue::mellin(2 * p.n, p.nu)
}

/// Mellin–Barnes star–triangle: closed product against the γ sum-integral.
pub fn verify_mb_star_triangle(
    betas: &[BiIndex; 3],
    lambdas: &[SeparatedPoint; 3],
    opts: &MbOptions,
    target: f64,
) -> Result<Report> {
    let t0 = Instant::now();
    let sh: C64 = betas.iter().map(|b| b.alpha()).sum();
    let sa: C64 = betas.iter().map(|b| b.alpha_bar()).sum();
    if (sh - 1.0).norm() > 1e-12 || (sa - 1.0).norm() > 1e-12 {
        return Err(Error::Constraint(format!(
            "β₁+β₂+β₃ = ({sh}, {sa}), must be (1, 1)"
        )));
    }
    let mut params = Assignment::new();
    for i in 0..3 {
        params.set_index(&format!("b{}", i + 1), &betas[i]);
        params.set(&format!("l{}", i + 1), mellin_point(&lambdas[i]));
    }
    let b = |i: usize| AffineExpr::param(&format!("b{}", i % 3 + 1));
    let l = |i: usize| AffineExpr::param(&format!("l{}", i % 3 + 1));
    let g = AffineExpr::param("g");
    let one = AffineExpr::int(1);
    let hf = AffineExpr::frac(1, 2);
    let mut closed = AFactorProduct::scalar(Q::from_integer(2), 1);
    let mut prod = AFactorProduct::one();
    for i in 0..3 {
        let lij = l(i) - l(i + 1);
        closed = closed
            .times(&AFactorProduct::a(one.clone() - b(i)))
            .times(&AFactorProduct::a(hf.clone() + half(b(i)) - lij.clone()))
            .times(&AFactorProduct::inv_a(hf.clone() - half(b(i)) - lij));
        let lm = l(i + 2);
        prod = prod
            .times(&AFactorProduct::a(
                one.clone() - half(b(i)) - g.clone() + lm.clone(),
            ))
            .times(&AFactorProduct::inv_a(half(b(i)) - g.clone() + lm));
    }
    let lhs = closed.eval(&params).map_err(|e| match e {
        Error::Invalid(m) => Error::Constraint(m),
        e => e,
    })?;
    let half_lattice = choose_lattice(&prod, "g", &params)?;
    let var = MbVariable {
        name: "g".into(),
        kind: VarKind::Mellin,
        n_max: opts.n_max,
        nu_cutoff: opts.nu_cutoff,
        nu_offset: 0.0,
        half_lattice,
    };
    let ig = MBIntegrand {
        product: prod,
        measure: Scalar::one(),
        params,
    };
    let est = evaluate_mb_tol(&ig, &ContourSpec::new(vec![var], opts), target)?;
    let err = est.abs_error_estimate;
    Ok(Report::new(
        "mb_star_triangle",
        "Mellin-Barnes star-triangle relation",
        target,
    )
    .compare(
        lhs,
        est.value,
        err,
        est.converged && err <= target * lhs.norm(),
    )
    .with_evals(est.evaluations)
    .with_details(json!({
        "half_lattice": half_lattice,
        "n_max": est.n_max,
        "nu_cutoff": est.nu_cutoff,
        "tail_estimate": est.tail_estimate,
    }))
    .timed(t0))
}

/// Mellin–Barnes representation of the propagator [w − z]^{β−1}.
pub fn verify_mb_propagator(
    beta: &BiIndex,
    z: C64,
    w: C64,
    opts: &MbOptions,
    target: f64,
) -> Result<Report> {
    let t0 = Instant::now();
    let mut params = Assignment::new();
    params.set_index("b", beta);
    params.set_base("z", z);
    params.set_base("w", w);
    let b = AffineExpr::param("b");
    let al = AffineExpr::param("al");
    let hf = AffineExpr::frac(1, 2);
    let prod = AFactorProduct::a(hf.clone() + half(b.clone()) - al.clone())
        .times(&AFactorProduct::inv_a(
            hf.clone() - half(b.clone()) - al.clone(),
        ))
        .times(&AFactorProduct::power(
            crate::symalg::Base::Bracket("z".into()),
            half(b.clone()) - hf.clone() - al.clone(),
        ))
        .times(&AFactorProduct::power(
            crate::symalg::Base::Bracket("w".into()),
            half(b.clone()) - hf + al,
        ));
    let half_lattice = choose_lattice(&prod, "al", &params)?;
    let var = MbVariable {
        name: "al".into(),
        kind: VarKind::Mellin,
        n_max: opts.n_max,
        nu_cutoff: opts.nu_cutoff,
        nu_offset: 0.0,
        half_lattice,
    };
    let pref = a_factor(&beta.neg().shift(C64::new(1.0, 0.0)))? / (2.0 * PI);
    let ig = MBIntegrand {
        product: prod,
        measure: Scalar::one(),
        params,
    };
    let est = evaluate_mb_tol(&ig, &ContourSpec::new(vec![var], opts), target)?;
    let lhs = power_bi(w - z, &beta.shift(C64::new(-1.0, 0.0)))?;
    let rhs = est.value * pref;
    let err = est.abs_error_estimate * pref.norm();
    Ok(Report::new(
        "mb_propagator",
        "Mellin-Barnes propagator representation",
        target,
    )
    .compare(lhs, rhs, err, est.converged && err <= target * lhs.norm())
    .with_evals(est.evaluations)
    .with_details(
        json!({ "half_lattice": half_lattice, "n_max": est.n_max, "shells": est.raw.len() }),
    )
    .timed(t0))
}

/// Smeared orthogonality ∫d²z [z]^{−1+i(x−x′)} against a unit Gaussian of
/// width `window` in ν′ centred at `center`, compared with 2π² δ_{nn′} W(ν).
pub fn verify_completeness_resolution(
    x: &SeparatedPoint,
    xp: &SeparatedPoint,
    window: f64,
    target: f64,
) -> Result<Report> {
    let t0 = Instant::now();
    if !(window > 0.0) {
        return Err(Error::Invalid("smearing window must be positive".into()));
    }
    let dn = x.n - xp.n;
    let dnu = x.nu.re - xp.nu.re;
    let opts = LineOpts::tol(1e-12);
    let mut evals = 0u64;
    // ν′-smearing done in closed form: ∫dν′ W(ν′) r^{2i(ν−ν′)} = e^{2iΔν t − 2σ²t²}, t = ln r
    let tmax = (40.0f64).sqrt() / (window * 2f64.sqrt());
    let radial = integrate_line(-tmax, tmax, &opts, |t| {
        Ok(C64::new(0.0, 2.0 * dnu * t).exp() * (-2.0 * window * window * t * t).exp())
    })?;
    evals += radial.evals;
    let angular = integrate_line(0.0, 2.0 * PI, &opts, |phi| {
        Ok(C64::new(0.0, dn as f64 * phi).exp())
    })?;
    evals += angular.evals;
    let lhs = radial.value * angular.value;
    let peak = 2.0 * PI * PI / ((2.0 * PI).sqrt() * window);
    let rhs = if dn == 0 {
        C64::new(peak * (-dnu * dnu / (2.0 * window * window)).exp(), 0.0)
    } else {
        C64::new(0.0, 0.0)
    };
    let dev = (lhs - rhs).norm()
        / if dn == 0 {
            rhs.norm().max(1e-300)
        } else {
            peak
        };
    let err = radial.error * angular.value.norm() + angular.error * radial.value.norm();
    Ok(Report::new(
        "completeness",
        "power-function orthogonality 2π² normalization",
        target,
    )
    .compare_with_dev(lhs, rhs, dev, err, radial.converged && angular.converged)
    .with_evals(evals)
    .with_details(json!({
        "window": window,
        "normalization": if dn == 0 { Some(2.0 * PI * PI * lhs.re / rhs.re) } else { None },
    }))
    .timed(t0))
}
