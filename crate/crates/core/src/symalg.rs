//! Exact algebra of a-factor products with affine arguments over named
//! parameters, normal forms, and the closed-form answers for the matrix
//! elements.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{q_floor, q_to_f64, Q, QC};
use crate::specfun::{self, BiIndex, LogValue, SeparatedPoint, Spin};

/// A parameter occurrence: `conj = false` puts p in the holomorphic slot and
/// p̄ in the antiholomorphic one, `conj = true` the reverse.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamRef {
    pub name: String,
    pub conj: bool,
}

/// c + Σ k·p in the holomorphic slot, c̄ + Σ k·p̄ in the antiholomorphic slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AffineExpr {
    terms: BTreeMap<ParamRef, QC>,
    c: QC,
    cb: QC,
}

/// How a parameter behaves under complex conjugation of the functions it
/// labels: points satisfy x* = x̄, spins s* = 1 − s̄.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjRule {
    Point,
    Spin,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::constant(QC::zero(), QC::zero())
    }

    pub fn constant(c: QC, cb: QC) -> Self {
        AffineExpr {
            terms: BTreeMap::new(),
            c,
            cb,
        }
    }

    pub fn scalar(c: QC) -> Self {
        Self::constant(c, c)
    }

    pub fn int(n: i64) -> Self {
        Self::scalar(QC::int(n))
    }

    pub fn frac(n: i64, d: i64) -> Self {
        Self::scalar(QC::frac(n, d))
    }

    pub fn param(name: &str) -> Self {
        Self::term(name, false, QC::one())
    }

    pub fn param_bar(name: &str) -> Self {
        Self::term(name, true, QC::one())
    }

    fn term(name: &str, conj: bool, k: QC) -> Self {
        let mut terms = BTreeMap::new();
        if !k.is_zero() {
            terms.insert(
                ParamRef {
                    name: name.to_string(),
                    conj,
                },
                k,
            );
        }
        AffineExpr {
            terms,
            c: QC::zero(),
            cb: QC::zero(),
        }
    }

    /// i·p, the usual way separated variables enter.
    pub fn i_param(name: &str) -> Self {
        Self::term(name, false, QC::i())
    }

    pub fn scale(&self, k: QC) -> Self {
        let mut out = AffineExpr {
            terms: BTreeMap::new(),
            c: self.c * k,
            cb: self.cb * k,
        };
        for (r, v) in &self.terms {
            let w = *v * k;
            if !w.is_zero() {
                out.terms.insert(r.clone(), w);
            }
        }
        out
    }

    pub fn swap(&self) -> Self {
        AffineExpr {
            terms: self
                .terms
                .iter()
                .map(|(r, v)| {
                    (
                        ParamRef {
                            name: r.name.clone(),
                            conj: !r.conj,
                        },
                        *v,
                    )
                })
                .collect(),
            c: self.cb,
            cb: self.c,
        }
    }

    /// Adds k to both slots.
    pub fn shift(&self, k: QC) -> Self {
        let mut o = self.clone();
        o.c = o.c + k;
        o.cb = o.cb + k;
        o
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn constants(&self) -> (QC, QC) {
        (self.c, self.cb)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ParamRef, &QC)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, name: &str, conj: bool) -> QC {
        self.terms
            .get(&ParamRef {
                name: name.to_string(),
                conj,
            })
            .copied()
            .unwrap_or_else(QC::zero)
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.terms.keys().map(|r| r.name.clone()).collect()
    }

    pub fn depends_on(&self, name: &str) -> bool {
        self.terms.keys().any(|r| r.name == name)
    }

    /// Replaces every occurrence of `name` by `by` (p̄ by the swapped `by`).
    pub fn substitute(&self, name: &str, by: &AffineExpr) -> Self {
        let mut out = AffineExpr {
            terms: BTreeMap::new(),
            c: self.c,
            cb: self.cb,
        };
        for (r, k) in &self.terms {
            if r.name == name {
                let e = if r.conj { by.swap() } else { by.clone() };
                out = out + e.scale(*k);
            } else {
                out = out + Self::term(&r.name, r.conj, *k);
            }
        }
        out
    }

    /// Exact gap hol − antihol as a function of the parameter gaps.
    fn gap_form(&self) -> AffineExpr {
        let mut terms: BTreeMap<ParamRef, QC> = BTreeMap::new();
        for (r, k) in &self.terms {
            let key = ParamRef {
                name: r.name.clone(),
                conj: false,
            };
            let v = if r.conj { -*k } else { *k };
            let e = terms.entry(key).or_insert_with(QC::zero);
            *e = *e + v;
        }
        terms.retain(|_, v| !v.is_zero());
        AffineExpr {
            terms,
            c: self.c - self.cb,
            cb: QC::zero(),
        }
    }

    /// Value of both slots and the exact gap.
    pub fn eval_slots(&self, a: &Assignment) -> Result<(C64, C64, QC)> {
        let mut h = self.c.to_c64();
        let mut ab = self.cb.to_c64();
        let mut gap = self.c - self.cb;
        for (r, k) in &self.terms {
            let v = a.param(&r.name)?;
            let kc = k.to_c64();
            if r.conj {
                h += kc * v.antihol;
                ab += kc * v.hol;
                gap = gap - *k * v.gap;
            } else {
                h += kc * v.hol;
                ab += kc * v.antihol;
                gap = gap + *k * v.gap;
            }
        }
        Ok((h, ab, gap))
    }

    pub fn eval(&self, a: &Assignment) -> Result<BiIndex> {
        let (h, _, gap) = self.eval_slots(a)?;
        let n = gap.as_integer().ok_or_else(|| {
            Error::Invalid(format!("expression {self} has non-integer gap {gap}"))
        })?;
        Ok(BiIndex::with_gap(h, n))
    }

    /// Exponent of the complex conjugate: ([z]^E)* = [z]^{E*}.
    pub fn analytic_conj(&self, rule: impl Fn(&str) -> ConjRule) -> Self {
        let mut out = AffineExpr::constant(self.cb.conj(), self.c.conj());
        for (r, k) in &self.terms {
            let kc = k.conj();
            match rule(&r.name) {
                ConjRule::Point => {
                    out = out + Self::term(&r.name, r.conj, kc);
                }
                ConjRule::Spin => {
                    out = out + Self::term(&r.name, r.conj, -kc) + AffineExpr::scalar(kc);
                }
            }
        }
        out
    }

    fn leading_sign(&self) -> Option<bool> {
        let mut sums: BTreeMap<&str, QC> = BTreeMap::new();
        for (r, k) in &self.terms {
            let e = sums.entry(r.name.as_str()).or_insert_with(QC::zero);
            *e = *e + *k;
        }
        sums.values()
            .find(|v| !v.is_zero())
            .map(|v| v.is_positive())
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, o: AffineExpr) -> AffineExpr {
        self.c = self.c + o.c;
        self.cb = self.cb + o.cb;
        for (r, k) in o.terms {
            let e = self.terms.entry(r).or_insert_with(QC::zero);
            *e = *e + k;
        }
        self.terms.retain(|_, v| !v.is_zero());
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, o: AffineExpr) -> AffineExpr {
        self + (-o)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-QC::one())
    }
}

impl Mul<QC> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, k: QC) -> AffineExpr {
        self.scale(k)
    }
}

impl std::fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        if self.c == self.cb {
            write!(f, "{}", self.c)?;
        } else {
            write!(f, "{}|{}", self.c, self.cb)?;
        }
        for (r, k) in &self.terms {
            write!(f, " + {}·{}{}", k, r.name, if r.conj { "̄" } else { "" })?;
        }
        write!(f, ")")
    }
}

/// Value of a parameter: both slots and the exact gap hol − antihol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamValue {
    pub hol: C64,
    pub antihol: C64,
    pub gap: QC,
}

impl ParamValue {
    pub fn point(x: &SeparatedPoint) -> Self {
        ParamValue {
            hol: x.x(),
            antihol: x.x_bar(),
            gap: QC::imag(-x.n, 1),
        }
    }

    pub fn spin(s: &Spin) -> Self {
        ParamValue {
            hol: s.s(),
            antihol: s.s_bar(),
            gap: QC::int(s.n_s),
        }
    }

    pub fn index(b: &BiIndex) -> Self {
        ParamValue {
            hol: b.alpha(),
            antihol: b.alpha_bar(),
            gap: QC::int(b.gap()),
        }
    }

    /// Mellin variable γ = iν − n/2, γ̄ = iν + n/2 with n = n2/2.
    pub fn mellin(n2: i64, nu: C64) -> Self {
        let h = n2 as f64 / 4.0;
        let inu = C64::new(0.0, 1.0) * nu;
        ParamValue {
            hol: inu - h,
            antihol: inu + h,
            gap: QC::frac(-n2, 2),
        }
    }
}

/// Parameter values plus named complex points used as power bases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    params: BTreeMap<String, ParamValue>,
    points: BTreeMap<String, C64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, v: ParamValue) -> &mut Self {
        self.params.insert(name.to_string(), v);
        self
    }

    pub fn set_point(&mut self, name: &str, x: &SeparatedPoint) -> &mut Self {
        self.set(name, ParamValue::point(x))
    }

    pub fn set_spin(&mut self, name: &str, s: &Spin) -> &mut Self {
        self.set(name, ParamValue::spin(s))
    }

    pub fn set_index(&mut self, name: &str, b: &BiIndex) -> &mut Self {
        self.set(name, ParamValue::index(b))
    }

    pub fn set_base(&mut self, name: &str, z: C64) -> &mut Self {
        self.points.insert(name.to_string(), z);
        self
    }

    /// Names whose assigned gap is an integer.
    pub fn integral_params(&self) -> BTreeSet<String> {
        self.params
            .iter()
            .filter(|(_, v)| v.gap.as_integer().is_some())
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn param(&self, name: &str) -> Result<&ParamValue> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("parameter `{name}` not assigned")))
    }

    pub fn base(&self, name: &str) -> Result<C64> {
        self.points
            .get(name)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("point `{name}` not assigned")))
    }

    pub fn merge(&mut self, other: &Assignment) {
        for (k, v) in &other.params {
            self.params.insert(k.clone(), *v);
        }
        for (k, v) in &other.points {
            self.points.insert(k.clone(), *v);
        }
    }

    pub fn param_names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn point_names(&self) -> impl Iterator<Item = (&String, &C64)> {
        self.points.iter()
    }
}

/// Exact rational times π^k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scalar {
    pub coef: Q,
    pub pi_power: i32,
}

impl Scalar {
    pub fn one() -> Self {
        Scalar {
            coef: Q::one(),
            pi_power: 0,
        }
    }

    pub fn new(coef: Q, pi_power: i32) -> Self {
        Scalar { coef, pi_power }
    }

    pub fn mul(&self, o: &Scalar) -> Scalar {
        Scalar {
            coef: self.coef * o.coef,
            pi_power: self.pi_power + o.pi_power,
        }
    }

    pub fn inv(&self) -> Scalar {
        Scalar {
            coef: self.coef.recip(),
            pi_power: -self.pi_power,
        }
    }

    pub fn value(&self) -> f64 {
        q_to_f64(&self.coef) * PI.powi(self.pi_power)
    }

    pub fn log_value(&self) -> LogValue {
        if self.coef.is_zero() {
            return LogValue::Zero;
        }
        let m = q_to_f64(&self.coef.abs()).ln() + self.pi_power as f64 * PI.ln();
        LogValue::Log(C64::new(m, if self.coef.is_negative() { PI } else { 0.0 }))
    }
}

/// Base of an extra power factor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    /// [b]^E, single-valued bi-index power of the named point.
    Bracket(String),
    /// |b|^E with the holomorphic slot of E as the real exponent.
    Abs(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExtraPower {
    pub base: Base,
    pub exponent: AffineExpr,
}

/// Product of a-factors, brackets E·Ē, sign and phase monomials, an exact
/// scalar and powers of named points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AFactorProduct {
    pub numerator: Vec<AffineExpr>,
    pub denominator: Vec<AffineExpr>,
    pub bracket_num: Vec<AffineExpr>,
    pub bracket_den: Vec<AffineExpr>,
    /// (−1)^{[E]} with [E] = E − Ē.
    pub sign_power: AffineExpr,
    /// i^{[E]}.
    pub phase_power: AffineExpr,
    pub scalar: Scalar,
    pub extra_powers: Vec<ExtraPower>,
}

impl Default for AFactorProduct {
    fn default() -> Self {
        Self::one()
    }
}

impl AFactorProduct {
    pub fn one() -> Self {
        AFactorProduct {
            numerator: vec![],
            denominator: vec![],
            bracket_num: vec![],
            bracket_den: vec![],
            sign_power: AffineExpr::zero(),
            phase_power: AffineExpr::zero(),
            scalar: Scalar::one(),
            extra_powers: vec![],
        }
    }

    pub fn a(e: AffineExpr) -> Self {
        let mut p = Self::one();
        p.numerator.push(e);
        p
    }

    pub fn inv_a(e: AffineExpr) -> Self {
        let mut p = Self::one();
        p.denominator.push(e);
        p
    }

    pub fn bracket(e: AffineExpr) -> Self {
        let mut p = Self::one();
        p.bracket_num.push(e);
        p
    }

    pub fn scalar(coef: Q, pi_power: i32) -> Self {
        let mut p = Self::one();
        p.scalar = Scalar::new(coef, pi_power);
        p
    }

    pub fn sign(e: AffineExpr) -> Self {
        let mut p = Self::one();
        p.sign_power = e;
        p
    }

    pub fn phase(e: AffineExpr) -> Self {
        let mut p = Self::one();
        p.phase_power = e;
        p
    }

    pub fn power(base: Base, exponent: AffineExpr) -> Self {
        let mut p = Self::one();
        p.extra_powers.push(ExtraPower { base, exponent });
        p
    }

    pub fn times(&self, o: &AFactorProduct) -> AFactorProduct {
        let mut p = self.clone();
        p.numerator.extend(o.numerator.iter().cloned());
        p.denominator.extend(o.denominator.iter().cloned());
        p.bracket_num.extend(o.bracket_num.iter().cloned());
        p.bracket_den.extend(o.bracket_den.iter().cloned());
        p.sign_power = p.sign_power + o.sign_power.clone();
        p.phase_power = p.phase_power + o.phase_power.clone();
        p.scalar = p.scalar.mul(&o.scalar);
        p.extra_powers.extend(o.extra_powers.iter().cloned());
        p
    }

    pub fn inverse(&self) -> AFactorProduct {
        AFactorProduct {
            numerator: self.denominator.clone(),
            denominator: self.numerator.clone(),
            bracket_num: self.bracket_den.clone(),
            bracket_den: self.bracket_num.clone(),
            sign_power: self.sign_power.clone(),
            phase_power: -self.phase_power.clone(),
            scalar: self.scalar.inv(),
            extra_powers: self
                .extra_powers
                .iter()
                .map(|e| ExtraPower {
                    base: e.base.clone(),
                    exponent: -e.exponent.clone(),
                })
                .collect(),
        }
    }

    pub fn divide(&self, o: &AFactorProduct) -> AFactorProduct {
        self.times(&o.inverse())
    }

    /// All parameter names referenced anywhere.
    pub fn params(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        for e in self.all_exprs() {
            s.extend(e.params());
        }
        s
    }

    fn all_exprs(&self) -> impl Iterator<Item = &AffineExpr> {
        self.numerator
            .iter()
            .chain(&self.denominator)
            .chain(&self.bracket_num)
            .chain(&self.bracket_den)
            .chain(std::iter::once(&self.sign_power))
            .chain(std::iter::once(&self.phase_power))
            .chain(self.extra_powers.iter().map(|e| &e.exponent))
    }

    pub fn substitute(&self, name: &str, by: &AffineExpr) -> AFactorProduct {
        let f = |v: &Vec<AffineExpr>| v.iter().map(|e| e.substitute(name, by)).collect();
        AFactorProduct {
            numerator: f(&self.numerator),
            denominator: f(&self.denominator),
            bracket_num: f(&self.bracket_num),
            bracket_den: f(&self.bracket_den),
            sign_power: self.sign_power.substitute(name, by),
            phase_power: self.phase_power.substitute(name, by),
            scalar: self.scalar,
            extra_powers: self
                .extra_powers
                .iter()
                .map(|e| ExtraPower {
                    base: e.base.clone(),
                    exponent: e.exponent.substitute(name, by),
                })
                .collect(),
        }
    }

    /// Evaluation in log space; phases of sign/phase monomials are exact.
    pub fn log_eval(&self, a: &Assignment) -> Result<LogValue> {
        let mut acc = C64::new(0.0, 0.0);
        let mut zero = false;
        for e in &self.numerator {
            match specfun::log_a_factor(&e.eval(a)?)
                .map_err(|err| annotate(err, &format!("numerator a{e}")))?
            {
                LogValue::Zero => zero = true,
                LogValue::Log(l) => acc += l,
            }
        }
        for e in &self.denominator {
            match specfun::log_a_factor(&e.eval(a)?)
                .map_err(|err| annotate(err, &format!("denominator a{e}")))?
            {
                LogValue::Zero => {
                    return Err(Error::Pole(format!("denominator factor a{e} vanishes")))
                }
                LogValue::Log(l) => acc -= l,
            }
        }
        for e in &self.bracket_num {
            let (h, ab, _) = e.eval_slots(a)?;
            let v = h * ab;
            if v.norm() == 0.0 {
                zero = true;
            } else {
                acc += v.ln();
            }
        }
        for e in &self.bracket_den {
            let (h, ab, _) = e.eval_slots(a)?;
            let v = h * ab;
            if v.norm() < 1e-300 {
                return Err(Error::Pole(format!("bracket {e} vanishes in denominator")));
            }
            acc -= v.ln();
        }
        let sg = gap_integer(&self.sign_power, a)?;
        if sg.rem_euclid(2) == 1 {
            acc += C64::new(0.0, PI);
        }
        let ph = gap_integer(&self.phase_power, a)?;
        acc += C64::new(0.0, PI / 2.0 * ph.rem_euclid(4) as f64);
        match self.scalar.log_value() {
            LogValue::Zero => zero = true,
            LogValue::Log(l) => acc += l,
        }
        for ep in &self.extra_powers {
            match &ep.base {
                Base::Bracket(b) => {
                    let z = a.base(b)?;
                    let idx = ep.exponent.eval(a)?;
                    if z.norm() == 0.0 {
                        if idx.sum().re > 0.0 {
                            zero = true;
                            continue;
                        }
                        return Err(Error::Singularity(format!("[{b}]^E at {b} = 0")));
                    }
                    acc += specfun::log_power_bi(z, &idx)?;
                }
                Base::Abs(b) => {
                    let z = a.base(b)?;
                    let (h, _, _) = ep.exponent.eval_slots(a)?;
                    if z.norm() == 0.0 {
                        return Err(Error::Singularity(format!("|{b}|^E at {b} = 0")));
                    }
                    acc += h * z.norm().ln();
                }
            }
        }
        if zero {
            return Ok(LogValue::Zero);
        }
        acc.im = acc.im.rem_euclid(2.0 * PI);
        Ok(LogValue::Log(acc))
    }

    pub fn eval(&self, a: &Assignment) -> Result<C64> {
        Ok(self.log_eval(a)?.value())
    }

    /// Normal form under a(α)a(1−ᾱ)=1, a(1+α)=−a(α)/(αᾱ) and
    /// a(α)=(−1)^{α−ᾱ}a(ᾱ); factor lists sorted.
    pub fn canonicalize(&self) -> AFactorProduct {
        let mut st = CanonState {
            num: vec![],
            den: vec![],
            bnum: vec![],
            bden: vec![],
            sign: self.sign_power.clone(),
            negate: false,
        };
        for e in &self.numerator {
            st.place_a(e.clone(), true);
        }
        for e in &self.denominator {
            st.place_a(e.clone(), false);
        }
        for e in &self.bracket_num {
            st.bnum.push(canon_bracket(e));
        }
        for e in &self.bracket_den {
            st.bden.push(canon_bracket(e));
        }
        let (num, den) = cancel(st.num, st.den);
        let (bnum, bden) = cancel(st.bnum, st.bden);
        let mut scalar = self.scalar;
        if st.negate {
            scalar.coef = -scalar.coef;
        }
        let mut extras: BTreeMap<Base, AffineExpr> = BTreeMap::new();
        for ep in &self.extra_powers {
            let e = extras
                .entry(ep.base.clone())
                .or_insert_with(AffineExpr::zero);
            *e = e.clone() + ep.exponent.clone();
        }
        let extra_powers = extras
            .into_iter()
            .filter(|(b, e)| match b {
                Base::Bracket(_) => *e != AffineExpr::zero(),
                Base::Abs(_) => e.c != QC::zero() || !e.terms.is_empty(),
            })
            .map(|(base, exponent)| {
                let exponent = match base {
                    Base::Abs(_) => AffineExpr {
                        terms: exponent.terms,
                        c: exponent.c,
                        cb: exponent.c,
                    },
                    Base::Bracket(_) => exponent,
                };
                ExtraPower { base, exponent }
            })
            .collect();
        AFactorProduct {
            numerator: num,
            denominator: den,
            bracket_num: bnum,
            bracket_den: bden,
            sign_power: reduce_gap(&st.sign, 2),
            phase_power: reduce_gap(&self.phase_power, 4),
            scalar,
            extra_powers,
        }
    }

    /// Canonical form that also reduces sign and phase coefficients of the
    /// listed parameters, whose gaps are known to be integers.
    pub fn canonicalize_integral(&self, integral: &BTreeSet<String>) -> AFactorProduct {
        let mut c = self.canonicalize();
        let red = |e: &mut AffineExpr, m: i64| {
            for (r, k) in e.terms.iter_mut() {
                if integral.contains(&r.name) && k.im.is_zero() && k.re.is_integer() {
                    *k = k.reduce_re_mod(m);
                }
            }
            e.terms.retain(|_, k| !k.is_zero());
        };
        red(&mut c.sign_power, 2);
        red(&mut c.phase_power, 4);
        c
    }

    pub fn canonical_eq(&self, o: &AFactorProduct) -> bool {
        self.canonicalize() == o.canonicalize()
    }

    /// Fast evaluator with `vars` left free and everything else folded in.
    pub fn compile(&self, vars: &[&str], fixed: &Assignment) -> Result<CompiledProduct> {
        let c = |e: &AffineExpr| CExpr::new(e, vars, fixed);
        let mut extras = vec![];
        for ep in &self.extra_powers {
            let (is_abs, b) = match &ep.base {
                Base::Bracket(b) => (false, b),
                Base::Abs(b) => (true, b),
            };
            let z = fixed.base(b)?;
            if z.norm() == 0.0 {
                return Err(Error::Singularity(format!("power base {b} = 0")));
            }
            extras.push(CExtra {
                abs: is_abs,
                ln_r: z.norm().ln(),
                theta: z.im.atan2(z.re),
                e: c(&ep.exponent)?,
            });
        }
        let scalar_log = match self.scalar.log_value() {
            LogValue::Zero => None,
            LogValue::Log(l) => Some(l),
        };
        Ok(CompiledProduct {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            num: self.numerator.iter().map(c).collect::<Result<_>>()?,
            den: self.denominator.iter().map(c).collect::<Result<_>>()?,
            bnum: self.bracket_num.iter().map(c).collect::<Result<_>>()?,
            bden: self.bracket_den.iter().map(c).collect::<Result<_>>()?,
            sign: c(&self.sign_power)?,
            phase: c(&self.phase_power)?,
            scalar_log,
            extras,
        })
    }
}

fn annotate(e: Error, what: &str) -> Error {
    match e {
        Error::Pole(m) => Error::Pole(format!("{what}: {m}")),
        other => other,
    }
}

fn gap_integer(e: &AffineExpr, a: &Assignment) -> Result<i64> {
    let (_, _, g) = e.eval_slots(a)?;
    g.as_integer()
        .ok_or_else(|| Error::Invalid(format!("sign/phase exponent {e} has non-integer gap {g}")))
}

fn reduce_gap(e: &AffineExpr, m: i64) -> AffineExpr {
    let mut g = e.gap_form();
    g.c = g.c.reduce_re_mod(m);
    g
}

struct CanonState {
    num: Vec<AffineExpr>,
    den: Vec<AffineExpr>,
    bnum: Vec<AffineExpr>,
    bden: Vec<AffineExpr>,
    sign: AffineExpr,
    negate: bool,
}

impl CanonState {
    fn place_a(&mut self, mut e: AffineExpr, mut in_num: bool) {
        if e.leading_sign() == Some(false) {
            // a(E) = 1/a(1 − Ē)
            e = (-e.swap()).shift(QC::one());
            in_num = !in_num;
        }
        let sw = e.swap();
        if sw < e {
            self.sign = self.sign.clone() + e.clone();
            e = sw;
        }
        let k = q_floor(&e.c.re);
        if k != 0 {
            let base = e.shift(QC::int(-k));
            if k.rem_euclid(2) == 1 {
                self.negate = !self.negate;
            }
            // a(base + k) = (−1)^k a(base) / Π_{j=0}^{k−1} [base + j]        (k > 0)
            // a(base − m) = (−1)^m a(base) · Π_{j=1}^{m} [base − j]           (k = −m < 0)
            let brackets: Vec<AffineExpr> = if k > 0 {
                (0..k)
                    .map(|j| canon_bracket(&base.shift(QC::int(j))))
                    .collect()
            } else {
                (1..=-k)
                    .map(|j| canon_bracket(&base.shift(QC::int(-j))))
                    .collect()
            };
            let goes_down = (k > 0) == in_num;
            if goes_down {
                self.bden.extend(brackets);
            } else {
                self.bnum.extend(brackets);
            }
            e = base;
        }
        if in_num {
            self.num.push(e);
        } else {
            self.den.push(e);
        }
    }
}

/// [E] = E·Ē is invariant under E → Ē and E → −E.
fn canon_bracket(e: &AffineExpr) -> AffineExpr {
    let cands = [e.clone(), e.swap(), -e.clone(), -e.swap()];
    cands.into_iter().min().unwrap()
}

fn cancel(
    mut num: Vec<AffineExpr>,
    mut den: Vec<AffineExpr>,
) -> (Vec<AffineExpr>, Vec<AffineExpr>) {
    num.sort();
    den.sort();
    let mut n_out = vec![];
    let mut d_out = vec![];
    let (mut i, mut j) = (0, 0);
    while i < num.len() && j < den.len() {
        match num[i].cmp(&den[j]) {
            std::cmp::Ordering::Less => {
                n_out.push(num[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                d_out.push(den[j].clone());
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    n_out.extend_from_slice(&num[i..]);
    d_out.extend_from_slice(&den[j..]);
    (n_out, d_out)
}

/// Affine expression with free variables indexed by position.
#[derive(Debug, Clone)]
struct CExpr {
    c: C64,
    cb: C64,
    gap0: C64,
    terms: Vec<(usize, bool, C64)>,
}

impl CExpr {
    fn new(e: &AffineExpr, vars: &[&str], fixed: &Assignment) -> Result<Self> {
        let mut out = CExpr {
            c: e.c.to_c64(),
            cb: e.cb.to_c64(),
            gap0: (e.c - e.cb).to_c64(),
            terms: vec![],
        };
        for (r, k) in &e.terms {
            let kc = k.to_c64();
            if let Some(i) = vars.iter().position(|v| *v == r.name) {
                out.terms.push((i, r.conj, kc));
            } else {
                let v = fixed.param(&r.name)?;
                let g = v.gap.to_c64();
                if r.conj {
                    out.c += kc * v.antihol;
                    out.cb += kc * v.hol;
                    out.gap0 -= kc * g;
                } else {
                    out.c += kc * v.hol;
                    out.cb += kc * v.antihol;
                    out.gap0 += kc * g;
                }
            }
        }
        Ok(out)
    }

    #[inline]
    fn slots(&self, vals: &[ParamValue]) -> (C64, C64, C64) {
        let mut h = self.c;
        let mut ab = self.cb;
        let mut g = self.gap0;
        for &(i, conj, k) in &self.terms {
            let v = &vals[i];
            let vg = v.gap.to_c64();
            if conj {
                h += k * v.antihol;
                ab += k * v.hol;
                g -= k * vg;
            } else {
                h += k * v.hol;
                ab += k * v.antihol;
                g += k * vg;
            }
        }
        (h, ab, g)
    }

    fn index(&self, vals: &[ParamValue]) -> Result<BiIndex> {
        let (h, _, g) = self.slots(vals);
        Ok(BiIndex::with_gap(h, int_gap(g)?))
    }
}

fn int_gap(g: C64) -> Result<i64> {
    let r = g.re.round();
    if (g.re - r).abs() > 1e-9 || g.im.abs() > 1e-9 {
        return Err(Error::Invalid(format!("non-integer gap {g}")));
    }
    Ok(r as i64)
}

#[derive(Debug, Clone)]
struct CExtra {
    abs: bool,
    ln_r: f64,
    theta: f64,
    e: CExpr,
}

/// Compiled product for repeated evaluation over a few free variables.
#[derive(Debug, Clone)]
pub struct CompiledProduct {
    pub vars: Vec<String>,
    num: Vec<CExpr>,
    den: Vec<CExpr>,
    bnum: Vec<CExpr>,
    bden: Vec<CExpr>,
    sign: CExpr,
    phase: CExpr,
    scalar_log: Option<C64>,
    extras: Vec<CExtra>,
}

impl CompiledProduct {
    pub fn log_eval(&self, vals: &[ParamValue]) -> Result<LogValue> {
        let Some(mut acc) = self.scalar_log else {
            return Ok(LogValue::Zero);
        };
        let mut zero = false;
        for e in &self.num {
            match specfun::log_a_factor(&e.index(vals)?)? {
                LogValue::Zero => zero = true,
                LogValue::Log(l) => acc += l,
            }
        }
        for e in &self.den {
            match specfun::log_a_factor(&e.index(vals)?) {
                Ok(LogValue::Zero) => {
                    return Err(Error::Pole("denominator a-factor vanishes".into()))
                }
                Ok(LogValue::Log(l)) => acc -= l,
                // 1/a vanishes at a pole of a
                Err(Error::Pole(_)) => zero = true,
                Err(e) => return Err(e),
            }
        }
        for e in &self.bnum {
            let (h, ab, _) = e.slots(vals);
            let v = h * ab;
            if v.norm() == 0.0 {
                zero = true;
            } else {
                acc += v.ln();
            }
        }
        for e in &self.bden {
            let (h, ab, _) = e.slots(vals);
            acc -= (h * ab).ln();
        }
        let (_, _, g) = self.sign.slots(vals);
        if int_gap(g)?.rem_euclid(2) == 1 {
            acc += C64::new(0.0, PI);
        }
        let (_, _, g) = self.phase.slots(vals);
        acc += C64::new(0.0, PI / 2.0 * int_gap(g)?.rem_euclid(4) as f64);
        for x in &self.extras {
            if x.abs {
                let (h, _, _) = x.e.slots(vals);
                acc += h * x.ln_r;
            } else {
                let idx = x.e.index(vals)?;
                acc += idx.sum() * x.ln_r + C64::new(0.0, idx.gap() as f64 * x.theta);
            }
        }
        if zero {
            return Ok(LogValue::Zero);
        }
        Ok(LogValue::Log(acc))
    }

    pub fn eval(&self, vals: &[ParamValue]) -> Result<C64> {
        Ok(self.log_eval(vals)?.value())
    }

    /// Every a-factor argument with the free variables set to `vals`:
    /// (is_numerator, α + ᾱ, gap, variables it depends on).
    pub fn factor_sums(&self, vals: &[ParamValue]) -> Vec<(bool, C64, C64, Vec<usize>)> {
        let mut out = vec![];
        for (is_num, list) in [(true, &self.num), (false, &self.den)] {
            for e in list {
                let (h, ab, g) = e.slots(vals);
                let mut deps: Vec<usize> = e.terms.iter().map(|t| t.0).collect();
                deps.sort();
                deps.dedup();
                out.push((is_num, h + ab, g, deps));
            }
        }
        out
    }

    /// Coefficients of each free variable in every a-factor argument,
    /// (is_numerator, [(var, conj, k)]).
    pub fn factor_terms(&self) -> Vec<(bool, Vec<(usize, bool, C64)>)> {
        let mut out = vec![];
        for (is_num, list) in [(true, &self.num), (false, &self.den)] {
            for e in list {
                out.push((is_num, e.terms.clone()));
            }
        }
        out
    }

    /// Free-variable coefficients inside brackets, (is_numerator, [(var, conj, k)]).
    pub fn bracket_terms(&self) -> Vec<(bool, Vec<(usize, bool, C64)>)> {
        let mut out = vec![];
        for (is_num, list) in [(true, &self.bnum), (false, &self.bden)] {
            for e in list {
                out.push((is_num, e.terms.clone()));
            }
        }
        out
    }

    /// Free-variable coefficients inside the extra power exponents,
    /// (ln |base|, [(var, conj, k)]), Abs bases only count the holomorphic slot.
    pub fn extra_terms(&self) -> Vec<(bool, f64, Vec<(usize, bool, C64)>)> {
        self.extras
            .iter()
            .map(|x| (x.abs, x.ln_r, x.e.terms.clone()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// JSON form

fn q_out(q: &Q) -> [i64; 2] {
    [*q.numer(), *q.denom()]
}

const MAX_JSON_INT: i64 = 1 << 40;

fn q_in(v: [i64; 2]) -> Result<Q> {
    if v[1] == 0 {
        return Err(Error::Parse("zero denominator".into()));
    }
    if v[0].abs() > MAX_JSON_INT || v[1].abs() > MAX_JSON_INT {
        return Err(Error::Parse("rational component out of range".into()));
    }
    Ok(Q::new(v[0], v[1]))
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy)]
struct QcRepr {
    re: [i64; 2],
    #[serde(default = "zero_q")]
    im: [i64; 2],
}

fn zero_q() -> [i64; 2] {
    [0, 1]
}

impl QcRepr {
    fn from(q: &QC) -> Self {
        QcRepr {
            re: q_out(&q.re),
            im: q_out(&q.im),
        }
    }
    fn to(self) -> Result<QC> {
        Ok(QC::new(q_in(self.re)?, q_in(self.im)?))
    }
}

#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct TermRepr {
    param: String,
    #[serde(default)]
    conj: bool,
    coef: QcRepr,
}

/// JSON form of an affine expression.
#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct AffineRepr {
    constant: [QcRepr; 2],
    #[serde(default)]
    terms: Vec<TermRepr>,
}

impl From<&AffineExpr> for AffineRepr {
    fn from(e: &AffineExpr) -> Self {
        AffineRepr {
            constant: [QcRepr::from(&e.c), QcRepr::from(&e.cb)],
            terms: e
                .terms
                .iter()
                .map(|(r, k)| TermRepr {
                    param: r.name.clone(),
                    conj: r.conj,
                    coef: QcRepr::from(k),
                })
                .collect(),
        }
    }
}

impl TryFrom<AffineRepr> for AffineExpr {
    type Error = Error;
    fn try_from(r: AffineRepr) -> Result<Self> {
        let mut e = AffineExpr::constant(r.constant[0].to()?, r.constant[1].to()?);
        for t in r.terms {
            if t.param.is_empty() {
                return Err(Error::Parse("empty parameter name".into()));
            }
            e = e + AffineExpr::term(&t.param, t.conj, t.coef.to()?);
        }
        Ok(e)
    }
}

impl Serialize for AffineExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AffineRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AffineExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = AffineRepr::deserialize(d)?;
        AffineExpr::try_from(r).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalarRepr {
    coef: [i64; 2],
    #[serde(default)]
    pi_power: i32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtraRepr {
    base: Base,
    exponent: AffineExpr,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProductRepr {
    #[serde(default)]
    numerator: Vec<AffineExpr>,
    #[serde(default)]
    denominator: Vec<AffineExpr>,
    #[serde(default)]
    bracket_numerator: Vec<AffineExpr>,
    #[serde(default)]
    bracket_denominator: Vec<AffineExpr>,
    #[serde(default = "AffineExpr::zero")]
    sign_power: AffineExpr,
    #[serde(default = "AffineExpr::zero")]
    phase_power: AffineExpr,
    #[serde(default = "unit_scalar")]
    scalar: ScalarRepr,
    #[serde(default)]
    extra_powers: Vec<ExtraRepr>,
}

fn unit_scalar() -> ScalarRepr {
    ScalarRepr {
        coef: [1, 1],
        pi_power: 0,
    }
}

impl Serialize for AFactorProduct {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProductRepr {
            numerator: self.numerator.clone(),
            denominator: self.denominator.clone(),
            bracket_numerator: self.bracket_num.clone(),
            bracket_denominator: self.bracket_den.clone(),
            sign_power: self.sign_power.clone(),
            phase_power: self.phase_power.clone(),
            scalar: ScalarRepr {
                coef: q_out(&self.scalar.coef),
                pi_power: self.scalar.pi_power,
            },
            extra_powers: self
                .extra_powers
                .iter()
                .map(|e| ExtraRepr {
                    base: e.base.clone(),
                    exponent: e.exponent.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AFactorProduct {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ProductRepr::deserialize(d)?;
        let coef = q_in(r.scalar.coef).map_err(serde::de::Error::custom)?;
        if coef.is_zero() {
            return Err(serde::de::Error::custom("zero scalar"));
        }
        if r.scalar.pi_power.abs() > 64 {
            return Err(serde::de::Error::custom("pi power out of range"));
        }
        Ok(AFactorProduct {
            numerator: r.numerator,
            denominator: r.denominator,
            bracket_num: r.bracket_numerator,
            bracket_den: r.bracket_denominator,
            sign_power: r.sign_power,
            phase_power: r.phase_power,
            scalar: Scalar::new(coef, r.scalar.pi_power),
            extra_powers: r
                .extra_powers
                .into_iter()
                .map(|e| ExtraPower {
                    base: e.base,
                    exponent: e.exponent,
                })
                .collect(),
        })
    }
}

impl AFactorProduct {
    /// Canonical JSON: the normal form serialized with sorted factor lists.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(&self.canonicalize()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// closed forms

/// Parameter names used by the value-level builders.
pub fn x_name(k: usize) -> String {
    format!("x{k}")
}
pub fn xp_name(k: usize) -> String {
    format!("xp{k}")
}
pub fn u_name(k: usize) -> String {
    format!("u{k}")
}
pub const SPIN: &str = "s";

/// q(x, x′) = π a(1 + i(x − x′)) a(s̄ − i x̄) / a(s − i x′).
pub fn q_factor_sym(x: &str, xp: &str, s: &str) -> AFactorProduct {
    let i = QC::i();
    let one = AffineExpr::int(1);
    let arg1 = one + (AffineExpr::param(x) - AffineExpr::param(xp)) * i;
    let arg2 = AffineExpr::param_bar(s) - AffineExpr::param_bar(x) * i;
    let arg3 = AffineExpr::param(s) - AffineExpr::param(xp) * i;
    AFactorProduct::scalar(Q::one(), 1)
        .times(&AFactorProduct::a(arg1))
        .times(&AFactorProduct::a(arg2))
        .times(&AFactorProduct::inv_a(arg3))
}

/// A_X = Σ_k (s − i x_k).
pub fn a_x(xs: &[&str], s: &str) -> AffineExpr {
    let mut e = AffineExpr::zero();
    for x in xs {
        e = e + AffineExpr::param(s) - AffineExpr::param(x) * QC::i();
    }
    e
}

/// (−1)^{[A_X]} [z0]^{i(X−X′)} Π_{k,j} q(x_k, x′_j).
pub fn txx_sym(xs: &[&str], xps: &[&str], s: &str, z0: &str) -> AFactorProduct {
    let mut p = AFactorProduct::sign(a_x(xs, s));
    let mut e = AffineExpr::zero();
    for x in xs {
        e = e + AffineExpr::param(x) * QC::i();
    }
    for xp in xps {
        e = e - AffineExpr::param(xp) * QC::i();
    }
    p = p.times(&AFactorProduct::power(Base::Bracket(z0.to_string()), e));
    for x in xs {
        for xp in xps {
            p = p.times(&q_factor_sym(x, xp, s));
        }
    }
    p
}

/// i^{[A_X]} π^N |p|^{−N−1} [p]^{A_X} Π_k a(s̄ − i x̄_k) Π_{k,j} q(x_k, u_j).
pub fn ba_sym(p_base: &str, us: &[&str], xs: &[&str], s: &str) -> AFactorProduct {
    let n = xs.len() as i64;
    let ax = a_x(xs, s);
    let mut p = AFactorProduct::phase(ax.clone())
        .times(&AFactorProduct::scalar(Q::one(), n as i32))
        .times(&AFactorProduct::power(
            Base::Abs(p_base.to_string()),
            AffineExpr::int(-n - 1),
        ))
        .times(&AFactorProduct::power(
            Base::Bracket(p_base.to_string()),
            ax,
        ));
    for x in xs {
        p = p.times(&AFactorProduct::a(
            AffineExpr::param_bar(s) - AffineExpr::param_bar(x) * QC::i(),
        ));
        for u in us {
            p = p.times(&q_factor_sym(x, u, s));
        }
    }
    p
}

/// A symbolic product together with the values of its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub product: AFactorProduct,
    pub assignment: Assignment,
}

impl Bound {
    pub fn value(&self) -> Result<C64> {
        self.product.eval(&self.assignment)
    }
}

pub fn q_factor(x: &SeparatedPoint, xp: &SeparatedPoint, s: &Spin) -> Bound {
    let mut a = Assignment::new();
    a.set_point("x", x).set_point("xp", xp).set_spin(SPIN, s);
    Bound {
        product: q_factor_sym("x", "xp", SPIN),
        assignment: a,
    }
}

fn names(f: fn(usize) -> String, n: usize) -> Vec<String> {
    (1..=n).map(f).collect()
}

pub fn txx_closed_form(
    x: &[SeparatedPoint],
    xp: &[SeparatedPoint],
    s: &Spin,
    z0: C64,
) -> Result<Bound> {
    if x.len() != xp.len() || x.is_empty() {
        return Err(Error::Invalid(
            "x and x′ must have equal nonzero length".into(),
        ));
    }
    let xn = names(x_name, x.len());
    let xpn = names(xp_name, xp.len());
    let xr: Vec<&str> = xn.iter().map(|s| s.as_str()).collect();
    let xpr: Vec<&str> = xpn.iter().map(|s| s.as_str()).collect();
    let mut a = Assignment::new();
    for (n, v) in xn.iter().zip(x) {
        a.set_point(n, v);
    }
    for (n, v) in xpn.iter().zip(xp) {
        a.set_point(n, v);
    }
    a.set_spin(SPIN, s).set_base("z0", z0);
    Ok(Bound {
        product: txx_sym(&xr, &xpr, SPIN, "z0"),
        assignment: a,
    })
}

pub fn ba_closed_form(
    p: C64,
    u: &[SeparatedPoint],
    x: &[SeparatedPoint],
    s: &Spin,
) -> Result<Bound> {
    if x.is_empty() || u.len() + 1 != x.len() {
        return Err(Error::Invalid("need len(u) = len(x) − 1 ≥ 0".into()));
    }
    let xn = names(x_name, x.len());
    let un = names(u_name, u.len());
    let xr: Vec<&str> = xn.iter().map(|s| s.as_str()).collect();
    let ur: Vec<&str> = un.iter().map(|s| s.as_str()).collect();
    let mut a = Assignment::new();
    for (n, v) in xn.iter().zip(x) {
        a.set_point(n, v);
    }
    for (n, v) in un.iter().zip(u) {
        a.set_point(n, v);
    }
    a.set_spin(SPIN, s).set_base("p", p);
    Ok(Bound {
        product: ba_sym("p", &ur, &xr, SPIN),
        assignment: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha() -> AffineExpr {
        AffineExpr::param("s") - AffineExpr::param("x") * QC::i()
    }

    fn asg() -> Assignment {
        let mut a = Assignment::new();
        a.set_point("x", &SeparatedPoint::new(1, C64::new(0.3, 0.05)))
            .set_point("xp", &SeparatedPoint::new(-1, C64::new(-0.2, -0.05)))
            .set_spin("s", &Spin::new(0, 0.1));
        a
    }

    #[test]
    fn gap_is_exact() {
        let e = alpha();
        let b = e.eval(&asg()).unwrap();
        // s − s̄ = 0, −i(x − x̄) = −i(−i n) = −n = −1
        assert_eq!(b.gap(), -1);
        assert!(AffineExpr::param("x").eval(&asg()).is_err());
    }

    #[test]
    fn reflection_pair_cancels() {
        let e = alpha();
        let r = (-e.swap()).shift(QC::one());
        let p = AFactorProduct::a(e.clone()).times(&AFactorProduct::a(r));
        let c = p.canonicalize();
        assert!(c.numerator.is_empty() && c.denominator.is_empty(), "{c:?}");
        assert_eq!(c, AFactorProduct::one().canonicalize());
    }

    #[test]
    fn shift_rule_normal_form() {
        let e = alpha();
        let lhs = AFactorProduct::a(e.shift(QC::one()));
        let rhs = AFactorProduct::a(e.clone())
            .times(&AFactorProduct::scalar(Q::from_integer(-1), 0))
            .divide(&AFactorProduct::bracket(e));
        assert_eq!(lhs.canonicalize(), rhs.canonicalize());
        let a = asg();
        let v1 = lhs.eval(&a).unwrap();
        let v2 = rhs.eval(&a).unwrap();
        assert!((v1 - v2).norm() < 1e-12 * v1.norm());
    }

    #[test]
    fn flip_normal_form() {
        let e = alpha();
        let lhs = AFactorProduct::a(e.clone());
        let rhs = AFactorProduct::sign(e.clone()).times(&AFactorProduct::a(e.swap()));
        assert_eq!(lhs.canonicalize(), rhs.canonicalize());
    }

    #[test]
    fn canonical_idempotent_and_value_preserving() {
        let p = txx_sym(&["x1", "x2"], &["xp1", "xp2"], "s", "z0");
        let c = p.canonicalize();
        assert_eq!(c.canonicalize(), c);
        let mut a = Assignment::new();
        a.set_point("x1", &SeparatedPoint::new(0, C64::new(0.3, 0.05)))
            .set_point("x2", &SeparatedPoint::new(1, C64::new(-0.4, 0.05)))
            .set_point("xp1", &SeparatedPoint::new(0, C64::new(0.1, -0.05)))
            .set_point("xp2", &SeparatedPoint::new(-1, C64::new(0.6, -0.05)))
            .set_spin("s", &Spin::new(0, 0.1))
            .set_base("z0", C64::new(0.7, -0.4));
        let v1 = p.eval(&a).unwrap();
        let v2 = c.eval(&a).unwrap();
        assert!((v1 - v2).norm() <= 1e-11 * v1.norm());
    }

    #[test]
    fn analytic_conj_matches_numeric() {
        let a = {
            let mut a = Assignment::new();
            a.set_point("x", &SeparatedPoint::new(1, C64::new(0.3, 0.0)))
                .set_spin("s", &Spin::new(1, 0.2))
                .set_base("z", C64::new(0.4, 1.1));
            a
        };
        let e = AffineExpr::param("s") - AffineExpr::i_param("x") + AffineExpr::frac(-1, 1);
        let ec = e.analytic_conj(|n| {
            if n == "s" {
                ConjRule::Spin
            } else {
                ConjRule::Point
            }
        });
        let p = AFactorProduct::power(Base::Bracket("z".into()), e);
        let pc = AFactorProduct::power(Base::Bracket("z".into()), ec);
        let v = p.eval(&a).unwrap();
        let vc = pc.eval(&a).unwrap();
        assert!((v.conj() - vc).norm() < 1e-13);
    }

    #[test]
    fn json_round_trip() {
        let p = ba_sym("p", &["u1"], &["x1", "x2"], "s");
        let j = serde_json::to_string(&p).unwrap();
        let q = AFactorProduct::from_json(&j).unwrap();
        assert_eq!(p, q);
        assert!(p.to_canonical_json().contains("\"numerator\""));
    }
}
