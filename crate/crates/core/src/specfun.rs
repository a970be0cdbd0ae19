//! Complex special functions: log-gamma, the a-function, the complex-field
//! gamma, bi-index powers and integer-order Bessel functions.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance to a Γ pole below which evaluation refuses to proceed.
pub const POLE_TOL: f64 = 1e-9;
/// Tolerance on the integer gap of a bi-index.
pub const GAP_TOL: f64 = 1e-9;

/// Pair of exponents (α, ᾱ) with integer gap n = α − ᾱ stored exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BiIndexRepr", into = "BiIndexRepr")]
pub struct BiIndex {
    alpha: C64,
    n: i64,
}

#[derive(Serialize, Deserialize)]
struct BiIndexRepr {
    alpha: [f64; 2],
    alpha_bar: [f64; 2],
}

impl TryFrom<BiIndexRepr> for BiIndex {
    type Error = Error;
    fn try_from(r: BiIndexRepr) -> Result<Self> {
        BiIndex::new(
            C64::new(r.alpha[0], r.alpha[1]),
            C64::new(r.alpha_bar[0], r.alpha_bar[1]),
        )
    }
}

impl From<BiIndex> for BiIndexRepr {
    fn from(b: BiIndex) -> Self {
        let ab = b.alpha_bar();
        BiIndexRepr {
            alpha: [b.alpha.re, b.alpha.im],
            alpha_bar: [ab.re, ab.im],
        }
    }
}

impl BiIndex {
    /// Rejects pairs whose difference is not an integer within `GAP_TOL`.
    pub fn new(alpha: C64, alpha_bar: C64) -> Result<Self> {
        let d = alpha - alpha_bar;
        let n = d.re.round();
        if !(d.re - n).abs().le(&GAP_TOL) || !d.im.abs().le(&GAP_TOL) || !n.is_finite() {
            return Err(Error::Invalid(format!(
                "bi-index gap {d} is not an integer"
            )));
        }
        Ok(BiIndex { alpha, n: n as i64 })
    }

    /// Builds (α, α − n) exactly.
    pub fn with_gap(alpha: C64, n: i64) -> Self {
        BiIndex { alpha, n }
    }

    /// Diagonal index (α, α).
    pub fn diag(alpha: C64) -> Self {
        BiIndex { alpha, n: 0 }
    }

    pub fn real(a: f64, abar: f64) -> Result<Self> {
        Self::new(C64::new(a, 0.0), C64::new(abar, 0.0))
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn alpha_bar(&self) -> C64 {
        self.alpha - self.n as f64
    }

    pub fn gap(&self) -> i64 {
        self.n
    }

    /// α + ᾱ.
    pub fn sum(&self) -> C64 {
        2.0 * self.alpha - self.n as f64
    }

    /// The swapped pair (ᾱ, α).
    pub fn swap(&self) -> Self {
        BiIndex {
            alpha: self.alpha_bar(),
            n: -self.n,
        }
    }

    pub fn neg(&self) -> Self {
        BiIndex {
            alpha: -self.alpha,
            n: -self.n,
        }
    }

    pub fn add(&self, o: &BiIndex) -> Self {
        BiIndex {
            alpha: self.alpha + o.alpha,
            n: self.n + o.n,
        }
    }

    pub fn sub(&self, o: &BiIndex) -> Self {
        self.add(&o.neg())
    }

    /// (α + c, ᾱ + c) for a scalar shift c.
    pub fn shift(&self, c: C64) -> Self {
        BiIndex {
            alpha: self.alpha + c,
            n: self.n,
        }
    }

    /// 1 − ᾱ in the holomorphic slot, 1 − α in the antiholomorphic one.
    pub fn reflect(&self) -> Self {
        BiIndex {
            alpha: 1.0 - self.alpha_bar(),
            n: self.n,
        }
    }
}

/// Principal-series spin: s = (1+n_s)/2 + iν_s, s̄ = (1−n_s)/2 + iν_s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spin {
    pub n_s: i64,
    pub nu_s: f64,
}

impl Spin {
    pub fn new(n_s: i64, nu_s: f64) -> Self {
        Spin { n_s, nu_s }
    }

    pub fn s(&self) -> C64 {
        C64::new((1.0 + self.n_s as f64) / 2.0, self.nu_s)
    }

    pub fn s_bar(&self) -> C64 {
        C64::new((1.0 - self.n_s as f64) / 2.0, self.nu_s)
    }

    pub fn as_index(&self) -> BiIndex {
        BiIndex::with_gap(self.s(), self.n_s)
    }
}

/// Separated variable x = −in/2 + ν, x̄ = in/2 + ν.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatedPoint {
    pub n: i64,
    pub nu: C64,
}

impl SeparatedPoint {
    pub fn new(n: i64, nu: C64) -> Self {
        SeparatedPoint { n, nu }
    }

    pub fn real(n: i64, nu: f64) -> Self {
        SeparatedPoint {
            n,
            nu: C64::new(nu, 0.0),
        }
    }

    pub fn x(&self) -> C64 {
        C64::new(0.0, -(self.n as f64) / 2.0) + self.nu
    }

    pub fn x_bar(&self) -> C64 {
        C64::new(0.0, self.n as f64 / 2.0) + self.nu
    }

    /// Same point with the imaginary part of ν replaced.
    pub fn with_offset(&self, offset: f64) -> Self {
        SeparatedPoint {
            n: self.n,
            nu: C64::new(self.nu.re, offset),
        }
    }
}

/// i^n computed exactly.
pub fn i_pow(n: i64) -> C64 {
    match n.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// (−1)^n.
pub fn sign_pow(n: i64) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Returns k when z is within `tol` of the non-positive integer −k.
pub fn nonpositive_integer(z: C64, tol: f64) -> Option<i64> {
    let r = z.re.round();
    if r <= 0.0 && (z.re - r).abs() <= tol && z.im.abs() <= tol {
        Some(-r as i64)
    } else {
        None
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const ZETA: [f64; 30] = [
    1.6449340668482264,
    1.2020569031595942,
    1.0823232337111381,
    1.03692775514337,
    1.0173430619844492,
    1.008349277381923,
    1.0040773561979444,
    1.0020083928260821,
    1.000994575127818,
    1.0004941886041194,
    1.000246086553308,
    1.0001227133475785,
    1.0000612481350588,
    1.000030588236307,
    1.0000152822594086,
    1.0000076371976379,
    1.000003817293265,
    1.0000019082127165,
    1.0000009539620338,
    1.0000004769329869,
    1.0000002384505027,
    1.000000119219926,
    1.000000059608189,
    1.0000000298035034,
    1.0000000149015549,
    1.0000000074507118,
    1.000000003725334,
    1.0000000018626598,
    1.0000000009313275,
    1.0000000004656628,
];

/// ln Γ(1+ε) by its Taylor series, |ε| ≤ 1/4.
fn log_gamma_1p(e: C64) -> C64 {
    let mut sum = -EULER_GAMMA * e;
    let mut p = -e;
    for (j, z) in ZETA.iter().enumerate() {
        let k = (j + 2) as f64;
        p *= -e;
        sum += p * (z / k);
    }
    sum
}

fn ln_1p(e: C64) -> C64 {
    let m = 2.0 * e.re + e.norm_sqr();
    C64::new(0.5 * m.ln_1p(), e.im.atan2(1.0 + e.re))
}

fn log_gamma_lanczos(z: C64) -> C64 {
    let w = z - 1.0;
    let mut x = C64::new(LANCZOS[0], 0.0);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (w + i as f64);
    }
    let t = w + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (w + 0.5) * t.ln() - t + x.ln()
}

/// Principal-branch log Γ(z).
pub fn log_gamma(z: C64) -> Result<C64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Invalid(format!("log_gamma argument {z} not finite")));
    }
    if let Some(k) = nonpositive_integer(z, POLE_TOL) {
        return Err(Error::Pole(format!("Γ pole at z = {}", -k)));
    }
    let d1 = z - 1.0;
    if d1.norm() < 0.25 {
        return Ok(log_gamma_1p(d1));
    }
    let d2 = z - 2.0;
    if d2.norm() < 0.25 {
        return Ok(log_gamma_1p(d2) + ln_1p(d2));
    }
    if z.re >= 0.5 {
        return Ok(log_gamma_lanczos(z));
    }
    let m = (0.5 - z.re).ceil() as i64;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..m {
        acc += (z + k as f64).ln();
    }
    Ok(log_gamma(z + m as f64)? - acc)
}

/// Γ(z) with exact zero of 1/Γ handled by the caller.
pub fn gamma(z: C64) -> Result<C64> {
    Ok(log_gamma(z)?.exp())
}

/// Value of a log-space factor: either exactly zero or exp(log).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogValue {
    Zero,
    Log(C64),
}

impl LogValue {
    pub fn value(&self) -> C64 {
        match self {
            LogValue::Zero => C64::new(0.0, 0.0),
            LogValue::Log(l) => l.exp(),
        }
    }
}

fn factorial_ratio_ln(k: i64, j: i64) -> f64 {
    // ln(k!/j!)
    let (lo, hi, sgn) = if k >= j { (j, k, 1.0) } else { (k, j, -1.0) };
    let mut s = 0.0;
    for i in (lo + 1)..=hi {
        s += (i as f64).ln();
    }
    sgn * s
}

/// ln a(α) with exact zeros and the finite double-pole limit.
pub fn log_a_factor(idx: &BiIndex) -> Result<LogValue> {
    let al = idx.alpha();
    let one_minus_ab = 1.0 - idx.alpha_bar();
    let num_pole = nonpositive_integer(one_minus_ab, POLE_TOL);
    let den_pole = nonpositive_integer(al, POLE_TOL);
    match (num_pole, den_pole) {
        (None, None) => Ok(LogValue::Log(log_gamma(one_minus_ab)? - log_gamma(al)?)),
        (None, Some(_)) => Ok(LogValue::Zero),
        (Some(_), None) => Err(Error::Pole(format!(
            "a-factor singular at (α, ᾱ) = ({}, {})",
            al,
            idx.alpha_bar()
        ))),
        (Some(j), Some(k)) => {
            // Γ(−j−ε)/Γ(−k+ε) → (−1)^{j+k+1} k!/j!
            let mut l = C64::new(factorial_ratio_ln(k, j), 0.0);
            if (j + k + 1).rem_euclid(2) == 1 {
                l.im = PI;
            }
            Ok(LogValue::Log(l))
        }
    }
}

/// a(α) = Γ(1−ᾱ)/Γ(α).
pub fn a_factor(idx: &BiIndex) -> Result<C64> {
    Ok(log_a_factor(idx)?.value())
}

/// Product of a-factors accumulated in log space.
pub fn a_product(indices: &[BiIndex]) -> Result<C64> {
    let mut acc = C64::new(0.0, 0.0);
    let mut zero = false;
    for (i, idx) in indices.iter().enumerate() {
        match log_a_factor(idx).map_err(|e| match e {
            Error::Pole(m) => Error::Pole(format!("factor {i}: {m}")),
            other => other,
        })? {
            LogValue::Zero => zero = true,
            LogValue::Log(l) => acc += l,
        }
    }
    if zero {
        return Ok(C64::new(0.0, 0.0));
    }
    acc.im = acc.im.rem_euclid(2.0 * PI);
    Ok(acc.exp())
}

/// Γ(α,ᾱ) = i^{α−ᾱ} Γ(α)/Γ(1−ᾱ).
pub fn complex_field_gamma(idx: &BiIndex) -> Result<C64> {
    let al = idx.alpha();
    let top = nonpositive_integer(al, POLE_TOL);
    let bottom = nonpositive_integer(1.0 - idx.alpha_bar(), POLE_TOL);
    match (top, bottom) {
        (Some(_), None) => Err(Error::Pole(format!("Γ(α) pole at α = {al}"))),
        (None, Some(_)) => Ok(C64::new(0.0, 0.0)),
        (None, None) => match log_a_factor(idx)? {
            LogValue::Log(l) => Ok(i_pow(idx.gap()) * (-l).exp()),
            LogValue::Zero => Err(Error::Pole(format!("Γ(α) pole at α = {al}"))),
        },
        (Some(_), Some(_)) => Ok(i_pow(idx.gap()) / a_factor(idx)?),
    }
}

/// [z]^α = z^α z̄^ᾱ = |z|^{α+ᾱ} e^{i n arg z}.
pub fn power_bi(z: C64, idx: &BiIndex) -> Result<C64> {
    let s = idx.sum();
    if z.re == 0.0 && z.im == 0.0 {
        if s.re > 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        return Err(Error::Singularity(format!(
            "[0]^α with Re(α+ᾱ) = {} ≤ 0",
            s.re
        )));
    }
    let lr = z.norm().ln();
    let theta = z.im.atan2(z.re);
    Ok((s * lr + C64::new(0.0, idx.gap() as f64 * theta)).exp())
}

/// ln [z]^α (real part exact, imaginary part not reduced).
pub fn log_power_bi(z: C64, idx: &BiIndex) -> Result<C64> {
    if z.re == 0.0 && z.im == 0.0 {
        return Err(Error::Singularity("log [0]^α".into()));
    }
    let lr = z.norm().ln();
    let theta = z.im.atan2(z.re);
    Ok(idx.sum() * lr + C64::new(0.0, idx.gap() as f64 * theta))
}

fn hankel_j01(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut k = 1;
    let eightx = 8.0 * x;
    loop {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * eightx);
        if k % 2 == 1 {
            q += if (k / 2) % 2 == 0 { term } else { -term };
        } else {
            p += if (k / 2) % 2 == 0 { term } else { -term };
        }
        if term.abs() < 1e-17 || k > 200 {
            break;
        }
        k += 1;
    }
    let chi = x - (nu / 2.0 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// J_0(x), …, J_nmax(x) for x ≥ 0.
pub fn bessel_j_seq(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < 1e-6 {
        // J_n(x) = (x/2)^n/n! (1 − (x/2)²/(n+1) + …)
        let h = 0.5 * x;
        let mut lead = 1.0;
        for (n, v) in out.iter_mut().enumerate() {
            if n > 0 {
                lead *= h / n as f64;
            }
            *v = lead * (1.0 - h * h / (n + 1) as f64);
        }
        return out;
    }
    if x >= 25.0 && x >= nmax as f64 {
        out[0] = hankel_j01(0.0, x);
        if nmax >= 1 {
            out[1] = hankel_j01(1.0, x);
        }
        for k in 1..nmax {
            out[k + 1] = 2.0 * k as f64 / x * out[k] - out[k - 1];
        }
        return out;
    }
    let top = (nmax as f64).max(x);
    let mut m = (top + 20.0 + (40.0 * top).sqrt()) as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let mut jp1 = 0.0f64;
    let mut j = 1e-300f64;
    let mut norm = 0.0f64;
    for k in (1..=m).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        // j now holds J_{k-1}
        let idx = k - 1;
        if idx <= nmax {
            out[idx] = j;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += j;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// J_n(x), any integer n, x ≥ 0.
pub fn bessel_j(n: i64, x: f64) -> f64 {
    let m = n.unsigned_abs() as usize;
    let v = bessel_j_seq(m, x)[m];
    if n < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

fn bessel_j_deriv(n: i64, x: f64) -> f64 {
    0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
}

fn refine_zero(n: i64, mut x: f64) -> f64 {
    for _ in 0..60 {
        let f = bessel_j(n, x);
        let d = bessel_j_deriv(n, x);
        let mut step = f / d;
        if step.abs() > 1.0 {
            step = step.signum();
        }
        x -= step;
        if step.abs() < 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// First `count` positive zeros of J_n.
pub fn bessel_j_zeros(n: i64, count: usize) -> Vec<f64> {
    let m = n.abs();
    let mut out: Vec<f64> = Vec::with_capacity(count);
    for k in 1..=count {
        let guess = if k == 1 {
            if m == 0 {
                2.404_825_557_695_773
            } else {
                let mf = m as f64;
                mf + 1.855_757_1 * mf.cbrt() + 1.033_150 / mf.cbrt()
            }
        } else {
            let b = (k as f64 + m as f64 / 2.0 - 0.25) * PI;
            let mu = 4.0 * (m * m) as f64;
            let mcm = b - (mu - 1.0) / (8.0 * b);
            let prev = out[k - 2];
            if mcm > prev + 2.0 {
                mcm
            } else {
                prev + PI
            }
        };
        let mut z = refine_zero(m, guess);
        if let Some(&prev) = out.last() {
            if z <= prev + 1.0 {
                z = refine_zero(m, prev + PI);
            }
        }
        out.push(z);
    }
    out
}
