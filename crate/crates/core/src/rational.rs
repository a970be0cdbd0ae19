//! Gaussian rationals: exact elements of ℚ + ℚ·i.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;
use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

pub type Q = Rational64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QC {
    pub re: Q,
    pub im: Q,
}

impl QC {
    pub const fn new(re: Q, im: Q) -> Self {
        QC { re, im }
    }

    pub fn zero() -> Self {
        QC {
            re: Q::zero(),
            im: Q::zero(),
        }
    }

    pub fn one() -> Self {
        Self::int(1)
    }

    pub fn i() -> Self {
        QC {
            re: Q::zero(),
            im: Q::one(),
        }
    }

    pub fn int(n: i64) -> Self {
        QC {
            re: Q::from_integer(n),
            im: Q::zero(),
        }
    }

    pub fn frac(n: i64, d: i64) -> Self {
        QC {
            re: Q::new(n, d),
            im: Q::zero(),
        }
    }

    pub fn imag(n: i64, d: i64) -> Self {
        QC {
            re: Q::zero(),
            im: Q::new(n, d),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        QC {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn to_c64(&self) -> C64 {
        C64::new(q_to_f64(&self.re), q_to_f64(&self.im))
    }

    /// Some(n) when the value is the real integer n.
    pub fn as_integer(&self) -> Option<i64> {
        if self.im.is_zero() && self.re.is_integer() {
            Some(self.re.to_integer())
        } else {
            None
        }
    }

    /// Positive in the lexicographic sense: re > 0, or re = 0 and im > 0.
    pub fn is_positive(&self) -> bool {
        self.re.is_positive() || (self.re.is_zero() && self.im.is_positive())
    }

    /// Real part reduced into [0, m).
    pub fn reduce_re_mod(&self, m: i64) -> Self {
        let mq = Q::from_integer(m);
        let k = (self.re / mq).floor();
        QC {
            re: self.re - k * mq,
            im: self.im,
        }
    }

    pub fn recip(&self) -> Self {
        let d = self.re * self.re + self.im * self.im;
        QC {
            re: self.re / d,
            im: -self.im / d,
        }
    }
}

pub fn q_to_f64(q: &Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Floor of a rational as an integer.
pub fn q_floor(q: &Q) -> i64 {
    q.numer().div_floor(q.denom())
}

impl Ord for QC {
    fn cmp(&self, other: &Self) -> Ordering {
        self.re.cmp(&other.re).then(self.im.cmp(&other.im))
    }
}

impl PartialOrd for QC {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for QC {
    type Output = QC;
    fn add(self, o: QC) -> QC {
        QC {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
}

impl Sub for QC {
    type Output = QC;
    fn sub(self, o: QC) -> QC {
        QC {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
}

impl Neg for QC {
    type Output = QC;
    fn neg(self) -> QC {
        QC {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl Mul for QC {
    type Output = QC;
    fn mul(self, o: QC) -> QC {
        QC {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl fmt::Display for QC {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => write!(f, "{}", self.re),
            (true, false) => write!(f, "{}i", self.im),
            _ => write!(
                f,
                "({}{}{}i)",
                self.re,
                if self.im.is_negative() { "" } else { "+" },
                self.im
            ),
        }
    }
}
