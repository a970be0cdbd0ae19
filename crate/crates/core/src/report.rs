//! Verification reports shared by every suite.

use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for Complex {
    fn from(z: C64) -> Self {
        Complex { re: z.re, im: z.im }
    }
}

impl From<Complex> for C64 {
    fn from(z: Complex) -> Self {
        C64::new(z.re, z.im)
    }
}

/// Outcome of one identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub case_id: String,
    pub identity: String,
    pub anchor: String,
    pub lhs: Option<Complex>,
    pub rhs: Option<Complex>,
    pub rel_dev: Option<f64>,
    pub error_estimate: Option<f64>,
    pub target: f64,
    pub converged: bool,
    pub pass: bool,
    pub evaluations: u64,
    pub wall_ms: u64,
    /// Error kind when the check failed by raising.
    pub error: Option<String>,
    pub message: Option<String>,
    pub details: Value,
    pub config: Value,
}

impl Report {
    pub fn new(identity: &str, anchor: &str, target: f64) -> Self {
        Report {
            case_id: String::new(),
            identity: identity.into(),
            anchor: anchor.into(),
            lhs: None,
            rhs: None,
            rel_dev: None,
            error_estimate: None,
            target,
            converged: false,
            pass: false,
            evaluations: 0,
            wall_ms: 0,
            error: None,
            message: None,
            details: Value::Null,
            config: Value::Null,
        }
    }

    /// Fills in a comparison; pass ⇔ rel_dev ≤ target and converged.
    pub fn compare(mut self, lhs: C64, rhs: C64, err: f64, converged: bool) -> Self {
        let dev = rel_dev(lhs, rhs);
        self.lhs = Some(lhs.into());
        self.rhs = Some(rhs.into());
        self.rel_dev = Some(dev);
        self.error_estimate = Some(err);
        self.converged = converged;
        self.pass = converged && dev <= self.target;
        self
    }

    /// Comparison with an explicit deviation (for cases with rhs = 0).
    pub fn compare_with_dev(
        mut self,
        lhs: C64,
        rhs: C64,
        dev: f64,
        err: f64,
        converged: bool,
    ) -> Self {
        self.lhs = Some(lhs.into());
        self.rhs = Some(rhs.into());
        self.rel_dev = Some(dev);
        self.error_estimate = Some(err);
        self.converged = converged;
        self.pass = converged && dev <= self.target;
        self
    }

    pub fn failed(mut self, e: &Error) -> Self {
        self.error = Some(e.kind().into());
        self.message = Some(e.to_string());
        self.pass = false;
        self
    }

    /// Marks an expected failure as a pass when the error kind matches.
    pub fn expect_error(mut self, got: std::result::Result<(), Error>, kind: &str) -> Self {
        self.converged = true;
        match got {
            Ok(()) => {
                self.message = Some(format!("expected {kind}, got success"));
                self.pass = false;
            }
            Err(e) => {
                self.pass = e.kind() == kind;
                self.error = Some(e.kind().into());
                self.message = Some(e.to_string());
            }
        }
        self
    }

    pub fn with_evals(mut self, n: u64) -> Self {
        self.evaluations = n;
        self
    }

    pub fn with_details(mut self, v: Value) -> Self {
        self.details = v;
        self
    }

    pub fn with_case(mut self, id: &str) -> Self {
        self.case_id = id.into();
        self
    }

    pub fn timed(mut self, t0: Instant) -> Self {
        self.wall_ms = t0.elapsed().as_millis() as u64;
        self
    }
}

pub fn rel_dev(lhs: C64, rhs: C64) -> f64 {
    let s = rhs.norm();
    if s == 0.0 {
        lhs.norm()
    } else {
        (lhs - rhs).norm() / s
    }
}
