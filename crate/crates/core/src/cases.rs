//! Case files: declarative verification cases dispatched to the suite drivers.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diagrams::{
    eval_diagram, rewrite_star_triangle, verify_chain, verify_cross, verify_fourier, verify_star,
    Diagram, RelationCheck,
};
use crate::error::{Error, Result};
use crate::mellinbarnes::{
    verify_completeness_resolution, verify_gustafson, verify_mb_propagator,
    verify_mb_star_triangle, MbOptions,
};
use crate::report::Report;
use crate::sov::{
    check_a_eigen, check_b_eigen, check_unitarity, matrix_element_ba, matrix_element_t,
    t_regularization_sweep, ChainConfig, MatrixElement,
};
use crate::specfun::{a_factor, sign_pow, BiIndex, SeparatedPoint, Spin};
use crate::symalg::{AffineExpr, ParamValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Specfun,
    Relations,
    Sov,
    Gustafson,
    Mb,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Specfun,
        Suite::Relations,
        Suite::Sov,
        Suite::Gustafson,
        Suite::Mb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Specfun => "specfun",
            Suite::Relations => "relations",
            Suite::Sov => "sov",
            Suite::Gustafson => "gustafson",
            Suite::Mb => "mb",
        }
    }

    pub fn parse(s: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Chain,
    Star,
    Cross,
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "identity", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// The four a-function properties at random pole-free bi-indices.
    AProperties {
        points: usize,
        seed: u64,
    },
    /// Random parameter draws inside the convergence window of a relation.
    RelationDraws {
        relation: Relation,
        draws: usize,
        seed: u64,
    },
    Chain {
        z1: C64,
        z2: C64,
        alpha: BiIndex,
        beta: BiIndex,
    },
    /// γ defaults to 2 − α − β.
    Star {
        z: [C64; 3],
        alpha: BiIndex,
        beta: BiIndex,
        #[serde(default)]
        gamma: Option<BiIndex>,
    },
    Cross {
        z: [C64; 4],
        alpha: BiIndex,
        beta: BiIndex,
        alpha_p: BiIndex,
    },
    Fourier {
        alpha: BiIndex,
        p: C64,
    },
    AEigen {
        chain: ChainConfig,
        x: Vec<SeparatedPoint>,
        z: Vec<C64>,
        u: Vec<C64>,
        #[serde(default)]
        h: Option<f64>,
        #[serde(default)]
        quad_tol: Option<f64>,
    },
    BEigen {
        chain: ChainConfig,
        p: C64,
        x: Vec<SeparatedPoint>,
        z: Vec<C64>,
        u: Vec<C64>,
        #[serde(default)]
        h: Option<f64>,
        #[serde(default)]
        quad_tol: Option<f64>,
    },
    /// With a ladder, the regularization is extrapolated to zero.
    MatrixT {
        chain: ChainConfig,
        x: Vec<SeparatedPoint>,
        xp: Vec<SeparatedPoint>,
        z0: C64,
        #[serde(default)]
        ladder: Option<Vec<f64>>,
        #[serde(default)]
        quad_tol: Option<f64>,
    },
    MatrixBa {
        chain: ChainConfig,
        p: C64,
        #[serde(default)]
        u: Vec<SeparatedPoint>,
        x: Vec<SeparatedPoint>,
        #[serde(default)]
        quad_tol: Option<f64>,
    },
    Unitarity {
        spin: Spin,
        g: [C64; 4],
        centers: [C64; 2],
        width: f64,
        #[serde(default)]
        quad_tol: Option<f64>,
    },
    Completeness {
        x: SeparatedPoint,
        xp: SeparatedPoint,
        window: f64,
    },
    Gustafson {
        x: Vec<SeparatedPoint>,
        xp: Vec<SeparatedPoint>,
        #[serde(default)]
        contour: MbOptions,
    },
    MbStarTriangle {
        betas: [BiIndex; 3],
        lambdas: [SeparatedPoint; 3],
        #[serde(default)]
        contour: MbOptions,
    },
    MbPropagator {
        beta: BiIndex,
        z: C64,
        w: C64,
        #[serde(default)]
        contour: MbOptions,
    },
    /// Mellin-Barnes and position-space star-triangle at α_i = 1 − β_i.
    MbStarCoherence {
        betas: [BiIndex; 3],
        lambdas: [SeparatedPoint; 3],
        z: [C64; 3],
        #[serde(default)]
        contour: MbOptions,
    },
}

impl Check {
    pub fn identity(&self) -> &'static str {
        match self {
            Check::AProperties { .. } => "a_properties",
            Check::RelationDraws { relation, .. } => match relation {
                Relation::Chain => "chain",
                Relation::Star => "star",
                Relation::Cross => "cross",
                Relation::Fourier => "fourier",
            },
            Check::Chain { .. } => "chain",
            Check::Star { .. } => "star",
            Check::Cross { .. } => "cross",
            Check::Fourier { .. } => "fourier",
            Check::AEigen { .. } => "a_eigen",
            Check::BEigen { .. } => "b_eigen",
            Check::MatrixT { .. } => "matrix_t",
            Check::MatrixBa { .. } => "matrix_ba",
            Check::Unitarity { .. } => "unitarity",
            Check::Completeness { .. } => "completeness",
            Check::Gustafson { .. } => "gustafson",
            Check::MbStarTriangle { .. } => "mb_star_triangle",
            Check::MbPropagator { .. } => "mb_propagator",
            Check::MbStarCoherence { .. } => "mb_star_coherence",
        }
    }

    pub fn anchor(&self) -> &'static str {
        match self.identity() {
            "a_properties" => "a-function properties",
            "chain" => "chain relation",
            "star" => "star-triangle relation",
            "cross" => "cross relation",
            "fourier" => "Fourier transform of the propagator",
            "a_eigen" => "A-operator eigenfunctions",
            "b_eigen" => "B-operator eigenfunctions",
            "matrix_t" => "matrix element of T",
            "matrix_ba" => "scalar product of B and A eigenfunctions",
            "unitarity" => "unitarity of the principal-series action",
            "completeness" => "power-function orthogonality 2π² normalization",
            "gustafson" => "complex Gustafson integral",
            "mb_star_triangle" => "Mellin-Barnes star-triangle relation",
            "mb_propagator" => "Mellin-Barnes propagator representation",
            _ => "Mellin-Barnes and position-space star-triangle coherence",
        }
    }

    pub fn suite(&self) -> Suite {
        match self {
            Check::AProperties { .. } => Suite::Specfun,
            Check::RelationDraws { .. }
            | Check::Chain { .. }
            | Check::Star { .. }
            | Check::Cross { .. }
            | Check::Fourier { .. } => Suite::Relations,
            Check::AEigen { .. }
            | Check::BEigen { .. }
            | Check::MatrixT { .. }
            | Check::MatrixBa { .. }
            | Check::Unitarity { .. } => Suite::Sov,
            Check::Gustafson { .. } => Suite::Gustafson,
            Check::Completeness { .. }
            | Check::MbStarTriangle { .. }
            | Check::MbPropagator { .. }
            | Check::MbStarCoherence { .. } => Suite::Mb,
        }
    }

    /// Chain length for `--N` filtering.
    pub fn chain_len(&self) -> Option<usize> {
        match self {
            Check::AEigen { chain, .. }
            | Check::BEigen { chain, .. }
            | Check::MatrixT { chain, .. }
            | Check::MatrixBa { chain, .. } => Some(chain.n),
            Check::Gustafson { x, .. } => Some(x.len()),
            _ => None,
        }
    }

    pub fn default_target(&self) -> f64 {
        match self {
            Check::AProperties { .. } => 1e-11,
            Check::Fourier { .. }
            | Check::RelationDraws {
                relation: Relation::Fourier,
                ..
            } => 1e-7,
            Check::Cross { .. }
            | Check::RelationDraws {
                relation: Relation::Cross,
                ..
            } => 1e-5,
            Check::Chain { .. } | Check::Star { .. } | Check::RelationDraws { .. } => 1e-6,
            Check::AEigen { chain, .. } | Check::BEigen { chain, .. } => {
                if chain.n == 1 {
                    1e-8
                } else {
                    1e-4
                }
            }
            Check::MatrixT { chain, ladder, .. } => match (chain.n, ladder) {
                (1, Some(_)) => 1e-5,
                (1, None) => 1e-6,
                _ => 1e-3,
            },
            Check::MatrixBa { .. } | Check::Unitarity { .. } => 1e-6,
            Check::Completeness { .. } => 1e-3,
            Check::Gustafson { x, .. } => {
                if x.len() >= 3 {
                    1e-2
                } else {
                    1e-4
                }
            }
            Check::MbStarTriangle { .. }
            | Check::MbPropagator { .. }
            | Check::MbStarCoherence { .. } => 1e-4,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |what: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parse(format!(
                    "field `{what}` must be a positive finite number"
                )))
            }
        };
        let finite = |what: &str, zs: &[C64]| {
            if zs.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                Ok(())
            } else {
                Err(Error::Parse(format!("field `{what}` must be finite")))
            }
        };
        let points = |what: &str, xs: &[SeparatedPoint]| {
            if xs
                .iter()
                .all(|x| x.nu.re.is_finite() && x.nu.im.is_finite())
            {
                Ok(())
            } else {
                Err(Error::Parse(format!("field `{what}` must be finite")))
            }
        };
        let opt = |what: &str, v: &Option<f64>| v.map_or(Ok(()), |v| positive(what, v));
        match self {
            Check::AProperties { points, .. } => {
                if *points == 0 || *points > 1_000_000 {
                    return Err(Error::Parse(
                        "field `points` must lie in 1..=1000000".into(),
                    ));
                }
            }
            Check::RelationDraws { draws, .. } => {
                if *draws == 0 || *draws > 1000 {
                    return Err(Error::Parse("field `draws` must lie in 1..=1000".into()));
                }
            }
            Check::Chain { z1, z2, .. } => finite("z", &[*z1, *z2])?,
            Check::Star { z, .. } => finite("z", z)?,
            Check::Cross { z, .. } => finite("z", z)?,
            Check::Fourier { p, .. } => finite("p", &[*p])?,
            Check::AEigen {
                chain,
                x,
                z,
                u,
                h,
                quad_tol,
            } => {
                chain
                    .validate()
                    .map_err(|e| Error::Parse(format!("field `chain`: {e}")))?;
                points("x", x)?;
                finite("z", z)?;
                finite("u", u)?;
                opt("h", h)?;
                opt("quad_tol", quad_tol)?;
            }
            Check::BEigen {
                chain,
                p,
                x,
                z,
                u,
                h,
                quad_tol,
            } => {
                chain
                    .validate()
                    .map_err(|e| Error::Parse(format!("field `chain`: {e}")))?;
                finite("p", &[*p])?;
                points("x", x)?;
                finite("z", z)?;
                finite("u", u)?;
                opt("h", h)?;
                opt("quad_tol", quad_tol)?;
            }
            Check::MatrixT {
                chain,
                x,
                xp,
                z0,
                ladder,
                quad_tol,
            } => {
                chain
                    .validate()
                    .map_err(|e| Error::Parse(format!("field `chain`: {e}")))?;
                points("x", x)?;
                points("xp", xp)?;
                finite("z0", &[*z0])?;
                if let Some(l) = ladder {
                    if l.is_empty() {
                        return Err(Error::Parse("field `ladder` must not be empty".into()));
                    }
                    for v in l {
                        positive("ladder", *v)?;
                    }
                }
                opt("quad_tol", quad_tol)?;
            }
            Check::MatrixBa {
                chain,
                p,
                u,
                x,
                quad_tol,
            } => {
                chain
                    .validate()
                    .map_err(|e| Error::Parse(format!("field `chain`: {e}")))?;
                finite("p", &[*p])?;
                points("u", u)?;
                points("x", x)?;
                opt("quad_tol", quad_tol)?;
            }
            Check::Unitarity {
                spin,
                g,
                centers,
                width,
                quad_tol,
            } => {
                if !spin.nu_s.is_finite() {
                    return Err(Error::Parse("field `spin` must be finite".into()));
                }
                finite("g", g)?;
                finite("centers", centers)?;
                positive("width", *width)?;
                opt("quad_tol", quad_tol)?;
            }
            Check::Completeness { x, xp, window } => {
                points("x", &[*x, *xp])?;
                positive("window", *window)?;
            }
            Check::Gustafson { x, xp, contour } => {
                points("x", x)?;
                points("xp", xp)?;
                validate_contour(contour)?;
            }
            Check::MbStarTriangle {
                lambdas, contour, ..
            } => {
                points("lambdas", lambdas)?;
                validate_contour(contour)?;
            }
            Check::MbPropagator { z, w, contour, .. } => {
                finite("z", &[*z, *w])?;
                validate_contour(contour)?;
            }
            Check::MbStarCoherence {
                lambdas,
                z,
                contour,
                ..
            } => {
                points("lambdas", lambdas)?;
                finite("z", z)?;
                validate_contour(contour)?;
            }
        }
        Ok(())
    }
}

fn validate_contour(c: &MbOptions) -> Result<()> {
    if c.n_max == 0 || c.n_max > 4096 {
        return Err(Error::Parse(
            "field `contour.n_max` must lie in 1..=4096".into(),
        ));
    }
    if !(c.nu_cutoff > 0.0 && c.nu_cutoff.is_finite()) {
        return Err(Error::Parse(
            "field `contour.nu_cutoff` must be a positive finite number".into(),
        ));
    }
    if c.rungs < 2 || c.rungs > 16 {
        return Err(Error::Parse(
            "field `contour.rungs` must lie in 2..=16".into(),
        ));
    }
    if c.gl_order < 2 || c.gl_order > 256 {
        return Err(Error::Parse(
            "field `contour.gl_order` must lie in 2..=256".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub id: String,
    #[serde(default)]
    pub target: Option<f64>,
    /// Error kind the case must raise to pass.
    #[serde(default)]
    pub expect_error: Option<String>,
    /// Excluded unless slow cases are requested.
    #[serde(default)]
    pub slow: bool,
    pub check: Check,
}

impl Case {
    /// Replaces random-draw cases by their concrete draws.
    pub fn expand(&self) -> Vec<Case> {
        match &self.check {
            Check::RelationDraws {
                relation,
                draws,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*draws)
                    .map(|k| Case {
                        id: format!("{}-{}", self.id, k + 1),
                        target: self.target,
                        expect_error: self.expect_error.clone(),
                        slow: self.slow,
                        check: draw_relation(*relation, k, &mut rng),
                    })
                    .collect()
            }
            _ => vec![self.clone()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub cases: Vec<Case>,
}

pub const ERROR_KINDS: [&str; 11] = [
    "PoleError",
    "SingularityError",
    "NonConvergence",
    "PlanError",
    "PatternError",
    "ConstraintError",
    "PoleOnContour",
    "TailDivergence",
    "StencilError",
    "InvalidInput",
    "ParseError",
];

impl CaseFile {
    /// Parses and validates; diagnostics name the line, column or field.
    pub fn from_json(s: &str) -> Result<CaseFile> {
        let f: CaseFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (k, c) in self.cases.iter().enumerate() {
            let at = |e: Error| match e {
                Error::Parse(m) => Error::Parse(format!("case {} (`{}`): {m}", k + 1, c.id)),
                e => e,
            };
            if c.id.is_empty() {
                return Err(at(Error::Parse("field `id` must not be empty".into())));
            }
            if !seen.insert(c.id.clone()) {
                return Err(at(Error::Parse(
                    "field `id` repeats an earlier case".into(),
                )));
            }
            if let Some(t) = c.target {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(at(Error::Parse(
                        "field `target` must be a positive finite number".into(),
                    )));
                }
            }
            if let Some(k) = &c.expect_error {
                if !ERROR_KINDS.contains(&k.as_str()) {
                    return Err(at(Error::Parse(format!(
                        "field `expect_error`: unknown error kind `{k}`"
                    ))));
                }
            }
            c.check.validate().map_err(at)?;
        }
        Ok(())
    }
}

/// Target resolution and resource limits applied to every case.
#[derive(Debug, Clone, Default)]
pub struct RunSettings {
    /// Overrides every other target.
    pub target: Option<f64>,
    /// Keyed by identity or suite name; identity wins.
    pub tolerances: BTreeMap<String, f64>,
    /// Evaluation cap per case.
    pub budget: Option<u64>,
}

impl RunSettings {
    pub fn target_for(&self, case: &Case) -> f64 {
        self.target
            .or_else(|| self.tolerances.get(case.check.identity()).copied())
            .or_else(|| self.tolerances.get(case.check.suite().name()).copied())
            .or(case.target)
            .unwrap_or_else(|| case.check.default_target())
    }

    fn contour(&self, c: &MbOptions) -> MbOptions {
        let mut c = *c;
        if let Some(b) = self.budget {
            c.max_evaluations = c.max_evaluations.min(b);
        }
        c
    }
}

/// Runs one concrete case; multi-point checks yield one report per point.
pub fn run_case(case: &Case, settings: &RunSettings) -> Vec<Report> {
    let target = settings.target_for(case);
    let check = &case.check;
    let config = json!({ "check": check, "target": target, "expect_error": case.expect_error, "budget": settings.budget });
    let t0 = Instant::now();
    let out = run_check(check, target, settings);
    let mut reports = match (out, &case.expect_error) {
        (Ok(rs), None) => rs,
        (Err(e), None) => vec![Report::new(check.identity(), check.anchor(), target).failed(&e)],
        (got, Some(kind)) => {
            let got = got.map(|_| ());
            vec![Report::new(check.identity(), check.anchor(), target).expect_error(got, kind)]
        }
    };
    let multi = reports.len() > 1;
    for (k, r) in reports.iter_mut().enumerate() {
        r.case_id = if multi {
            format!("{}/{}", case.id, k + 1)
        } else {
            case.id.clone()
        };
        r.config = config.clone();
        if r.wall_ms == 0 {
            r.wall_ms = t0.elapsed().as_millis() as u64;
        }
        if let Some(b) = settings.budget {
            if r.evaluations > b && case.expect_error.is_none() {
                r.pass = false;
                r.error = Some("NonConvergence".into());
                r.message = Some(format!(
                    "evaluation budget {b} exceeded ({} evaluations)",
                    r.evaluations
                ));
            }
        }
    }
    reports
}

fn relation_report(r: RelationCheck, anchor: &str, t0: Instant) -> Report {
    Report::new(&r.relation, anchor, r.target)
        .compare(
            r.lhs,
            r.rhs,
            r.lhs_error + r.rhs_error,
            r.rel_deviation.is_finite(),
        )
        .with_evals(r.evaluations)
        .timed(t0)
}

fn matrix_report(m: MatrixElement, check: &Check, target: f64, t0: Instant) -> Report {
    Report::new(check.identity(), check.anchor(), target)
        .compare(m.numeric, m.closed, m.error_estimate, m.converged)
        .with_evals(m.evaluations)
        .with_details(json!({ "method": m.method, "regularization": m.regularization }))
        .timed(t0)
}

fn run_check(check: &Check, target: f64, settings: &RunSettings) -> Result<Vec<Report>> {
    let t0 = Instant::now();
    let anchor = check.anchor();
    let id = check.identity();
    let one = |r: Report| Ok(vec![r]);
    match check {
        Check::AProperties { points, seed } => one(verify_a_properties(*points, *seed, target)?),
        Check::RelationDraws { .. } => Err(Error::Invalid(
            "random draws must be expanded before running".into(),
        )),
        Check::Chain {
            z1,
            z2,
            alpha,
            beta,
        } => one(relation_report(
            verify_chain(*z1, *z2, alpha, beta, target)?,
            anchor,
            t0,
        )),
        Check::Star {
            z,
            alpha,
            beta,
            gamma: None,
        } => one(relation_report(
            verify_star(*z, alpha, beta, target)?,
            anchor,
            t0,
        )),
        Check::Star {
            z,
            alpha,
            beta,
            gamma: Some(g),
        } => one(relation_report(
            star_explicit(*z, alpha, beta, g, target)?,
            anchor,
            t0,
        )),
        Check::Cross {
            z,
            alpha,
            beta,
            alpha_p,
        } => one(relation_report(
            verify_cross(*z, alpha, beta, alpha_p, target)?,
            anchor,
            t0,
        )),
        Check::Fourier { alpha, p } => one(relation_report(
            verify_fourier(alpha, *p, target)?,
            anchor,
            t0,
        )),
        Check::AEigen {
            chain,
            x,
            z,
            u,
            h,
            quad_tol,
        } => {
            let tol = quad_tol.unwrap_or(1e-11);
            u.iter()
                .map(|&u| {
                    let t0 = Instant::now();
                    let r = check_a_eigen(chain, x, z, u, *h, tol)?;
                    Ok(Report::new(id, anchor, target)
                        .compare_with_dev(r.lhs, r.rhs, r.rel_residual, 0.0, true)
                        .with_details(json!({ "u": u, "h": r.h }))
                        .timed(t0))
                })
                .collect()
        }
        Check::BEigen {
            chain,
            p,
            x,
            z,
            u,
            h,
            quad_tol,
        } => {
            let tol = quad_tol.unwrap_or(1e-11);
            u.iter()
                .map(|&u| {
                    let t0 = Instant::now();
                    let r = check_b_eigen(chain, *p, x, z, u, *h, tol)?;
                    Ok(Report::new(id, anchor, target)
                        .compare_with_dev(r.lhs, r.rhs, r.rel_residual, 0.0, true)
                        .with_details(json!({ "u": u, "h": r.h }))
                        .timed(t0))
                })
                .collect()
        }
        Check::MatrixT {
            chain,
            x,
            xp,
            z0,
            ladder: None,
            quad_tol,
        } => {
            let m = matrix_element_t(chain, x, xp, *z0, quad_tol.unwrap_or(target * 0.1))?;
            one(matrix_report(m, check, target, t0))
        }
        Check::MatrixT {
            chain,
            x,
            xp,
            z0,
            ladder: Some(l),
            quad_tol,
        } => {
            let sw =
                t_regularization_sweep(chain, x, xp, *z0, l, quad_tol.unwrap_or(target * 1e-4))?;
            let err = sw.rows.last().map_or(0.0, |r| r.rel_dev * r.numeric.norm());
            one(Report::new(id, anchor, target)
                .compare(sw.extrapolated, sw.closed_limit, err, true)
                .with_details(json!({ "method": "regularization extrapolation", "rows": sw.rows }))
                .timed(t0))
        }
        Check::MatrixBa {
            chain,
            p,
            u,
            x,
            quad_tol,
        } => {
            let m = matrix_element_ba(chain, *p, u, x, quad_tol.unwrap_or(target * 1e-2))?;
            one(matrix_report(m, check, target, t0))
        }
        Check::Unitarity {
            spin,
            g,
            centers,
            width,
            quad_tol,
        } => {
            let r = check_unitarity(spin, g, *centers, *width, quad_tol.unwrap_or(1e-9))?;
            one(Report::new(id, anchor, target)
                .compare(r.after, r.before, 0.0, true)
                .timed(t0))
        }
        Check::Completeness { x, xp, window } => {
            one(verify_completeness_resolution(x, xp, *window, target)?)
        }
        Check::Gustafson { x, xp, contour } => {
            one(verify_gustafson(x, xp, &settings.contour(contour), target)?)
        }
        Check::MbStarTriangle {
            betas,
            lambdas,
            contour,
        } => one(verify_mb_star_triangle(
            betas,
            lambdas,
            &settings.contour(contour),
            target,
        )?),
        Check::MbPropagator {
            beta,
            z,
            w,
            contour,
        } => one(verify_mb_propagator(
            beta,
            *z,
            *w,
            &settings.contour(contour),
            target,
        )?),
        Check::MbStarCoherence {
            betas,
            lambdas,
            z,
            contour,
        } => {
            let mb = verify_mb_star_triangle(betas, lambdas, &settings.contour(contour), target)?;
            let c1 = C64::new(1.0, 0.0);
            let (a, b) = (betas[0].neg().shift(c1), betas[1].neg().shift(c1));
            let pos = verify_star(*z, &a, &b, target.min(1e-6))?;
            let dev = mb.rel_dev.unwrap_or(f64::INFINITY).max(pos.rel_deviation);
            let lhs: C64 = mb.lhs.map(Into::into).unwrap_or_default();
            let rhs: C64 = mb.rhs.map(Into::into).unwrap_or_default();
            let err = mb.error_estimate.unwrap_or(0.0) / rhs.norm().max(1e-300)
                + pos.lhs_error / pos.rhs.norm();
            let mut r = Report::new(id, anchor, target)
                .compare_with_dev(lhs, rhs, dev, err, mb.converged)
                .with_evals(mb.evaluations + pos.evaluations)
                .with_details(json!({
                    "mb_rel_dev": mb.rel_dev,
                    "position_rel_dev": pos.rel_deviation,
                    "position_lhs": pos.lhs,
                    "position_rhs": pos.rhs,
                }))
                .timed(t0);
            r.pass = r.pass && mb.pass && pos.pass;
            one(r)
        }
    }
}

fn star_explicit(
    z: [C64; 3],
    alpha: &BiIndex,
    beta: &BiIndex,
    gamma: &BiIndex,
    target: f64,
) -> Result<RelationCheck> {
    let d = Diagram::new()
        .point("z1", z[0])
        .point("z2", z[1])
        .point("z3", z[2])
        .vertex("w")
        .edge("w", "z1", AffineExpr::param("a"))
        .edge("w", "z2", AffineExpr::param("b"))
        .edge("w", "z3", AffineExpr::param("g"))
        .param("a", ParamValue::index(alpha))
        .param("b", ParamValue::index(beta))
        .param("g", ParamValue::index(gamma));
    let rhs = eval_diagram(&rewrite_star_triangle(&d, "w")?, target)?;
    let lhs = eval_diagram(&d, target * 0.01)?;
    Ok(RelationCheck::new("star", &lhs, &rhs, target))
}

fn relative(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn far_from_poles(idx: &BiIndex) -> bool {
    let a = idx.alpha();
    let ab = idx.alpha_bar();
    [a, ab, 1.0 - a, 1.0 - ab, 1.0 + a, 1.0 + ab]
        .iter()
        .all(|z| (z - C64::new(z.re.round(), 0.0)).norm() > 1e-3)
}

/// Checks a(α)a(1−ᾱ) = 1, a(1+α) = −a(α)/(αᾱ), a(α)a(1−α) = (−1)^{[α]} and
/// a(α) = (−1)^{[α]} a(ᾱ) at random pole-free bi-indices.
pub fn verify_a_properties(points: usize, seed: u64, target: f64) -> Result<Report> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    let mut worst_pair = (C64::new(1.0, 0.0), C64::new(1.0, 0.0), 0.0);
    let mut drawn = 0;
    while drawn < points {
        let idx = BiIndex::with_gap(
            C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            rng.gen_range(-3..=3),
        );
        if !far_from_poles(&idx) {
            continue;
        }
        drawn += 1;
        let a = a_factor(&idx)?;
        let sign = C64::new(sign_pow(idx.gap()), 0.0);
        let pairs = [
            (a * a_factor(&idx.reflect())?, C64::new(1.0, 0.0)),
            (
                a_factor(&idx.shift(C64::new(1.0, 0.0)))?,
                -a / (idx.alpha() * idx.alpha_bar()),
            ),
            (
                a * a_factor(&BiIndex::with_gap(1.0 - idx.alpha(), -idx.gap()))?,
                sign,
            ),
            (a, sign * a_factor(&idx.swap())?),
        ];
        for (k, (l, r)) in pairs.into_iter().enumerate() {
            let d = relative(l, r);
            if !(d <= worst[k]) {
                worst[k] = if d.is_nan() { f64::INFINITY } else { d };
            }
            if !(d <= worst_pair.2) {
                worst_pair = (l, r, if d.is_nan() { f64::INFINITY } else { d });
            }
        }
    }
    Ok(Report::new("a_properties", "a-function properties", target)
        .compare_with_dev(worst_pair.0, worst_pair.1, worst_pair.2, 0.0, true)
        .with_evals(4 * points as u64)
        .with_details(json!({
            "points": points,
            "seed": seed,
            "reflection": worst[0],
            "shift": worst[1],
            "complement": worst[2],
            "conjugation": worst[3],
        }))
        .timed(t0))
}

fn draw_point(rng: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(
        rng.gen_range(0.2..1.0),
        rng.gen_range(0.0..std::f64::consts::TAU),
    )
}

fn draw_distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    loop {
        let z: Vec<C64> = (0..n).map(|_| draw_point(rng)).collect();
        let ok = (0..n).all(|i| (i + 1..n).all(|j| (z[i] - z[j]).norm() > 0.4));
        if ok {
            return z;
        }
    }
}

/// Index with Re(α + ᾱ) = σ, integer gap n and a small imaginary part.
fn index_with_sum(sigma: f64, n: i64, im: f64) -> BiIndex {
    BiIndex::with_gap(C64::new((sigma + n as f64) / 2.0, im), n)
}

/// Parameters inside the window where every integral converges absolutely
/// (or, for the Fourier transform, conditionally).
fn draw_relation(relation: Relation, k: usize, rng: &mut ChaCha8Rng) -> Check {
    let mut im = || rng.gen_range(-0.2..0.2);
    let (i1, i2, i3) = (im(), im(), im());
    match relation {
        Relation::Chain => {
            let z = draw_distinct(rng, 2);
            let alpha = index_with_sum(rng.gen_range(1.15..1.6), rng.gen_range(-1..=1), i1);
            let beta = index_with_sum(rng.gen_range(1.15..1.6), rng.gen_range(-1..=1), i2);
            Check::Chain {
                z1: z[0],
                z2: z[1],
                alpha,
                beta,
            }
        }
        Relation::Star => {
            let z = draw_distinct(rng, 3);
            let alpha = index_with_sum(rng.gen_range(1.1..1.5), rng.gen_range(-1..=1), i1);
            let beta = index_with_sum(rng.gen_range(1.1..1.5), rng.gen_range(-1..=1), i2);
            Check::Star {
                z: [z[0], z[1], z[2]],
                alpha,
                beta,
                gamma: None,
            }
        }
        Relation::Cross => {
            let z = draw_distinct(rng, 4);
            let alpha = index_with_sum(rng.gen_range(0.8..1.2), 0, i1);
            let beta = index_with_sum(rng.gen_range(0.8..1.2), 0, i2);
            let alpha_p = index_with_sum(rng.gen_range(0.9..1.3), 0, i3);
            Check::Cross {
                z: [z[0], z[1], z[2], z[3]],
                alpha,
                beta,
                alpha_p,
            }
        }
        Relation::Fourier => {
            let n = (k % 5) as i64 - 2;
            let alpha = index_with_sum(rng.gen_range(0.8..1.6), n, i1);
            let p = C64::from_polar(
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            );
            Check::Fourier { alpha, p }
        }
    }
}

/// Cases of one suite, expanded and filtered.
pub fn select(
    cases: &[Case],
    suites: &[Suite],
    n: Option<usize>,
    which: Option<&str>,
    slow: bool,
) -> Vec<Case> {
    cases
        .iter()
        .filter(|c| suites.contains(&c.check.suite()))
        .filter(|c| slow || !c.slow)
        .filter(|c| n.map_or(true, |n| c.check.chain_len() == Some(n)))
        .filter(|c| which.map_or(true, |w| c.check.identity() == w))
        .flat_map(Case::expand)
        .collect()
}

/// Identity names accepted by `--which`.
pub const IDENTITIES: [&str; 15] = [
    "a_properties",
    "chain",
    "star",
    "cross",
    "fourier",
    "a_eigen",
    "b_eigen",
    "matrix_t",
    "matrix_ba",
    "unitarity",
    "completeness",
    "gustafson",
    "mb_star_triangle",
    "mb_propagator",
    "mb_star_coherence",
];
