//! Verification harness behind the `sl2c` binary: configuration, case
//! loading, suite execution, reports and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sl2c::cases::{run_case, select, Case, CaseFile, RunSettings, Suite, IDENTITIES};
use sl2c::mellinbarnes::{verify_gustafson, MbOptions};
use sl2c::report::Report;
use sl2c::sov::{t_regularization_sweep, ChainConfig};
use sl2c::specfun::SeparatedPoint;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Environment variable overriding the evaluation budget.
pub const BUDGET_ENV: &str = "SL2C_BUDGET";

/// Error kinds that indicate an ill-posed case rather than a numerical failure.
pub const CONFIG_ERROR_KINDS: [&str; 4] = [
    "ConstraintError",
    "InvalidInput",
    "ParseError",
    "PatternError",
];

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

const DEFAULT_CASES: [(&str, &str); 5] = [
    ("specfun", include_str!("../cases/specfun.json")),
    ("relations", include_str!("../cases/relations.json")),
    ("sov", include_str!("../cases/sov.json")),
    ("gustafson", include_str!("../cases/gustafson.json")),
    ("mb", include_str!("../cases/mb.json")),
];

/// Harness error carrying its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(m: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: m.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<sl2c::Error> for CliError {
    fn from(e: sl2c::Error) -> Self {
        CliError::config(e.to_string())
    }
}

/// Run configuration, read from TOML or JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Evaluation cap per case.
    pub budget: Option<u64>,
    /// Worker threads running cases concurrently.
    pub workers: Option<usize>,
    /// Target overrides keyed by suite or identity name.
    pub tolerances: BTreeMap<String, f64>,
}

impl Config {
    pub fn from_toml(s: &str) -> Result<Config, CliError> {
        let c: Config = toml::from_str(s).map_err(|e| CliError::config(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(s: &str) -> Result<Config, CliError> {
        let c: Config =
            serde_json::from_str(s).map_err(|e| CliError::config(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = read(path)?;
        if is_toml(path) {
            Config::from_toml(&text)
        } else {
            Config::from_json(&text)
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.budget == Some(0) {
            return Err(CliError::config("config: field `budget` must be positive"));
        }
        if self.workers == Some(0) {
            return Err(CliError::config("config: field `workers` must be positive"));
        }
        for (k, v) in &self.tolerances {
            let known = IDENTITIES.contains(&k.as_str()) || Suite::parse(k).is_ok();
            if !known {
                return Err(CliError::config(format!(
                    "config: field `tolerances.{k}` names no suite or identity"
                )));
            }
            if !(*v > 0.0 && v.is_finite()) {
                return Err(CliError::config(format!(
                    "config: field `tolerances.{k}` must be a positive finite number"
                )));
            }
        }
        Ok(())
    }

    /// Budget after the environment override.
    pub fn effective_budget(&self, env: Option<&str>) -> Result<Option<u64>, CliError> {
        match env {
            Some(v) => match v.trim().parse::<u64>() {
                Ok(b) if b > 0 => Ok(Some(b)),
                _ => Err(CliError::config(format!(
                    "{BUDGET_ENV}: `{v}` is not a positive integer"
                ))),
            },
            None => Ok(self.budget),
        }
    }
}

fn is_toml(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("toml")
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Parses a case file, prefixing diagnostics with its path.
pub fn load_case_file(path: &Path) -> Result<CaseFile, CliError> {
    let text = read(path)?;
    CaseFile::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Shipped cases of the given suites.
pub fn default_cases(suites: &[Suite]) -> Vec<Case> {
    DEFAULT_CASES
        .iter()
        .filter(|(name, _)| suites.iter().any(|s| s.name() == *name))
        .flat_map(|(name, text)| {
            CaseFile::from_json(text)
                .unwrap_or_else(|e| panic!("shipped case file {name}: {e}"))
                .cases
        })
        .collect()
}

pub fn parse_suites(s: &str) -> Result<Vec<Suite>, CliError> {
    if s == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    Suite::parse(s).map(|x| vec![x]).map_err(|_| {
        CliError::config(format!(
            "unknown suite `{s}` (expected specfun, relations, sov, gustafson, mb or all)"
        ))
    })
}

#[derive(Debug, Clone, Default)]
pub struct VerifyArgs {
    pub suite: String,
    pub case: Option<PathBuf>,
    pub target: Option<f64>,
    pub budget: Option<u64>,
    pub report: Option<PathBuf>,
    pub no_timestamps: bool,
    pub n: Option<usize>,
    pub which: Option<String>,
    pub config: Option<PathBuf>,
    pub slow: bool,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub reports: Vec<Report>,
    pub code: i32,
    pub summary: String,
}

/// Runs the selected cases; the exit code is 0 when all pass, 2 when any
/// case is ill-posed and 1 otherwise.
pub fn verify(args: &VerifyArgs, env_budget: Option<&str>) -> Result<VerifyOutcome, CliError> {
    let suites = parse_suites(&args.suite)?;
    let config = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(t) = args.target {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::config(
                "--target must be a positive finite number",
            ));
        }
    }
    if let Some(w) = &args.which {
        if !IDENTITIES.contains(&w.as_str()) {
            return Err(CliError::config(format!(
                "--which: unknown identity `{w}` (expected one of {})",
                IDENTITIES.join(", ")
            )));
        }
    }
    let budget = match args.budget {
        Some(0) => return Err(CliError::config("--budget must be positive")),
        Some(b) => Some(b),
        None => config.effective_budget(env_budget)?,
    };
    let all = match &args.case {
        Some(p) => load_case_file(p)?.cases,
        None => default_cases(&suites),
    };
    let cases = select(
        &all,
        &suites,
        args.n,
        args.which.as_deref(),
        args.slow || args.case.is_some(),
    );
    if cases.is_empty() {
        return Err(CliError::config(format!(
            "no cases selected for suite `{}`",
            args.suite
        )));
    }
    let settings = RunSettings {
        target: args.target,
        tolerances: config.tolerances.clone(),
        budget,
    };
    let workers = args.workers.or(config.workers).unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    let mut reports: Vec<Report> = pool
        .install(|| {
            cases
                .par_iter()
                .map(|c| run_case(c, &settings))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
    if args.no_timestamps {
        for r in &mut reports {
            r.wall_ms = 0;
        }
    }
    if let Some(path) = &args.report {
        write_report(path, &reports)?;
    }
    let code = exit_code(&reports);
    Ok(VerifyOutcome {
        summary: summary_table(&reports),
        reports,
        code,
    })
}

pub fn exit_code(reports: &[Report]) -> i32 {
    let failed: Vec<&Report> = reports.iter().filter(|r| !r.pass).collect();
    if failed.is_empty() {
        EXIT_OK
    } else if failed.iter().any(|r| {
        r.error
            .as_deref()
            .is_some_and(|k| CONFIG_ERROR_KINDS.contains(&k))
    }) {
        EXIT_CONFIG
    } else {
        EXIT_FAIL
    }
}

/// One JSON object per line, in case order.
pub fn report_lines(reports: &[Report]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&serde_json::to_string(r).expect("reports serialize"));
        s.push('\n');
    }
    s
}

fn write_report(path: &Path, reports: &[Report]) -> Result<(), CliError> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(report_lines(reports).as_bytes()))
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn fmt_dev(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.2e}"))
}

/// Aligned text table of case outcomes.
pub fn summary_table(reports: &[Report]) -> String {
    let header = [
        "case", "identity", "rel_dev", "target", "status", "ms", "error",
    ];
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.case_id.clone(),
                r.identity.clone(),
                fmt_dev(r.rel_dev),
                format!("{:.0e}", r.target),
                if r.pass { "PASS" } else { "FAIL" }.into(),
                r.wall_ms.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let mut w: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (k, c) in row.iter().enumerate() {
            w[k] = w[k].max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let mut l = String::new();
        for (k, c) in cells.iter().enumerate() {
            let pad = w[k] - c.chars().count();
            // numbers right-aligned
            if (2..=3).contains(&k) || k == 5 {
                let _ = write!(l, "{}{}  ", " ".repeat(pad), c);
            } else {
                let _ = write!(l, "{}{}  ", c, " ".repeat(pad));
            }
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for row in &rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    let _ = writeln!(out, "{passed}/{} passed", reports.len());
    out
}

/// Per-case diagnostics for failures.
pub fn diagnostics(reports: &[Report]) -> String {
    let mut s = String::new();
    for r in reports.iter().filter(|r| !r.pass) {
        let why = match (&r.error, &r.message, r.rel_dev) {
            (Some(k), Some(m), _) => format!("{k}: {m}"),
            (_, Some(m), _) => m.clone(),
            (_, _, Some(d)) if !r.converged => format!("not converged (rel_dev {d:.3e})"),
            (_, _, Some(d)) => format!("rel_dev {d:.3e} exceeds target {:.1e}", r.target),
            _ => "failed".into(),
        };
        let _ = writeln!(s, "{}: {why}", r.case_id);
    }
    s
}

// ---------------------------------------------------------------------------
// sweeps

/// Identities that support a parameter sweep.
pub const SWEEPS: [&str; 2] = ["t_regularization", "gustafson_n_max"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid<T> {
    pub values: Vec<f64>,
    pub case: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TSweepCase {
    pub chain: ChainConfig,
    pub x: Vec<SeparatedPoint>,
    pub xp: Vec<SeparatedPoint>,
    pub z0: C64,
    #[serde(default = "default_sweep_tol")]
    pub quad_tol: f64,
}

fn default_sweep_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GustafsonSweepCase {
    pub x: Vec<SeparatedPoint>,
    pub xp: Vec<SeparatedPoint>,
    #[serde(default)]
    pub contour: MbOptions,
    #[serde(default = "default_mb_target")]
    pub target: f64,
}

fn default_mb_target() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    TRegularization(Grid<TSweepCase>),
    GustafsonNMax(Grid<GustafsonSweepCase>),
}

fn parse_grid<T: DeserializeOwned>(text: &str, toml_format: bool) -> Result<Grid<T>, CliError> {
    let g: Grid<T> = if toml_format {
        toml::from_str(text).map_err(|e| CliError::config(format!("grid: {e}")))?
    } else {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("grid: {e}")))?
    };
    if g.values.is_empty() {
        return Err(CliError::config("grid: field `values` is empty"));
    }
    if g.values.len() > 1000 {
        return Err(CliError::config(
            "grid: field `values` has more than 1000 entries",
        ));
    }
    if let Some(v) = g.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(CliError::config(format!(
            "grid: field `values` entry {v} is not a positive finite number"
        )));
    }
    Ok(g)
}

impl GridSpec {
    pub fn parse(identity: &str, text: &str, toml_format: bool) -> Result<GridSpec, CliError> {
        match identity {
            "t_regularization" => {
                let g: Grid<TSweepCase> = parse_grid(text, toml_format)?;
                g.case
                    .chain
                    .validate()
                    .map_err(|e| CliError::config(format!("grid: field `case.chain`: {e}")))?;
                if !(g.case.quad_tol > 0.0 && g.case.quad_tol.is_finite()) {
                    return Err(CliError::config(
                        "grid: field `case.quad_tol` must be a positive finite number",
                    ));
                }
                Ok(GridSpec::TRegularization(g))
            }
            "gustafson_n_max" => {
                let g: Grid<GustafsonSweepCase> = parse_grid(text, toml_format)?;
                if let Some(v) = g.values.iter().find(|v| v.fract() != 0.0 || **v > 4096.0) {
                    return Err(CliError::config(format!(
                        "grid: field `values` entry {v} is not an n_max in 1..=4096"
                    )));
                }
                if !(g.case.target > 0.0 && g.case.target.is_finite()) {
                    return Err(CliError::config(
                        "grid: field `case.target` must be a positive finite number",
                    ));
                }
                if g.case.x.len() != g.case.xp.len() || g.case.x.is_empty() {
                    return Err(CliError::config(
                        "grid: fields `case.x` and `case.xp` must be nonempty and of equal length",
                    ));
                }
                Ok(GridSpec::GustafsonNMax(g))
            }
            _ => Err(CliError::config(format!(
                "unknown sweep identity `{identity}` (expected {})",
                SWEEPS.join(" or ")
            ))),
        }
    }

    pub fn load(identity: &str, path: &Path) -> Result<GridSpec, CliError> {
        let text = read(path)?;
        GridSpec::parse(identity, &text, is_toml(path))
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub numeric_re: f64,
    pub numeric_im: f64,
    pub reference_re: f64,
    pub reference_im: f64,
    pub rel_dev: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
    pub error: String,
}

impl SweepRow {
    fn failed(value: f64, e: &sl2c::Error) -> Self {
        SweepRow {
            value,
            numeric_re: f64::NAN,
            numeric_im: f64::NAN,
            reference_re: f64::NAN,
            reference_im: f64::NAN,
            rel_dev: f64::NAN,
            error_estimate: f64::NAN,
            evaluations: 0,
            error: e.kind().into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub note: String,
}

/// Evaluates the identity at every grid value. For the regularization
/// sweep the reference is the unregularized closed form.
pub fn run_sweep(spec: &GridSpec) -> Result<SweepOutcome, CliError> {
    match spec {
        GridSpec::TRegularization(g) => {
            let c = &g.case;
            let sw = t_regularization_sweep(&c.chain, &c.x, &c.xp, c.z0, &g.values, c.quad_tol)?;
            let rows = sw
                .rows
                .iter()
                .map(|r| SweepRow {
                    value: r.regularization,
                    numeric_re: r.numeric.re,
                    numeric_im: r.numeric.im,
                    reference_re: sw.closed_limit.re,
                    reference_im: sw.closed_limit.im,
                    rel_dev: r.rel_dev_limit,
                    error_estimate: r.rel_dev * r.closed.norm(),
                    evaluations: 0,
                    error: String::new(),
                })
                .collect();
            Ok(SweepOutcome {
                rows,
                note: format!(
                    "extrapolated to zero regularization: rel_dev {:.3e}",
                    sw.rel_dev
                ),
            })
        }
        GridSpec::GustafsonNMax(g) => {
            let c = &g.case;
            let rows = g
                .values
                .iter()
                .map(|&v| {
                    let opts = MbOptions {
                        n_max: v as u32,
                        ..c.contour
                    };
                    match verify_gustafson(&c.x, &c.xp, &opts, c.target) {
                        Ok(r) => {
                            let l: C64 = r.lhs.map(Into::into).unwrap_or_default();
                            let rr: C64 = r.rhs.map(Into::into).unwrap_or_default();
                            SweepRow {
                                value: v,
                                numeric_re: l.re,
                                numeric_im: l.im,
                                reference_re: rr.re,
                                reference_im: rr.im,
                                rel_dev: r.rel_dev.unwrap_or(f64::NAN),
                                error_estimate: r.error_estimate.unwrap_or(f64::NAN),
                                evaluations: r.evaluations,
                                error: String::new(),
                            }
                        }
                        Err(e) => SweepRow::failed(v, &e),
                    }
                })
                .collect();
            Ok(SweepOutcome {
                rows,
                note: String::new(),
            })
        }
    }
}

pub fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Sweep exit code: 1 when any grid point failed to evaluate.
pub fn sweep_exit_code(rows: &[SweepRow]) -> i32 {
    if rows.iter().any(|r| !r.error.is_empty()) {
        EXIT_FAIL
    } else {
        EXIT_OK
    }
}
