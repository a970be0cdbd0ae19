//! End-to-end acceptance criteria, run through the `sl2c` binary.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;

struct Run {
    code: i32,
    stderr: String,
    reports: Vec<Value>,
    elapsed: Duration,
}

fn cases_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("cases")
}

fn sl2c(args: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_sl2c"))
        .args(args)
        .arg("--report")
        .arg(&report)
        .env_remove("SL2C_BUDGET")
        .output()
        .unwrap();
    let elapsed = t0.elapsed();
    let reports = std::fs::read_to_string(&report)
        .map(|s| {
            s.lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect()
        })
        .unwrap_or_default();
    Run {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        reports,
        elapsed,
    }
}

fn dev(r: &Value) -> f64 {
    r["rel_dev"].as_f64().unwrap_or(f64::INFINITY)
}

fn passes(r: &Value) -> bool {
    r["pass"].as_bool() == Some(true)
}

fn id(r: &Value) -> &str {
    r["case_id"].as_str().unwrap()
}

fn identity<'a>(rs: &'a [Value], name: &str) -> Vec<&'a Value> {
    rs.iter().filter(|r| r["identity"] == name).collect()
}

fn chain_len(r: &Value) -> Option<u64> {
    r["config"]["check"]["chain"]["N"].as_u64()
}

fn check(conds: &[(bool, String)]) -> Result<String, String> {
    let failed: Vec<&String> = conds.iter().filter(|c| !c.0).map(|c| &c.1).collect();
    if failed.is_empty() {
        Ok(conds
            .iter()
            .map(|c| c.1.as_str())
            .collect::<Vec<_>>()
            .join("; "))
    } else {
        Err(failed
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("; "))
    }
}

fn max_dev(rs: &[&Value]) -> f64 {
    rs.iter().map(|r| dev(r)).fold(0.0, f64::max)
}

fn c1() -> Result<String, String> {
    let r = sl2c(&["verify", "specfun", "--which", "a_properties"]);
    let a = identity(&r.reports, "a_properties");
    let rep = a.first().ok_or("no a_properties report")?;
    let ms = rep["wall_ms"].as_u64().unwrap_or(u64::MAX);
    check(&[
        (r.code == 0, format!("exit {}", r.code)),
        (
            rep["details"]["points"] == 1000,
            format!("{} points", rep["details"]["points"]),
        ),
        (
            passes(rep) && dev(rep) <= 1e-11,
            format!("worst rel_dev {:.2e} <= 1e-11", dev(rep)),
        ),
        (ms < 1000, format!("{ms} ms < 1 s")),
    ])
}

fn c2() -> Result<String, String> {
    let r = sl2c(&["verify", "relations", "--which", "chain"]);
    let draws: Vec<&Value> = r
        .reports
        .iter()
        .filter(|x| id(x).starts_with("chain-draw"))
        .collect();
    check(&[
        (r.code == 0, format!("exit {}", r.code)),
        (
            draws.len() == 5 && draws.iter().all(|x| passes(x)),
            format!("{} random draws pass", draws.len()),
        ),
        (
            max_dev(&draws) <= 1e-6,
            format!("max rel_dev {:.2e} <= 1e-6", max_dev(&draws)),
        ),
        (
            r.elapsed < Duration::from_secs(30),
            format!("{:.1} s < 30 s", r.elapsed.as_secs_f64()),
        ),
    ])
}

fn c3() -> Result<String, String> {
    let t0 = Instant::now();
    let s = sl2c(&["verify", "relations", "--which", "star"]);
    let x = sl2c(&["verify", "relations", "--which", "cross"]);
    let elapsed = t0.elapsed();
    let stars: Vec<&Value> = s
        .reports
        .iter()
        .filter(|r| id(r).starts_with("star-draw"))
        .collect();
    let crosses: Vec<&Value> = x
        .reports
        .iter()
        .filter(|r| id(r).starts_with("cross-draw"))
        .collect();
    check(&[
        (
            s.code == 0 && x.code == 0,
            format!("exit {} / {}", s.code, x.code),
        ),
        (
            stars.len() == 5 && max_dev(&stars) <= 1e-6,
            format!(
                "star draws {}: max {:.2e} <= 1e-6",
                stars.len(),
                max_dev(&stars)
            ),
        ),
        (
            crosses.len() == 5 && max_dev(&crosses) <= 1e-5,
            format!(
                "cross draws {}: max {:.2e} <= 1e-5",
                crosses.len(),
                max_dev(&crosses)
            ),
        ),
        (
            elapsed < Duration::from_secs(300),
            format!("{:.1} s < 5 min", elapsed.as_secs_f64()),
        ),
    ])
}

fn c4() -> Result<String, String> {
    let r = sl2c(&["verify", "relations", "--which", "fourier"]);
    let draws: Vec<&Value> = r
        .reports
        .iter()
        .filter(|x| id(x).starts_with("fourier-draw"))
        .collect();
    let mut gaps: Vec<i64> = draws
        .iter()
        .map(|d| {
            let b = &d["config"]["check"]["alpha"];
            (b["alpha"][0].as_f64().unwrap() - b["alpha_bar"][0].as_f64().unwrap()).round() as i64
        })
        .collect();
    gaps.sort();
    let half = r
        .reports
        .iter()
        .find(|x| id(x) == "fourier-half")
        .ok_or("no fourier-half case")?;
    let lhs = half["lhs"]["re"].as_f64().unwrap_or(0.0);
    let lhs_im = half["lhs"]["im"].as_f64().unwrap_or(1.0);
    let pi_dev = ((lhs - PI).powi(2) + lhs_im.powi(2)).sqrt() / PI;
    check(&[
        (r.code == 0, format!("exit {}", r.code)),
        (
            draws.len() == 5 && max_dev(&draws) <= 1e-7,
            format!("{} draws: max {:.2e} <= 1e-7", draws.len(), max_dev(&draws)),
        ),
        (gaps == vec![-2, -1, 0, 1, 2], format!("gaps {gaps:?}")),
        (
            pi_dev <= 1e-8,
            format!("alpha = 1/2, |p| = 1 gives pi to {pi_dev:.2e}"),
        ),
        (
            r.elapsed < Duration::from_secs(10),
            format!("{:.1} s < 10 s", r.elapsed.as_secs_f64()),
        ),
    ])
}

fn c5() -> Result<String, String> {
    let r = sl2c(&["verify", "mb", "--which", "completeness"]);
    let diag: Vec<&Value> = r
        .reports
        .iter()
        .filter(|x| id(x).starts_with("completeness-n1"))
        .collect();
    let norms: Vec<f64> = diag
        .iter()
        .map(|d| d["details"]["normalization"].as_f64().unwrap_or(0.0))
        .collect();
    let ok = norms
        .iter()
        .all(|n| (n / (2.0 * PI * PI) - 1.0).abs() <= 1e-3);
    check(&[
        (r.code == 0, format!("exit {}", r.code)),
        (
            !diag.is_empty() && ok,
            format!(
                "normalizations {norms:.6?} vs 2 pi^2 = {:.6}",
                2.0 * PI * PI
            ),
        ),
        (
            max_dev(&diag) <= 1e-3,
            format!("max rel_dev {:.2e} <= 1e-3", max_dev(&diag)),
        ),
        (
            r.elapsed < Duration::from_secs(60),
            format!("{:.1} s < 1 min", r.elapsed.as_secs_f64()),
        ),
    ])
}

fn c6() -> Result<String, String> {
    let t0 = Instant::now();
    let a = sl2c(&["verify", "sov", "--which", "a_eigen"]);
    let b = sl2c(&["verify", "sov", "--which", "b_eigen"]);
    let elapsed = t0.elapsed();
    let all: Vec<&Value> = a.reports.iter().chain(&b.reports).collect();
    let n1: Vec<&Value> = all
        .iter()
        .copied()
        .filter(|r| chain_len(r) == Some(1))
        .collect();
    let a2: Vec<&Value> = a
        .reports
        .iter()
        .filter(|r| chain_len(r) == Some(2))
        .collect();
    let points: std::collections::BTreeSet<String> = a2
        .iter()
        .map(|r| r["config"]["check"]["z"].to_string())
        .collect();
    let n2: Vec<&Value> = all
        .iter()
        .copied()
        .filter(|r| chain_len(r) == Some(2))
        .collect();
    check(&[
        (
            a.code == 0 && b.code == 0,
            format!("exit {} / {}", a.code, b.code),
        ),
        (
            !n1.is_empty() && max_dev(&n1) <= 1e-8,
            format!(
                "N=1: {} residuals, max {:.2e} <= 1e-8",
                n1.len(),
                max_dev(&n1)
            ),
        ),
        (
            points.len() >= 3 && a2.len() >= 9,
            format!("N=2 A: {} points x {} checks", points.len(), a2.len()),
        ),
        (
            max_dev(&n2) <= 1e-4,
            format!("N=2: max {:.2e} <= 1e-4", max_dev(&n2)),
        ),
        (
            elapsed < Duration::from_secs(600),
            format!("{:.1} s < 10 min", elapsed.as_secs_f64()),
        ),
    ])
}

fn c7() -> Result<String, String> {
    let t = sl2c(&["verify", "sov", "--which", "matrix_t", "--slow"]);
    let ba = sl2c(&["verify", "sov", "--which", "matrix_ba"]);
    let extrap = t.reports.iter().find(|r| {
        r["details"]["method"] == "regularization extrapolation" && chain_len(r) == Some(1)
    });
    let t2: Vec<&Value> = t
        .reports
        .iter()
        .filter(|r| chain_len(r) == Some(2))
        .collect();
    let ba1: Vec<&Value> = ba
        .reports
        .iter()
        .filter(|r| chain_len(r) == Some(1))
        .collect();
    let e = extrap.map_or(f64::INFINITY, dev);
    check(&[
        (
            t.code == 0 && ba.code == 0,
            format!("exit {} / {}", t.code, ba.code),
        ),
        (e <= 1e-5, format!("T N=1 extrapolated {e:.2e} <= 1e-5")),
        (
            !t2.is_empty() && max_dev(&t2) <= 1e-3,
            format!("T N=2 {:.2e} <= 1e-3", max_dev(&t2)),
        ),
        (
            !ba1.is_empty() && max_dev(&ba1) <= 1e-6,
            format!(
                "BA N=1 {} cases, max {:.2e} <= 1e-6",
                ba1.len(),
                max_dev(&ba1)
            ),
        ),
    ])
}

fn c8() -> Result<String, String> {
    let r = sl2c(&["verify", "gustafson"]);
    let n2 = sl2c(&["verify", "gustafson", "--N", "2"]);
    let by_n = |n: usize| -> Vec<&Value> {
        r.reports
            .iter()
            .filter(|x| x["config"]["check"]["x"].as_array().map(|a| a.len()) == Some(n))
            .collect()
    };
    let one = by_n(1);
    let two: Vec<&Value> = by_n(2)
        .into_iter()
        .filter(|x| x["config"]["expect_error"].is_null())
        .collect();
    let three = by_n(3);
    let nonzero_n = two.iter().any(|x| {
        x["config"]["check"]["x"]
            .as_array()
            .unwrap()
            .iter()
            .any(|p| p["n"] != 0)
    });
    let n_max_ok = two
        .iter()
        .all(|x| x["details"]["n_max"].as_u64().is_some_and(|n| n <= 32));
    let slowest = two
        .iter()
        .map(|x| x["wall_ms"].as_u64().unwrap_or(u64::MAX))
        .max()
        .unwrap_or(u64::MAX);
    check(&[
        (
            r.code == 0 && n2.code == 0,
            format!("exit {} / --N 2 exit {}", r.code, n2.code),
        ),
        (
            one.len() == 1 && dev(one[0]) == 0.0 && passes(one[0]),
            format!("N=1 rel_dev {:?}", one.first().map(|x| dev(x))),
        ),
        (
            two.len() >= 3 && two.iter().all(|x| passes(x)) && max_dev(&two) <= 1e-4,
            format!("N=2: {} sets, max {:.2e} <= 1e-4", two.len(), max_dev(&two)),
        ),
        (nonzero_n, "N=2 sets include nonzero integer parts".into()),
        (n_max_ok, "n_max <= 32".into()),
        (
            !three.is_empty() && max_dev(&three) <= 1e-2,
            format!("N=3 smoke {:.2e} <= 1e-2", max_dev(&three)),
        ),
        (
            slowest < 300_000,
            format!("slowest N=2 case {slowest} ms < 5 min"),
        ),
    ])
}

fn c9() -> Result<String, String> {
    let r = sl2c(&["verify", "mb"]);
    let star: Vec<&Value> = identity(&r.reports, "mb_star_triangle")
        .into_iter()
        .filter(|x| x["config"]["expect_error"].is_null())
        .collect();
    let prop = identity(&r.reports, "mb_propagator");
    let coh = identity(&r.reports, "mb_star_coherence");
    let coherent = coh.iter().all(|x| {
        let d = x["details"]["position_rel_dev"]
            .as_f64()
            .unwrap_or(f64::INFINITY);
        let err = x["error_estimate"].as_f64().unwrap_or(0.0);
        passes(x) && d <= 1e-6 && dev(x) <= err.max(1e-4)
    });
    check(&[
        (r.code == 0, format!("exit {}", r.code)),
        (
            !star.is_empty() && max_dev(&star) <= 1e-4,
            format!(
                "MB star-triangle {} cases, max {:.2e} <= 1e-4",
                star.len(),
                max_dev(&star)
            ),
        ),
        (
            !prop.is_empty() && max_dev(&prop) <= 1e-4,
            format!(
                "MB propagator {} cases, max {:.2e} <= 1e-4",
                prop.len(),
                max_dev(&prop)
            ),
        ),
        (
            !coh.is_empty() && coherent,
            format!("{} coherence cases with the position-space star", coh.len()),
        ),
    ])
}

fn c10() -> Result<String, String> {
    let neg = cases_dir().join("negative");
    let pinched = sl2c(&[
        "verify",
        "gustafson",
        "--case",
        neg.join("pinched_contour.json").to_str().unwrap(),
    ]);
    let star = sl2c(&[
        "verify",
        "relations",
        "--case",
        neg.join("star_sum.json").to_str().unwrap(),
    ]);
    let mb_star = sl2c(&[
        "verify",
        "mb",
        "--case",
        neg.join("mb_star_sum.json").to_str().unwrap(),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"cases\": [\n  {\"id\": \"x\", \"check\": {\"identity\": \"chain\", \"z1\": [0, 0]}}\n]}\n").unwrap();
    let malformed = sl2c(&["verify", "relations", "--case", bad.to_str().unwrap()]);
    let kind = |r: &Run| {
        r.reports
            .first()
            .and_then(|x| x["error"].as_str().map(String::from))
            .unwrap_or_default()
    };
    check(&[
        (
            pinched.code == 1 && kind(&pinched) == "PoleOnContour",
            format!("pinched contour: exit {} {}", pinched.code, kind(&pinched)),
        ),
        (
            star.code == 2 && kind(&star) == "ConstraintError",
            format!("star sum != 2: exit {} {}", star.code, kind(&star)),
        ),
        (
            mb_star.code == 2 && kind(&mb_star) == "ConstraintError",
            format!("MB star sum: exit {} {}", mb_star.code, kind(&mb_star)),
        ),
        (
            malformed.code == 2
                && malformed.stderr.contains("line")
                && malformed.stderr.contains("z2"),
            format!(
                "malformed file: exit {} `{}`",
                malformed.code,
                malformed.stderr.trim()
            ),
        ),
    ])
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Result<String, String>); 10] = [
        ("a-function properties", c1),
        ("chain relation", c2),
        ("star-triangle and cross relations", c3),
        ("Fourier transform", c4),
        ("N=1 orthogonality normalization", c5),
        ("eigen-equation residuals", c6),
        ("matrix elements", c7),
        ("complex Gustafson integral", c8),
        ("Mellin-Barnes identities", c9),
        ("negative tests", c10),
    ];
    let mut failed = vec![];
    println!();
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(s) => println!("criterion {:>2} PASS  {name}: {s}", k + 1),
            Err(s) => {
                println!("criterion {:>2} FAIL  {name}: {s}", k + 1);
                failed.push(k + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
