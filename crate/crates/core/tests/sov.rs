use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use sl2c::sov::*;
use sl2c::specfun::{power_bi, BiIndex, SeparatedPoint, Spin};
use sl2c::Error;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn sp(n: i64, nu: f64) -> SeparatedPoint {
    SeparatedPoint::real(n, nu)
}

fn spin() -> Spin {
    Spin::new(1, 0.15)
}

fn cfg(n: usize) -> ChainConfig {
    ChainConfig::new(n, spin()).unwrap()
}

#[test]
fn psi_a_n1_is_the_power() {
    let x = sp(1, 0.3).with_offset(0.05);
    let z = c(0.7, -0.4);
    let v = psi_a(&cfg(1), &[x], &[z], c(0.0, 0.0), 1e-10)
        .unwrap()
        .value;
    let s = spin().as_index();
    let i = c(0.0, 1.0);
    let e = BiIndex::with_gap(i * x.x() - s.alpha(), x.n - s.gap());
    let want = power_bi(z, &e).unwrap();
    assert!((v - want).norm() <= 1e-14 * want.norm(), "{v} {want}");
}

#[test]
fn psi_b_n1_is_the_plane_wave() {
    let z = c(0.3, 0.8);
    let p = c(1.1, -0.5);
    let v = psi_b(&cfg(1), p, &[], &[z], 1e-10).unwrap().value;
    let want = (c(0.0, 1.0) * (p * z + p.conj() * z.conj())).exp();
    assert!((v - want).norm() < 1e-14);
    let one = psi_b(&cfg(1), c(0.0, 0.0), &[], &[z], 1e-10).unwrap().value;
    assert_eq!(one, c(1.0, 0.0));
}

#[test]
fn measures() {
    let a1 = measure_a(&[sp(0, 0.3)]);
    assert!((a1 - c(1.0 / (2.0 * PI * PI), 0.0)).norm() < 1e-15);
    assert_eq!(measure_a(&[sp(1, 0.3), sp(1, 0.3)]), c(0.0, 0.0));
    let x = [sp(1, 0.3), sp(-2, -0.1), sp(0, 0.7)];
    let y = [x[2], x[0], x[1]];
    assert!((measure_a(&x) - measure_a(&y)).norm() < 1e-15 * measure_a(&x).norm());
    assert!(measure_a(&x).im.abs() < 1e-15 * measure_a(&x).norm());
    let b2 = measure_b(&[sp(0, 0.2)]);
    assert!((b2 - c(2.0 * PI.powi(-4) / (4.0 * PI * PI), 0.0)).norm() < 1e-15);
}

#[test]
fn monodromy_degrees() {
    for n in 1..=3 {
        assert_eq!(
            MonodromyEntry::new(Entry::A, n, c(0.0, 0.0)).degree(),
            n as u32
        );
        assert_eq!(
            MonodromyEntry::new(Entry::B, n, c(0.0, 0.0)).degree(),
            n as u32 - 1
        );
    }
}

#[test]
fn a1_eigen_exact() {
    let x = [sp(1, 0.3).with_offset(0.05)];
    for u in [c(0.4, 0.2), c(-1.0, 0.5), c(2.0, -1.0)] {
        let r = check_a_eigen(&cfg(1), &x, &[c(0.7, -0.4)], u, Some(1e-3), 1e-12).unwrap();
        assert!(r.rel_residual < 1e-8, "{r:?}");
    }
}

#[test]
fn b1_eigen_exact() {
    let p = c(0.8, 0.3);
    let r = check_b_eigen(
        &cfg(1),
        p,
        &[],
        &[c(0.2, 0.5)],
        c(0.3, 0.0),
        Some(1e-3),
        1e-12,
    )
    .unwrap();
    assert!(r.rel_residual < 1e-8, "{r:?}");
}

#[test]
fn stencil_on_singularity() {
    let x = [sp(0, 0.3)];
    let e = check_a_eigen(&cfg(1), &x, &[c(0.0, 0.0)], c(0.1, 0.0), None, 1e-10).unwrap_err();
    assert!(
        matches!(e, Error::Stencil(_) | Error::Singularity(_)),
        "{e:?}"
    );
    let e =
        check_a_eigen(&cfg(1), &x, &[c(1e-4, 0.0)], c(0.1, 0.0), Some(1e-3), 1e-10).unwrap_err();
    assert!(matches!(e, Error::Stencil(_)), "{e:?}");
}

#[test]
fn psi_a_n2_symmetric() {
    let x = [sp(1, 0.3).with_offset(0.05), sp(0, -0.2).with_offset(0.05)];
    let y = [x[1], x[0]];
    let zs = [
        [c(0.5, 0.2), c(-0.3, 0.9)],
        [c(1.2, -0.4), c(0.1, 0.3)],
        [c(-0.7, -0.6), c(0.8, 0.1)],
        [c(0.2, 1.5), c(0.25, 1.2)],
        [c(2.0, 0.0), c(-1.0, -1.0)],
    ];
    for z in zs {
        let a = psi_a(&cfg(2), &x, &z, c(0.0, 0.0), 1e-9).unwrap().value;
        let b = psi_a(&cfg(2), &y, &z, c(0.0, 0.0), 1e-9).unwrap().value;
        let dev = (a - b).norm() / a.norm();
        eprintln!("{a} {b} {dev:e}");
        assert!(dev < 1e-6, "{z:?}: {a} {b}");
    }
}

#[test]
fn psi_a_n2_coincident_points() {
    let x = [sp(1, 0.3), sp(0, -0.2)];
    let e = psi_a(&cfg(2), &x, &[c(0.5, 0.5), c(0.5, 0.5)], c(0.0, 0.0), 1e-8).unwrap_err();
    assert!(matches!(e, Error::Singularity(_)), "{e:?}");
}

#[test]
fn t_n1_matches_closed_form() {
    let x = [sp(1, 0.3)];
    let xp = [sp(1, -0.2)];
    let m = matrix_element_t(&cfg(1), &x, &xp, c(1.0, 0.0), 1e-7).unwrap();
    eprintln!("{m:?}");
    assert!(m.rel_dev < 1e-6, "{m:?}");
    let m = matrix_element_t(&cfg(1), &[sp(0, 0.3)], &[sp(2, 0.1)], c(0.4, -0.9), 1e-7).unwrap();
    assert!(m.rel_dev < 1e-6, "{m:?}");
}

#[test]
fn t_n1_regularization_sweep() {
    let x = [sp(0, 0.8)];
    let xp = [sp(1, -0.7)];
    let sw = t_regularization_sweep(&cfg(1), &x, &xp, c(1.0, 0.0), &REGULARIZATION_LADDER, 1e-9)
        .unwrap();
    eprintln!("{sw:?}");
    assert!(sw
        .rows
        .windows(2)
        .all(|w| w[1].rel_dev_limit < w[0].rel_dev_limit));
    assert!(sw.rows.iter().all(|r| r.rel_dev < 1e-8));
    assert!(sw.rel_dev < 1e-5, "{sw:?}");
    let coarse =
        t_regularization_sweep(&cfg(1), &x, &xp, c(1.0, 0.0), &[0.1, 0.05, 0.025], 1e-9).unwrap();
    assert!(coarse
        .rows
        .windows(2)
        .all(|w| w[1].rel_dev_limit < w[0].rel_dev_limit));
}

#[test]
fn ba_n1_matches_closed_form() {
    for (x, p) in [
        (sp(0, 0.3), c(1.0, 0.0)),
        (sp(1, -0.2), c(0.6, 0.8)),
        (sp(-2, 0.5), c(-0.3, 1.7)),
    ] {
        let m = matrix_element_ba(&cfg(1), p, &[], &[x], 1e-8).unwrap();
        eprintln!("{m:?}");
        assert!(m.rel_dev < 1e-6, "{m:?}");
    }
}

#[test]
fn unitarity_of_group_action() {
    let gs = [
        [c(1.0, 0.0), c(0.3, 0.2), c(0.0, 0.0), c(1.0, 0.0)],
        [c(0.8, 0.1), c(0.2, 0.0), c(-0.5, 0.3), c(0.0, 0.0)],
        [c(1.2, -0.3), c(0.4, 0.5), c(0.6, 0.1), c(0.0, 0.0)],
    ];
    for mut g in gs {
        // fix d from ad − bc = 1
        if g[3] == c(0.0, 0.0) {
            g[3] = (c(1.0, 0.0) + g[1] * g[2]) / g[0];
        }
        let r = check_unitarity(&spin(), &g, [c(0.2, 0.1), c(0.5, -0.3)], 0.6, 1e-9).unwrap();
        eprintln!("{r:?}");
        assert!(r.rel_dev < 1e-6, "{r:?}");
    }
}

#[test]
fn a2_eigen_quadrature_backed() {
    let x = [sp(1, 0.3).with_offset(0.05), sp(0, -0.2).with_offset(0.05)];
    let zs = [
        [c(0.5, 0.2), c(-0.3, 0.9)],
        [c(1.2, -0.4), c(0.1, 0.7)],
        [c(-0.7, -0.6), c(0.8, 0.1)],
    ];
    for z in zs {
        for u in [c(0.4, 0.2), c(-1.0, 0.5), c(0.1, -0.8)] {
            let r = check_a_eigen(&cfg(2), &x, &z, u, None, 1e-11).unwrap();
            eprintln!("{r:?}");
            assert!(r.rel_residual < 1e-4, "{r:?}");
        }
    }
}

#[test]
fn b2_eigen_quadrature_backed() {
    let x = [sp(1, 0.3).with_offset(0.05)];
    let p = c(0.9, 0.4);
    for (z, u) in [
        ([c(0.5, 0.2), c(-0.3, 0.9)], c(0.4, 0.2)),
        ([c(1.2, -0.4), c(0.1, 0.7)], c(-1.0, 0.5)),
    ] {
        let r = check_b_eigen(&cfg(2), p, &x, &z, u, None, 1e-11).unwrap();
        eprintln!("{r:?}");
        assert!(r.rel_residual < 1e-4, "{r:?}");
    }
}

#[test]
fn t_n2_rewrite_assisted() {
    let x = [sp(1, 0.3), sp(0, -0.4)];
    let xp = [sp(0, 0.1), sp(1, 0.5)];
    let m = matrix_element_t(&cfg(2), &x, &xp, c(0.8, 0.3), 1e-4).unwrap();
    eprintln!("{m:?}");
    assert!(m.rel_dev < 1e-3, "{m:?}");
}
