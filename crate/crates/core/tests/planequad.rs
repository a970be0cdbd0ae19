use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use sl2c::planequad::*;
use sl2c::specfun::{a_factor, power_bi, sign_pow, BiIndex};

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm()
}

fn sing(z: C64, alpha: BiIndex) -> Singularity {
    Singularity {
        location: z,
        strength: alpha,
    }
}

fn chain_lhs(z1: C64, z2: C64, a: BiIndex, b: BiIndex, tol: f64) -> IntegralEstimate {
    let decay = a.sum() + b.sum();
    let plan = QuadPlan::new(vec![sing(z1, a), sing(z2, b)], decay)
        .unwrap()
        .with_tol(tol);
    integrate_plane(
        |w| Ok(power_bi(-w.minus(z1), &a.neg())? * power_bi(w.minus(z2), &b.neg())?),
        &plan,
    )
    .unwrap()
}

fn chain_rhs(z1: C64, z2: C64, a: BiIndex, b: BiIndex) -> C64 {
    let g = BiIndex::with_gap(2.0 - a.alpha() - b.alpha(), -a.gap() - b.gap());
    let pref = PI
        * sign_pow(g.gap())
        * a_factor(&a).unwrap()
        * a_factor(&b).unwrap()
        * a_factor(&g).unwrap();
    let e = a.add(&b).neg().shift(C64::new(1.0, 0.0));
    pref * power_bi(z1 - z2, &e).unwrap()
}

#[test]
fn chain_instance() {
    let z1 = C64::new(0.3, -0.2);
    let z2 = C64::new(-0.9, 0.6);
    let a = BiIndex::with_gap(C64::new(1.1, 0.3), 1);
    let b = BiIndex::with_gap(C64::new(0.4, -0.4), -1);
    let lhs = chain_lhs(z1, z2, a, b, 1e-9);
    let rhs = chain_rhs(z1, z2, a, b);
    eprintln!(
        "chain rel {:.2e} evals {}",
        rel(lhs.value, rhs),
        lhs.evaluations
    );
    assert!(
        rel(lhs.value, rhs) < 1e-6,
        "{} vs {rhs} ({lhs:?})",
        lhs.value
    );
}

#[test]
fn gaussian_moments() {
    // sites with zero strength exercise the cell decomposition
    let zero = BiIndex::diag(C64::new(0.0, 0.0));
    let sites = vec![
        sing(C64::new(0.3, 0.0), zero),
        sing(C64::new(0.0, -0.5), zero),
        sing(C64::new(1.0, 1.0), zero),
    ];
    let plan = QuadPlan::new(sites, C64::new(50.0, 0.0))
        .unwrap()
        .with_tol(1e-12);
    for (a, b, exact) in [
        (0, 0, PI),
        (2, 0, PI / 2.0),
        (4, 4, PI * 9.0 / 16.0),
        (8, 0, PI * 105.0 / 16.0),
        (3, 1, 0.0),
        (6, 2, PI * 15.0 / 16.0),
    ] {
        let e = integrate_plane(
            |p| {
                let z = p.z();
                Ok(C64::new(
                    z.re.powi(a) * z.im.powi(b) * (-z.norm_sqr()).exp(),
                    0.0,
                ))
            },
            &plan.clone().with_floor(1e-11),
        )
        .unwrap();
        let err = (e.value.re - exact).abs() / if exact == 0.0 { 1.0 } else { exact };
        assert!(err < 1e-10, "x^{a} y^{b}: {} vs {exact}", e.value);
    }
}

#[test]
fn deterministic_and_subdivision_invariant() {
    let z1 = C64::new(0.1, 0.4);
    let z2 = C64::new(0.7, -0.3);
    let a = BiIndex::with_gap(C64::new(0.9, 0.1), 0);
    let b = BiIndex::with_gap(C64::new(1.3, -0.2), 1);
    let e1 = chain_lhs(z1, z2, a, b, 1e-6);
    let e1b = chain_lhs(z1, z2, a, b, 1e-6);
    assert_eq!(e1.value.re.to_bits(), e1b.value.re.to_bits());
    assert_eq!(e1.value.im.to_bits(), e1b.value.im.to_bits());
    let e2 = chain_lhs(z1, z2, a, b, 5e-7);
    assert!((e1.value - e2.value).norm() <= e1.abs_error_estimate + e2.abs_error_estimate + 1e-15);
}

#[test]
fn fourier_half_is_pi() {
    let plan = QuadPlan::oscillatory(vec![], C64::new(1.0, 0.0))
        .unwrap()
        .with_tol(1e-10);
    let e = fourier_power(
        &BiIndex::diag(C64::new(0.5, 0.0)),
        C64::new(1.0, 0.0),
        &plan,
    )
    .unwrap();
    assert!((e.value - PI).norm() < 1e-8, "{e:?}");
}

fn fourier_rhs(alpha: &BiIndex, p: C64) -> C64 {
    let n = alpha.gap();
    PI * sl2c::specfun::i_pow(n)
        * a_factor(alpha).unwrap()
        * power_bi(p, &alpha.shift(C64::new(-1.0, 0.0))).unwrap()
}

#[test]
fn fourier_with_gap() {
    let plan = QuadPlan::oscillatory(vec![], C64::new(0.0, 1.0))
        .unwrap()
        .with_tol(1e-10);
    for (alpha, p) in [
        (BiIndex::with_gap(C64::new(1.2, 0.0), 1), C64::new(0.0, 1.0)),
        (
            BiIndex::with_gap(C64::new(0.3, 0.7), -2),
            C64::new(0.4, -1.3),
        ),
        (
            BiIndex::with_gap(C64::new(0.6, -0.25), 2),
            C64::new(-2.0, 0.5),
        ),
    ] {
        let e = fourier_power(&alpha, p, &plan).unwrap();
        let r = fourier_rhs(&alpha, p);
        assert!(rel(e.value, r) < 1e-7, "{alpha:?} {p}: {} vs {r}", e.value);
    }
}

#[test]
fn hankel_laplace_type() {
    // ∫ r e^{−r} J0(2r) dr = 1/(1+4)^{3/2}
    let plan = QuadPlan::oscillatory(vec![], C64::new(1.0, 0.0))
        .unwrap()
        .with_tol(1e-11);
    let e = integrate_radial_oscillatory(|r| Ok(C64::new((-r).exp(), 0.0)), 0, 1.0, &plan).unwrap();
    assert!((e.value.re - 5f64.powf(-1.5)).abs() < 1e-11, "{e:?}");
}

#[test]
fn oscillatory_plane_matches_fourier() {
    // e^{i(pz+p̄z̄)} [z−c]^{−α} over the plane = e^{i(pc+p̄c̄)} × Fourier transform
    let alpha = BiIndex::with_gap(C64::new(1.05, 0.1), 1);
    let c = C64::new(0.2, -0.1);
    let p = C64::new(0.7, 0.4);
    let plan = QuadPlan::oscillatory(vec![sing(c, alpha)], p)
        .unwrap()
        .with_tol(1e-7);
    let e = integrate_plane(|z| power_bi(z.minus(c), &alpha.neg()), &plan).unwrap();
    let r = fourier_rhs(&alpha, p) * C64::new(0.0, 2.0 * (p * c).re).exp();
    assert!(rel(e.value, r) < 1e-5, "{} vs {r}", e.value);
}

#[test]
fn inversion_chart_matches_truncation() {
    // tail of a chain integrand beyond |w| = R, by r → 1/r versus truncation + extrapolation
    let z1 = C64::new(0.3, -0.2);
    let z2 = C64::new(-0.4, 0.5);
    let a = BiIndex::with_gap(C64::new(1.4, 0.2), 1);
    let b = BiIndex::with_gap(C64::new(0.9, -0.1), 0);
    let f = |w: C64| power_bi(z1 - w, &a.neg()).unwrap() * power_bi(w - z2, &b.neg()).unwrap();
    let r0 = 3.0;
    let opts = LineOpts::tol(1e-13);
    let ang = |g: &dyn Fn(f64) -> C64| {
        integrate_line(0.0, 2.0 * PI, &opts, |t| Ok(g(t)))
            .unwrap()
            .value
    };
    let chart = ang(&|t| {
        integrate_line(0.0, 1.0 / r0, &opts, |u| {
            let r = 1.0 / u;
            Ok(f(C64::from_polar(r, t)) * r * r * r)
        })
        .unwrap()
        .value
    });
    let shell = |rmax: f64| {
        ang(&|t| {
            integrate_line(r0, rmax, &opts, |r| Ok(f(C64::from_polar(r, t)) * r))
                .unwrap()
                .value
        })
    };
    // the angular mode m = n_α + n_β survives first at R^{2−D−|m|}, then in steps of R^{−2}
    let d = a.sum() + b.sum();
    let m = (a.gap() + b.gap()).abs() as f64;
    let e1 = 2.0 - d - m;
    let e2 = e1 - 2.0;
    let (s1, s2, s3) = (shell(200.0), shell(400.0), shell(800.0));
    let two = C64::new(2.0, 0.0);
    let (q1, q2) = (two.powc(e1), two.powc(e2));
    let t1 = (s2 - s1 * q1) / (1.0 - q1);
    let t2 = (s3 - s2 * q1) / (1.0 - q1);
    let extrap = (t2 - t1 * q2) / (1.0 - q2);
    assert!(rel(chart, extrap) < 1e-7, "{chart} vs {extrap}");
}
