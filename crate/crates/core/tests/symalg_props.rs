use num_complex::Complex64 as C64;
use proptest::prelude::*;
use sl2c::rational::QC;
use sl2c::specfun::{SeparatedPoint, Spin};
use sl2c::symalg::*;

fn qc() -> impl Strategy<Value = QC> {
    (-6i64..=6, -6i64..=6).prop_map(|(a, b)| QC::frac(a, 4) + QC::imag(b, 3))
}

/// Affine expression with integer gap over points x1, x2 and spin s.
fn expr() -> impl Strategy<Value = AffineExpr> {
    (
        qc(),
        -2i64..=2,
        -2i64..=2,
        any::<bool>(),
        -2i64..=2,
        any::<bool>(),
        -1i64..=1,
        any::<bool>(),
    )
        .prop_map(|(c, gap, k1, b1, k2, b2, ks, bs)| {
            let mut e = AffineExpr::constant(c, c - QC::int(gap));
            let term = |n: &str, conj: bool| {
                if conj {
                    AffineExpr::param_bar(n)
                } else {
                    AffineExpr::param(n)
                }
            };
            e = e + term("x1", b1) * (QC::i() * QC::int(k1));
            e = e + term("x2", b2) * (QC::i() * QC::int(k2));
            e + term("s", bs) * QC::int(ks)
        })
}

#[derive(Debug, Clone)]
enum Piece {
    A(AffineExpr),
    InvA(AffineExpr),
    Bracket(AffineExpr),
    Sign(AffineExpr),
    Phase(AffineExpr),
}

fn piece() -> impl Strategy<Value = Piece> {
    prop_oneof![
        3 => expr().prop_map(Piece::A),
        2 => expr().prop_map(Piece::InvA),
        1 => expr().prop_map(Piece::Bracket),
        1 => expr().prop_map(Piece::Sign),
        1 => expr().prop_map(Piece::Phase),
    ]
}

fn build(pieces: &[Piece]) -> AFactorProduct {
    pieces.iter().fold(AFactorProduct::one(), |p, x| {
        p.times(&match x {
            Piece::A(e) => AFactorProduct::a(e.clone()),
            Piece::InvA(e) => AFactorProduct::inv_a(e.clone()),
            Piece::Bracket(e) => AFactorProduct::bracket(e.clone()),
            Piece::Sign(e) => AFactorProduct::sign(e.clone()),
            Piece::Phase(e) => AFactorProduct::phase(e.clone()),
        })
    })
}

fn assignment() -> impl Strategy<Value = Assignment> {
    (
        -2i64..=2,
        -1.0f64..1.0,
        -2i64..=2,
        -1.0f64..1.0,
        -2i64..=2,
        -1.0f64..1.0,
        0.05f64..0.3,
    )
        .prop_map(|(n1, v1, n2, v2, ns, vs, eps)| {
            let mut a = Assignment::new();
            a.set_point("x1", &SeparatedPoint::new(n1, C64::new(v1, eps)))
                .set_point("x2", &SeparatedPoint::new(n2, C64::new(v2, -eps * 0.7)))
                .set_spin("s", &Spin::new(ns, vs));
            a
        })
}

fn close(a: C64, b: C64) -> bool {
    (a - b).norm() <= 1e-9 * a.norm().max(b.norm()).max(1e-280)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn canonical_is_idempotent(ps in prop::collection::vec(piece(), 0..6)) {
        let c = build(&ps).canonicalize();
        prop_assert_eq!(c.canonicalize(), c);
    }

    #[test]
    fn canonical_preserves_value(ps in prop::collection::vec(piece(), 1..5), a in assignment()) {
        let p = build(&ps);
        let v = p.eval(&a);
        prop_assume!(v.is_ok());
        let v = v.unwrap();
        prop_assume!(v.is_finite() && v.norm() < 1e200 && v.norm() > 1e-200);
        let w = p.canonicalize().eval(&a);
        prop_assert!(w.is_ok(), "{:?}", w);
        let w = w.unwrap();
        prop_assert!(close(v, w), "{v} vs {w}");
    }

    #[test]
    fn equal_normal_forms_evaluate_equal(e in expr(), a in assignment(), k in -2i64..=2) {
        // a(E+k) rewritten via the shift rule, a(E) via reflection and flip
        let mut rhs = AFactorProduct::a(e.clone());
        if k > 0 {
            for j in 0..k {
                rhs = rhs.divide(&AFactorProduct::bracket(e.shift(QC::int(j))));
            }
        } else {
            for j in 1..=-k {
                rhs = rhs.times(&AFactorProduct::bracket(e.shift(QC::int(-j))));
            }
        }
        if k.rem_euclid(2) == 1 {
            rhs = rhs.times(&AFactorProduct::scalar((-1).into(), 0));
        }
        let lhs = AFactorProduct::a(e.shift(QC::int(k)));
        prop_assert_eq!(lhs.canonicalize(), rhs.canonicalize());
        let flipped = AFactorProduct::sign(e.clone()).times(&AFactorProduct::a(e.swap()));
        prop_assert_eq!(AFactorProduct::a(e.clone()).canonicalize(), flipped.canonicalize());
        if !e.is_constant() {
            let refl = AFactorProduct::inv_a((-e.swap()).shift(QC::one()));
            prop_assert_eq!(AFactorProduct::a(e.clone()).canonicalize(), refl.canonicalize());
        }
        if let (Ok(v), Ok(w)) = (lhs.eval(&a), rhs.eval(&a)) {
            if v.is_finite() && v.norm() > 1e-200 && v.norm() < 1e200 {
                prop_assert!(close(v, w), "{v} vs {w}");
            }
        }
    }

    #[test]
    fn json_round_trip(ps in prop::collection::vec(piece(), 0..6)) {
        let p = build(&ps);
        let j = serde_json::to_string(&p).unwrap();
        prop_assert_eq!(AFactorProduct::from_json(&j).unwrap(), p.clone());
        let c = p.to_canonical_json();
        prop_assert_eq!(AFactorProduct::from_json(&c).unwrap().to_canonical_json(), c);
    }

    #[test]
    fn compiled_matches_direct(ps in prop::collection::vec(piece(), 1..5), a in assignment()) {
        let p = build(&ps);
        let v = p.eval(&a);
        prop_assume!(v.is_ok());
        let v = v.unwrap();
        prop_assume!(v.is_finite() && v.norm() < 1e200 && v.norm() > 1e-200);
        let comp = p.compile(&["x1"], &a).unwrap();
        let w = comp.eval(&[*a.param("x1").unwrap()]).unwrap();
        prop_assert!(close(v, w), "{v} vs {w}");
    }
}
