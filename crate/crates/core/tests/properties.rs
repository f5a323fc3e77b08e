use std::f64::consts::PI;

use ncert_core::catalog::example410;
use ncert_core::certify::{certify_rate_free, certify_with_rate, Verdict};
use ncert_core::exprlang::{parse, BinaryOp, Expr, UnaryOp};
use ncert_core::matfun::{
    matrix_measure, matrix_norm, sup_norm_over_window, sup_ratio_over_window, Mat, MatrixFunction, NormKind, Sampling,
};
use ncert_core::model::{validate, DelayArg, DelayTerm, InitialData, NeutralSystem};
use ncert_core::simulate::{integrate, max_residual};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::Var),
        (-100.0f64..100.0).prop_map(Expr::Const),
        (-5i32..=5).prop_map(|k| Expr::Const(k as f64)),
    ]
}

fn ast() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(6, 64, 2, |inner| {
        let unary = prop_oneof![
            Just(UnaryOp::Neg),
            Just(UnaryOp::Abs),
            Just(UnaryOp::Sin),
            Just(UnaryOp::Cos),
            Just(UnaryOp::Exp),
            Just(UnaryOp::Sqrt),
        ];
        let binary = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
            Just(BinaryOp::Pow),
        ];
        prop_oneof![
            (unary, inner.clone()).prop_map(|(op, a)| Expr::unary(op, a)),
            (binary, inner.clone(), inner).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn matrix(n: usize) -> impl Strategy<Value = Mat> {
    proptest::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| Mat::from_row_major(n, v))
}

fn sized_matrix() -> impl Strategy<Value = Mat> {
    (1usize..=6).prop_flat_map(matrix)
}

fn sized_pair() -> impl Strategy<Value = (Mat, Mat)> {
    (1usize..=6).prop_flat_map(|n| (matrix(n), matrix(n)))
}

fn norms() -> impl Strategy<Value = NormKind> {
    prop_oneof![Just(NormKind::Inf), Just(NormKind::One)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn unparse_round_trip_evaluates_identically(e in ast(), t in -10.0f64..10.0) {
        let back = parse(&e.unparse()).unwrap();
        match (e.eval(t), back.eval(t)) {
            (Ok(a), Ok(b)) => prop_assert!(same(a, b), "{} vs {} for {}", a, b, e.unparse()),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?} for {}", a, b, e.unparse()),
        }
    }

    #[test]
    fn measure_bounded_by_norm(c in sized_matrix(), k in norms()) {
        prop_assert!(matrix_measure(&c, k).abs() <= matrix_norm(&c, k));
    }

    #[test]
    fn measure_subadditive((a, b) in sized_pair(), k in norms()) {
        prop_assert!(matrix_measure(&a.add(&b), k) <= matrix_measure(&a, k) + matrix_measure(&b, k) + 1e-12);
    }

    #[test]
    fn measure_homogeneous(c in sized_matrix(), k in norms(), s in prop_oneof![Just(0.5), Just(2.0), Just(10.0)]) {
        let lhs = matrix_measure(&c.scale(s), k);
        let rhs = s * matrix_measure(&c, k);
        prop_assert!((lhs - rhs).abs() <= 1e-14 * (1.0 + rhs.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ratio_with_constant_denominator(a in -3.0f64..3.0, b in -3.0f64..3.0, d in -5.0f64..-0.1) {
        let f = MatrixFunction::new(2, vec![
            Expr::Var.sin() * a, Expr::constant(b), (Expr::Var * 2.0).cos(), Expr::constant(-1.0),
        ]).unwrap();
        let pre = MatrixFunction::new(2, f.entries().iter().map(|e| e.clone() / d.abs()).collect()).unwrap();
        let s = Sampling::new(0.0, 2.0 * PI, 401).unwrap();
        let lhs = sup_ratio_over_window(&f, |_| Ok(d), NormKind::Inf, &s).unwrap().value;
        let rhs = sup_norm_over_window(&pre, NormKind::Inf, &s).unwrap().value;
        prop_assert!((lhs - rhs).abs() <= 1e-14 * (1.0 + rhs));
    }

    /// Pushing the coupling past its threshold flips a certified verdict.
    #[test]
    fn certified_margin_positive_and_flips(beta in 0.5f64..3.0, b2 in 0.01f64..0.5, tau in 0.05f64..1.0) {
        let scalar = |v: f64| MatrixFunction::constant(&Mat::from_rows(&[vec![v]]));
        let build = |b2: f64| NeutralSystem::new(0.0, scalar(0.0), DelayArg::none(), vec![
            DelayTerm { coeff: scalar(-beta - b2), delay: DelayArg::none() },
            DelayTerm { coeff: scalar(b2), delay: DelayArg::constant(tau) },
        ], None).unwrap();
        let s = Sampling::new(0.0, 1.0, 3).unwrap();
        let cert = certify_rate_free(&build(b2), NormKind::Inf, &s).unwrap();
        if cert.is_certified() {
            prop_assert!(cert.margin.unwrap() > 0.0);
        }
        let flipped = certify_rate_free(&build(50.0 * beta / tau), NormKind::Inf, &s).unwrap();
        prop_assert_eq!(flipped.verdict, Verdict::NotCertified);
    }
}

#[test]
fn example_thresholds_flip_once_per_route() {
    let s = Sampling::new(0.0, 2.0 * PI, 2001).unwrap();
    let mut flips = [Vec::new(), Vec::new()];
    let mut prev = [true, true];
    for i in 0..=400 {
        let nu = 0.01 + 0.19 * i as f64 / 400.0;
        let cert = certify_rate_free(&example410(nu), NormKind::Inf, &s).unwrap();
        for (r, name) in ["sum_of_norms", "norm_of_sum"].iter().enumerate() {
            let ok = cert.route_check(name).unwrap().certified;
            if ok != prev[r] {
                flips[r].push(nu);
            }
            prev[r] = ok;
        }
    }
    assert_eq!(flips[0].len(), 1);
    assert_eq!(flips[1].len(), 1);
    assert!((flips[0][0] - 1.0 / 16.5).abs() < 0.19 / 400.0 + 1e-12);
    assert!((flips[1][0] - 1.0 / 8.2).abs() < 0.19 / 400.0 + 1e-12);
}

#[test]
fn validation_is_deterministic_and_sampled_rate_is_consistent() {
    let sys = ncert_core::catalog::example2(5, false);
    let s = Sampling::new(0.0, 2.0 * PI, 801).unwrap();
    assert_eq!(validate(&sys, NormKind::One, &s), validate(&sys, NormKind::One, &s));
    let a = certify_with_rate(&sys, 0.05, NormKind::Inf, &s).unwrap();
    let b = certify_with_rate(&sys, 0.05, NormKind::Inf, &s).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// With f ≡ 0 the solution is linear in the initial data.
    #[test]
    fn solution_is_linear_in_data(c in -3.0f64..3.0, w in 0.5f64..3.0) {
        let sys = ncert_core::catalog::example2(2, false);
        let init = InitialData::new(
            vec![(Expr::Var * w).cos(), Expr::constant(0.5)],
            vec![(Expr::Var * w).sin() * -w, Expr::constant(0.0)],
        );
        let a = integrate(&sys, &init, 3.0, 1e-2).unwrap();
        let b = integrate(&sys, &init.scaled(c), 3.0, 1e-2).unwrap();
        for i in (0..a.len()).step_by(25) {
            for (u, v) in a.x(i).iter().zip(b.x(i)) {
                prop_assert!((c * u - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
        prop_assert!(max_residual(&sys, &b, NormKind::Inf).unwrap() <= 1e-9);
    }
}
