//! Reference systems used by tests, benchmarks and fixtures.

use crate::exprlang::{parse, Expr};
use crate::matfun::{Mat, MatrixFunction};
use crate::model::{Declarations, DelayArg, DelayTerm, NeutralSystem, RateBound};

/// Tridiagonal matrix with −α on the diagonal, β/2 off the diagonal and β in
/// the two corner positions next to the diagonal (first and last row).
pub fn tridiagonal(n: usize, alpha: f64, beta: f64) -> Mat {
    let mut c = Mat::zeros(n);
    for i in 0..n {
        c[(i, i)] = -alpha;
        if i > 0 {
            c[(i, i - 1)] = beta / 2.0;
        }
        if i + 1 < n {
            c[(i, i + 1)] = beta / 2.0;
        }
    }
    if n > 1 {
        c[(0, 1)] = beta;
        c[(n - 1, n - 2)] = beta;
    }
    c
}

/// ẋ − A(t)ẋ(t − 0.1) = sin²t·C x(t − 0.1|sin t|) + cos²t·C x(t − 0.1|cos t|)
/// with C = tridiagonal(n, 0.4, 0.1) and A_ij = γ cos^i(jt), nγ = 0.01.
///
/// With `declared`, the analytic bounds ‖A‖ ≤ 0.01, ‖B_k‖ ≤ 0.5, μ(B) ≤ −0.3
/// and μ(P) ≤ −0.3 + λe^{0.1λ}·0.01 + λ are attached.
pub fn example2(n: usize, declared: bool) -> NeutralSystem {
    let gamma = 0.01 / n as f64;
    let c = tridiagonal(n, 0.4, 0.1);
    let mut entries = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let cos = (Expr::constant(j as f64) * Expr::var()).cos();
            entries.push(gamma * cos.pow(Expr::constant(i as f64)));
        }
    }
    let mut a = MatrixFunction::new(n, entries).expect("square");
    let sin2 = Expr::var().sin().pow(Expr::constant(2.0));
    let cos2 = Expr::var().cos().pow(Expr::constant(2.0));
    let mut b1 = MatrixFunction::scalar_times(&sin2, &c);
    let mut b2 = MatrixFunction::scalar_times(&cos2, &c);
    if declared {
        a = a.with_declared_sup(0.01);
        b1 = b1.with_declared_sup(0.5);
        b2 = b2.with_declared_sup(0.5);
    }
    let terms = vec![
        DelayTerm {
            coeff: b1,
            delay: DelayArg::new(parse("t - 0.1*abs(sin(t))").expect("literal"), 0.1),
        },
        DelayTerm {
            coeff: b2,
            delay: DelayArg::new(parse("t - 0.1*abs(cos(t))").expect("literal"), 0.1),
        },
    ];
    let sys = NeutralSystem::new(0.0, a, DelayArg::constant(0.1), terms, None).expect("well formed");
    if declared {
        sys.with_declarations(Declarations {
            b_sum_sup: Some(0.5),
            mu_b_sup: Some(-0.3),
            mu_p_sup: Some(RateBound::new("-0.3 + lambda*exp(lambda*0.1)*0.01 + lambda", Default::default())),
            domination: None,
        })
    } else {
        sys
    }
}

/// Scalar ẋ − 0.1ν sin t·ẋ(t − 0.5) = −ν(1 − 3cos t)x(t) − ν(1 + 3cos t)x(t − 1).
pub fn example410(nu: f64) -> NeutralSystem {
    let scalar = |e: Expr| MatrixFunction::new(1, vec![e]).expect("1x1");
    let cos = Expr::var().cos();
    let a = scalar(0.1 * nu * Expr::var().sin());
    let b1 = scalar(-nu * (1.0 - 3.0 * cos.clone()));
    let b2 = scalar(-nu * (1.0 + 3.0 * cos));
    let terms = vec![
        DelayTerm { coeff: b1, delay: DelayArg::none() },
        DelayTerm { coeff: b2, delay: DelayArg::constant(1.0) },
    ];
    NeutralSystem::new(0.0, a, DelayArg::constant(0.5), terms, None).expect("well formed")
}
