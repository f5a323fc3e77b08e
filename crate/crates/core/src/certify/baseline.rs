use std::collections::BTreeMap;

use crate::matfun::{matrix_measure, NormKind, Sampling};
use crate::model::NeutralSystem;

use super::grid::Grid;
use super::rate_free::mu_b;
use super::{Certificate, CertifyError, Constant, RouteCheck, TestId};

/// Positions of the non-delayed term A_0 (declared delay bound 0) and the
/// delayed term A_2 in ẋ − A_1ẋ(H_1) = A_0x + A_2x(H_2). Either may be absent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NondelayShape {
    pub a0: Option<usize>,
    pub a2: Option<usize>,
    pub h2: f64,
}

impl NondelayShape {
    pub fn detect(sys: &NeutralSystem) -> Result<Self, String> {
        let mut a0 = None;
        let mut a2 = None;
        for (k, term) in sys.terms().iter().enumerate() {
            let slot = if term.delay.bound == 0.0 { &mut a0 } else { &mut a2 };
            if slot.replace(k).is_some() {
                return Err(format!(
                    "expected at most one non-delayed and one delayed term, found a second {} term",
                    if term.delay.bound == 0.0 { "non-delayed" } else { "delayed" }
                ));
            }
        }
        let h2 = a2.map_or(0.0, |k| sys.terms()[k].delay.bound);
        Ok(NondelayShape { a0, a2, h2 })
    }
}

/// Norms shared by the non-delay-form tests and the constant-coefficient baselines.
struct Parts {
    a0: f64,
    a1: f64,
    a2: f64,
    a0_plus_a2: f64,
    mu_a0: f64,
    h2: f64,
}

fn parts(grid: &Grid, shape: NondelayShape, c: &mut BTreeMap<String, Constant>) -> (Parts, bool) {
    let mut sampled = false;
    let mut term_sup = |slot: Option<usize>, name: &str, c: &mut BTreeMap<String, Constant>| match slot {
        Some(k) => {
            let v = grid.sup_term(k);
            sampled |= v.is_sampled();
            let value = v.value;
            c.insert(name.to_string(), v);
            value
        }
        None => {
            c.insert(name.to_string(), Constant::computed(0.0, &["absent term"]));
            0.0
        }
    };
    let a0 = term_sup(shape.a0, "A0_sup", c);
    let a2 = term_sup(shape.a2, "A2_sup", c);
    let a1c = grid.sup_a();
    sampled |= a1c.is_sampled();
    let a1 = a1c.value;
    c.insert("A1_sup".to_string(), a1c);
    let sum = grid.sup_b_sum();
    sampled |= sum.is_sampled();
    let a0_plus_a2 = sum.value;
    c.insert("A0_plus_A2_sup".to_string(), sum);
    let mu_a0 = match shape.a0 {
        Some(k) => grid.term(k).iter().map(|x| matrix_measure(x, grid.norm())).fold(f64::NEG_INFINITY, f64::max),
        None => 0.0,
    };
    c.insert("mu_A0_sup".to_string(), Constant::sampled(mu_a0, grid.sampling()));
    c.insert("h2".to_string(), Constant::declared(shape.h2));
    (Parts { a0, a1, a2, a0_plus_a2, mu_a0, h2: shape.h2 }, sampled)
}

/// The two non-delay-form conditions with μ(A_0 + A_2) ≤ −β:
///
/// ```text
/// sum_of_norms:  ‖A_1‖ < 1,  −β + (‖A_0‖ + ‖A_2‖)(‖A_1‖ + h_2‖A_2‖)/(1 − ‖A_1‖) < 0
/// norm_of_sum:   s = ‖A_1‖ + h_2‖A_2‖ < 1,  −β + ‖A_0 + A_2‖ s/(1 − s) < 0
/// ```
pub fn certify_nondelay_form(sys: &NeutralSystem, norm: NormKind, sampling: &Sampling) -> Result<Certificate, CertifyError> {
    let shape = match NondelayShape::detect(sys) {
        Ok(s) => s,
        Err(reason) => return Ok(Certificate::inapplicable(TestId::Cor41, reason, shape_constants(sys))),
    };
    let grid = Grid::new(sys, norm, sampling)?;
    let mut c = BTreeMap::new();
    let mut notes = Vec::new();
    let (mu, blocked) = mu_b(&grid, &mut c, &mut notes);
    let (p, sampled) = parts(&grid, shape, &mut c);
    let beta = mu.beta;

    let s = p.a1 + p.h2 * p.a2;
    let lhs1 = if p.a1 < 1.0 { -beta + (p.a0 + p.a2) * s / (1.0 - p.a1) } else { f64::INFINITY };
    let lhs2 = if s < 1.0 { -beta + p.a0_plus_a2 * s / (1.0 - s) } else { f64::INFINITY };
    c.insert("lhs_sum_of_norms".to_string(), Constant::computed(lhs1, &["beta", "A0_sup", "A1_sup", "A2_sup", "h2"]));
    c.insert("lhs_norm_of_sum".to_string(), Constant::computed(lhs2, &["beta", "A0_plus_A2_sup", "A1_sup", "A2_sup", "h2"]));
    let routes = vec![
        RouteCheck::new("sum_of_norms", lhs1, 0.0, &[beta, 1.0 - p.a1]),
        RouteCheck::new("norm_of_sum", lhs2, 0.0, &[beta, 1.0 - s]),
    ];
    Ok(Certificate::decide(TestId::Cor41, c, routes, sampled || !mu.declared, notes, blocked))
}

fn shape_constants(sys: &NeutralSystem) -> BTreeMap<String, Constant> {
    let mut c = BTreeMap::new();
    c.insert("m".to_string(), Constant::declared(sys.terms().len() as f64));
    let nondelayed = sys.terms().iter().filter(|t| t.delay.bound == 0.0).count();
    c.insert("nondelayed_terms".to_string(), Constant::declared(nondelayed as f64));
    c
}

/// Applicability of the constant-coefficient baselines: constant matrices and
/// constant delays on the grid.
fn constant_shape(grid: &Grid) -> Result<(), String> {
    if !grid.coefficients_constant() {
        return Err("requires constant coefficients".into());
    }
    if !grid.system().is_delay_only() && grid.constant_g_delay().is_none() {
        return Err("requires a constant neutral delay".into());
    }
    if let Some(k) = (0..grid.system().terms().len()).find(|&k| grid.constant_delay(k).is_none()) {
        return Err(format!("requires constant delays, h{} is variable", k + 1));
    }
    Ok(())
}

const PROP1_NOTE: &str = "as printed this condition cannot hold for an induced norm: |μ(A0)| ≤ ‖A0‖ makes μ(A0) + ‖A0‖/(1 − ‖A1‖) ≥ 0; \
the variant flag replaces ‖A0‖ by ‖A2‖ in the numerator";

/// Constant-coefficient baselines for ẋ − A_1ẋ(t − h_1) = A_0x + A_2x(t − h_2):
///
/// ```text
/// prop1:  ‖A_1‖ < 1,  μ(A_0) + (‖A_0‖ + ‖A_1‖‖A_2‖)/(1 − ‖A_1‖) < 0
/// prop2:  s = ‖A_1‖ + h_2‖A_2‖ < 1,  μ(A_0 + A_2) + ‖A_0 + A_2‖ s/(1 − s) < 0
/// ```
///
/// With `prop1_variant` the first numerator uses ‖A_2‖ in place of ‖A_0‖.
pub fn baseline_km_neutral(
    sys: &NeutralSystem,
    norm: NormKind,
    sampling: &Sampling,
    prop1_variant: bool,
) -> Result<(Certificate, Certificate), CertifyError> {
    let inapplicable = |reason: &str| {
        let c = shape_constants(sys);
        (
            Certificate::inapplicable(TestId::Prop1, reason, c.clone()),
            Certificate::inapplicable(TestId::Prop2, reason, c),
        )
    };
    let shape = match NondelayShape::detect(sys) {
        Ok(s) => s,
        Err(reason) => return Ok(inapplicable(&reason)),
    };
    let grid = Grid::new(sys, norm, sampling)?;
    if let Err(reason) = constant_shape(&grid) {
        return Ok(inapplicable(&reason));
    }
    let mut c = BTreeMap::new();
    let mut notes = Vec::new();
    let (mu, blocked) = mu_b(&grid, &mut c, &mut notes);
    let (p, sampled) = parts(&grid, shape, &mut c);
    let grid_flag = sampled || !mu.declared;

    let mut c1 = c.clone();
    let first = if prop1_variant { p.a2 } else { p.a0 };
    let lhs1 = if p.a1 < 1.0 { p.mu_a0 + (first + p.a1 * p.a2) / (1.0 - p.a1) } else { f64::INFINITY };
    c1.insert("lhs".to_string(), Constant::computed(lhs1, &["mu_A0_sup", if prop1_variant { "A2_sup" } else { "A0_sup" }, "A1_sup", "A2_sup"]));
    let mut notes1 = notes.clone();
    notes1.push(PROP1_NOTE.to_string());
    if prop1_variant {
        notes1.push("variant: ‖A2‖ in place of ‖A0‖ in the numerator".to_string());
    }
    let prop1 = Certificate::decide(
        TestId::Prop1,
        c1,
        vec![RouteCheck::new("condition", lhs1, 0.0, &[1.0 - p.a1])],
        grid_flag,
        notes1,
        blocked,
    );

    let s = p.a1 + p.h2 * p.a2;
    let lhs2 = if s < 1.0 { -mu.beta + p.a0_plus_a2 * s / (1.0 - s) } else { f64::INFINITY };
    let mut c2 = c;
    c2.insert("lhs".to_string(), Constant::computed(lhs2, &["mu_B_sup", "A0_plus_A2_sup", "A1_sup", "A2_sup", "h2"]));
    let prop2 = Certificate::decide(
        TestId::Prop2,
        c2,
        vec![RouteCheck::new("condition", lhs2, 0.0, &[1.0 - s])],
        grid_flag,
        notes,
        blocked,
    );
    Ok((prop1, prop2))
}

/// Baseline for ẋ = B(t)x(t − h) with constant h: h·sup‖B‖² < inf|μ(B)|,
/// with μ(B(t)) ≤ −β < 0.
pub fn baseline_km_delay(sys: &NeutralSystem, norm: NormKind, sampling: &Sampling) -> Result<Certificate, CertifyError> {
    let reject = |reason: &str| Ok(Certificate::inapplicable(TestId::Prop3, reason, shape_constants(sys)));
    if !sys.is_delay_only() {
        return reject("requires A ≡ 0");
    }
    if sys.terms().len() != 1 {
        return reject("requires a single delayed term");
    }
    let grid = Grid::new(sys, norm, sampling)?;
    let Some(h) = grid.constant_delay(0) else {
        return reject("requires a constant delay");
    };
    let mut c = BTreeMap::new();
    let mut notes = Vec::new();
    let (mu, blocked) = mu_b(&grid, &mut c, &mut notes);
    let b = grid.sup_term(0);
    let sampled = b.is_sampled() || !mu.declared;
    let lhs = h * b.value * b.value;
    c.insert("B1_sup".to_string(), b);
    c.insert("h".to_string(), Constant::sampled(h, grid.sampling()));
    c.insert("lhs".to_string(), Constant::computed(lhs, &["h", "B1_sup"]));
    Ok(Certificate::decide(
        TestId::Prop3,
        c,
        vec![RouteCheck::new("condition", lhs, mu.beta, &[mu.beta])],
        sampled,
        notes,
        blocked,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::Verdict;
    use crate::exprlang::parse;
    use crate::matfun::{Mat, MatrixFunction};
    use crate::model::{DelayArg, DelayTerm};

    fn s(v: f64) -> MatrixFunction {
        MatrixFunction::constant(&Mat::from_rows(&[vec![v]]))
    }

    fn window() -> Sampling {
        Sampling::new(0.0, 10.0, 201).unwrap()
    }

    fn nondelay(a0: f64, a1: f64, a2: f64, h2: f64) -> NeutralSystem {
        NeutralSystem::new(
            0.0,
            s(a1),
            DelayArg::constant(0.3),
            vec![
                DelayTerm { coeff: s(a0), delay: DelayArg::none() },
                DelayTerm { coeff: s(a2), delay: DelayArg::constant(h2) },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn nondelay_form_example() {
        let cert = certify_nondelay_form(&nondelay(-2.0, 0.1, 0.5, 0.2), NormKind::Inf, &window()).unwrap();
        assert!(cert.is_certified());
        assert!((cert.route_check("norm_of_sum").unwrap().lhs + 1.125).abs() < 1e-14);
    }

    #[test]
    fn nondelay_form_large_neutral_coefficient() {
        let cert = certify_nondelay_form(&nondelay(-2.0, 1.2, 0.5, 0.2), NormKind::Inf, &window()).unwrap();
        assert_eq!(cert.verdict, Verdict::NotCertified);
    }

    #[test]
    fn nondelay_form_without_delayed_term() {
        let sys = NeutralSystem::new(0.0, s(0.2), DelayArg::constant(0.3), vec![DelayTerm { coeff: s(-1.0), delay: DelayArg::none() }], None).unwrap();
        let cert = certify_nondelay_form(&sys, NormKind::Inf, &window()).unwrap();
        let expected = -1.0 + 1.0 * 0.2 / 0.8;
        assert!((cert.route_check("sum_of_norms").unwrap().lhs - expected).abs() < 1e-15);
        assert!(cert.is_certified());
    }

    #[test]
    fn nondelay_form_shape_mismatch() {
        let sys = NeutralSystem::new(
            0.0,
            s(0.0),
            DelayArg::none(),
            vec![
                DelayTerm { coeff: s(-1.0), delay: DelayArg::constant(0.1) },
                DelayTerm { coeff: s(-1.0), delay: DelayArg::constant(0.2) },
            ],
            None,
        )
        .unwrap();
        let cert = certify_nondelay_form(&sys, NormKind::Inf, &window()).unwrap();
        assert_eq!(cert.verdict, Verdict::Inapplicable);
    }

    #[test]
    fn propositions() {
        let sys = nondelay(-2.0, 0.1, 0.3, 0.2);
        let (p1, p2) = baseline_km_neutral(&sys, NormKind::Inf, &window(), false).unwrap();
        assert_eq!(p1.verdict, Verdict::NotCertified);
        assert!((p1.constant("lhs").unwrap() - (-2.0 + 2.03 / 0.9)).abs() < 1e-14);
        assert!(p1.notes.iter().any(|n| n.contains("cannot hold")));
        assert!(p2.is_certified());
        assert!((p2.constant("lhs").unwrap() - (-1.7 + 1.7 * 0.16 / 0.84)).abs() < 1e-14);

        let (v1, _) = baseline_km_neutral(&sys, NormKind::Inf, &window(), true).unwrap();
        assert!(v1.is_certified());
        assert!((v1.constant("lhs").unwrap() - (-2.0 + 0.33 / 0.9)).abs() < 1e-14);

        let boundary = nondelay(-1.0, 0.0, 0.0, 0.2);
        let (p1, _) = baseline_km_neutral(&boundary, NormKind::Inf, &window(), false).unwrap();
        assert_eq!(p1.verdict, Verdict::NotCertified);
        assert_eq!(p1.constant("lhs"), Some(0.0));
    }

    #[test]
    fn propositions_need_constant_data() {
        let sys = NeutralSystem::new(
            0.0,
            s(0.1),
            DelayArg::constant(0.3),
            vec![
                DelayTerm { coeff: MatrixFunction::new(1, vec![parse("-2 + 0.1*sin(t)").unwrap()]).unwrap(), delay: DelayArg::none() },
                DelayTerm { coeff: s(0.3), delay: DelayArg::constant(0.2) },
            ],
            None,
        )
        .unwrap();
        let (p1, p2) = baseline_km_neutral(&sys, NormKind::Inf, &window(), false).unwrap();
        assert_eq!(p1.verdict, Verdict::Inapplicable);
        assert_eq!(p2.verdict, Verdict::Inapplicable);
    }

    fn pure_delay(h: DelayArg) -> NeutralSystem {
        let minus_e = MatrixFunction::constant(&Mat::identity(2).scale(-1.0));
        NeutralSystem::new(0.0, MatrixFunction::zeros(2), DelayArg::none(), vec![DelayTerm { coeff: minus_e, delay: h }], None).unwrap()
    }

    #[test]
    fn delay_baseline() {
        assert!(baseline_km_delay(&pure_delay(DelayArg::constant(0.5)), NormKind::Inf, &window()).unwrap().is_certified());
        let long = baseline_km_delay(&pure_delay(DelayArg::constant(1.5)), NormKind::Inf, &window()).unwrap();
        assert_eq!(long.verdict, Verdict::NotCertified);
        let variable = pure_delay(DelayArg::new(parse("t - 0.5*abs(sin(t))").unwrap(), 0.5));
        let cert = baseline_km_delay(&variable, NormKind::Inf, &window()).unwrap();
        assert_eq!(cert.verdict, Verdict::Inapplicable);
    }
}
