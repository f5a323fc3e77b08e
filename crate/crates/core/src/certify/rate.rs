use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::matfun::{Mat, NormKind, Sampling};
use crate::model::{effective_delay_bounds, NeutralSystem, DECLARED_TOL};

use super::grid::Grid;
use super::{Certificate, CertifyError, Constant, ExponentialBound, RouteCheck, TestId, BLOCKED_PREFIX};

/// P(t) = Σ e^{λ(t−h_k(t))}B_k(t) − λe^{λ(t−g(t))}A(t) + λE.
pub fn build_p(sys: &NeutralSystem, lambda: f64, t: f64) -> Result<Mat, CertifyError> {
    let delay = |what: String, arg: &crate::exprlang::Expr| {
        arg.eval(t).map(|h| t - h).map_err(|source| CertifyError::Delay { what, source })
    };
    let mut p = Mat::identity(sys.dim()).scale(lambda);
    for (k, term) in sys.terms().iter().enumerate() {
        let d = delay(format!("h{}", k + 1), &term.delay.arg)?;
        p.add_scaled((lambda * d).exp(), &term.coeff.eval(t)?);
    }
    let d = delay("g".into(), &sys.g().arg)?;
    p.add_scaled(-lambda * (lambda * d).exp(), &sys.a().eval(t)?);
    Ok(p)
}

/// Rate-based test at a fixed λ with two routes: `m1` (denominator
/// 1 − e^{λσ}‖A‖) and `m2` (denominator 1 − (1+λσ)e^{λσ}‖A‖ − Στ_k e^{λτ_k}‖B_k‖).
/// M0 = (1 − min certified M)⁻¹.
pub fn certify_with_rate(sys: &NeutralSystem, lambda: f64, norm: NormKind, sampling: &Sampling) -> Result<Certificate, CertifyError> {
    certify_with_rate_on(&Grid::new(sys, norm, sampling)?, lambda)
}

pub(crate) fn certify_with_rate_on(grid: &Grid, lambda: f64) -> Result<Certificate, CertifyError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(CertifyError::InvalidRate(lambda));
    }
    let sys = grid.system();
    let m = sys.terms().len();
    let bounds = effective_delay_bounds(sys);
    let mut c = BTreeMap::new();
    let mut notes = Vec::new();
    let mut blocked = false;

    c.insert("lambda".to_string(), Constant::declared(lambda));
    c.insert("sigma".to_string(), Constant::declared(bounds.sigma));
    let a = grid.sup_a();
    let mut sampled_used = a.is_sampled();
    let a_sup = a.value;
    c.insert("A_sup".to_string(), a);
    let mut b_sup = Vec::with_capacity(m);
    for k in 0..m {
        let b = grid.sup_term(k);
        sampled_used |= b.is_sampled();
        b_sup.push(b.value);
        c.insert(format!("B{}_sup", k + 1), b);
        c.insert(format!("tau{}", k + 1), Constant::declared(bounds.tau[k]));
    }

    let mu = grid.mu_p(lambda);
    let mu_sampled = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    c.insert("mu_P_sampled".to_string(), Constant::sampled(mu_sampled, grid.sampling()));
    let declared_mu = match &sys.declared.mu_p_sup {
        Some(rb) => {
            let d = rb.at(lambda)?;
            if mu_sampled > d + DECLARED_TOL {
                blocked = true;
                notes.push(format!("{BLOCKED_PREFIX}: sampled sup μ(P) = {mu_sampled} exceeds declared bound {d}"));
            }
            c.insert("mu_P_sup".to_string(), Constant::declared(d));
            Some(d)
        }
        None => {
            sampled_used = true;
            c.insert("mu_P_sup".to_string(), Constant::sampled(mu_sampled, grid.sampling()));
            None
        }
    };
    let beta = -declared_mu.unwrap_or(mu_sampled);
    c.insert("beta".to_string(), Constant::computed(beta, &["mu_P_sup"]));

    // sup of the pointwise quotients ‖X(t)/μ(P(t))‖
    let quotient = |name: &str, sup: f64, mats: &[Mat]| -> Constant {
        if beta <= 0.0 {
            Constant::computed(f64::INFINITY, &[name, "beta"])
        } else if declared_mu.is_some() {
            Constant::computed(sup / beta, &[name, "beta"])
        } else {
            let v = grid.ratio_sup(mats, &mu).unwrap_or(f64::INFINITY);
            Constant::sampled(v, grid.sampling())
        }
    };
    let q_a = quotient("A_sup", a_sup, grid.a());
    let q_a_value = q_a.value;
    c.insert("A_over_mu_P".to_string(), q_a);
    let mut q_b = Vec::with_capacity(m);
    for (k, &b) in b_sup.iter().enumerate() {
        let q = quotient(&format!("B{}_sup", k + 1), b, grid.term(k));
        q_b.push(q.value);
        c.insert(format!("B{}_over_mu_P", k + 1), q);
    }

    let ls = (lambda * bounds.sigma).exp();
    let ea = ls * a_sup;
    let numerator = lambda + (0..m).map(|k| (lambda * bounds.tau[k]).exp() * b_sup[k]).sum::<f64>() + lambda * ea;
    let bracket = q_a_value * (1.0 + lambda * bounds.sigma) * ls
        + (0..m).map(|k| q_b[k] * (lambda * bounds.tau[k]).exp() * bounds.tau[k]).sum::<f64>();
    let s_neutral = (1.0 + lambda * bounds.sigma) * ls * a_sup
        + (0..m).map(|k| bounds.tau[k] * (lambda * bounds.tau[k]).exp() * b_sup[k]).sum::<f64>();
    let ratio = |den: f64| if den > 0.0 { numerator / den * bracket } else { f64::INFINITY };
    let m1 = ratio(1.0 - ea);
    let m2 = ratio(1.0 - s_neutral);

    let sups: Vec<String> = std::iter::once("A_sup".to_string()).chain((1..=m).map(|k| format!("B{k}_sup"))).collect();
    c.insert("exp_rate_A".to_string(), Constant::computed(ea, &["lambda", "sigma", "A_sup"]));
    c.insert("weighted_delay_sum".to_string(), Constant::computed(s_neutral, &sups));
    c.insert("numerator".to_string(), Constant::computed(numerator, &sups));
    c.insert("bracket".to_string(), Constant::computed(bracket, &["A_over_mu_P", "B_k_over_mu_P"]));
    c.insert("M1".to_string(), Constant::computed(m1, &["numerator", "exp_rate_A", "bracket"]));
    c.insert("M2".to_string(), Constant::computed(m2, &["numerator", "weighted_delay_sum", "bracket"]));

    let mut specializations = Vec::new();
    if m == 1 {
        c.insert("M3".to_string(), Constant::computed(m1, &["M1"]));
        specializations.push("cor31".to_string());
    }
    if sys.is_delay_only() {
        c.insert("M4".to_string(), Constant::computed(m1, &["M1"]));
        specializations.push("cor32".to_string());
    }

    let routes = vec![
        RouteCheck::new("m1", m1, 1.0, &[beta, 1.0 - ea]),
        RouteCheck::new("m2", m2, 1.0, &[beta, 1.0 - s_neutral]),
    ];
    if beta <= 0.0 {
        notes.push(format!("μ(P) is not negative on the grid (sup {})", -beta));
    }
    let mut cert = Certificate::decide(TestId::Thm31, c, routes, sampled_used, notes, blocked);
    if cert.is_certified() {
        let best = cert
            .routes
            .iter()
            .filter(|r| r.certified)
            .min_by(|a, b| a.lhs.total_cmp(&b.lhs))
            .expect("certified has a route");
        let (m, name) = (best.lhs, best.name.clone());
        cert.constants.insert("M0".to_string(), Constant::computed(1.0 / (1.0 - m), &[name.as_str()]));
        cert.route = Some(name);
    }
    cert.lambda = Some(lambda);
    cert.specializations = specializations;
    Ok(cert)
}

/// Coefficients of the exponential bound realized by a certified rate-based
/// certificate.
pub fn solution_bound(sys: &NeutralSystem, cert: &Certificate) -> Result<ExponentialBound, CertifyError> {
    let lambda = cert.lambda.ok_or(CertifyError::NotRateBased(cert.test_id))?;
    if !cert.is_certified() {
        return Err(CertifyError::NotCertified(cert.test_id));
    }
    let m0 = cert.constant("M0").ok_or(CertifyError::NotCertified(cert.test_id))?;
    let a = cert.constant("A_sup").ok_or(CertifyError::NotRateBased(cert.test_id))?;
    let bounds = effective_delay_bounds(sys);
    let scale = lambda * (1.0 - a);
    let c_phi = (0..sys.terms().len())
        .map(|k| {
            let b = cert.constant(&format!("B{}_sup", k + 1)).ok_or(CertifyError::NotRateBased(cert.test_id))?;
            Ok(((lambda * bounds.tau[k]).exp_m1()) * b / scale)
        })
        .collect::<Result<Vec<_>, CertifyError>>()?;
    Ok(ExponentialBound {
        lambda,
        m0,
        c_x0: 1.0,
        c_psi: (lambda * bounds.sigma).exp_m1() * a / scale,
        c_phi,
        c_f: m0 / scale,
    })
}

/// Log-uniform λ grid on [λ_max·1e−4, λ_max] followed by bisection of the
/// bracket above the largest certified grid rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSearch {
    pub lambda_max: f64,
    pub grid_points: usize,
    pub tolerance: f64,
}

impl Default for RateSearch {
    fn default() -> Self {
        RateSearch {
            lambda_max: 1.0,
            grid_points: 41,
            tolerance: 1e-6,
        }
    }
}

impl RateSearch {
    pub fn rates(&self) -> Vec<f64> {
        let n = self.grid_points.max(2);
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.lambda_max
                } else {
                    self.lambda_max * 10f64.powf(-4.0 + 4.0 * i as f64 / (n - 1) as f64)
                }
            })
            .collect()
    }
}

/// Largest certifiable decay rate with its certificate and bound.
pub fn max_decay_rate(
    sys: &NeutralSystem,
    norm: NormKind,
    sampling: &Sampling,
    search: RateSearch,
) -> Result<(f64, Certificate, ExponentialBound), CertifyError> {
    max_decay_rate_by(sys, norm, sampling, search, |c| c.clone())
}

/// As [`max_decay_rate`], judging each rate by `view` of the certificate,
/// e.g. a single-route restriction.
pub fn max_decay_rate_by<V>(
    sys: &NeutralSystem,
    norm: NormKind,
    sampling: &Sampling,
    search: RateSearch,
    view: V,
) -> Result<(f64, Certificate, ExponentialBound), CertifyError>
where
    V: Fn(&Certificate) -> Certificate + Sync,
{
    if !(search.lambda_max.is_finite() && search.lambda_max > 0.0) {
        return Err(CertifyError::InvalidRate(search.lambda_max));
    }
    let grid = Grid::new(sys, norm, sampling)?;
    let rates = search.rates();
    let verdicts = rates
        .par_iter()
        .map(|&l| certify_with_rate_on(&grid, l).map(|c| view(&c).is_certified()))
        .collect::<Result<Vec<bool>, CertifyError>>()?;
    let best = verdicts
        .iter()
        .rposition(|&ok| ok)
        .ok_or(CertifyError::NoCertifiableRate { lambda_max: search.lambda_max })?;
    let mut lo = rates[best];
    if let Some(&hi0) = rates.get(best + 1) {
        let mut hi = hi0;
        while hi - lo > search.tolerance {
            let mid = 0.5 * (lo + hi);
            if view(&certify_with_rate_on(&grid, mid)?).is_certified() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let cert = view(&certify_with_rate_on(&grid, lo)?);
    let bound = solution_bound(sys, &cert)?;
    Ok((lo, cert, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{example2, example410};
    use crate::certify::{Provenance, Verdict};
    use crate::matfun::MatrixFunction;
    use crate::model::{DelayArg, DelayTerm};
    use std::f64::consts::PI;

    fn period() -> Sampling {
        Sampling::new(0.0, 2.0 * PI, 2001).unwrap()
    }

    fn scalar(v: f64) -> MatrixFunction {
        MatrixFunction::constant(&Mat::from_rows(&[vec![v]]))
    }

    fn decay_only() -> NeutralSystem {
        NeutralSystem::new(0.0, scalar(0.0), DelayArg::none(), vec![DelayTerm { coeff: scalar(-1.0), delay: DelayArg::none() }], None).unwrap()
    }

    #[test]
    fn build_p_examples() {
        let sys = example2(4, false);
        assert_eq!(build_p(&sys, 0.0, 1.1).unwrap(), sys.b_sum(1.1).unwrap());
        assert_eq!(build_p(&decay_only(), 0.5, 3.0).unwrap(), Mat::from_rows(&[vec![-0.5]]));
    }

    #[test]
    fn example2_declared_reproduces_published_constants() {
        let cert = certify_with_rate(&example2(4, true), 0.06, NormKind::Inf, &period()).unwrap();
        assert_eq!(cert.verdict, Verdict::Certified);
        assert!(!cert.grid_certified);
        assert!((cert.constant("mu_P_sup").unwrap() + 0.23939638917836753).abs() < 1e-12);
        assert!((cert.constant("M1").unwrap() - 0.4983325775521364).abs() < 1e-12);
        assert!((cert.constant("M0").unwrap() - 1.9933524786611514).abs() < 1e-12);
        assert_eq!(cert.route.as_deref(), Some("m1"));
        assert_eq!(cert.constants["A_over_mu_P"].provenance, Provenance::Computed { from: vec!["A_sup".into(), "beta".into()] });
        let sampled = cert.constant("mu_P_sampled").unwrap();
        assert!((sampled + 0.24089318896145578).abs() < 1e-9);
    }

    #[test]
    fn example2_sampled_is_grid_certified() {
        let cert = certify_with_rate(&example2(4, false), 0.06, NormKind::Inf, &period()).unwrap();
        assert!(cert.is_certified());
        assert!(cert.grid_certified);
        assert!((cert.constant("mu_P_sup").unwrap() + 0.24089318896145578).abs() < 1e-9);
        assert!((cert.constant("M1").unwrap() - 0.49398).abs() < 1e-5);
    }

    #[test]
    fn example2_fast_rate_fails() {
        let cert = certify_with_rate(&example2(4, true), 5.0, NormKind::Inf, &period()).unwrap();
        assert_eq!(cert.verdict, Verdict::NotCertified);
        assert!(cert.margin.unwrap() <= 0.0);
        assert!(cert.constant("M0").is_none());
    }

    #[test]
    fn delay_free_scalar_has_unit_constant() {
        let s = Sampling::new(0.0, 10.0, 101).unwrap();
        let cert = certify_with_rate(&decay_only(), 0.5, NormKind::Inf, &s).unwrap();
        assert!(cert.is_certified());
        assert_eq!(cert.constant("M4"), Some(0.0));
        assert_eq!(cert.constant("M3"), Some(0.0));
        assert_eq!(cert.constant("M0"), Some(1.0));
        assert_eq!(cert.specializations, vec!["cor31", "cor32"]);
        let b = solution_bound(&decay_only(), &cert).unwrap();
        assert_eq!(b.c_psi, 0.0);
        assert_eq!(b.c_phi, vec![0.0]);
    }

    #[test]
    fn example2_bound_coefficients() {
        let sys = example2(4, true);
        let cert = certify_with_rate(&sys, 0.06, NormKind::Inf, &period()).unwrap();
        let b = solution_bound(&sys, &cert).unwrap();
        assert!((b.c_psi - 0.0010131373828392127).abs() < 1e-15);
        assert!((b.c_phi_sum() - 0.10131373828392128).abs() < 1e-14);
        assert!((b.c_f - 33.558122536383024).abs() < 1e-10);
        assert!((b.c_psi - 0.00102).abs() / 0.00102 < 0.01);
        assert!((b.c_phi_sum() - 0.102).abs() / 0.102 < 0.01);
        assert!((b.c_f - 33.6).abs() / 33.6 < 0.01);
    }

    #[test]
    fn bound_needs_certified_rate_certificate() {
        let sys = example2(4, true);
        let cert = certify_with_rate(&sys, 5.0, NormKind::Inf, &period()).unwrap();
        assert!(matches!(solution_bound(&sys, &cert), Err(CertifyError::NotCertified(_))));
        assert!(matches!(certify_with_rate(&sys, 0.0, NormKind::Inf, &period()), Err(CertifyError::InvalidRate(_))));
    }

    #[test]
    fn violated_rate_declaration_blocks() {
        let mut sys = example2(3, true);
        sys.declared.mu_p_sup = Some(crate::model::RateBound::new("-0.5", Default::default()));
        let cert = certify_with_rate(&sys, 0.06, NormKind::Inf, &period()).unwrap();
        assert_eq!(cert.verdict, Verdict::NotCertified);
        assert!(cert.notes.iter().any(|n| n.starts_with(BLOCKED_PREFIX)));
    }

    #[test]
    fn optimal_rate_delay_free() {
        let s = Sampling::new(0.0, 10.0, 101).unwrap();
        let (l, cert, _) = max_decay_rate(&decay_only(), NormKind::Inf, &s, RateSearch::default()).unwrap();
        assert!((l - 1.0).abs() <= 1.1e-6, "{l}");
        assert!(cert.is_certified());
    }

    #[test]
    fn optimal_rate_example2() {
        let (l, cert, bound) = max_decay_rate(&example2(4, true), NormKind::Inf, &period(), RateSearch::default()).unwrap();
        assert!(l >= 0.06, "{l}");
        assert!(cert.is_certified());
        assert_eq!(bound.lambda, l);
    }

    #[test]
    fn optimal_rate_absent() {
        let r = max_decay_rate(&example410(0.2), NormKind::Inf, &period(), RateSearch::default());
        assert!(matches!(r, Err(CertifyError::NoCertifiableRate { .. })));
    }

    #[test]
    fn restriction_recomputes_constant() {
        let cert = certify_with_rate(&example2(4, true), 0.06, NormKind::Inf, &period()).unwrap();
        let second = cert.restricted_to("m2", TestId::Thm31a);
        assert_eq!(second.test_id, TestId::Thm31a);
        assert_eq!(second.routes.len(), 1);
        if second.is_certified() {
            let m2 = cert.constant("M2").unwrap();
            assert!((second.constant("M0").unwrap() - 1.0 / (1.0 - m2)).abs() < 1e-15);
        }
    }
}
