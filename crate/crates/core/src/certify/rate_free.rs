use std::collections::BTreeMap;

use crate::matfun::{matrix_norm, Mat, NormKind, Sampling};
use crate::model::{effective_delay_bounds, NeutralSystem, DECLARED_TOL};

use super::grid::Grid;
use super::{Certificate, CertifyError, Constant, RouteCheck, TestId, BLOCKED_PREFIX};

/// β = −sup μ(ΣB_k), declared if available, with the sampled values kept for
/// pointwise quotients.
pub(crate) struct MuB {
    pub beta: f64,
    pub declared: bool,
    pub samples: Vec<f64>,
}

pub(crate) fn mu_b(grid: &Grid, c: &mut BTreeMap<String, Constant>, notes: &mut Vec<String>) -> (MuB, bool) {
    let samples = grid.mu_b();
    let sampled_sup = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    c.insert("mu_B_sampled".to_string(), Constant::sampled(sampled_sup, grid.sampling()));
    let mut blocked = false;
    let (sup, declared) = match grid.system().declared.mu_b_sup {
        Some(d) => {
            if sampled_sup > d + DECLARED_TOL {
                blocked = true;
                notes.push(format!("{BLOCKED_PREFIX}: sampled sup μ(B) = {sampled_sup} exceeds declared bound {d}"));
            }
            c.insert("mu_B_sup".to_string(), Constant::declared(d));
            (d, true)
        }
        None => {
            c.insert("mu_B_sup".to_string(), Constant::sampled(sampled_sup, grid.sampling()));
            (sampled_sup, false)
        }
    };
    c.insert("beta".to_string(), Constant::computed(-sup, &["mu_B_sup"]));
    if sup >= 0.0 {
        notes.push(format!("μ(B) is not negative (sup {sup})"));
    }
    (MuB { beta: -sup, declared, samples }, blocked)
}

/// sup ‖X(t)/μ(B(t))‖: sup‖X‖/β under a declared μ bound, else pointwise on the grid.
fn quotient(grid: &Grid, mu: &MuB, sup_name: &str, sup: f64, mats: &[Mat]) -> Constant {
    if mu.beta <= 0.0 {
        Constant::computed(f64::INFINITY, &[sup_name, "beta"])
    } else if mu.declared {
        Constant::computed(sup / mu.beta, &[sup_name, "beta"])
    } else {
        Constant::sampled(grid.ratio_sup(mats, &mu.samples).unwrap_or(f64::INFINITY), grid.sampling())
    }
}

/// Rate-free test with routes `sum_of_norms`
///
/// ```text
/// Σ‖B_k‖/(1 − ‖A‖) · (‖A/μ(B)‖ + Σ τ_k‖B_k/μ(B)‖) < 1
/// ```
///
/// and `norm_of_sum`
///
/// ```text
/// ‖B‖/(1 − ‖A‖ − Σ τ_k‖B_k‖) · (‖A/μ(B)‖ + Σ τ_k‖B_k/μ(B)‖) < 1
/// ```
///
/// both requiring μ(B(t)) ≤ −β < 0 for B = ΣB_k.
pub fn certify_rate_free(sys: &NeutralSystem, norm: NormKind, sampling: &Sampling) -> Result<Certificate, CertifyError> {
    Ok(certify_rate_free_on(&Grid::new(sys, norm, sampling)?))
}

pub(crate) fn certify_rate_free_on(grid: &Grid) -> Certificate {
    let sys = grid.system();
    let m = sys.terms().len();
    let bounds = effective_delay_bounds(sys);
    let mut c = BTreeMap::new();
    let mut notes = Vec::new();
    let (mu, blocked) = mu_b(grid, &mut c, &mut notes);
    let mut sampled_used = !mu.declared;

    let a = grid.sup_a();
    sampled_used |= a.is_sampled();
    let a_sup = a.value;
    c.insert("A_sup".to_string(), a);
    let q_a = quotient(grid, &mu, "A_sup", a_sup, grid.a());
    let mut bracket = q_a.value;
    c.insert("A_over_mu_B".to_string(), q_a);

    let mut sum_norms = 0.0;
    let mut weighted = 0.0;
    for k in 0..m {
        let b = grid.sup_term(k);
        sampled_used |= b.is_sampled();
        let name = format!("B{}_sup", k + 1);
        let q = quotient(grid, &mu, &name, b.value, grid.term(k));
        sum_norms += b.value;
        weighted += bounds.tau[k] * b.value;
        bracket += bounds.tau[k] * q.value;
        c.insert(format!("B{}_over_mu_B", k + 1), q);
        c.insert(name, b);
        c.insert(format!("tau{}", k + 1), Constant::declared(bounds.tau[k]));
    }
    let b_sum = grid.sup_b_sum();
    sampled_used |= b_sum.is_sampled();
    let b_sum_sup = b_sum.value;
    c.insert("B_sum_sup".to_string(), b_sum);

    let lhs1 = if a_sup < 1.0 { sum_norms / (1.0 - a_sup) * bracket } else { f64::INFINITY };
    let den2 = 1.0 - a_sup - weighted;
    let lhs2 = if den2 > 0.0 { b_sum_sup / den2 * bracket } else { f64::INFINITY };
    c.insert("sum_of_norms".to_string(), Constant::computed(sum_norms, &["B_k_sup"]));
    c.insert("weighted_norms".to_string(), Constant::computed(weighted, &["tau_k", "B_k_sup"]));
    c.insert("bracket".to_string(), Constant::computed(bracket, &["A_over_mu_B", "tau_k", "B_k_over_mu_B"]));
    c.insert("lhs_sum_of_norms".to_string(), Constant::computed(lhs1, &["sum_of_norms", "A_sup", "bracket"]));
    c.insert("lhs_norm_of_sum".to_string(), Constant::computed(lhs2, &["B_sum_sup", "A_sup", "weighted_norms", "bracket"]));

    let routes = vec![
        RouteCheck::new("sum_of_norms", lhs1, 1.0, &[mu.beta, 1.0 - a_sup]),
        RouteCheck::new("norm_of_sum", lhs2, 1.0, &[mu.beta, den2]),
    ];
    let mut cert = Certificate::decide(TestId::Thm32, c, routes, sampled_used, notes, blocked);
    let delay_only = sys.is_delay_only();
    if m == 1 {
        cert.specializations.push("cor33".into());
    }
    if delay_only {
        cert.specializations.push("cor34".into());
    }
    if m == 1 && delay_only {
        cert.specializations.push("cor35".into());
    }
    if sys.dim() == 1 {
        cert.specializations.push("cor410".into());
    }
    cert
}

/// The rate-free test for scalar equations; inapplicable when n > 1.
pub fn certify_scalar(sys: &NeutralSystem, norm: NormKind, sampling: &Sampling) -> Result<Certificate, CertifyError> {
    if sys.dim() != 1 {
        let mut c = BTreeMap::new();
        c.insert("n".to_string(), Constant::declared(sys.dim() as f64));
        return Ok(Certificate::inapplicable(TestId::Cor410, format!("scalar equations only, got n = {}", sys.dim()), c));
    }
    let mut cert = certify_rate_free(sys, norm, sampling)?;
    cert.test_id = TestId::Cor410;
    Ok(cert)
}

/// Rate-free test with constant entrywise-dominating matrices |A(t)| ≤ Ā,
/// |B_k(t)| ≤ B̄_k, |ΣB_k(t)| ≤ B̄ taken from the declarations:
///
/// ```text
/// Σ‖B̄_k‖(‖Ā‖ + Στ_k‖B̄_k‖) < β(1 − ‖Ā‖)
/// ‖B̄‖(‖Ā‖ + Στ_k‖B̄_k‖) < β(1 − ‖Ā‖ − Στ_k‖B̄_k‖)
/// ```
///
/// B̄ defaults to ΣB̄_k and Ā to 0 when A ≡ 0. Domination is checked on the grid.
pub fn certify_cor33a(sys: &NeutralSystem, norm: NormKind, sampling: &Sampling) -> Result<Certificate, CertifyError> {
    let n = sys.dim();
    let m = sys.terms().len();
    let mut shape = BTreeMap::new();
    shape.insert("m".to_string(), Constant::declared(m as f64));
    let Some(dom) = &sys.declared.domination else {
        return Ok(Certificate::inapplicable(TestId::Cor33a, "no dominating matrices declared", shape));
    };
    if dom.terms.len() != m {
        shape.insert("dominating_terms".to_string(), Constant::declared(dom.terms.len() as f64));
        return Ok(Certificate::inapplicable(TestId::Cor33a, format!("{} dominating matrices declared for {m} terms", dom.terms.len()), shape));
    }
    let a_bar = match (&dom.a, sys.is_delay_only()) {
        (Some(a), _) => a.clone(),
        (None, true) => Mat::zeros(n),
        (None, false) => return Ok(Certificate::inapplicable(TestId::Cor33a, "no dominating matrix declared for A", shape)),
    };
    let b_bar = dom.sum.clone().unwrap_or_else(|| {
        let mut s = Mat::zeros(n);
        for b in &dom.terms {
            s.add_scaled(1.0, &b.abs());
        }
        s
    });
    if a_bar.dim() != n || b_bar.dim() != n || dom.terms.iter().any(|b| b.dim() != n) {
        shape.insert("n".to_string(), Constant::declared(n as f64));
        return Ok(Certificate::inapplicable(TestId::Cor33a, "dominating matrices have the wrong dimension", shape));
    }

    let grid = Grid::new(sys, norm, sampling)?;
    let bounds = effective_delay_bounds(sys);
    let mut c = BTreeMap::new();
    let mut notes = Vec::new();
    let (mu, mut blocked) = mu_b(&grid, &mut c, &mut notes);

    let dominated = |mats: &[Mat], bound: &Mat| mats.iter().position(|x| !x.dominated_by(bound, DECLARED_TOL));
    let mut check = |what: &str, mats: &[Mat], bound: &Mat| {
        if let Some(i) = dominated(mats, bound) {
            blocked = true;
            notes.push(format!("{BLOCKED_PREFIX}: |{what}(t)| exceeds its dominating matrix at sampled t = {}", grid.times()[i]));
        }
    };
    check("A", grid.a(), &a_bar);
    for (k, b) in dom.terms.iter().enumerate() {
        check(&format!("B{}", k + 1), grid.term(k), b);
    }
    check("B", grid.b_sum(), &b_bar);

    let a_norm = matrix_norm(&a_bar, norm);
    c.insert("Abar_norm".to_string(), Constant::computed(a_norm, &["Abar"]));
    let mut sum_norms = 0.0;
    let mut weighted = 0.0;
    for (k, b) in dom.terms.iter().enumerate() {
        let v = matrix_norm(b, norm);
        c.insert(format!("B{}bar_norm", k + 1), Constant::computed(v, &[format!("B{}bar", k + 1)]));
        c.insert(format!("tau{}", k + 1), Constant::declared(bounds.tau[k]));
        sum_norms += v;
        weighted += bounds.tau[k] * v;
    }
    let bsum_norm = matrix_norm(&b_bar, norm);
    c.insert("Bbar_norm".to_string(), Constant::computed(bsum_norm, &["Bbar"]));
    let inner = a_norm + weighted;
    let lhs1 = sum_norms * inner;
    let rhs1 = mu.beta * (1.0 - a_norm);
    let lhs2 = bsum_norm * inner;
    let rhs2 = mu.beta * (1.0 - inner);
    c.insert("lhs_sum_of_norms".to_string(), Constant::computed(lhs1, &["Bk_bar_norm", "Abar_norm", "tau_k"]));
    c.insert("rhs_sum_of_norms".to_string(), Constant::computed(rhs1, &["beta", "Abar_norm"]));
    c.insert("lhs_norm_of_sum".to_string(), Constant::computed(lhs2, &["Bbar_norm", "Abar_norm", "tau_k"]));
    c.insert("rhs_norm_of_sum".to_string(), Constant::computed(rhs2, &["beta", "Abar_norm", "tau_k", "Bk_bar_norm"]));

    let routes = vec![
        RouteCheck::new("sum_of_norms", lhs1, rhs1, &[mu.beta, 1.0 - a_norm]),
        RouteCheck::new("norm_of_sum", lhs2, rhs2, &[mu.beta, 1.0 - inner]),
    ];
    Ok(Certificate::decide(TestId::Cor33a, c, routes, !mu.declared, notes, blocked))
}
