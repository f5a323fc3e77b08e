//! The initial value problem
//!
//! ```text
//! ẋ(t) − A(t)ẋ(g(t)) = Σ_k B_k(t)x(h_k(t)) + f(t),   t ≥ t0
//! x(t) = Φ(t) for t ≤ t0,   ẋ(t) = Ψ(t) for t < t0
//! ```
//!
//! with declared delay bounds 0 ≤ t − g(t) ≤ σ and 0 ≤ t − h_k(t) ≤ τ_k.
//!
//! Measurability of the coefficients and of g⁻¹ on null sets cannot be
//! checked numerically and stay the caller's obligation; [`validate`] only
//! checks boundedness, ‖A‖ < 1 and the delay signs on a sample grid.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{parse_with, Expr};
use crate::matfun::{matrix_measure, matrix_norm, sampled_sup_norm, vector_norm, Mat, MatfunError, MatrixFunction, NormKind, Sampling};

/// Slack allowed when comparing sampled quantities with declared bounds.
pub const DECLARED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("system needs at least one delayed term")]
    NoTerms,
    #[error("{what} has dimension {got}, expected {expected}")]
    Dimension { what: String, expected: usize, got: usize },
    #[error("{what}: delay bound {bound} must be finite and nonnegative")]
    DelayBound { what: String, bound: f64 },
    #[error("initial time t0 = {0} must be finite and nonnegative")]
    InitialTime(f64),
    #[error("declared bound '{source_text}' at lambda = {lambda}: {message}")]
    RateBound { source_text: String, lambda: f64, message: String },
    #[error("{what}: {source}")]
    Eval {
        what: String,
        #[source]
        source: MatfunError,
    },
}

/// A delayed argument together with its declared bound on t − h(t).
#[derive(Clone, Debug, PartialEq)]
pub struct DelayArg {
    pub arg: Expr,
    pub bound: f64,
}

impl DelayArg {
    pub fn new(arg: Expr, bound: f64) -> Self {
        DelayArg { arg, bound }
    }

    /// Constant delay h(t) = t − c.
    pub fn constant(c: f64) -> Self {
        DelayArg {
            arg: Expr::var() - c,
            bound: c,
        }
    }

    /// h(t) = t.
    pub fn none() -> Self {
        DelayArg { arg: Expr::var(), bound: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayTerm {
    pub coeff: MatrixFunction,
    pub delay: DelayArg,
}

/// An analytic bound that depends on the decay rate, e.g. a bound on
/// sup_t μ(P(t)). Kept as source text and re-parsed with `lambda` bound.
#[derive(Clone, Debug, PartialEq)]
pub struct RateBound {
    source: String,
    constants: BTreeMap<String, f64>,
}

impl RateBound {
    pub fn new(source: impl Into<String>, constants: BTreeMap<String, f64>) -> Self {
        RateBound {
            source: source.into(),
            constants,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn at(&self, lambda: f64) -> Result<f64, ModelError> {
        let err = |message: String| ModelError::RateBound {
            source_text: self.source.clone(),
            lambda,
            message,
        };
        let lookup = |name: &str| {
            if name == "lambda" {
                Some(lambda)
            } else {
                self.constants.get(name).copied()
            }
        };
        let expr = parse_with(&self.source, &lookup).map_err(|e| err(e.to_string()))?;
        if !expr.is_constant() {
            return Err(err("must not depend on t".into()));
        }
        expr.eval(0.0).map_err(|e| err(e.to_string()))
    }
}

/// Constant matrices dominating the coefficients entrywise: |A(t)| ≤ Ā,
/// |B_k(t)| ≤ B̄_k, |ΣB_k(t)| ≤ B̄.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Domination {
    pub a: Option<Mat>,
    pub terms: Vec<Mat>,
    pub sum: Option<Mat>,
}

/// User-supplied analytic bounds beyond per-matrix declared sups.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Declarations {
    /// sup_t ‖ΣB_k(t)‖
    pub b_sum_sup: Option<f64>,
    /// sup_t μ(ΣB_k(t)), expected negative
    pub mu_b_sup: Option<f64>,
    /// sup_t μ(P(t)) as a function of `lambda`
    pub mu_p_sup: Option<RateBound>,
    pub domination: Option<Domination>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeutralSystem {
    n: usize,
    t0: f64,
    a: MatrixFunction,
    g: DelayArg,
    terms: Vec<DelayTerm>,
    forcing: Option<Vec<Expr>>,
    pub declared: Declarations,
}

impl NeutralSystem {
    pub fn new(
        t0: f64,
        a: MatrixFunction,
        g: DelayArg,
        terms: Vec<DelayTerm>,
        forcing: Option<Vec<Expr>>,
    ) -> Result<Self, ModelError> {
        let n = a.dim();
        if !(t0.is_finite() && t0 >= 0.0) {
            return Err(ModelError::InitialTime(t0));
        }
        if terms.is_empty() {
            return Err(ModelError::NoTerms);
        }
        let check_bound = |what: String, bound: f64| {
            if bound.is_finite() && bound >= 0.0 {
                Ok(())
            } else {
                Err(ModelError::DelayBound { what, bound })
            }
        };
        check_bound("g".into(), g.bound)?;
        for (k, term) in terms.iter().enumerate() {
            if term.coeff.dim() != n {
                return Err(ModelError::Dimension {
                    what: format!("B{}", k + 1),
                    expected: n,
                    got: term.coeff.dim(),
                });
            }
            check_bound(format!("h{}", k + 1), term.delay.bound)?;
        }
        if let Some(f) = &forcing {
            if f.len() != n {
                return Err(ModelError::Dimension {
                    what: "f".into(),
                    expected: n,
                    got: f.len(),
                });
            }
        }
        Ok(NeutralSystem {
            n,
            t0,
            a,
            g,
            terms,
            forcing,
            declared: Declarations::default(),
        })
    }

    pub fn with_declarations(mut self, declared: Declarations) -> Self {
        self.declared = declared;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn a(&self) -> &MatrixFunction {
        &self.a
    }

    pub fn g(&self) -> &DelayArg {
        &self.g
    }

    pub fn terms(&self) -> &[DelayTerm] {
        &self.terms
    }

    pub fn forcing(&self) -> Option<&[Expr]> {
        self.forcing.as_deref()
    }

    /// A ≡ 0: no neutral part.
    pub fn is_delay_only(&self) -> bool {
        self.a.is_zero()
    }

    pub fn has_forcing(&self) -> bool {
        self.forcing.as_ref().is_some_and(|f| !f.iter().all(Expr::is_zero))
    }

    /// B(t) = Σ_k B_k(t).
    pub fn b_sum(&self, t: f64) -> Result<Mat, MatfunError> {
        let mut sum = Mat::zeros(self.n);
        for term in &self.terms {
            sum.add_scaled(1.0, &term.coeff.eval(t)?);
        }
        Ok(sum)
    }

    pub fn forcing_at(&self, t: f64) -> Result<Vec<f64>, MatfunError> {
        match &self.forcing {
            None => Ok(vec![0.0; self.n]),
            Some(f) => eval_vector(f, t),
        }
    }

    /// Same system with the delayed terms replaced.
    pub fn with_terms(&self, terms: Vec<DelayTerm>) -> Result<Self, ModelError> {
        let mut out = NeutralSystem::new(self.t0, self.a.clone(), self.g.clone(), terms, self.forcing.clone())?;
        out.declared = self.declared.clone();
        Ok(out)
    }
}

pub(crate) fn eval_vector(entries: &[Expr], t: f64) -> Result<Vec<f64>, MatfunError> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| e.eval(t).map_err(|source| MatfunError::Entry { row: i, col: 0, source }))
        .collect()
}

/// Prehistory: Φ on [t0 − max τ_k, t0] and Ψ on [t0 − σ, t0].
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub phi: Vec<Expr>,
    pub psi: Vec<Expr>,
}

impl InitialData {
    pub fn new(phi: Vec<Expr>, psi: Vec<Expr>) -> Self {
        InitialData { phi, psi }
    }

    pub fn zero(n: usize) -> Self {
        InitialData {
            phi: vec![Expr::constant(0.0); n],
            psi: vec![Expr::constant(0.0); n],
        }
    }

    pub fn constant(phi: &[f64], psi: &[f64]) -> Self {
        InitialData {
            phi: phi.iter().map(|&v| Expr::constant(v)).collect(),
            psi: psi.iter().map(|&v| Expr::constant(v)).collect(),
        }
    }

    pub fn phi_at(&self, t: f64) -> Result<Vec<f64>, MatfunError> {
        eval_vector(&self.phi, t)
    }

    pub fn psi_at(&self, t: f64) -> Result<Vec<f64>, MatfunError> {
        eval_vector(&self.psi, t)
    }

    /// Both functions multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        InitialData {
            phi: self.phi.iter().map(|e| c * e.clone()).collect(),
            psi: self.psi.iter().map(|e| c * e.clone()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
    pub quantity: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn from_findings(findings: Vec<Finding>) -> Self {
        ValidationReport {
            passed: !findings.iter().any(|f| f.severity == Severity::Error),
            findings,
        }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    /// Value recorded for a quantity, if any.
    pub fn quantity(&self, name: &str) -> Option<f64> {
        self.findings.iter().find(|f| f.quantity == name).and_then(|f| f.value)
    }
}

struct Findings(Vec<Finding>);

impl Findings {
    fn push(&mut self, severity: Severity, quantity: &str, value: Option<f64>, message: String) {
        self.0.push(Finding {
            severity,
            message,
            quantity: quantity.to_string(),
            value,
        });
    }

    /// Compare a sampled sup with an optional declaration; returns the value
    /// certificates will use.
    fn sup(&mut self, quantity: &str, sampled: f64, declared: Option<f64>) -> f64 {
        match declared {
            Some(d) if sampled > d + DECLARED_TOL => {
                self.push(
                    Severity::Error,
                    quantity,
                    Some(sampled),
                    format!("sampled sup {sampled} exceeds declared bound {d}"),
                );
                d
            }
            Some(d) => {
                if sampled >= 0.99 * d && d > 0.0 {
                    self.push(
                        Severity::Warning,
                        quantity,
                        Some(sampled),
                        format!("sampled sup {sampled} is within 1% of declared bound {d}"),
                    );
                }
                self.push(Severity::Info, quantity, Some(d), format!("declared {d}, sampled {sampled}"));
                d
            }
            None => {
                self.push(Severity::Info, quantity, Some(sampled), format!("sampled {sampled}"));
                sampled
            }
        }
    }

    fn delays(&mut self, quantity: &str, delay: &DelayArg, sampling: &Sampling) {
        let mut worst: f64 = 0.0;
        for t in sampling.points() {
            let h = match delay.arg.eval(t) {
                Ok(h) => h,
                Err(e) => {
                    self.push(Severity::Error, quantity, Some(t), format!("delayed argument fails at t = {t}: {e}"));
                    return;
                }
            };
            let d = t - h;
            if d < -DECLARED_TOL {
                self.push(
                    Severity::Error,
                    quantity,
                    Some(d),
                    format!("negative delay at sampled t = {t}: t - h(t) = {d} (advanced argument)"),
                );
                return;
            }
            if d > delay.bound + DECLARED_TOL {
                self.push(
                    Severity::Error,
                    quantity,
                    Some(d),
                    format!("delay t - h(t) = {d} at t = {t} exceeds declared bound {}", delay.bound),
                );
                return;
            }
            worst = worst.max(d);
        }
        self.push(
            Severity::Info,
            quantity,
            Some(delay.bound),
            format!("declared bound {}, sampled max delay {worst}", delay.bound),
        );
    }
}

/// Check the standing assumptions on a sample grid. Never fails; problems are
/// reported as findings.
pub fn validate(sys: &NeutralSystem, norm: NormKind, sampling: &Sampling) -> ValidationReport {
    let mut out = Findings(Vec::new());

    match sampled_sup_norm(&sys.a, norm, sampling) {
        Ok(sampled) => {
            let a = out.sup("A_sup", sampled, sys.a.declared_sup);
            if a >= 1.0 {
                out.push(Severity::Error, "A_sup", Some(a), format!("‖A‖ = {a} ≥ 1 violates a_0 < 1"));
            }
        }
        Err(e) => out.push(Severity::Error, "A", None, format!("A: {e}")),
    }
    out.delays("sigma", &sys.g, sampling);

    for (k, term) in sys.terms.iter().enumerate() {
        let name = format!("B{}_sup", k + 1);
        match sampled_sup_norm(&term.coeff, norm, sampling) {
            Ok(sampled) => {
                out.sup(&name, sampled, term.coeff.declared_sup);
            }
            Err(e) => out.push(Severity::Error, &name, None, format!("B{}: {e}", k + 1)),
        }
        out.delays(&format!("tau{}", k + 1), &term.delay, sampling);
    }

    let mut sum_sup: f64 = 0.0;
    let mut mu_sup = f64::NEG_INFINITY;
    let mut sum_ok = true;
    for t in sampling.points() {
        match sys.b_sum(t) {
            Ok(b) => {
                sum_sup = sum_sup.max(matrix_norm(&b, norm));
                mu_sup = mu_sup.max(matrix_measure(&b, norm));
            }
            Err(_) => {
                sum_ok = false;
                break;
            }
        }
    }
    if sum_ok {
        out.sup("B_sum_sup", sum_sup, sys.declared.b_sum_sup);
        if let Some(d) = sys.declared.mu_b_sup {
            if mu_sup > d + DECLARED_TOL {
                out.push(
                    Severity::Error,
                    "mu_B_sup",
                    Some(mu_sup),
                    format!("sampled sup μ(B) = {mu_sup} exceeds declared bound {d}"),
                );
            }
        }
        out.push(Severity::Info, "mu_B_sampled", Some(mu_sup), format!("sampled sup μ(B) = {mu_sup}"));
    }

    if let Some(f) = &sys.forcing {
        let mut f_sup: f64 = 0.0;
        for t in sampling.points() {
            match eval_vector(f, t) {
                Ok(v) => f_sup = f_sup.max(vector_norm(&v, norm)),
                Err(e) => {
                    out.push(Severity::Error, "f", Some(t), format!("f at t = {t}: {e}"));
                    break;
                }
            }
        }
        out.push(Severity::Info, "f_sup", Some(f_sup), format!("sampled {f_sup}"));
    }

    ValidationReport::from_findings(out.0)
}

/// Check that Φ and Ψ match the dimension and are finite on their intervals.
pub fn validate_initial(sys: &NeutralSystem, init: &InitialData, samples: usize) -> ValidationReport {
    let mut out = Findings(Vec::new());
    let bounds = effective_delay_bounds(sys);
    let t0 = sys.t0;
    for (name, funcs, span) in [("phi", &init.phi, bounds.max_tau), ("psi", &init.psi, bounds.sigma)] {
        if funcs.len() != sys.n {
            out.push(
                Severity::Error,
                name,
                Some(funcs.len() as f64),
                format!("{name} has {} components, expected {}", funcs.len(), sys.n),
            );
            continue;
        }
        let grid = if span > 0.0 {
            Sampling { lo: t0 - span, hi: t0, samples: samples.max(2) }
        } else {
            Sampling { lo: t0, hi: t0, samples: 1 }
        };
        let mut sup: f64 = 0.0;
        for t in grid.points() {
            match eval_vector(funcs, t) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => sup = sup.max(vector_norm(&v, NormKind::Inf)),
                Ok(_) => {
                    out.push(Severity::Error, name, Some(t), format!("{name} is not finite at t = {t}"));
                    break;
                }
                Err(e) => {
                    out.push(Severity::Error, name, Some(t), format!("{name} at t = {t}: {e}"));
                    break;
                }
            }
        }
        out.push(Severity::Info, name, Some(sup), format!("sampled sup {sup}"));
    }
    ValidationReport::from_findings(out.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DelayBounds {
    pub sigma: f64,
    pub tau: Vec<f64>,
    pub max_tau: f64,
}

/// The declared bounds σ, τ_k consumed by every certificate formula.
pub fn effective_delay_bounds(sys: &NeutralSystem) -> DelayBounds {
    let tau: Vec<f64> = sys.terms.iter().map(|t| t.delay.bound).collect();
    let max_tau = tau.iter().copied().fold(0.0, f64::max);
    DelayBounds {
        sigma: sys.g.bound,
        tau,
        max_tau,
    }
}
