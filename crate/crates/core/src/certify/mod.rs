//! Stability certificates and exponential solution bounds.
//!
//! Every test produces a [`Certificate`] holding the verdict, the margin of the
//! binding inequality and every intermediate constant together with where it
//! came from (a declared analytic bound, a sampled sup, or arithmetic on other
//! constants).

mod baseline;
mod grid;
mod rate;
mod rate_free;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::matfun::{MatfunError, Sampling};
use crate::model::ModelError;

pub use baseline::{baseline_km_delay, baseline_km_neutral, certify_nondelay_form, NondelayShape};
pub use grid::Grid;
pub use rate::{build_p, certify_with_rate, max_decay_rate, max_decay_rate_by, solution_bound, RateSearch};
pub use rate_free::{certify_cor33a, certify_rate_free, certify_scalar};

/// Margins at or below this are treated as roundoff, not as stability.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Eval(#[from] MatfunError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{what}: {source}")]
    Delay {
        what: String,
        #[source]
        source: crate::exprlang::EvalError,
    },
    #[error("decay rate must be finite and positive, got {0}")]
    InvalidRate(f64),
    #[error("certificate for {0} is not certified; no bound available")]
    NotCertified(TestId),
    #[error("certificate for {0} does not carry a decay rate")]
    NotRateBased(TestId),
    #[error("no certifiable rate in (0, {lambda_max}]")]
    NoCertifiableRate { lambda_max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestId {
    Thm31,
    Thm31a,
    Thm32,
    Thm32a,
    Cor33a,
    Cor41,
    Cor410,
    Prop1,
    Prop2,
    Prop3,
}

impl TestId {
    pub const ALL: [TestId; 10] = [
        TestId::Thm31,
        TestId::Thm31a,
        TestId::Thm32,
        TestId::Thm32a,
        TestId::Cor33a,
        TestId::Cor41,
        TestId::Cor410,
        TestId::Prop1,
        TestId::Prop2,
        TestId::Prop3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestId::Thm31 => "thm31",
            TestId::Thm31a => "thm31a",
            TestId::Thm32 => "thm32",
            TestId::Thm32a => "thm32a",
            TestId::Cor33a => "cor33a",
            TestId::Cor41 => "cor41",
            TestId::Cor410 => "cor410",
            TestId::Prop1 => "prop1",
            TestId::Prop2 => "prop2",
            TestId::Prop3 => "prop3",
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TestId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let known: Vec<_> = TestId::ALL.iter().map(|t| t.as_str()).collect();
                format!("unknown test '{s}', expected one of {}", known.join(", "))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
    Inapplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Certified => "certified",
            Verdict::NotCertified => "not_certified",
            Verdict::Inapplicable => "inapplicable",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Declared,
    Sampled { window: [f64; 2], samples: usize },
    Computed { from: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn declared(value: f64) -> Self {
        Constant { value, provenance: Provenance::Declared }
    }

    pub fn sampled(value: f64, sampling: &Sampling) -> Self {
        Constant {
            value,
            provenance: Provenance::Sampled {
                window: [sampling.lo, sampling.hi],
                samples: sampling.samples,
            },
        }
    }

    pub fn computed<S: AsRef<str>>(value: f64, from: &[S]) -> Self {
        Constant {
            value,
            provenance: Provenance::Computed {
                from: from.iter().map(|s| s.as_ref().to_string()).collect(),
            },
        }
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.provenance, Provenance::Sampled { .. })
    }
}

/// One sufficient condition inside a test: its left side, threshold, and the
/// smallest slack over all of its inequalities (side conditions included).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteCheck {
    pub name: String,
    pub lhs: f64,
    pub threshold: f64,
    pub margin: f64,
    pub certified: bool,
}

impl RouteCheck {
    pub fn new(name: &str, lhs: f64, threshold: f64, side_margins: &[f64]) -> Self {
        let side = side_margins.iter().copied().fold(f64::INFINITY, f64::min);
        let main = if lhs.is_finite() { threshold - lhs } else { f64::NEG_INFINITY };
        // a failed side condition is the more informative slack when lhs blew up
        let margin = if !lhs.is_finite() && side <= 0.0 { side } else { main.min(side) };
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        RouteCheck {
            name: name.to_string(),
            lhs,
            threshold,
            margin,
            certified: margin > BOUNDARY_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub test_id: TestId,
    pub verdict: Verdict,
    pub constants: BTreeMap<String, Constant>,
    pub margin: Option<f64>,
    pub grid_certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
    pub routes: Vec<RouteCheck>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub specializations: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Certificate {
    pub(crate) fn inapplicable(test_id: TestId, reason: impl Into<String>, constants: BTreeMap<String, Constant>) -> Self {
        Certificate {
            test_id,
            verdict: Verdict::Inapplicable,
            constants,
            margin: None,
            grid_certified: false,
            lambda: None,
            route: None,
            routes: Vec::new(),
            specializations: Vec::new(),
            notes: vec![reason.into()],
        }
    }

    /// Verdict, margin and fired route from the route list. `blocked` forces
    /// not_certified (e.g. a violated declaration) regardless of margins.
    pub(crate) fn decide(
        test_id: TestId,
        constants: BTreeMap<String, Constant>,
        routes: Vec<RouteCheck>,
        grid_certified: bool,
        mut notes: Vec<String>,
        blocked: bool,
    ) -> Self {
        // widest margin wins, ties go to the earlier route
        let best = routes
            .iter()
            .filter(|r| r.certified)
            .fold(None::<&RouteCheck>, |acc, r| match acc {
                Some(a) if a.margin >= r.margin => Some(a),
                _ => Some(r),
            })
            .map(|r| r.name.clone());
        let margin = routes.iter().map(|r| r.margin).fold(f64::NEG_INFINITY, f64::max);
        let certified = best.is_some() && !blocked;
        if !certified && margin > 0.0 && margin <= BOUNDARY_TOL {
            notes.push(format!("boundary — not certified (margin {margin:e} within roundoff)"));
        }
        Certificate {
            test_id,
            verdict: if certified { Verdict::Certified } else { Verdict::NotCertified },
            constants,
            margin: Some(margin),
            grid_certified,
            lambda: None,
            route: if certified { best } else { None },
            routes,
            specializations: Vec::new(),
            notes,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).map(|c| c.value)
    }

    pub fn route_check(&self, name: &str) -> Option<&RouteCheck> {
        self.routes.iter().find(|r| r.name == name)
    }

    /// The same computation judged by a single route only, relabelled.
    pub fn restricted_to(&self, route: &str, test_id: TestId) -> Certificate {
        let routes: Vec<RouteCheck> = self.routes.iter().filter(|r| r.name == route).cloned().collect();
        if self.verdict == Verdict::Inapplicable {
            let mut out = self.clone();
            out.test_id = test_id;
            out.routes = routes;
            return out;
        }
        let blocked = self.notes.iter().any(|n| n.starts_with(BLOCKED_PREFIX));
        let mut constants = self.constants.clone();
        if constants.contains_key("M0") {
            constants.remove("M0");
            if let Some(r) = routes.first().filter(|r| r.certified && !blocked) {
                constants.insert("M0".into(), Constant::computed(1.0 / (1.0 - r.lhs), &[r.name.as_str()]));
            }
        }
        let notes = self.notes.iter().filter(|n| !n.starts_with("boundary")).cloned().collect();
        let mut out = Certificate::decide(test_id, constants, routes, self.grid_certified, notes, blocked);
        out.lambda = self.lambda;
        out.specializations = self.specializations.clone();
        out
    }
}

/// Notes starting with this mark a failed declaration that blocks certification.
pub(crate) const BLOCKED_PREFIX: &str = "declaration violated";

/// The tuple (λ, M0, c_psi, c_phi_k, c_f) of an exponential solution bound
///
/// ```text
/// ‖x(t)‖ ≤ M0 e^{−λ(t−t0)} [‖x(t0)‖ + c_psi‖Ψ‖ + Σ c_phi_k‖Φ‖_k] + c_f‖f‖
/// ```
///
/// where ‖Φ‖_k is the sup of Φ over [t0 − τ_k, t0] and c_f already contains M0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentialBound {
    pub lambda: f64,
    pub m0: f64,
    pub c_x0: f64,
    pub c_psi: f64,
    pub c_phi: Vec<f64>,
    pub c_f: f64,
}

/// Norms of the data entering an exponential bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataNorms {
    pub x0: f64,
    pub psi: f64,
    /// sup of Φ over [t0 − τ_k, t0], one per delayed term
    pub phi: Vec<f64>,
    /// sup of f over the horizon
    pub f: f64,
}

impl ExponentialBound {
    pub fn c_phi_sum(&self) -> f64 {
        self.c_phi.iter().sum()
    }

    pub fn evaluate(&self, t: f64, t0: f64, data: &DataNorms) -> f64 {
        let phi: f64 = self.c_phi.iter().zip(&data.phi).map(|(c, p)| c * p).sum();
        let bracket = self.c_x0 * data.x0 + self.c_psi * data.psi + phi;
        self.m0 * (-self.lambda * (t - t0)).exp() * bracket + self.c_f * data.f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_ids_round_trip() {
        for id in TestId::ALL {
            assert_eq!(id.as_str().parse::<TestId>().unwrap(), id);
        }
        assert!("thm99".parse::<TestId>().is_err());
    }

    #[test]
    fn route_margin_takes_worst_side_condition() {
        let r = RouteCheck::new("x", 0.5, 1.0, &[0.2, 0.9]);
        assert_eq!(r.margin, 0.2);
        assert!(r.certified);
        let r = RouteCheck::new("x", 1.0 - 1e-12, 1.0, &[]);
        assert!(!r.certified);
        let r = RouteCheck::new("x", f64::NAN, 1.0, &[]);
        assert!(!r.certified);
    }

    #[test]
    fn boundary_margin_is_flagged() {
        let c = Certificate::decide(
            TestId::Prop1,
            BTreeMap::new(),
            vec![RouteCheck::new("condition", -1e-12, 0.0, &[])],
            false,
            vec![],
            false,
        );
        assert_eq!(c.verdict, Verdict::NotCertified);
        assert!(c.notes.iter().any(|n| n.starts_with("boundary")));
    }

    #[test]
    fn bound_evaluation() {
        let b = ExponentialBound { lambda: 0.5, m0: 2.0, c_x0: 1.0, c_psi: 0.1, c_phi: vec![0.2, 0.3], c_f: 4.0 };
        let d = DataNorms { x0: 1.0, psi: 1.0, phi: vec![1.0, 2.0], f: 0.5 };
        let expected = 2.0 * (1.0 + 0.1 + 0.2 + 0.6) + 2.0;
        assert!((b.evaluate(0.0, 0.0, &d) - expected).abs() < 1e-15);
        assert!(b.evaluate(3.0, 0.0, &d) < b.evaluate(1.0, 0.0, &d));
    }
}
