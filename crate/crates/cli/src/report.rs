//! JSON reports. Field order is fixed by the struct layouts and maps are
//! ordered, so identical inputs give byte-identical output.

use ncert_core::certify::{Certificate, Constant, ExponentialBound, Provenance, TestId};
use ncert_core::matfun::{NormKind, Sampling};
use ncert_core::model::ValidationReport;
use ncert_core::simulate::BoundCheck;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{ConfigFinding, Setup, Simulation};

/// Fields shared by every report on a successfully loaded config.
#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub command: &'static str,
    pub config: String,
    pub norm: NormKind,
    pub parameters: Map<String, Value>,
    pub sampling: Sampling,
}

impl Header {
    pub fn new(command: &'static str, setup: &Setup) -> Self {
        let parameters = setup
            .parameters
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        Header {
            command,
            config: setup.name.clone(),
            norm: setup.norm,
            parameters,
            sampling: setup.sampling,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub command: &'static str,
    pub status: &'static str,
    pub findings: Vec<ConfigFinding>,
    pub exit_code: i32,
}

impl ErrorReport {
    pub fn new(command: &'static str, findings: Vec<ConfigFinding>) -> Self {
        ErrorReport {
            command,
            status: "error",
            findings,
            exit_code: 2,
        }
    }
}

/// One selected test: its certificate, or the error that stopped it.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum TestOutcome {
    Certificate(Box<Certificate>),
    Error { test_id: TestId, error: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifyReport {
    #[serde(flatten)]
    pub header: Header,
    pub validation: ValidationReport,
    pub certificates: Vec<TestOutcome>,
    pub exit_code: i32,
}

/// An exponential bound with the provenance of each coefficient.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub lambda: Constant,
    pub m0: Constant,
    pub c_x0: Constant,
    pub c_psi: Constant,
    pub c_phi: Vec<Constant>,
    pub c_f: Constant,
}

impl BoundReport {
    pub fn new(bound: &ExponentialBound, cert: &Certificate, lambda_provenance: Provenance) -> Self {
        let route = cert.route.clone().unwrap_or_else(|| "M0".into());
        let computed = |v: f64, from: &[&str]| Constant::computed(v, from);
        let sigma_sources = ["lambda", "sigma", "A_sup"];
        BoundReport {
            lambda: Constant {
                value: bound.lambda,
                provenance: lambda_provenance,
            },
            m0: computed(bound.m0, &[route.as_str()]),
            c_x0: computed(bound.c_x0, &[] as &[&str]),
            c_psi: computed(bound.c_psi, &sigma_sources),
            c_phi: bound
                .c_phi
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let b = format!("B{}_sup", k + 1);
                    let tau = format!("tau{}", k + 1);
                    computed(c, &["lambda", tau.as_str(), b.as_str(), "A_sup"])
                })
                .collect(),
            c_f: computed(bound.c_f, &["M0", "lambda", "A_sup"]),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundCommandReport {
    #[serde(flatten)]
    pub header: Header,
    pub certificate: Certificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub exit_code: i32,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    #[serde(flatten)]
    pub header: Header,
    pub simulation: Simulation,
    pub out: String,
    pub points: usize,
    pub final_norm: Constant,
    pub exit_code: i32,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    #[serde(flatten)]
    pub header: Header,
    pub certificate: Certificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<Simulation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<BoundCheck>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub exit_code: i32,
}

/// Sampled sizes of the initial data and forcing.
#[derive(Clone, Debug, Serialize)]
pub struct DataReport {
    pub x0: Constant,
    pub psi: Constant,
    pub phi: Vec<Constant>,
    pub f: Constant,
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}
