//! Parameter sweeps with optional bisection of verdict flips.

use ncert_core::certify::{TestId, Verdict};
use ncert_core::model::validate;
use rayon::prelude::*;

use crate::commands::run_tests;
use crate::config::{Config, ConfigError};
use crate::report::TestOutcome;

/// Width below which a flip bracket stops being bisected.
pub const REFINE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub refine: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub test: TestId,
    /// `certified`, `not_certified`, `inapplicable`, `invalid` or `error`.
    pub verdict: String,
    pub margin: Option<f64>,
}

impl Cell {
    fn certified(&self) -> bool {
        self.verdict == "certified"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub value: f64,
    pub cells: Vec<Cell>,
}

/// A refined verdict flip between `from` (below) and `to` (above).
#[derive(Clone, Debug, PartialEq)]
pub struct Threshold {
    pub test: TestId,
    pub value: f64,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<Row>,
    pub thresholds: Vec<Threshold>,
}

impl SweepTable {
    pub fn threshold(&self, test: TestId) -> Option<f64> {
        self.thresholds.iter().find(|t| t.test == test).map(|t| t.value)
    }

    /// `kind,<param>,test,verdict,margin`; grid rows first, in parameter
    /// order, then thresholds ordered by test and value.
    pub fn to_csv(&self, param: &str) -> String {
        let mut out = format!("kind,{param},test,verdict,margin\n");
        for row in &self.rows {
            for c in &row.cells {
                let margin = c.margin.map(|m| m.to_string()).unwrap_or_default();
                out.push_str(&format!("row,{},{},{},{}\n", row.value, c.test, c.verdict, margin));
            }
        }
        for t in &self.thresholds {
            out.push_str(&format!("threshold,{},{},{}->{},\n", t.value, t.test, t.from, t.to));
        }
        out
    }
}

fn evaluate(config: &Config, set: &[(String, f64)], param: &str, value: f64, tests: &[TestId]) -> Result<Vec<Cell>, ConfigError> {
    let mut overrides = set.to_vec();
    overrides.push((param.to_string(), value));
    let setup = config.instantiate(&overrides)?;
    if !validate(&setup.system, setup.norm, &setup.sampling).passed {
        return Ok(tests
            .iter()
            .map(|&test| Cell {
                test,
                verdict: "invalid".into(),
                margin: None,
            })
            .collect());
    }
    Ok(run_tests(&setup, tests)
        .into_iter()
        .zip(tests)
        .map(|(o, &test)| match o {
            TestOutcome::Certificate(c) => Cell {
                test,
                verdict: c.verdict.to_string(),
                margin: if c.verdict == Verdict::Inapplicable { None } else { c.margin },
            },
            TestOutcome::Error { .. } => Cell {
                test,
                verdict: "error".into(),
                margin: None,
            },
        })
        .collect())
}

pub fn run_sweep(config: &Config, set: &[(String, f64)], tests: &[TestId], spec: &SweepSpec) -> Result<SweepTable, ConfigError> {
    if !spec.lo.is_finite() || !spec.hi.is_finite() || spec.lo >= spec.hi {
        return Err(ConfigError::at("--range", format!("need finite LO < HI, got {}:{}", spec.lo, spec.hi)));
    }
    if spec.points < 2 {
        return Err(ConfigError::at("--points", "need at least 2 points"));
    }
    if !config.parameter_names().contains(&spec.param) {
        return Err(ConfigError::at("--param", format!("unknown parameter `{}`", spec.param)));
    }
    let mut probe = set.to_vec();
    probe.push((spec.param.clone(), spec.lo));
    if !config.instantiate(&probe)?.used.contains(&spec.param) {
        return Err(ConfigError::at("--param", format!("parameter `{}` is not used by any expression", spec.param)));
    }

    let step = (spec.hi - spec.lo) / (spec.points - 1) as f64;
    let values: Vec<f64> = (0..spec.points)
        .map(|i| if i + 1 == spec.points { spec.hi } else { spec.lo + step * i as f64 })
        .collect();
    let rows = values
        .par_iter()
        .map(|&value| evaluate(config, set, &spec.param, value, tests).map(|cells| Row { value, cells }))
        .collect::<Result<Vec<_>, _>>()?;

    let mut table = SweepTable { rows, thresholds: Vec::new() };
    if spec.refine {
        let mut brackets = Vec::new();
        for (k, &test) in tests.iter().enumerate() {
            for pair in table.rows.windows(2) {
                let (a, b) = (&pair[0].cells[k], &pair[1].cells[k]);
                if a.certified() != b.certified() {
                    brackets.push((k, test, pair[0].value, pair[1].value, a.certified()));
                }
            }
        }
        table.thresholds = brackets
            .par_iter()
            .map(|&(k, test, mut lo, mut hi, lo_certified)| {
                while hi - lo > REFINE_TOL {
                    let mid = 0.5 * (lo + hi);
                    let cells = evaluate(config, set, &spec.param, mid, &tests[k..=k])?;
                    if cells[0].certified() == lo_certified {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (from, to) = if lo_certified { ("certified", "not_certified") } else { ("not_certified", "certified") };
                Ok(Threshold {
                    test,
                    value: 0.5 * (lo + hi),
                    from: from.into(),
                    to: to.into(),
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
    }
    Ok(table)
}
