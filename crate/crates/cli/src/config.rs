//! JSON run configurations.
//!
//! A config names a dimension `n`, optional scalar parameters, the system,
//! declared bounds and the sampling/simulation/certification settings.
//! Expressions are strings in `t`; `n` and every parameter are available as
//! named constants, and parameters may refer to `n` and to earlier
//! parameters. `pi` is predefined. Matrices accept several shapes:
//!
//! ```text
//! [[row], [row], ...]                         entries are numbers or strings
//! 2.5 | "sin(t)"                              scalar times the identity
//! {"entry": "cos(j*t)^i / n"}                 one-based i, j
//! {"scale": "sin(t)^2", "matrix": <matrix>}   scalar function times a constant matrix
//! {"banded": {"diag": .., "sub": .., "super": ..},
//!  "overrides": [{"i": .., "j": .., "value": ..}]}
//! ```
//!
//! Vectors (forcing, initial functions) are arrays of n expressions or a
//! single expression in the one-based component index `i`.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use ncert_core::certify::{RateSearch, TestId};
use ncert_core::exprlang::{parse_with, Expr};
use ncert_core::matfun::{Mat, MatrixFunction, NormKind, Sampling, DEFAULT_SAMPLES};
use ncert_core::model::{Declarations, DelayArg, DelayTerm, Domination, InitialData, NeutralSystem, RateBound};
use serde::Serialize;
use serde_json::{Map, Value};

/// Overrides the default sample count when a config does not set one.
pub const SAMPLES_ENV: &str = "NCERT_SAMPLES";

/// Sampling window length used when neither a length nor a period is given.
pub const DEFAULT_WINDOW: f64 = 20.0;

/// A problem located at a JSON path inside the config.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigFinding {
    pub location: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub findings: Vec<ConfigFinding>,
}

impl ConfigError {
    pub fn at(location: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            findings: vec![ConfigFinding {
                location: location.into(),
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", finding.location, finding.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Simulation {
    pub step: f64,
    pub t_end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    pub tests: Option<Vec<TestId>>,
    pub lambda: Option<f64>,
    pub search: RateSearch,
    pub prop1_variant: bool,
}

/// A config with parameters resolved and every expression parsed.
#[derive(Clone, Debug)]
pub struct Setup {
    pub name: String,
    pub norm: NormKind,
    pub system: NeutralSystem,
    pub initial: InitialData,
    pub sampling: Sampling,
    pub simulation: Option<Simulation>,
    pub certify: CertifyOptions,
    /// `n` followed by the parameters in declaration order.
    pub parameters: Vec<(String, f64)>,
    /// Parameters referenced by at least one expression.
    pub used: BTreeSet<String>,
}

/// Raw config text, parsed lazily so sweeps can re-instantiate it.
#[derive(Clone, Debug)]
pub struct Config {
    raw: Value,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Value = serde_json::from_str(text).map_err(|e| ConfigError::at("$", format!("invalid JSON: {e}")))?;
        if !raw.is_object() {
            return Err(ConfigError::at("$", "config must be a JSON object"));
        }
        Ok(Config { raw })
    }

    /// Names that `--set` and sweeps may override.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = vec!["n".to_string()];
        if let Some(Value::Object(p)) = self.raw.get("params") {
            names.extend(p.keys().cloned());
        }
        names
    }

    pub fn instantiate(&self, overrides: &[(String, f64)]) -> Result<Setup> {
        let root = self.raw.as_object().expect("checked in from_json");
        let known = self.parameter_names();
        for (name, _) in overrides {
            if !known.contains(name) {
                return Err(ConfigError::at("--set", format!("unknown parameter `{name}`")));
            }
        }
        let over = |name: &str| overrides.iter().rev().find(|(k, _)| k == name).map(|(_, v)| *v);

        let n = match over("n") {
            Some(v) => v,
            None => match root.get("n") {
                Some(v) => v.as_f64().ok_or_else(|| ConfigError::at("n", "must be a number"))?,
                None => return Err(ConfigError::at("n", "missing dimension")),
            },
        };
        if !(n >= 1.0 && n.fract() == 0.0 && n <= 64.0) {
            return Err(ConfigError::at("n", format!("dimension must be an integer in [1, 64], got {n}")));
        }
        let mut ctx = Ctx {
            consts: vec![("n".into(), n)],
            used: RefCell::new(BTreeSet::new()),
        };
        let mut deps: Vec<(String, BTreeSet<String>)> = Vec::new();
        if let Some(params) = root.get("params") {
            let params = params.as_object().ok_or_else(|| ConfigError::at("params", "must be an object"))?;
            for (name, value) in params {
                if name == "t" || name == "n" || name == "lambda" || name == "i" || name == "j" {
                    return Err(ConfigError::at(format!("params.{name}"), "reserved name"));
                }
                let v = match over(name) {
                    Some(v) => v,
                    None => ctx.constant(value, &format!("params.{name}"))?,
                };
                deps.push((name.clone(), ctx.used.take()));
                ctx.consts.push((name.clone(), v));
            }
        }
        let n = n as usize;

        let name = root.get("name").and_then(Value::as_str).unwrap_or("unnamed").to_string();
        let norm = match root.get("norm") {
            None => NormKind::default(),
            Some(Value::String(s)) => s.parse().map_err(|e: ncert_core::matfun::MatfunError| ConfigError::at("norm", e.to_string()))?,
            Some(_) => return Err(ConfigError::at("norm", "must be \"inf\" or \"one\"")),
        };
        let t0 = match root.get("t0") {
            Some(v) => ctx.constant(v, "t0")?,
            None => 0.0,
        };

        let system = ctx.system(root, n, t0)?;
        let initial = ctx.initial(root.get("initial"), n)?;
        let sampling = sampling(&ctx, root.get("sampling"), t0)?;
        let simulation = match root.get("simulation") {
            None => None,
            Some(v) => {
                let o = object(v, "simulation")?;
                Some(Simulation {
                    step: ctx.constant(required(o, "step", "simulation")?, "simulation.step")?,
                    t_end: ctx.constant(required(o, "t_end", "simulation")?, "simulation.t_end")?,
                })
            }
        };
        let certify = ctx.certify_options(root.get("certify"))?;

        // a parameter counts as used when a used parameter depends on it
        let mut used = ctx.used.take();
        for (name, d) in deps.iter().rev() {
            if used.contains(name) {
                used.extend(d.iter().cloned());
            }
        }

        Ok(Setup {
            name,
            norm,
            system,
            initial,
            sampling,
            simulation,
            certify,
            parameters: ctx.consts,
            used,
        })
    }
}

fn object<'a>(v: &'a Value, loc: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| ConfigError::at(loc, "must be an object"))
}

fn array<'a>(v: &'a Value, loc: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| ConfigError::at(loc, "must be an array"))
}

fn required<'a>(o: &'a Map<String, Value>, key: &str, loc: &str) -> Result<&'a Value> {
    o.get(key).ok_or_else(|| ConfigError::at(format!("{loc}.{key}"), "missing"))
}

fn sampling(ctx: &Ctx, v: Option<&Value>, t0: f64) -> Result<Sampling> {
    let empty = Map::new();
    let o = match v {
        Some(v) => object(v, "sampling")?,
        None => &empty,
    };
    let opt = |key: &str| -> Result<Option<f64>> { o.get(key).map(|v| ctx.constant(v, &format!("sampling.{key}"))).transpose() };
    let length = match (opt("window_length")?, opt("period")?) {
        (Some(l), _) => l,
        (None, Some(p)) => p,
        (None, None) => DEFAULT_WINDOW,
    };
    let samples = match o.get("samples") {
        Some(v) => v
            .as_u64()
            .ok_or_else(|| ConfigError::at("sampling.samples", "must be a positive integer"))? as usize,
        None => match std::env::var(SAMPLES_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| ConfigError::at(SAMPLES_ENV, format!("not a positive integer: {s:?}")))?,
            Err(_) => DEFAULT_SAMPLES,
        },
    };
    Sampling::new(t0, t0 + length, samples).map_err(|e| ConfigError::at("sampling", e.to_string()))
}

/// Named constants plus a record of which ones expressions actually use.
struct Ctx {
    consts: Vec<(String, f64)>,
    used: RefCell<BTreeSet<String>>,
}

impl Ctx {
    fn lookup(&self, name: &str) -> Option<f64> {
        let v = self.consts.iter().rev().find(|(k, _)| k == name).map(|(_, v)| *v);
        if v.is_some() {
            self.used.borrow_mut().insert(name.to_string());
            return v;
        }
        (name == "pi").then_some(std::f64::consts::PI)
    }

    fn parse_in(&self, src: &str, loc: &str, extra: &[(&str, f64)]) -> Result<Expr> {
        let lookup = |name: &str| extra.iter().find(|(k, _)| *k == name).map(|(_, v)| *v).or_else(|| self.lookup(name));
        parse_with(src, &lookup).map_err(|e| ConfigError::at(loc, format!("cannot parse {src:?}: {e}")))
    }

    fn expr_in(&self, v: &Value, loc: &str, extra: &[(&str, f64)]) -> Result<Expr> {
        match v {
            Value::Number(x) => Ok(Expr::constant(x.as_f64().unwrap_or(f64::NAN))),
            Value::String(s) => self.parse_in(s, loc, extra),
            _ => Err(ConfigError::at(loc, "expected a number or an expression string")),
        }
    }

    fn expr(&self, v: &Value, loc: &str) -> Result<Expr> {
        self.expr_in(v, loc, &[])
    }

    /// An expression that must not depend on `t`.
    fn constant_in(&self, v: &Value, loc: &str, extra: &[(&str, f64)]) -> Result<f64> {
        let e = self.expr_in(v, loc, extra)?;
        if !e.is_constant() {
            return Err(ConfigError::at(loc, "must not depend on t"));
        }
        let x = e.eval(0.0).map_err(|err| ConfigError::at(loc, err.to_string()))?;
        if !x.is_finite() {
            return Err(ConfigError::at(loc, format!("not finite: {x}")));
        }
        Ok(x)
    }

    fn constant(&self, v: &Value, loc: &str) -> Result<f64> {
        self.constant_in(v, loc, &[])
    }

    fn index(&self, v: &Value, loc: &str, n: usize) -> Result<usize> {
        let x = self.constant(v, loc)?;
        if x.fract() != 0.0 || x < 1.0 || x > n as f64 {
            return Err(ConfigError::at(loc, format!("index must be an integer in [1, {n}], got {x}")));
        }
        Ok(x as usize - 1)
    }

    fn matrix(&self, v: &Value, loc: &str, n: usize) -> Result<MatrixFunction> {
        let build = |entries: Vec<Expr>| MatrixFunction::new(n, entries).map_err(|e| ConfigError::at(loc, e.to_string()));
        match v {
            Value::Number(_) | Value::String(_) => {
                let s = self.expr(v, loc)?;
                Ok(MatrixFunction::scalar_times(&s, &Mat::identity(n)))
            }
            Value::Array(rows) => {
                if rows.len() != n {
                    return Err(ConfigError::at(loc, format!("expected {n} rows, found {}", rows.len())));
                }
                let mut entries = Vec::with_capacity(n * n);
                for (i, row) in rows.iter().enumerate() {
                    let row_loc = format!("{loc}[{i}]");
                    let row = array(row, &row_loc)?;
                    if row.len() != n {
                        return Err(ConfigError::at(row_loc, format!("expected {n} entries, found {}", row.len())));
                    }
                    for (j, e) in row.iter().enumerate() {
                        entries.push(self.expr(e, &format!("{loc}[{i}][{j}]"))?);
                    }
                }
                build(entries)
            }
            Value::Object(o) => {
                if let Some(src) = o.get("entry") {
                    let mut entries = Vec::with_capacity(n * n);
                    for i in 1..=n {
                        for j in 1..=n {
                            let at = format!("{loc}.entry[{}][{}]", i - 1, j - 1);
                            entries.push(self.expr_in(src, &at, &[("i", i as f64), ("j", j as f64)])?);
                        }
                    }
                    build(entries)
                } else if let Some(scale) = o.get("scale") {
                    let s = self.expr(scale, &format!("{loc}.scale"))?;
                    let m_loc = format!("{loc}.matrix");
                    let m = self.constant_matrix(required(o, "matrix", loc)?, &m_loc, n)?;
                    Ok(MatrixFunction::scalar_times(&s, &m))
                } else if let Some(bands) = o.get("banded") {
                    let b_loc = format!("{loc}.banded");
                    let bands = object(bands, &b_loc)?;
                    let band = |key: &str| -> Result<Expr> {
                        match bands.get(key) {
                            Some(v) => self.expr(v, &format!("{b_loc}.{key}")),
                            None => Ok(Expr::constant(0.0)),
                        }
                    };
                    let (diag, sub, sup) = (band("diag")?, band("sub")?, band("super")?);
                    let mut entries = vec![Expr::constant(0.0); n * n];
                    for i in 0..n {
                        entries[i * n + i] = diag.clone();
                        if i > 0 {
                            entries[i * n + i - 1] = sub.clone();
                        }
                        if i + 1 < n {
                            entries[i * n + i + 1] = sup.clone();
                        }
                    }
                    if let Some(list) = o.get("overrides") {
                        let o_loc = format!("{loc}.overrides");
                        for (k, item) in array(list, &o_loc)?.iter().enumerate() {
                            let item_loc = format!("{o_loc}[{k}]");
                            let item = object(item, &item_loc)?;
                            let i = self.index(required(item, "i", &item_loc)?, &format!("{item_loc}.i"), n)?;
                            let j = self.index(required(item, "j", &item_loc)?, &format!("{item_loc}.j"), n)?;
                            entries[i * n + j] = self.expr(required(item, "value", &item_loc)?, &format!("{item_loc}.value"))?;
                        }
                    }
                    build(entries)
                } else {
                    Err(ConfigError::at(loc, "matrix object needs one of `entry`, `scale`, `banded`"))
                }
            }
            _ => Err(ConfigError::at(loc, "not a matrix")),
        }
    }

    fn constant_matrix(&self, v: &Value, loc: &str, n: usize) -> Result<Mat> {
        let f = self.matrix(v, loc, n)?;
        if !f.is_constant() {
            return Err(ConfigError::at(loc, "must not depend on t"));
        }
        f.eval(0.0).map_err(|e| ConfigError::at(loc, e.to_string()))
    }

    /// An array of n expressions, or one expression in the one-based
    /// component index `i`.
    fn vector(&self, v: &Value, loc: &str, n: usize) -> Result<Vec<Expr>> {
        match v {
            Value::Array(list) => {
                if list.len() != n {
                    return Err(ConfigError::at(loc, format!("expected {n} components, found {}", list.len())));
                }
                list.iter().enumerate().map(|(i, e)| self.expr(e, &format!("{loc}[{i}]"))).collect()
            }
            _ => (1..=n)
                .map(|i| self.expr_in(v, &format!("{loc}[{}]", i - 1), &[("i", i as f64)]))
                .collect(),
        }
    }

    fn delay(&self, v: Option<&Value>, loc: &str) -> Result<DelayArg> {
        match v {
            None => Ok(DelayArg::none()),
            Some(Value::Object(o)) => {
                let arg = self.expr(required(o, "arg", loc)?, &format!("{loc}.arg"))?;
                let bound = self.constant(required(o, "bound", loc)?, &format!("{loc}.bound"))?;
                Ok(DelayArg::new(arg, bound))
            }
            Some(v) => Ok(DelayArg::constant(self.constant(v, loc)?)),
        }
    }

    fn system(&self, root: &Map<String, Value>, n: usize, t0: f64) -> Result<NeutralSystem> {
        let sys = object(required(root, "system", "$")?, "system")?;
        let declared = match root.get("declared_bounds") {
            Some(v) => Some(object(v, "declared_bounds")?),
            None => None,
        };
        let decl = |key: &str| -> Result<Option<f64>> {
            match declared.and_then(|d| d.get(key)) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => self.constant(v, &format!("declared_bounds.{key}")).map(Some),
            }
        };

        let mut a = match sys.get("A") {
            Some(v) => self.matrix(v, "system.A", n)?,
            None => MatrixFunction::zeros(n),
        };
        if let Some(s) = decl("A_sup")? {
            a = a.with_declared_sup(s);
        }
        let g = self.delay(sys.get("g"), "system.g")?;

        let term_list = array(required(sys, "terms", "system")?, "system.terms")?;
        let bk_sup = match declared.and_then(|d| d.get("Bk_sup")) {
            None => Vec::new(),
            Some(v) => array(v, "declared_bounds.Bk_sup")?.clone(),
        };
        if bk_sup.len() > term_list.len() {
            return Err(ConfigError::at("declared_bounds.Bk_sup", "more entries than terms"));
        }
        let mut terms = Vec::with_capacity(term_list.len());
        for (k, t) in term_list.iter().enumerate() {
            let loc = format!("system.terms[{k}]");
            let o = object(t, &loc)?;
            let mut coeff = self.matrix(required(o, "B", &loc)?, &format!("{loc}.B"), n)?;
            if let Some(v) = bk_sup.get(k).filter(|v| !v.is_null()) {
                coeff = coeff.with_declared_sup(self.constant(v, &format!("declared_bounds.Bk_sup[{k}]"))?);
            }
            let delay = self.delay(o.get("h"), &format!("{loc}.h"))?;
            terms.push(DelayTerm { coeff, delay });
        }

        let forcing = sys.get("f").map(|v| self.vector(v, "system.f", n)).transpose()?;

        let mut declarations = Declarations {
            b_sum_sup: decl("B_sum_sup")?,
            mu_b_sup: decl("mu_B_sup")?,
            mu_p_sup: None,
            domination: None,
        };
        if let Some(v) = declared.and_then(|d| d.get("mu_P_sup")) {
            let loc = "declared_bounds.mu_P_sup";
            let src = v.as_str().ok_or_else(|| ConfigError::at(loc, "must be an expression string in `lambda`"))?;
            // parse once up front so errors surface here and usage is recorded
            let e = self.parse_in(src, loc, &[("lambda", 1.0)])?;
            if !e.is_constant() {
                return Err(ConfigError::at(loc, "must not depend on t"));
            }
            let consts: BTreeMap<String, f64> = self.consts.iter().cloned().collect();
            declarations.mu_p_sup = Some(RateBound::new(src, consts));
        }
        if let Some(v) = declared.and_then(|d| d.get("domination")) {
            let loc = "declared_bounds.domination";
            let o = object(v, loc)?;
            let a = o.get("A").map(|m| self.constant_matrix(m, &format!("{loc}.A"), n)).transpose()?;
            let sum = o.get("B").map(|m| self.constant_matrix(m, &format!("{loc}.B"), n)).transpose()?;
            let list = array(required(o, "Bk", loc)?, &format!("{loc}.Bk"))?;
            let terms = list
                .iter()
                .enumerate()
                .map(|(k, m)| self.constant_matrix(m, &format!("{loc}.Bk[{k}]"), n))
                .collect::<Result<Vec<_>>>()?;
            declarations.domination = Some(Domination { a, terms, sum });
        }

        NeutralSystem::new(t0, a, g, terms, forcing)
            .map(|s| s.with_declarations(declarations))
            .map_err(|e| ConfigError::at("system", e.to_string()))
    }

    fn initial(&self, v: Option<&Value>, n: usize) -> Result<InitialData> {
        let Some(v) = v else {
            return Ok(InitialData::zero(n));
        };
        let o = object(v, "initial")?;
        let component = |key: &str| -> Result<Vec<Expr>> {
            match o.get(key) {
                None => Ok(vec![Expr::constant(0.0); n]),
                Some(v) => self.vector(v, &format!("initial.{key}"), n),
            }
        };
        Ok(InitialData::new(component("phi")?, component("psi")?))
    }

    fn certify_options(&self, v: Option<&Value>) -> Result<CertifyOptions> {
        let mut opts = CertifyOptions {
            tests: None,
            lambda: None,
            search: RateSearch::default(),
            prop1_variant: false,
        };
        let Some(v) = v else {
            return Ok(opts);
        };
        let o = object(v, "certify")?;
        if let Some(list) = o.get("tests") {
            let list = array(list, "certify.tests")?;
            let mut ids = Vec::with_capacity(list.len());
            for (i, id) in list.iter().enumerate() {
                let loc = format!("certify.tests[{i}]");
                let s = id.as_str().ok_or_else(|| ConfigError::at(&loc, "must be a string"))?;
                ids.push(s.parse::<TestId>().map_err(|e| ConfigError::at(&loc, e.to_string()))?);
            }
            opts.tests = Some(ids);
        }
        if let Some(v) = o.get("lambda") {
            opts.lambda = Some(self.constant(v, "certify.lambda")?);
        }
        if let Some(v) = o.get("lambda_max") {
            opts.search.lambda_max = self.constant(v, "certify.lambda_max")?;
        }
        if let Some(v) = o.get("grid_points") {
            opts.search.grid_points = v
                .as_u64()
                .filter(|&p| p >= 2)
                .ok_or_else(|| ConfigError::at("certify.grid_points", "must be an integer ≥ 2"))? as usize;
        }
        if let Some(v) = o.get("prop1_variant") {
            opts.prop1_variant = v.as_bool().ok_or_else(|| ConfigError::at("certify.prop1_variant", "must be a boolean"))?;
        }
        Ok(opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_config(extra: &str) -> String {
        format!(
            r#"{{"n": 1, "params": {{"nu": 0.1, "twice": "2*nu"}},
                "system": {{"terms": [{{"B": "-twice"}}]}} {extra}}}"#
        )
    }

    #[test]
    fn parameters_resolve_in_order_and_track_usage() {
        let cfg = Config::from_json(&scalar_config("")).unwrap();
        let setup = cfg.instantiate(&[]).unwrap();
        assert_eq!(setup.parameters, vec![("n".into(), 1.0), ("nu".into(), 0.1), ("twice".into(), 0.2)]);
        assert!(setup.used.contains("twice"));
        assert!(setup.used.contains("nu"));

        let text = r#"{"n": 1, "params": {"nu": 0.1, "idle": "3*nu"}, "system": {"terms": [{"B": -1}]}}"#;
        let idle = Config::from_json(text).unwrap().instantiate(&[]).unwrap();
        assert!(idle.used.is_empty());
        let b = setup.system.terms()[0].coeff.eval(0.0).unwrap();
        assert_eq!(b[(0, 0)], -0.2);

        let setup = cfg.instantiate(&[("nu".into(), 0.5)]).unwrap();
        assert_eq!(setup.system.terms()[0].coeff.eval(0.0).unwrap()[(0, 0)], -1.0);
        assert!(cfg.instantiate(&[("mu".into(), 0.5)]).is_err());
    }

    #[test]
    fn malformed_entry_is_located() {
        let text = r#"{"n": 2, "system": {"terms": [{"B": [[1, "sin(t"], [0, 1]]}]}}"#;
        let err = Config::from_json(text).unwrap().instantiate(&[]).unwrap_err();
        assert_eq!(err.findings[0].location, "system.terms[0].B[0][1]");
    }

    #[test]
    fn matrix_shapes() {
        let text = r#"{"n": 3, "system": {
            "A": {"entry": "i*10 + j"},
            "terms": [
                {"B": {"banded": {"diag": -0.4, "sub": 0.05, "super": 0.05},
                       "overrides": [{"i": 1, "j": 2, "value": 0.1}, {"i": "n", "j": "n-1", "value": 0.1}]}},
                {"B": {"scale": "2", "matrix": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}, "h": 0.5}
            ]}}"#;
        let setup = Config::from_json(text).unwrap().instantiate(&[]).unwrap();
        let a = setup.system.a().eval(0.0).unwrap();
        assert_eq!(a[(1, 2)], 23.0);
        let b = setup.system.terms()[0].coeff.eval(0.0).unwrap();
        assert_eq!(b[(0, 1)], 0.1);
        assert_eq!(b[(1, 0)], 0.05);
        assert_eq!(b[(2, 1)], 0.1);
        assert_eq!(b[(1, 1)], -0.4);
        assert_eq!(setup.system.terms()[1].delay.bound, 0.5);
    }

    #[test]
    fn indexed_vectors() {
        let text = r#"{"n": 3, "system": {"terms": [{"B": -1}], "f": "i/10"},
                       "initial": {"phi": "i*cos(t)", "psi": ["0", "1", "2"]}}"#;
        let setup = Config::from_json(text).unwrap().instantiate(&[]).unwrap();
        assert_eq!(setup.system.forcing_at(0.0).unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(setup.initial.phi_at(0.0).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(setup.initial.psi_at(0.0).unwrap(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn sampling_defaults_and_period() {
        let setup = Config::from_json(&scalar_config(r#", "sampling": {"period": "2*pi", "samples": 11}"#))
            .unwrap()
            .instantiate(&[])
            .unwrap();
        assert!((setup.sampling.hi - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(setup.sampling.samples, 11);
    }
}
