//! Command implementations. Each returns the exit code and the text for
//! stdout so the binary and the tests share one code path.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ncert_core::certify::{
    baseline_km_delay, baseline_km_neutral, certify_cor33a, certify_nondelay_form, certify_rate_free, certify_scalar,
    certify_with_rate, max_decay_rate_by, solution_bound, Certificate, CertifyError, Constant, ExponentialBound, Provenance,
    TestId, Verdict,
};
use ncert_core::matfun::vector_norm;
use ncert_core::model::validate;
use ncert_core::simulate::{data_norms, integrate, verify_bound};

use crate::config::{Config, ConfigError, ConfigFinding, Setup};
use crate::report::{
    to_json, BoundCommandReport, BoundReport, CertifyReport, DataReport, ErrorReport, Header, SimulateReport, TestOutcome,
    VerifyReport,
};
use crate::sweep::{run_sweep, SweepSpec};

/// Samples per window used when measuring initial data and forcing.
const DATA_SAMPLES: usize = 2001;

#[derive(Debug, Parser)]
#[command(name = "ncert", version, about = "Stability certificates for linear neutral delay systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run certificate tests and report every constant with its provenance.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Test to run (repeatable); defaults to the config's list, else all.
        #[arg(long = "test", value_name = "ID")]
        tests: Vec<TestId>,
    },
    /// Compute an exponential solution bound.
    Bound {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "optimize")]
        lambda: Option<f64>,
        /// Search for the largest certifiable rate.
        #[arg(long)]
        optimize: bool,
    },
    /// Integrate the system and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output path; the CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify, simulate and compare the trajectory with the bound.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
        /// Multiplies M0 before checking; used to exercise violations.
        #[arg(long, hide = true, default_value_t = 1.0)]
        m0_scale: f64,
    },
    /// Evaluate tests across a parameter range and locate verdict flips.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "test", value_name = "ID")]
        tests: Vec<TestId>,
        #[arg(long)]
        param: String,
        /// Parameter range as LO:HI.
        #[arg(long, value_parser = parse_range)]
        range: (f64, f64),
        #[arg(long, default_value_t = 41)]
        points: usize,
        /// Bisect each verdict flip.
        #[arg(long)]
        refine: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file.
    pub config: PathBuf,
    /// Override a parameter, NAME=VALUE (repeatable).
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, f64)>,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("not a number: {v:?}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("not a number: {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("not a number: {hi:?}"))?;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(format!("range needs LO < HI, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

impl Outcome {
    fn error(command: &'static str, err: ConfigError) -> Self {
        Outcome {
            code: 2,
            stdout: to_json(&ErrorReport::new(command, err.findings)),
        }
    }

    fn failure(command: &'static str, location: &str, message: impl ToString) -> Self {
        Self::error(command, ConfigError::at(location, message.to_string()))
    }
}

/// Parse arguments (without the program name first) and run.
pub fn run_args<I, S>(args: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("ncert")).chain(args.into_iter().map(Into::into));
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli.command),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            Outcome {
                code,
                stdout: e.render().to_string(),
            }
        }
    }
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Certify { common, tests } => cmd_certify(&common.config, &common.set, &tests),
        Command::Bound { common, lambda, optimize } => cmd_bound(&common.config, &common.set, lambda, optimize),
        Command::Simulate { common, out } => cmd_simulate(&common.config, &common.set, out.as_deref()),
        Command::Verify { common, lambda, m0_scale } => cmd_verify(&common.config, &common.set, lambda, m0_scale),
        Command::Sweep {
            common,
            tests,
            param,
            range,
            points,
            refine,
        } => {
            let spec = SweepSpec {
                param,
                lo: range.0,
                hi: range.1,
                points,
                refine,
            };
            cmd_sweep(&common.config, &common.set, &tests, &spec)
        }
    }
}

fn load(command: &'static str, path: &Path, set: &[(String, f64)]) -> Result<(Config, Setup), Outcome> {
    let config = Config::load(path).map_err(|e| Outcome::error(command, e))?;
    let setup = config.instantiate(set).map_err(|e| Outcome::error(command, e))?;
    Ok((config, setup))
}

/// Model validation errors as config findings, or nothing when it passes.
fn validation_failure(setup: &Setup) -> Option<ConfigError> {
    let report = validate(&setup.system, setup.norm, &setup.sampling);
    if report.passed {
        return None;
    }
    Some(ConfigError {
        findings: report
            .errors()
            .map(|f| ConfigFinding {
                location: format!("system ({})", f.quantity),
                message: f.message.clone(),
            })
            .collect(),
    })
}

/// Rate certificate for `route`, at `lambda` or, when that is `None`, the
/// largest certifiable rate. When no rate certifies, the certificate at the smallest
/// searched rate is returned with a note.
fn rate_certificate(setup: &Setup, route: &str, id: TestId, lambda: Option<f64>) -> Result<Certificate, CertifyError> {
    let sys = &setup.system;
    if let Some(l) = lambda {
        return Ok(certify_with_rate(sys, l, setup.norm, &setup.sampling)?.restricted_to(route, id));
    }
    let view = |c: &Certificate| c.restricted_to(route, id);
    match max_decay_rate_by(sys, setup.norm, &setup.sampling, setup.certify.search, view) {
        Ok((_, cert, _)) => Ok(cert),
        Err(CertifyError::NoCertifiableRate { lambda_max }) => {
            let l = setup.certify.search.rates()[0];
            let mut cert = certify_with_rate(sys, l, setup.norm, &setup.sampling)?.restricted_to(route, id);
            cert.notes.push(format!("no certifiable rate in (0, {lambda_max}]; constants shown at lambda = {l}"));
            Ok(cert)
        }
        Err(e) => Err(e),
    }
}

/// Runs the selected tests in order. Tests that share a computation (the
/// two routes of a theorem, the two baselines) compute it once.
pub fn run_tests(setup: &Setup, ids: &[TestId]) -> Vec<TestOutcome> {
    let sys = &setup.system;
    let (norm, s) = (setup.norm, &setup.sampling);
    let mut rate_free = None;
    let mut baselines = None;
    ids.iter()
        .map(|&id| {
            let result = match id {
                TestId::Thm31 => rate_certificate(setup, "m1", id, setup.certify.lambda),
                TestId::Thm31a => rate_certificate(setup, "m2", id, setup.certify.lambda),
                TestId::Thm32 | TestId::Thm32a => {
                    let base = rate_free.get_or_insert_with(|| certify_rate_free(sys, norm, s).map_err(|e| e.to_string()));
                    let route = if id == TestId::Thm32 { "sum_of_norms" } else { "norm_of_sum" };
                    match base {
                        Ok(c) => Ok(c.restricted_to(route, id)),
                        Err(e) => {
                            return TestOutcome::Error {
                                test_id: id,
                                error: e.clone(),
                            }
                        }
                    }
                }
                TestId::Cor33a => certify_cor33a(sys, norm, s),
                TestId::Cor41 => certify_nondelay_form(sys, norm, s),
                TestId::Cor410 => certify_scalar(sys, norm, s),
                TestId::Prop1 | TestId::Prop2 => {
                    let base = baselines.get_or_insert_with(|| {
                        baseline_km_neutral(sys, norm, s, setup.certify.prop1_variant).map_err(|e| e.to_string())
                    });
                    match base {
                        Ok((p1, p2)) => Ok(if id == TestId::Prop1 { p1.clone() } else { p2.clone() }),
                        Err(e) => {
                            return TestOutcome::Error {
                                test_id: id,
                                error: e.clone(),
                            }
                        }
                    }
                }
                TestId::Prop3 => baseline_km_delay(sys, norm, s),
            };
            match result {
                Ok(c) => TestOutcome::Certificate(Box::new(c)),
                Err(e) => TestOutcome::Error {
                    test_id: id,
                    error: e.to_string(),
                },
            }
        })
        .collect()
}

/// Any error ⇒ 2; all certified ⇒ 0; any not certified ⇒ 1; otherwise 2.
pub fn exit_code(outcomes: &[TestOutcome]) -> i32 {
    let mut any_not = false;
    let mut all = true;
    for o in outcomes {
        match o {
            TestOutcome::Error { .. } => return 2,
            TestOutcome::Certificate(c) => match c.verdict {
                Verdict::Certified => {}
                Verdict::NotCertified => {
                    any_not = true;
                    all = false;
                }
                Verdict::Inapplicable => all = false,
            },
        }
    }
    if all && !outcomes.is_empty() {
        0
    } else if any_not {
        1
    } else {
        2
    }
}

fn selected(setup: &Setup, tests: &[TestId]) -> Vec<TestId> {
    if !tests.is_empty() {
        tests.to_vec()
    } else if let Some(t) = &setup.certify.tests {
        t.clone()
    } else {
        TestId::ALL.to_vec()
    }
}

pub fn cmd_certify(path: &Path, set: &[(String, f64)], tests: &[TestId]) -> Outcome {
    const CMD: &str = "certify";
    let (_, setup) = match load(CMD, path, set) {
        Ok(v) => v,
        Err(o) => return o,
    };
    let validation = validate(&setup.system, setup.norm, &setup.sampling);
    if !validation.passed {
        return Outcome::error(CMD, validation_failure(&setup).expect("validation failed"));
    }
    let certificates = run_tests(&setup, &selected(&setup, tests));
    let code = exit_code(&certificates);
    let report = CertifyReport {
        header: Header::new(CMD, &setup),
        validation,
        certificates,
        exit_code: code,
    };
    Outcome {
        code,
        stdout: to_json(&report),
    }
}

fn lambda_provenance(explicit: bool, cert: &Certificate) -> Provenance {
    if explicit {
        Provenance::Declared
    } else {
        Constant::computed(cert.lambda.unwrap_or(f64::NAN), &["rate search"]).provenance
    }
}

pub fn cmd_bound(path: &Path, set: &[(String, f64)], lambda: Option<f64>, optimize: bool) -> Outcome {
    const CMD: &str = "bound";
    let (_, setup) = match load(CMD, path, set) {
        Ok(v) => v,
        Err(o) => return o,
    };
    if let Some(err) = validation_failure(&setup) {
        return Outcome::error(CMD, err);
    }
    let lambda = if optimize { None } else { lambda.or(setup.certify.lambda) };
    let cert = match rate_certificate(&setup, "m1", TestId::Thm31, lambda) {
        Ok(c) => c,
        Err(e) => return Outcome::failure(CMD, "certify", e),
    };
    let (code, bound, notes) = match solution_bound(&setup.system, &cert) {
        Ok(b) => (0, Some(BoundReport::new(&b, &cert, lambda_provenance(lambda.is_some(), &cert))), Vec::new()),
        Err(e) => (1, None, vec![e.to_string()]),
    };
    let report = BoundCommandReport {
        header: Header::new(CMD, &setup),
        certificate: cert,
        bound,
        notes,
        exit_code: code,
    };
    Outcome {
        code,
        stdout: to_json(&report),
    }
}

pub fn cmd_simulate(path: &Path, set: &[(String, f64)], out: Option<&Path>) -> Outcome {
    const CMD: &str = "simulate";
    let (_, setup) = match load(CMD, path, set) {
        Ok(v) => v,
        Err(o) => return o,
    };
    let Some(sim) = setup.simulation else {
        return Outcome::failure(CMD, "simulation", "missing simulation block");
    };
    let traj = match integrate(&setup.system, &setup.initial, sim.t_end, sim.step) {
        Ok(t) => t,
        Err(e) => return Outcome::failure(CMD, "simulation", e),
    };
    let Some(out) = out else {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).expect("writing to memory");
        return Outcome {
            code: 0,
            stdout: String::from_utf8(buf).expect("CSV is ASCII"),
        };
    };
    let written = File::create(out).and_then(|f| {
        let mut w = BufWriter::new(f);
        traj.write_csv(&mut w)?;
        w.flush()
    });
    if let Err(e) = written {
        return Outcome::failure(CMD, &out.display().to_string(), e);
    }
    let report = SimulateReport {
        header: Header::new(CMD, &setup),
        simulation: sim,
        out: out.display().to_string(),
        points: traj.len(),
        final_norm: Constant::computed(vector_norm(traj.final_state(), setup.norm), &["trajectory"]),
        exit_code: 0,
    };
    Outcome {
        code: 0,
        stdout: to_json(&report),
    }
}

fn data_report(d: &ncert_core::certify::DataNorms) -> DataReport {
    DataReport {
        x0: Constant::computed(d.x0, &["initial.phi(t0)"]),
        psi: Constant::computed(d.psi, &["initial.psi on [t0 - sigma, t0]"]),
        phi: d
            .phi
            .iter()
            .enumerate()
            .map(|(k, &v)| Constant::computed(v, &[format!("initial.phi on [t0 - tau{}, t0]", k + 1)]))
            .collect(),
        f: Constant::computed(d.f, &["system.f on [t0, t_end]"]),
    }
}

pub fn cmd_verify(path: &Path, set: &[(String, f64)], lambda: Option<f64>, m0_scale: f64) -> Outcome {
    const CMD: &str = "verify";
    let (_, setup) = match load(CMD, path, set) {
        Ok(v) => v,
        Err(o) => return o,
    };
    let Some(sim) = setup.simulation else {
        return Outcome::failure(CMD, "simulation", "missing simulation block");
    };
    if let Some(err) = validation_failure(&setup) {
        return Outcome::error(CMD, err);
    }
    let lambda = lambda.or(setup.certify.lambda);
    let cert = match rate_certificate(&setup, "m1", TestId::Thm31, lambda) {
        Ok(c) => c,
        Err(e) => return Outcome::failure(CMD, "certify", e),
    };
    let mut report = VerifyReport {
        header: Header::new(CMD, &setup),
        certificate: cert,
        bound: None,
        data: None,
        simulation: None,
        check: None,
        notes: Vec::new(),
        exit_code: 1,
    };
    let bound = match solution_bound(&setup.system, &report.certificate) {
        Ok(b) => scaled_bound(b, m0_scale),
        Err(e) => {
            report.notes.push(format!("{e}; not simulated"));
            return Outcome {
                code: 1,
                stdout: to_json(&report),
            };
        }
    };
    if m0_scale != 1.0 {
        report.notes.push(format!("M0 scaled by {m0_scale} before checking"));
    }
    let result = integrate(&setup.system, &setup.initial, sim.t_end, sim.step).and_then(|traj| {
        let data = data_norms(&setup.system, &setup.initial, setup.norm, sim.t_end, DATA_SAMPLES)?;
        Ok((verify_bound(&traj, &bound, &data, setup.norm), data))
    });
    let (check, data) = match result {
        Ok(v) => v,
        Err(e) => return Outcome::failure(CMD, "simulation", e),
    };
    let code = if check.first_violation.is_none() { 0 } else { 1 };
    report.bound = Some(BoundReport::new(&bound, &report.certificate, lambda_provenance(lambda.is_some(), &report.certificate)));
    report.data = Some(data_report(&data));
    report.simulation = Some(sim);
    report.check = Some(check);
    report.exit_code = code;
    Outcome {
        code,
        stdout: to_json(&report),
    }
}

fn scaled_bound(mut b: ExponentialBound, s: f64) -> ExponentialBound {
    b.m0 *= s;
    b.c_f *= s;
    b
}

pub fn cmd_sweep(path: &Path, set: &[(String, f64)], tests: &[TestId], spec: &SweepSpec) -> Outcome {
    const CMD: &str = "sweep";
    let config = match Config::load(path) {
        Ok(c) => c,
        Err(e) => return Outcome::error(CMD, e),
    };
    let tests = if tests.is_empty() { vec![TestId::Thm32, TestId::Thm32a] } else { tests.to_vec() };
    match run_sweep(&config, set, &tests, spec) {
        Ok(table) => Outcome {
            code: 0,
            stdout: table.to_csv(&spec.param),
        },
        Err(e) => Outcome::error(CMD, e),
    }
}
