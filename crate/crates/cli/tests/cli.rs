use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn ncert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncert"))
        .args(args)
        .env_remove("NCERT_SAMPLES")
        .output()
        .expect("binary runs")
}

fn ncert_on(cmd: &str, config: &Path, rest: &[&str]) -> (i32, String) {
    let mut args = vec![cmd, config.to_str().unwrap()];
    args.extend_from_slice(rest);
    let out = ncert(&args);
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("{e}: {s}"))
}

#[test]
fn certify_exit_codes() {
    let (code, out) = ncert_on("certify", &fixture("example2.json"), &["--test", "thm32"]);
    assert_eq!(code, 0);
    let report = json(&out);
    let lhs = report["certificates"][0]["constants"]["lhs_sum_of_norms"]["value"].as_f64().unwrap();
    assert!(lhs < 1.0);

    let (code, out) = ncert_on("certify", &fixture("example410.json"), &["--set", "nu=0.2"]);
    assert_eq!(code, 1);
    assert_eq!(json(&out)["exit_code"], 1);

    let (code, out) = ncert_on("certify", &fixture("malformed.json"), &[]);
    assert_eq!(code, 2);
    assert_eq!(json(&out)["findings"][0]["location"], "system.terms[0].B[0][1]");

    // only inapplicable tests selected
    let (code, _) = ncert_on("certify", &fixture("example2.json"), &["--test", "prop3"]);
    assert_eq!(code, 2);

    let (code, _) = ncert_on("certify", &fixture("missing.json"), &[]);
    assert_eq!(code, 2);
    let (code, _) = ncert_on("certify", &fixture("example2.json"), &["--test", "thm99"]);
    assert_eq!(code, 2);
    let (code, _) = ncert_on("certify", &fixture("example2.json"), &["--set", "mu=1"]);
    assert_eq!(code, 2);
}

#[test]
fn reports_are_deterministic_and_carry_provenance() {
    let a = ncert_on("certify", &fixture("example410.json"), &[]);
    let b = ncert_on("certify", &fixture("example410.json"), &[]);
    assert_eq!(a, b);
    let report = json(&a.1);
    for cert in report["certificates"].as_array().unwrap() {
        for (name, c) in cert["constants"].as_object().unwrap() {
            assert!(c["provenance"]["kind"].is_string(), "{name} lacks provenance");
        }
    }
}

#[test]
fn bound_rate_and_search() {
    let (code, out) = ncert_on("bound", &fixture("example2.json"), &["--lambda", "0.06"]);
    assert_eq!(code, 0);
    let report = json(&out);
    assert_eq!(report["bound"]["lambda"]["provenance"]["kind"], "declared");
    let c_f = report["bound"]["c_f"]["value"].as_f64().unwrap();
    assert!((c_f / 33.6 - 1.0).abs() < 0.01);

    let (code, out) = ncert_on("bound", &fixture("example2.json"), &["--optimize"]);
    assert_eq!(code, 0);
    assert!(json(&out)["bound"]["lambda"]["value"].as_f64().unwrap() >= 0.06);

    // ẋ = −x decays at rate 1, the top of the default search range
    let (code, out) = ncert_on("bound", &fixture("pure_ode.json"), &["--optimize"]);
    assert_eq!(code, 0);
    assert!(json(&out)["bound"]["lambda"]["value"].as_f64().unwrap() > 0.999);

    let (code, out) = ncert_on("bound", &fixture("example410.json"), &["--optimize", "--set", "nu=0.2"]);
    assert_eq!(code, 1);
    assert!(json(&out)["certificate"]["notes"][0].as_str().unwrap().contains("no certifiable rate"));
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("neutral.csv");
    let (code, out) = ncert_on("simulate", &fixture("neutral_closed_form.json"), &["--out", csv.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!((json(&out)["final_norm"]["value"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("t,x1,xd1"));
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - 0.5).abs() < 1e-9);

    let (code, out) = ncert_on("simulate", &fixture("zero_data.json"), &[]);
    assert_eq!(code, 0);
    for line in out.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0), "{line}");
    }

    let (code, _) = ncert_on("simulate", &fixture("example410.json"), &["--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(code, 2);
}

#[test]
fn verify_checks_the_bound() {
    let (code, out) = ncert_on("verify", &fixture("example2.json"), &[]);
    assert_eq!(code, 0);
    assert!(json(&out)["check"]["max_ratio"].as_f64().unwrap() <= 1.0);

    let (code, out) = ncert_on("verify", &fixture("zero_data.json"), &[]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["check"]["max_ratio"].as_f64(), Some(0.0));

    // here M0 = 1 and the bound is attained at t0, so halving M0 must fail
    let (code, out) = ncert_on("verify", &fixture("pure_ode.json"), &["--lambda", "0.5"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["bound"]["m0"]["value"].as_f64(), Some(1.0));
    let (code, out) = ncert_on("verify", &fixture("pure_ode.json"), &["--lambda", "0.5", "--m0-scale", "0.5"]);
    assert_eq!(code, 1);
    let report = json(&out);
    assert_eq!(report["check"]["first_violation"].as_f64(), Some(0.0));

    let (code, out) = ncert_on("verify", &fixture("example410.json"), &["--set", "nu=0.2"]);
    assert_eq!(code, 1);
    assert!(json(&out).get("check").is_none(), "not simulated");
}

#[test]
fn sweep_rows_and_errors() {
    let (code, out) = ncert_on(
        "sweep",
        &fixture("example410.json"),
        &["--param", "nu", "--range", "0.01:0.05", "--points", "5"],
    );
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("kind,nu,test,verdict,margin"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.split(',').nth(3) == Some("certified")));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("unused.json");
    std::fs::write(
        &cfg,
        r#"{"n": 1, "params": {"nu": 0.1, "unused": 2}, "system": {"terms": [{"B": "-nu"}]},
            "sampling": {"window_length": 1, "samples": 5}}"#,
    )
    .unwrap();
    let (code, out) = ncert_on("sweep", &cfg, &["--param", "unused", "--range", "0:1"]);
    assert_eq!(code, 2);
    assert!(json(&out)["findings"][0]["message"].as_str().unwrap().contains("not used"));
    let (code, _) = ncert_on("sweep", &cfg, &["--param", "ghost", "--range", "0:1"]);
    assert_eq!(code, 2);
    let (code, _) = ncert_on("sweep", &cfg, &["--param", "nu", "--range", "1:0"]);
    assert_eq!(code, 2);
}

#[test]
fn samples_env_applies_only_without_config_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scalar.json");
    std::fs::write(&cfg, r#"{"n": 1, "system": {"terms": [{"B": "-1 + 0.1*sin(t)"}]}}"#).unwrap();
    let run = |env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ncert"));
        cmd.args(["certify", cfg.to_str().unwrap(), "--test", "thm32"]);
        match env {
            Some(v) => cmd.env("NCERT_SAMPLES", v),
            None => cmd.env_remove("NCERT_SAMPLES"),
        };
        json(&String::from_utf8(cmd.output().unwrap().stdout).unwrap())["sampling"]["samples"].as_u64()
    };
    assert_eq!(run(None), Some(2001));
    assert_eq!(run(Some("101")), Some(101));

    let fixed = ncert(&["certify", fixture("example410.json").to_str().unwrap(), "--test", "thm32"]);
    let with_env = Command::new(env!("CARGO_BIN_EXE_ncert"))
        .args(["certify", fixture("example410.json").to_str().unwrap(), "--test", "thm32"])
        .env("NCERT_SAMPLES", "101")
        .output()
        .unwrap();
    assert_eq!(fixed.stdout, with_env.stdout);
}
