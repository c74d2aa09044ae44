//! End-to-end tests of the `noether` binary: exit codes, output shapes,
//! and the documented format contracts.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../noether-core/corpus")
        .join(name)
}

fn noether(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noether"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn derive_renders_all_sections() {
    let sys = corpus("oscillator.ndl");
    let out = noether(&["derive", sys.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("gamma: d(q)*d(eps(q)) - q*eps(q)*omega^2"), "{text}");
    assert!(text.contains("mass[0][0]: 1"));
    assert!(text.contains("euler_lagrange[q]: dd(q) + q*omega^2"));
    assert!(text.contains("variational[q]: dd(eps(q)) + eps(q)*omega^2"));
}

#[test]
fn derive_structured_mirrors_text() {
    let sys = corpus("oscillator.ndl");
    let out = noether(&["derive", sys.to_str().unwrap(), "--format", "structured"]);
    assert_eq!(exit_code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(
        doc["gamma"],
        "d(q)*d(eps(q)) - q*eps(q)*omega^2".to_string()
    );
    assert_eq!(doc["euler_lagrange"][0], "dd(q) + q*omega^2".to_string());
}

#[test]
fn missing_file_is_usage_error() {
    let out = noether(&["derive", "no_such_system.ndl"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("cannot open"), "{}", stderr(&out));
}

#[test]
fn degenerate_lagrangian_is_derivation_error() {
    let mut f = tempfile::NamedTempFile::with_suffix(".ndl").unwrap();
    writeln!(f, "system degenerate\ncoords q\nlagrangian q").unwrap();
    let out = noether(&["derive", f.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    assert!(stderr(&out).contains("singular mass matrix"), "{}", stderr(&out));
}

#[test]
fn parse_diagnostics_carry_path_line_and_column() {
    let mut f = tempfile::NamedTempFile::with_suffix(".ndl").unwrap();
    writeln!(f, "system s\ncoords q\nlagrangian d(p)^2").unwrap();
    let out = noether(&["derive", f.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains(":3:14: unknown coordinate `p`"), "{err}");
}

#[test]
fn check_symmetry_exits_zero() {
    let sys = corpus("oscillator.ndl");
    let out = noether(&[
        "check",
        sys.to_str().unwrap(),
        "--generator",
        "time_translation",
    ]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("verdict: symbolic-zero"));
}

#[test]
fn check_non_symmetry_exits_one_with_witness() {
    let sys = corpus("oscillator.ndl");
    let out = noether(&[
        "check",
        sys.to_str().unwrap(),
        "--generator",
        "eps_scaling",
    ]);
    assert_eq!(exit_code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("verdict: non-zero"));
    assert!(text.contains("witness"));
}

#[test]
fn unknown_generator_is_usage_error() {
    let sys = corpus("oscillator.ndl");
    let out = noether(&["check", sys.to_str().unwrap(), "--generator", "nope"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("unknown generator"));
}

#[test]
fn charge_emits_classical_and_extended_pair() {
    let sys = corpus("ignorable.ndl");
    let out = noether(&[
        "charge",
        sys.to_str().unwrap(),
        "--generator",
        "q1_translation",
    ]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("charge: q1_translation_classical"));
    assert!(text.contains("expression: d(q1)*m11 + d(q2)*m12"));
    assert!(text.contains("charge: q1_translation_extended"));
    assert!(
        text.contains("expression: d(q1)*m11 + d(q2)*m12 + d(eps(q1))*m11 + d(eps(q2))*m12")
    );
    assert!(text.contains("charge: q1_translation_gamma_gradient"));
}

#[test]
fn charge_refuses_non_symmetry_without_force() {
    let sys = corpus("oscillator.ndl");
    let out = noether(&[
        "charge",
        sys.to_str().unwrap(),
        "--generator",
        "eps_scaling",
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("not a symmetry"));

    let out = noether(&[
        "charge",
        sys.to_str().unwrap(),
        "--generator",
        "eps_scaling",
        "--force",
    ]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("unverified: true"));
}

#[test]
fn simulate_writes_csv_and_reports_drift() {
    let sys = corpus("oscillator.ndl");
    let init = corpus("oscillator.init.json");
    let csv = tempfile::NamedTempFile::with_suffix(".csv").unwrap();
    let out = noether(&[
        "simulate",
        sys.to_str().unwrap(),
        "--init",
        init.to_str().unwrap(),
        "--generator",
        "time_translation",
        "--t-end",
        "10",
        "--out",
        csv.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let summary = stdout(&out);
    assert!(summary.contains("passed: true"), "{summary}");

    let body = std::fs::read_to_string(csv.path()).unwrap();
    let mut lines = body.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,q_q,v_q,eps_q,w_q,time_translation_extended,time_translation_classical"
    );
    assert_eq!(body.lines().count(), 10002);
}

#[test]
fn simulate_tolerance_gates_exit_status() {
    let sys = corpus("oscillator.ndl");
    let init = corpus("oscillator.init.json");
    let out = noether(&[
        "simulate",
        sys.to_str().unwrap(),
        "--init",
        init.to_str().unwrap(),
        "--t-end",
        "10",
        "--generator",
        "time_translation",
        "--tol",
        "1e-16",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(stdout(&out).contains("passed: false"));
}

#[test]
fn simulate_blowup_is_integration_error() {
    let mut f = tempfile::NamedTempFile::with_suffix(".ndl").unwrap();
    writeln!(
        f,
        "system blowup\ncoords q\nlagrangian (1/2)*d(q)^2 + (1/3)*q^3\n\ngenerator time_translation\nxi = 1"
    )
    .unwrap();
    let mut init = tempfile::NamedTempFile::with_suffix(".json").unwrap();
    writeln!(init, "{{\"t0\": 0, \"q\": [2.0, 0.0, 0.0, 0.0]}}").unwrap();
    let out = noether(&[
        "simulate",
        f.path().to_str().unwrap(),
        "--init",
        init.path().to_str().unwrap(),
        "--t-end",
        "10",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(exit_code(&out), 4);
    assert!(stderr(&out).contains("non-finite state at step"), "{}", stderr(&out));
}

#[test]
fn verify_single_property_passes() {
    let out = noether(&["verify", "--only", "rk4_order"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("passed: true"));
}

#[test]
fn verify_rejects_unknown_property_and_system() {
    let out = noether(&["verify", "--only", "bogus"]);
    assert_eq!(exit_code(&out), 2);
    let out = noether(&["verify", "--system", "bogus"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn verify_verdicts_are_seed_stable() {
    let a = noether(&["verify", "--only", "invariance"]);
    let b = noether(&["verify", "--only", "invariance", "--seed", "7"]);
    assert_eq!(exit_code(&a), 0);
    assert_eq!(exit_code(&b), 0);
    let verdicts = |s: &str| {
        s.lines()
            .filter(|l| l.starts_with('['))
            .map(|l| l.split_whitespace().next().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(verdicts(&stdout(&a)), verdicts(&stdout(&b)));
}

#[test]
fn verify_oracle_filter_prints_ratio_lines() {
    let out = noether(&["verify", "--system", "pendulum", "--only", "tangent_oracle"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("halving ratios"), "{text}");
    assert!(!text.contains("central_potential"), "{text}");
}

#[test]
fn outputs_are_byte_deterministic() {
    let sys = corpus("central_potential.ndl");
    let a = noether(&["derive", sys.to_str().unwrap()]);
    let b = noether(&["derive", sys.to_str().unwrap()]);
    assert_eq!(stdout(&a), stdout(&b));

    let a = noether(&["check", sys.to_str().unwrap(), "--format", "structured"]);
    let b = noether(&["check", sys.to_str().unwrap(), "--format", "structured"]);
    assert_eq!(stdout(&a), stdout(&b));
}
