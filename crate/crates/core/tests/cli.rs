//! End-to-end runs of the `mbreg` driver through `cli::run`.

use mbreg::cli::{self, EXIT_ERROR, EXIT_NEGATIVE, EXIT_OK};
use std::path::Path;

const ACOUSTIC: &str = r#"
[problem]
kind = "acoustic"
nx = 16
ny = 16

[acoustic]
ring = { center = [0.5, 0.5], radius = 0.2, count = 8 }
sources = [{ kind = "point", center = [0.3, 0.6] }]

[noise]
deltas = [1e-1, 1e-2, 1e-3, 1e-4]
delta = 1e-2

[regularization]
alpha0 = 1e-4
c0 = 1e6
tau = 1.5

[solver]
max_iterations = 60
state_steps = 5
"#;

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(std::iter::once("mbreg").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn solve_writes_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACOUSTIC);
    let out = dir.path().join("out");
    let (code, stdout, stderr) = run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(code == EXIT_OK || code == EXIT_NEGATIVE, "{stderr}");
    assert!(stdout.contains("feasible"));
    for f in ["summary.json", "f_re.csv", "f_im.csv", "g_re.csv", "g_im.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["feasible"].as_bool(), Some(code == EXIT_OK));
}

#[test]
fn study_report_has_one_row_per_delta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACOUSTIC);
    let out = dir.path().join("study");
    let (code, _, stderr) = run(&["study", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(code == EXIT_OK || code == EXIT_NEGATIVE, "{stderr}");
    let text = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("delta"));
    assert_eq!(lines.count(), 4);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn fixed_alpha_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let text = ACOUSTIC.replace("tau = 1.5", "tau = 1.5\nalpha = 1.0");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("fixed");
    let (_, stdout, stderr) = run(&["study", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("rule_violation true"), "{stdout}{stderr}");
}

#[test]
fn missing_config_is_an_error() {
    let (code, _, stderr) = run(&["solve", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code, EXIT_ERROR);
    assert!(stderr.contains("nonexistent"));
}

#[test]
fn tau_at_most_one_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &ACOUSTIC.replace("tau = 1.5", "tau = 1.0"));
    let (code, _, stderr) = run(&["solve", "--config", &cfg]);
    assert_eq!(code, EXIT_ERROR);
    assert!(stderr.contains("tau"), "{stderr}");
}

#[test]
fn parse_error_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &ACOUSTIC.replace("nx = 16", "nx = = 16"));
    let (code, _, stderr) = run(&["solve", "--config", &cfg]);
    assert_eq!(code, EXIT_ERROR);
    assert!(stderr.contains("line 4"), "{stderr}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &ACOUSTIC.replace("nx = 16", "nx = 16\nnz = 3"));
    assert_eq!(run(&["solve", "--config", &cfg]).0, EXIT_ERROR);
}

#[test]
fn verify_passes_and_detects_a_broken_adjoint() {
    let (code, stdout, _) = run(&["verify", "--problems", "grid,eit"]);
    assert_eq!(code, EXIT_OK, "{stdout}");
    assert!(!stdout.contains("FAIL"));
    let (code, stdout, _) = run(&["verify", "--problems", "grid,eit", "--fault", "broken-adjoint"]);
    assert_eq!(code, EXIT_NEGATIVE);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL") && l.contains("adjoint")));
}

#[test]
fn verify_rejects_bad_problem_lists() {
    assert_eq!(run(&["verify", "--problems", ""]).0, EXIT_ERROR);
    assert_eq!(run(&["verify", "--problems", "optics"]).0, EXIT_ERROR);
    assert_eq!(run(&["frobnicate"]).0, EXIT_ERROR);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}
