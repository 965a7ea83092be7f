use std::path::{Path, PathBuf};
use std::process::Command;

use nlqf_cli::{run_scenario, CliError, EXIT_NUMERICAL, EXIT_SCENARIO};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Column names and rows of a CSV written by the tool.
fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn nlqf(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nlqf")).args(args).output().unwrap()
}

#[test]
fn minimal_gram_is_one_nonnegative_entry() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_scenario(&scenario("minimal.toml"), dir.path(), &[]).unwrap();
    assert_eq!(m.status, "ok");
    assert_eq!(m.outputs.len(), 1);
    let text = std::fs::read_to_string(dir.path().join("gram.csv")).unwrap();
    assert!(text.starts_with(&format!("# {}", nlqf_core::CONVENTIONS)));
    let (h, rows) = read_csv(&text);
    assert_eq!(rows.len(), 1);
    assert!(column(&h, &rows, "re")[0] > 0.0);
    assert_eq!(column(&h, &rows, "im")[0], 0.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["conventions"], nlqf_core::CONVENTIONS);
    assert!(manifest["diagnostics"]["shell_coverage"]["f"][0]["in_band"].as_u64().unwrap() > 0);
}

#[test]
fn microcausality_sweep_decays_and_vanishes_when_spacelike() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&scenario("microcausality.toml"), dir.path(), &[]).unwrap();
    let (h, rows) = read_csv(&std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap());
    let c = column(&h, &rows, "normalized");
    let rel: Vec<&str> = rows.iter().map(|r| r.last().unwrap().as_str()).collect();
    assert!(c[0] > 1e-3);
    assert!(rel.contains(&"spacelike"));
    for (v, r) in c.iter().zip(&rel) {
        if *r == "spacelike" {
            assert!(*v <= 1e-6, "{v}");
        }
    }
    // monotone decay down to the discretisation floor
    let floor = 1e-9;
    let tail: Vec<f64> = c.iter().copied().skip_while(|v| *v > 0.5).take_while(|v| *v > floor).collect();
    assert!(tail.len() >= 5);
    assert!(tail.windows(2).all(|w| w[1] < w[0]), "{tail:?}");
}

#[test]
fn em_cross_pair_vanishes_without_couplings() {
    let dir = tempfile::tempdir().unwrap();
    let o = ["model.params.lambda=[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]".to_string(), "model.flags.derivative=false".into()];
    run_scenario(&scenario("em.toml"), dir.path(), &o).unwrap();
    let (h, rows) = read_csv(&std::fs::read_to_string(dir.path().join("cross.csv")).unwrap());
    assert!(column(&h, &rows, "re")[0].abs() <= 1e-12);
    assert!(column(&h, &rows, "im")[0].abs() <= 1e-12);
    // the derivative terms of the default scenario do correlate the two
    let dir2 = tempfile::tempdir().unwrap();
    run_scenario(&scenario("em.toml"), dir2.path(), &[]).unwrap();
    let (h, rows) = read_csv(&std::fs::read_to_string(dir2.path().join("cross.csv")).unwrap());
    assert!(column(&h, &rows, "normalized")[0] > 1e-4);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_scenario(&scenario("quadratic.toml"), a.path(), &[]).unwrap();
    run_scenario(&scenario("quadratic.toml"), b.path(), &[]).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn overrides_change_the_hash_and_the_result() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m1 = run_scenario(&scenario("minimal.toml"), a.path(), &[]).unwrap();
    let m2 = run_scenario(&scenario("minimal.toml"), b.path(), &["functions.f.amplitude=2.0".into()]).unwrap();
    assert_ne!(m1.scenario_sha256, m2.scenario_sha256);
    let v = |d: &Path| {
        let (h, rows) = read_csv(&std::fs::read_to_string(d.join("gram.csv")).unwrap());
        column(&h, &rows, "re")[0]
    };
    assert!((v(b.path()) / v(a.path()) - 4.0).abs() < 1e-12);
}

#[test]
fn scenario_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let e = run_scenario(&scenario("missing.toml"), dir.path(), &[]).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_SCENARIO);
    let e = run_scenario(&scenario("minimal.toml"), dir.path(), &["outputs.0.probes=[\"nope\"]".into()]).unwrap_err();
    assert!(matches!(&e, CliError::Scenario(m) if m.contains("nope")), "{e}");
    let e = run_scenario(&scenario("minimal.toml"), dir.path(), &["grid.n_s=7".into()]).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_SCENARIO);
    let e = run_scenario(&scenario("minimal.toml"), dir.path(), &["model.terms.0.weight=-1.0".into()]).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_SCENARIO);
}

#[test]
fn density_of_standard_normal_at_zero() {
    let out = nlqf(&["density", "--n", "1", "--variance", "1", "--at", "0"]);
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
}

#[test]
fn singular_geometry_exits_with_numerical_failure() {
    let s = scenario("quadratic.toml");
    let out = nlqf(&["density", s.to_str().unwrap(), "--probes", "f,f", "--at", "0,0", "--override", "state.kind=vacuum", "--override", "state.creators=[]"]);
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(out.status.code(), Some(EXIT_NUMERICAL), "{err}");
    let out = nlqf(&["gram", s.to_str().unwrap(), "--probes", "f,zzz"]);
    assert_eq!(out.status.code(), Some(EXIT_SCENARIO));
}

#[test]
fn translation_sweep_starts_at_the_self_value() {
    let s = scenario("quadratic.toml");
    let out = nlqf(&["sweep-translation", s.to_str().unwrap(), "--probe", "f", "--from", "0", "--to", "5", "--step", "0.5"]);
    assert!(out.status.success());
    let (h, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 11);
    let gram = nlqf(&["gram", s.to_str().unwrap(), "--probes", "f"]);
    let (gh, grows) = read_csv(&String::from_utf8(gram.stdout).unwrap());
    let ff = column(&gh, &grows, "re")[0];
    assert_eq!(column(&h, &rows, "phase_re")[0], ff);
    assert_eq!(column(&h, &rows, "explicit_re")[0], ff);
    assert!(column(&h, &rows, "rel_diff").iter().all(|d| *d < 1e-6));
}

#[test]
fn wightman_matches_the_oracle_path() {
    let s = scenario("quadratic.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = nlqf(&[
        "wightman",
        s.to_str().unwrap(),
        "--probes",
        "f,g,h,fg",
        "--oracle",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&std::fs::read_to_string(dir.path().join("wightman.csv")).unwrap());
    assert_eq!(rows.len(), 4);
    assert!(column(&h, &rows, "rel_diff").iter().all(|d| *d <= 1e-9));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn check_certifies_the_em_gram_matrix() {
    let s = scenario("em.toml");
    let out = nlqf(&["check", s.to_str().unwrap(), "--probes", "both,j,F", "--threads", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 9);
    let out = nlqf(&["check", s.to_str().unwrap(), "--probes", "both,j,F", "--tol=-1"]);
    assert_eq!(out.status.code(), Some(EXIT_NUMERICAL));
}
