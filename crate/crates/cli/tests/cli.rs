use std::fs;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_archmp");
const R18: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/problems/r18.toml");

fn archmp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("run archmp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn version_carries_convention_fingerprint() {
    let o = archmp(&["--version"]);
    assert!(o.status.success());
    let fp = archmp::Conventions::CALIBRATED.fingerprint();
    assert!(stdout(&o).contains(&fp), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(archmp(&["solve", "--bogus"]).status.code(), Some(2));
    assert_eq!(archmp(&["analyze", "/no/such/file.toml"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    assert_eq!(archmp(&["analyze", empty.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(archmp(&["solve", "--problem", empty.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn analyze_catalog_entry_and_file_agree() {
    let by_name = archmp(&["analyze", "resnet50"]);
    assert!(by_name.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r50.toml");
    let spec = archmp::catalog::reference("resnet50").unwrap().spec;
    fs::write(&path, archmp::format::network_to_toml(&spec).unwrap()).unwrap();
    let by_file = archmp(&["analyze", path.to_str().unwrap()]);
    assert_eq!(stdout(&by_name), stdout(&by_file));
    let rho: f64 = stdout(&by_name)
        .lines()
        .find_map(|l| l.strip_prefix("rho = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((rho - 0.0868).abs() < 5e-5, "{rho}");
}

#[test]
fn wrong_alpha_length_is_a_domain_error() {
    let o = archmp(&["analyze", "resnet18", "--alphas", "1,2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_with_itself_has_zero_deltas() {
    let o = archmp(&["compare", "resnet18", "resnet18"]);
    assert!(o.status.success());
    for line in stdout(&o).lines().skip(1) {
        let delta = line.split_whitespace().last().unwrap();
        assert!(delta.trim_start_matches(['-', '+']).chars().all(|c| c == '0' || c == '.'), "{line}");
    }
}

#[test]
fn impossible_budget_reports_params() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tight.toml");
    let text = fs::read_to_string(R18)
        .unwrap()
        .replace("max_params = 11_700_000", "max_params = 1_000");
    assert!(text.contains("max_params = 1_000\n"));
    fs::write(&path, text).unwrap();
    let o = archmp(&["solve", "--problem", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("binding = \"params\""), "{}", stdout(&o));
}

#[test]
fn single_evaluation_sets_budget_flag() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.toml");
    let o = archmp(&[
        "solve",
        "--problem",
        R18,
        "--restarts",
        "1",
        "--max-evals",
        "1",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(stdout(&o).contains("budget_exhausted = true"), "{}", stdout(&o));
    let feasible = stdout(&o).contains("feasible = true");
    assert_eq!(o.status.success(), feasible);
}

#[test]
fn variance_check_passes_for_small_net() {
    let o = archmp(&["verify-variance", "--widths", "16,32", "--samples", "20000", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn catalog_lists_every_reference() {
    let o = archmp(&["catalog"]);
    assert!(o.status.success());
    for name in archmp::catalog::NAMES {
        assert!(stdout(&o).contains(name), "{name}");
    }
}
