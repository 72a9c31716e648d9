use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ocplab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocplab")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn summary(dir: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn floats(s: &str) -> Vec<f64> {
    s.split(';').map(|v| v.parse().unwrap()).collect()
}

fn config_path(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn sweep_confirms_preservation_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["sweep", "--problem", "ex41", "--horizons", "6,8,10"];
    for dir in [&a, &b] {
        let out = ocplab(&args, dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["sweep.csv", "breakpoints.csv", "costs.csv", "limit_control.csv", "summary.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let s = summary(&a);
    assert_eq!(s["verdict"], "predicted-and-confirmed");
    assert_eq!(s["tau1_class"], "diverges-to-infinity");
    let table = fs::read_to_string(a.join("breakpoints.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("T,tau1"));
    assert_eq!(table.lines().count(), 4);
    assert!(fs::read_to_string(a.join("metadata.txt")).unwrap().contains("timestamp_unix="));
}

#[test]
fn sweep_without_predicted_preservation_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ocplab(&["sweep", "--problem", "ex24"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let s = summary(tmp.path());
    assert_eq!(s["verdict"], "not-predicted-counterexample-found");
    let rows = fs::read_to_string(tmp.path().join("breakpoints.csv")).unwrap();
    for line in rows.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((v[1] - (v[0] - 1.0)).abs() < 1e-3, "{line}");
    }
}

#[test]
fn certify_reports_non_coercive_storage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ocplab(&["certify", "--problem", "counterexample", "--storage", "exp(-1)/(1+x1^2)"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let s = summary(tmp.path());
    assert_eq!(s["ok"], "true");
    assert_eq!(s["coercivity"], "non-coercive-evidence");
    let table = fs::read_to_string(tmp.path().join("coercivity.csv")).unwrap();
    assert!(table.starts_with("radius,min_storage\n"));
}

#[test]
fn certify_accepts_logarithmic_storage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ocplab(&["certify", "--problem", "ex41"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    assert_eq!(s["coercivity"], "coercive-evidence");
    assert_eq!(s["storage_nonnegative"], "true");
}

#[test]
fn figure_data_has_singular_breakpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ocplab"))
        .args(["reproduce-paper", "--target", "figure1", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let bps = floats(&summary(tmp.path())["breakpoints"]);
    assert!((bps[0] - 1.5f64.ln()).abs() < 1e-3);
    assert!((bps[1] - (10.0 - 2f64.ln())).abs() < 1e-3);
    let table = fs::read_to_string(tmp.path().join("figure1.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("t,u,x,p,phi"));
    // on the singular arc the state sits at 2/3
    for line in table.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        if v[0] > bps[0] + 0.01 && v[0] < bps[1] - 0.01 {
            assert!((v[2] - 2.0 / 3.0).abs() < 1e-4, "{line}");
        }
    }
    let steps = fs::read_to_string(tmp.path().join("control.csv")).unwrap();
    assert_eq!(steps.lines().count(), 7);
}

#[test]
fn direct_solve_matches_scalar_riccati_cost() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ocplab(&["solve", "--problem", "lqr", "-T", "3", "--direct", "--mesh", "150"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cost: f64 = summary(tmp.path())["cost"].parse().unwrap();
    let exact = 3f64.tanh();
    assert!(cost >= exact * (1.0 - 1e-6) && cost <= exact * (1.0 + 1e-3), "{cost} vs {exact}");
    assert!(tmp.path().join("trajectory.csv").exists());
    assert!(tmp.path().join("cells.csv").exists());
}

#[test]
fn config_file_matches_builtin() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("builtin"), tmp.path().join("file"));
    assert_eq!(ocplab(&["solve", "--problem", "ex42", "-T", "10"], &a).status.code(), Some(0));
    let path = config_path("ex42.toml");
    let out = ocplab(&["solve", "--config", &path, "-T", "10"], &b);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (sa, sb) = (summary(&a), summary(&b));
    let (ta, tb) = (floats(&sa["breakpoints"]), floats(&sb["breakpoints"]));
    assert!(ta.iter().zip(&tb).all(|(x, y)| (x - y).abs() < 1e-6), "{ta:?} vs {tb:?}");
    assert_eq!(sb["consistent"], "true");
}

#[test]
fn regulator_experiment_writes_riccati_data() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ocplab(&["qr", "--problem", "lqr", "--horizons", "2,5,10"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    assert_eq!(s["verdict"], "alternative-B-window-convergence");
    assert_eq!(s["linear"], "true");
    let riccati = fs::read_to_string(tmp.path().join("riccati.csv")).unwrap();
    let first: Vec<f64> = riccati.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((first[1] - 10f64.tanh()).abs() < 1e-8);
}

#[test]
fn non_regulator_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ocplab(&["qr", "--problem", "ex41"], tmp.path()).status.code(), Some(2));
}

#[test]
fn input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ocplab(&["sweep", "--problem", "nosuch"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nosuch"));

    let bad = tmp.path().join("bad.toml");
    let text =
        fs::read_to_string(config_path("ex41.toml")).unwrap().replacen("drift = [\"x1\"]", "drift = [\"x1 +* 2\"]", 1);
    assert_ne!(text, fs::read_to_string(config_path("ex41.toml")).unwrap());
    fs::write(&bad, text).unwrap();
    let out = ocplab(&["solve", "--config", bad.to_str().unwrap(), "-T", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("problem.drift[0]") && err.contains("1:5"), "{err}");

    let out = ocplab(&["solve", "--problem", "ex41", "--tol", "bogus=1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}
