use std::process::{Command, Output};

fn polydg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polydg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn mesh_writes_json_and_reports_quality() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let o = polydg(&["mesh", "--n", "4", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["num_cells"], 16);
    assert_eq!(report["triangles"], 512);
    assert!(report["rho1_max"].as_f64().unwrap().is_finite());
    let mesh: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(mesh["cell_of_triangle"].as_array().unwrap().len(), 512);
}

#[test]
fn solve_reports_unknowns_and_errors() {
    for (method, unknowns) in [("sip", 240), ("scsip", 144)] {
        let o = polydg(&["solve", "--method", method, "--k", "4", "--n", "4", "--he-mode", "uniform"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(r["unknowns"], unknowns);
        assert!(r["relative_residual"].as_f64().unwrap() <= 1e-12);
        assert!(r["l2_error"].as_f64().unwrap() < 1e-3);
    }
}

#[test]
fn convergence_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let dat = dir.path().join("c.dat");
    let args = [
        "convergence",
        "--case",
        "variable-a",
        "--method",
        "sip,scsip",
        "--k",
        "2",
        "--n-list",
        "2,4,8",
        "--threads",
        "2",
        "--plot-data",
        dat.to_str().unwrap(),
    ];
    let first = polydg(&args);
    assert!(first.status.success());
    let text = stdout(&first);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,h,method,k,dofs,l2_error,h1_error,eoc_l2,eoc_h1"));
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().nth(1).unwrap().ends_with(",,"));
    assert!(std::fs::read_to_string(&dat).unwrap().contains("# method=scsip k=2"));

    let mut with_out = args.to_vec();
    with_out.extend(["--out", csv.to_str().unwrap()]);
    assert!(polydg(&with_out).status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), text);
}

#[test]
fn config_file_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.json");
    std::fs::write(&cfg, r#"{"f": "-4", "u": "x^2 + y^2", "ux": "2*x", "uy": "2*y"}"#).unwrap();
    let o = polydg(&["solve", "--config", cfg.to_str().unwrap(), "--k", "2", "--n", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r["l2_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn check_passes() {
    let o = polydg(&["check"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("[FAIL]"));
}

#[test]
fn exit_codes() {
    // Solver failure: penalty too small.
    let o = polydg(&["solve", "--method", "sip", "--gamma", "0.01", "--n", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not positive definite"));

    // Configuration failures.
    assert_eq!(polydg(&["solve", "--case", "nope"]).status.code(), Some(3));
    assert_eq!(polydg(&["solve", "--method", "cg"]).status.code(), Some(3));
    assert_eq!(polydg(&["solve", "--config", "/nonexistent/p.toml"]).status.code(), Some(3));
    assert_eq!(polydg(&["convergence", "--n-list", "8,4"]).status.code(), Some(3));
    assert_eq!(polydg(&["solve", "--threads", "0"]).status.code(), Some(3));
    assert_eq!(polydg(&["solve", "--k", "1"]).status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "f = \"1 + * 2\"\n").unwrap();
    let o = polydg(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("position"));

    assert_eq!(polydg(&["--help"]).status.code(), Some(0));
}
