use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optport"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn price_atm_resolves_spot_and_echoes_config() {
    let market = data("hu2010.json");
    let out = run(&[
        "price",
        "--market",
        market.to_str().unwrap(),
        "--underlying",
        "Disney",
        "--kind",
        "call",
        "--strike",
        "atm",
        "--expiry",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["config"]["strike"], 28.02);
    assert_eq!(v["config"]["underlying"], "Disney");
    assert_eq!(v["config"]["nu"], 5.87);
    assert!(v["config"]["library_version"].is_string());
    let p = v["price"].as_f64().unwrap();
    assert!(p > 0.0 && p < 28.02, "{p}");
}

#[test]
fn greeks_are_sane() {
    let out = run(&[
        "greeks",
        "--underlying",
        "exxon",
        "--kind",
        "put",
        "--strike",
        "60",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let g = &json_of(&out)["greeks"];
    let delta = g["delta"].as_f64().unwrap();
    assert!(delta < 0.0 && delta > -1.0, "{delta}");
    assert!(g["gamma"].as_f64().unwrap() > 0.0);
}

#[test]
fn usage_errors_exit_2() {
    let missing = run(&[
        "price",
        "--market",
        "/nonexistent/market.json",
        "--underlying",
        "Disney",
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("not found"));
    assert!(missing.stdout.is_empty());

    assert_eq!(
        run(&["price", "--underlying", "Acme"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["optimize", "--alpha", "0.7"]).status.code(), Some(2));
    assert_eq!(run(&["optimize", "--nu", "3"]).status.code(), Some(2));
    assert_eq!(
        run(&["price", "--underlying", "Disney", "--strike", "cheap"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["experiment", "fig2"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    // a strike far below the truncated support cannot be priced
    let out = run(&["price", "--underlying", "Disney", "--strike", "0.000001"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn optimize_weights_sum_to_one() {
    let out = run(&["optimize", "--dump-moments"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let books = v["books"].as_array().unwrap();
    assert_eq!(books.len(), 2);
    for b in books {
        for obj in ["variance", "cfvar"] {
            let w: f64 = b[obj]["w"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .sum();
            assert!((w - 1.0).abs() < 1e-10, "{obj}: {w}");
        }
        assert_eq!(b["moments"]["U"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn optimize_writes_requested_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "optimize",
        "--kind",
        "put",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--format",
        "csv,svg",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("stock,objective,kind,weight,shares,price")
    );
    assert_eq!(lines.count(), 10);
    assert!(csv.contains("Intel,cfvar,put,"));
    let svg = std::fs::read_to_string(dir.path().join("weights.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(!dir.path().join("results.json").exists());
}

#[test]
fn csv_market_input_matches_json() {
    let a = json_of(&run(&[
        "optimize",
        "--market",
        data("hu2010.csv").to_str().unwrap(),
        "--kind",
        "call",
    ]));
    let b = json_of(&run(&[
        "optimize",
        "--market",
        data("hu2010.json").to_str().unwrap(),
        "--kind",
        "call",
    ]));
    assert_eq!(a["books"], b["books"]);
}

#[test]
fn single_option_book_is_fully_invested() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.json");
    std::fs::write(
        &path,
        r#"{"names":["Solo"],"spot":[50.0],"mu_ann":[0.05],"sigma_ann":[0.2],"corr":[[1.0]],"nu":5.87,"dt":0.003968253968253968,"r":0.05}"#,
    )
    .unwrap();
    let out = run(&[
        "optimize",
        "--market",
        path.to_str().unwrap(),
        "--kind",
        "call",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_of(&out);
    for obj in ["variance", "cfvar"] {
        assert_eq!(v["books"][0][obj]["w"][0], 1.0);
    }
}

#[test]
fn verify_filters_checks() {
    let out = run(&["verify", "--checks", "parity"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 15);
    assert!(reports
        .iter()
        .all(|r| r["quantity"].as_str().unwrap().starts_with("parity/")));
    assert_eq!(v["passed"], true);
}

#[test]
fn corrupted_u_fails_the_variance_check() {
    let out = run(&[
        "verify",
        "--checks",
        "moments",
        "--samples",
        "200000",
        "--corrupt-u",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = json_of(&out);
    let failures: Vec<&str> = v["failures"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert!(!failures.is_empty());
    assert!(
        failures.iter().all(|f| f.ends_with("/variance")),
        "{failures:?}"
    );

    let clean = run(&["verify", "--checks", "moments", "--samples", "200000"]);
    assert_eq!(clean.status.code(), Some(0));
}

#[test]
fn experiment_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(&[
            "experiment",
            "appB-01",
            "--seed",
            "7",
            "--samples",
            "20000",
            "--out-dir",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in ["weights.csv", "results.json", "weights.svg"] {
        let x = std::fs::read(a.path().join("appB-01").join(f)).unwrap();
        let y = std::fs::read(b.path().join("appB-01").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let doc: Value =
        serde_json::from_slice(&std::fs::read(a.path().join("appB-01/results.json")).unwrap())
            .unwrap();
    assert_eq!(doc["config"]["alpha"], 0.1);
}

#[test]
fn experiment_rejects_too_few_samples() {
    let d = tempfile::tempdir().unwrap();
    let out = run(&[
        "experiment",
        "fig1",
        "--samples",
        "10",
        "--out-dir",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
