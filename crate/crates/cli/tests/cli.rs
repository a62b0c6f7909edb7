use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dtsurv::{event_table, load_csv, CsvSchema, FittedModel, LoadOptions};
use serde_json::Value;
use tempfile::TempDir;

fn dtsurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtsurv")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dtsurv(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Last stderr line parsed as the error document.
fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn simulate(dir: &TempDir, name: &str, n: usize, d: usize, seed: u64) -> PathBuf {
    let out = path(dir, name);
    ok(&[
        "simulate", "--output", s(&out), "--n", &n.to_string(), "--d", &d.to_string(), "--seed", &seed.to_string(),
    ]);
    out
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.csv", 2000, 10, 3);
    let b = simulate(&dir, "b.csv", 2000, 10, 3);
    let c = simulate(&dir, "c.csv", 2000, 10, 4);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    let (header, rows) = read_rows(&a);
    assert_eq!(header, ["pid", "X", "J", "Z1", "Z2", "Z3", "Z4", "Z5"]);
    assert_eq!(rows.len(), 2000);

    let one = simulate(&dir, "one.csv", 1, 10, 3);
    assert_eq!(read_rows(&one).1.len(), 1);
}

#[test]
fn spec_file_reproduces_the_dataset() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.csv", 500, 12, 9);
    let spec = path(&dir, "a.spec.json");
    assert!(spec.exists());
    let b = path(&dir, "b.csv");
    ok(&["simulate", "--output", s(&b), "--spec", s(&spec), "--n", "500"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn inadmissible_spec_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    simulate(&dir, "a.csv", 10, 5, 0);
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(path(&dir, "a.spec.json")).unwrap()).unwrap();
    doc["alpha"] = serde_json::json!(vec![vec![3.0; 5]; 2]);
    let bad = path(&dir, "bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out_csv = path(&dir, "out.csv");
    let out = dtsurv(&["simulate", "--output", s(&out_csv), "--spec", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "admissibility");
    assert!(!out_csv.exists());
}

#[test]
fn inspect_matches_event_table() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "a.csv", 3000, 15, 1);
    let table_path = path(&dir, "events.csv");
    ok(&["inspect", "--input", s(&data), "--output", s(&table_path)]);

    let ds = load_csv(&data, &CsvSchema::default(), LoadOptions::default()).unwrap();
    let table = event_table(&ds);
    let (header, rows) = read_rows(&table_path);
    assert_eq!(header, ["t", "label", "at_risk", "events_1", "events_2", "censored"]);
    assert_eq!(rows.len(), ds.n_times());
    let mut leaving = 0;
    for (t, row) in (1..).zip(&rows) {
        let v: Vec<usize> = row.iter().skip(2).map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[0], table.at_risk_at(t));
        assert_eq!(v[1], table.events_at(1, t));
        assert_eq!(v[2], table.events_at(2, t));
        assert_eq!(v[3], table.censored[t - 1]);
        assert_eq!(v[0], 3000 - leaving);
        leaving += v[1] + v[2] + v[3];
    }
    assert_eq!(leaving, 3000);
}

#[test]
fn inspect_two_subject_toy() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "toy.csv");
    std::fs::write(&data, "id,time,type,age\na,1,1,0.5\nb,2,0,0.1\n").unwrap();
    let out = path(&dir, "events.csv");
    ok(&["inspect", "--input", s(&data), "--schema", "id=id,time=time,event=type", "--output", s(&out)]);
    // The grid ends at the last event time; later censoring lands in the last row.
    let (_, rows) = read_rows(&out);
    assert_eq!(rows, [["1", "1", "2", "1", "1"]]);

    ok(&[
        "inspect", "--input", s(&data), "--schema", "id=id,time=time,event=type", "--n-times", "2", "--output",
        s(&out),
    ]);
    let (_, rows) = read_rows(&out);
    assert_eq!(rows, [["1", "1", "2", "1", "0"], ["2", "2", "1", "0", "1"]]);
}

#[test]
fn fit_writes_every_artifact() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "sim.csv", 50_000, 30, 0);
    let coef = path(&dir, "coef.csv");
    ok(&["fit", "--input", s(&data), "--output", s(&coef), "--method", "two-stage"]);
    let (header, rows) = read_rows(&coef);
    assert_eq!(header, ["event", "parameter", "estimate", "se", "z", "p"]);
    assert_eq!(rows.len(), 2 * (30 + 5));

    let json: Value = serde_json::from_str(&std::fs::read_to_string(path(&dir, "coef.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 70);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(path(&dir, "coef.report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "two-stage");
    assert_eq!(report["n"], 50_000);
    assert!(report["wall_clock_seconds"].as_f64().unwrap() > 0.0);
    assert_eq!(report["iterations"].as_array().unwrap().len(), 2);
    assert_eq!(report["log_likelihood"].as_array().unwrap().len(), 2);
    let model = FittedModel::load(path(&dir, "coef.model.json")).unwrap();
    assert_eq!(model.n_times(), 30);

    let coef_x = path(&dir, "expansion.csv");
    ok(&["fit", "--input", s(&data), "--output", s(&coef_x), "--method", "expansion", "--parallel"]);
    let other = FittedModel::load(path(&dir, "expansion.model.json")).unwrap();
    for (a, b) in model.params.beta_matrix().iter().flatten().zip(other.params.beta_matrix().iter().flatten()) {
        assert!((a - b).abs() <= 0.05, "{a} vs {b}");
    }
}

#[test]
fn lasso_fit_shrinks_coefficients() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "sim.csv", 10_000, 10, 2);
    let load = |name: &str| FittedModel::load(path(&dir, name)).unwrap();
    let plain = path(&dir, "plain.csv");
    ok(&["fit", "--input", s(&data), "--output", s(&plain), "--method", "expansion"]);
    let lasso = path(&dir, "lasso.csv");
    ok(&[
        "fit", "--input", s(&data), "--output", s(&lasso), "--method", "expansion", "--penalizer", "0.003",
        "--l1-ratio", "1",
    ]);
    let heavy = path(&dir, "heavy.csv");
    ok(&[
        "fit", "--input", s(&data), "--output", s(&heavy), "--method", "expansion", "--penalizer", "60",
        "--l1-ratio", "1",
    ]);
    let (plain, lasso, heavy) = (load("plain.model.json"), load("lasso.model.json"), load("heavy.model.json"));
    let flat = |m: &FittedModel| m.params.beta_matrix().concat();
    for (a, b) in flat(&lasso).iter().zip(flat(&plain)) {
        assert!(a.abs() <= b.abs() + 1e-12);
    }
    assert!(flat(&heavy).contains(&0.0));
}

#[test]
fn predict_writes_long_format_curves() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "sim.csv", 50_000, 30, 0);
    let coef = path(&dir, "coef.csv");
    ok(&["fit", "--input", s(&data), "--output", s(&coef)]);

    let newdata = path(&dir, "new.csv");
    std::fs::write(
        &newdata,
        "pid,Z5,Z4,Z3,Z2,Z1\nx,0.1,0.2,0.3,0.4,0.5\ny,0.9,0.9,0.9,0.9,0.9\nz,0,0,0,0,0\n",
    )
    .unwrap();
    let pred = path(&dir, "pred.csv");
    ok(&["predict", "--model", s(&path(&dir, "coef.model.json")), "--input", s(&newdata), "--output", s(&pred)]);
    let (header, rows) = read_rows(&pred);
    assert_eq!(
        header,
        ["id", "t", "label", "hazard_1", "hazard_2", "prob_1", "prob_2", "cif_1", "cif_2", "survival"]
    );
    assert_eq!(rows.len(), 90);

    let model = FittedModel::load(path(&dir, "coef.model.json")).unwrap();
    let z = [[0.5, 0.4, 0.3, 0.2, 0.1], [0.9; 5], [0.0; 5]];
    let curves = model.predict_curves(&z).unwrap();
    for (i, c) in curves.iter().enumerate() {
        for t in 1..=30 {
            let row: Vec<f64> = rows[i * 30 + t - 1][3..].iter().map(|v| v.parse().unwrap()).collect();
            let expected = [
                c.hazard[0][t - 1],
                c.hazard[1][t - 1],
                c.event_probability[0][t - 1],
                c.event_probability[1][t - 1],
                c.cif[0][t - 1],
                c.cif[1][t - 1],
                c.survival[t],
            ];
            assert_eq!(row, expected);
            if t == 30 {
                assert!((row[4] + row[5] + row[6] - 1.0).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn predict_rejects_missing_covariates() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "sim.csv", 5000, 5, 0);
    ok(&["fit", "--input", s(&data), "--output", s(&path(&dir, "coef.csv"))]);
    let newdata = path(&dir, "new.csv");
    std::fs::write(&newdata, "pid,Z1,Z2\nx,0.1,0.2\n").unwrap();
    let pred = path(&dir, "pred.csv");
    let out = dtsurv(&["predict", "--model", s(&path(&dir, "coef.model.json")), "--input", s(&newdata), "--output", s(&pred)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_json(&out)["message"].as_str().unwrap().contains("Z3"));
    assert!(!pred.exists());
}

#[test]
fn benchmark_rows_and_summary() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "bench.csv");
    ok(&["benchmark", "--output", s(&out), "--d-grid", "15,30", "--reps", "3", "--n", "3000"]);
    let (header, rows) = read_rows(&out);
    assert_eq!(header, ["method", "d", "repetition", "seconds", "status"]);
    assert_eq!(rows.len(), 12);
    for row in &rows {
        assert!(row[4] == "ok" || row[4] == "estimability", "{row:?}");
        assert_eq!(row[3].is_empty(), row[4] != "ok");
    }
    let (header, summary) = read_rows(&path(&dir, "bench.summary.csv"));
    assert_eq!(header[0], "d");
    assert_eq!(summary.len(), 2);
}

#[test]
fn estimability_failure_reports_cells_and_leaves_no_files() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "sim.csv", 1000, 30, 1);
    let coef = path(&dir, "coef.csv");
    let out = dtsurv(&["fit", "--input", s(&data), "--output", s(&coef)]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["error"], "estimability");
    assert_eq!(err["exit_code"], 3);
    assert!(!err["cells"].as_array().unwrap().is_empty());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 2, "{leftovers:?}");
}

#[test]
fn exit_codes_by_error_class() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "sim.csv", 5000, 5, 0);
    let coef = path(&dir, "coef.csv");

    let out = dtsurv(&["fit", "--input", s(&data), "--output", s(&coef), "--penalizer", "abc"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "config");

    let out = dtsurv(&["fit", "--input", s(&data), "--output", s(&coef), "--penalizer", "-1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = dtsurv(&["fit", "--input", s(&path(&dir, "missing.csv")), "--output", s(&coef)]);
    assert_eq!(out.status.code(), Some(3));

    let out = dtsurv(&["fit", "--input", s(&data), "--output", s(&coef), "--method", "expansion", "--max-iter", "1"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"], "convergence");
    assert!(!coef.exists());
}
