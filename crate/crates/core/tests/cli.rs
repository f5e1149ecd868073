mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::schema;
use raden::manifold::{embed_paraboloid, CenteredDensity};
use raden::pointcloud::canonical;
use raden::{PointCloud, Seed};
use serde_json::Value;

fn raden(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raden"))
        .args(args)
        .env("RADEN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = raden(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn spec(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("specs")
        .join(format!("{name}.json"))
        .to_string_lossy()
        .into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_schema(name: &str, v: &Value) {
    let errors = schema::check(name, v);
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

fn path(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn shipped_specs_match_builtins() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["density1", "density2", "density3", "density4"] {
        let out = path(&dir, name);
        ok(&["spec", "--name", name, "--out", &out]);
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(spec(name)).unwrap(), "{name}");
    }
}

#[test]
fn sample_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, e) = (path(&dir, "a.csv"), path(&dir, "b.csv"), path(&dir, "e.csv"));
    ok(&["sample", "--spec", &spec("density1"), "--m", "2000", "--seed", "3", "--out", &a]);
    ok(&["sample", "--spec", &spec("density1"), "--m", "2000", "--seed", "3", "--out", &b]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let cloud = PointCloud::load_csv(&a, None).unwrap();
    assert_eq!((cloud.len(), cloud.dim()), (2000, 2));
    ok(&["sample", "--spec", &spec("density1"), "--m", "0", "--seed", "3", "--out", &e]);
    assert!(std::fs::read_to_string(&e).unwrap().lines().all(|l| l.trim().is_empty()));
}

#[test]
fn bounds_print_values() {
    let first_line = |s: String| s.lines().next().unwrap().parse::<f64>().unwrap();
    let dkw = ok(&["bounds", "dkw", "--m", "1000", "--p", "0.05"]);
    assert!((first_line(dkw.clone()) - 0.0430).abs() < 1e-4);
    let record: Value = serde_json::from_str(dkw.lines().nth(1).unwrap()).unwrap();
    assert_schema("bounds-report.schema.json", &record);
    let hs = ok(&["bounds", "hs-bound", "--m", "1000", "--k", "180", "--p", "0.05", "--n", "2"]);
    assert!((first_line(hs) - 0.0558).abs() < 1e-4);
    let p = format!("{}", 2.0 * (-2.0f64).exp());
    let sph = ok(&["bounds", "sph-bound", "--m", "1", "--k", "1", "--p", &p]);
    assert!((first_line(sph) - 2.0).abs() < 1e-6);
}

#[test]
fn failures_emit_error_records() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["reconstruct", "--cloud", "/nonexistent/cloud.csv", "--transform", "sph", "--out", &path(&dir, "x")],
        vec!["bounds", "dkw", "--m", "10", "--p", "2"],
        vec!["sample", "--spec", &spec("density3"), "--m", "10", "--out", &path(&dir, "y.csv")],
        vec!["table", "--id", "T7", "--seed", "1", "--out", &path(&dir, "t.json")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = raden(&refs);
        assert!(!out.status.success(), "{args:?}");
        let stderr = String::from_utf8(out.stderr).unwrap();
        let record: Value = serde_json::from_str(stderr.trim()).unwrap_or_else(|_| panic!("{stderr}"));
        assert_schema("error-record.schema.json", &record);
    }
}

#[test]
fn bbox_sets_the_reconstruction_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = path(&dir, "c.csv");
    ok(&["sample", "--spec", &spec("density2"), "--m", "400", "--seed", "2", "--out", &cloud]);
    let prefix = path(&dir, "r");
    ok(&[
        "reconstruct", "--cloud", &cloud, "--transform", "hs", "--selection", "fixed", "--lambda", "0.1",
        "--resolution", "12", "--bbox", "0,10,60,70", "--out", &prefix,
    ]);
    let report = read_json(Path::new(&format!("{prefix}.json")));
    assert_eq!(report["grid"]["origin"], serde_json::json!([0.0, 10.0]));
    assert_eq!(report["grid"]["spacing"], serde_json::json!([5.0, 5.0]));
    let out = raden(&["reconstruct", "--cloud", &cloud, "--transform", "hs", "--bbox", "0,0,1", "--out", &prefix]);
    assert_eq!(out.status.code(), Some(1));
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "validation");
}

#[test]
fn reconstruct_and_baseline_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = path(&dir, "cloud.csv");
    ok(&["sample", "--spec", &spec("density3"), "--m", "1000", "--seed", "9", "--out", &cloud]);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let prefix = path(&dir, &format!("hs{run}"));
        ok(&["reconstruct", "--cloud", &cloud, "--transform", "hs", "--resolution", "40", "--truth", &spec("density3"), "--out", &prefix]);
        let files: Vec<Vec<u8>> = ["csv", "pgm", "json"].iter().map(|e| std::fs::read(format!("{prefix}.{e}")).unwrap()).collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let report = read_json(&dir.path().join("hs0.json"));
    assert_schema("reconstruct-report.schema.json", &report);
    assert!(report["error"].as_f64().unwrap() < 1.0);
    let pgm = &outputs[0][1];
    assert!(pgm.starts_with(b"P5\n40 40\n255\n"));

    let prefix = path(&dir, "fixed");
    ok(&["reconstruct", "--cloud", &cloud, "--transform", "sph", "--penalty", "tikhonov", "--selection", "fixed", "--lambda", "0.5", "--resolution", "24", "--out", &prefix]);
    let report = read_json(&dir.path().join("fixed.json"));
    assert_schema("reconstruct-report.schema.json", &report);
    assert_eq!(report["solve"]["lambda"].as_f64(), Some(0.5));
    assert!(report["error"].is_null());

    for method in ["kde", "fbp"] {
        let prefix = path(&dir, method);
        ok(&["baseline", "--cloud", &cloud, "--method", method, "--resolution", "40", "--truth", &spec("density3"), "--out", &prefix]);
        assert_schema("baseline-report.schema.json", &read_json(&dir.path().join(format!("{method}.json"))));
    }

    let proj = path(&dir, "b.csv");
    ok(&["project", "--cloud", &cloud, "--transform", "hs", "--resolution", "20", "--raw", "--out", &proj]);
    let text = std::fs::read_to_string(&proj).unwrap();
    assert!(text.starts_with("row_index,value\n"));
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap().fract() == 0.0));
}

#[test]
fn tables_follow_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = path(&dir, "t1.json");
    ok(&["table", "--id", "T1", "--trials", "2", "--m", "400", "--resolution", "24", "--seed", "5", "--out", &t1]);
    let table = read_json(Path::new(&t1));
    assert_schema("error-table.schema.json", &table);
    let methods: Vec<&str> = table["methods"].as_array().unwrap().iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["sph", "hs", "kde", "fbp"]);
    for m in table["methods"].as_array().unwrap() {
        assert!(m["mean"].is_number() && m["std"].is_number());
    }

    let patch = path(&dir, "patch.json");
    ok(&["table", "--id", "patch", "--trials", "1", "--m", "3000", "--resolution", "16", "--transform", "hs", "--seed", "5", "--out", &patch]);
    let table = read_json(Path::new(&patch));
    assert_schema("patch-table.schema.json", &table);
    let cells = table["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 3);
    assert!(cells.iter().all(|row| row.as_array().unwrap().len() == 3));
}

#[test]
fn patch_command_reports_every_query() {
    let dir = tempfile::tempdir().unwrap();
    let density = CenteredDensity::new(canonical::density4()).unwrap();
    let cloud = embed_paraboloid(&density.sample(3000, Seed::new(2)).unwrap(), 0.05).unwrap();
    let cloud_path = path(&dir, "surface.csv");
    cloud.save_csv(&cloud_path).unwrap();
    let queries = PointCloud::from_points(3, &[vec![0.0, 0.0, 0.0], vec![500.0, 500.0, 500.0]]).unwrap();
    let q_path = path(&dir, "queries.csv");
    queries.save_csv(&q_path).unwrap();
    let prefix = path(&dir, "patch");
    ok(&["patch", "--cloud", &cloud_path, "--queries", &q_path, "--resolution", "20", "--out", &prefix]);
    let csv = std::fs::read_to_string(format!("{prefix}.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "query_index,value");
    assert!(lines[1].starts_with("0,") && lines[1][2..].parse::<f64>().unwrap() >= 0.0);
    assert_eq!(lines[2], "1,NaN");
    let report = read_json(&dir.path().join("patch.json"));
    assert_schema("patch-report.schema.json", &report);
    assert_eq!(report["queries"][0]["n"], 2);
    assert_eq!(report["queries"][1]["error"]["kind"], "insufficient_neighborhood");
}
