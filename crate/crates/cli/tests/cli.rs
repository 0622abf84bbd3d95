use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nsquant_cli::deseason::max_class_mean;
use nsquant_cli::io::{parse_dataset, write_dataset, Dataset};

fn nsquant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsquant")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = nsquant(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_series(path: &Path, values: Vec<f64>) {
    let mut f = std::fs::File::create(path).unwrap();
    write_dataset(&mut f, &Dataset::unlabeled(values)).unwrap();
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn num(field: &str) -> Option<f64> {
    (!field.is_empty()).then(|| field.parse().unwrap())
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const IID: &str = r#"{"kind": "linear", "coefficients": [{"type": "poly", "params": [1.0]}]}"#;

/// Set UPDATE_GOLDEN=1 to rewrite the expected files after an intended change.
#[test]
fn fit_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let input = data_dir().join("synthetic.csv");
    ok(&["fit", "--input", s(&input), "--output-dir", s(tmp.path()), "--grid-points", "51"]);
    let golden = data_dir().join("golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut names: Vec<String> =
        std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 6, "{names:?}");
    for name in names {
        let got = std::fs::read(tmp.path().join(&name)).unwrap();
        if update {
            std::fs::create_dir_all(&golden).unwrap();
            std::fs::write(golden.join(&name), &got).unwrap();
        } else {
            let want = std::fs::read(golden.join(&name)).unwrap_or_else(|_| panic!("missing golden file {name}"));
            assert!(got == want, "{name} differs from its golden copy");
        }
    }
}

#[test]
fn fit_band_brackets_center() {
    let tmp = tempfile::tempdir().unwrap();
    let input = data_dir().join("synthetic.csv");
    ok(&["fit", "--input", s(&input), "--output-dir", s(tmp.path()), "--alpha", "0.5", "--alpha", "0.9"]);
    let rows = read_rows(&tmp.path().join("quantile_0.9.csv"));
    assert_eq!(rows.len(), 1000);
    let mut banded = 0;
    for r in &rows {
        if let (Some(c), Some(lo), Some(hi)) = (num(&r[1]), num(&r[2]), num(&r[3])) {
            assert!(lo < c && c < hi);
            banded += 1;
        }
    }
    assert!(banded > 400);
}

#[test]
fn empty_input_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("empty.csv");
    std::fs::write(&input, "").unwrap();
    let out = nsquant(&["fit", "--input", s(&input), "--output-dir", s(tmp.path())]);
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.starts_with("error:") && msg.contains("no data"), "{msg}");
}

#[test]
fn bad_row_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.csv");
    std::fs::write(&input, "value\n1.0\n2.0\nabc\n").unwrap();
    let out = nsquant(&["fit", "--input", s(&input), "--output-dir", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row"));
}

#[test]
fn constant_series_gives_flat_curves_and_floored_bands() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("flat.csv");
    write_series(&input, vec![3.5; 400]);
    let out_dir = tmp.path().join("out");
    ok(&[
        "fit", "--input", s(&input), "--output-dir", s(&out_dir), "--bandwidth-mode", "fixed", "--bandwidth", "0.08",
        "--grid-points", "101",
    ]);
    for alpha in ["0.05", "0.5", "0.95"] {
        let rows = read_rows(&out_dir.join(format!("quantile_{alpha}.csv")));
        let mut banded = 0;
        for r in &rows {
            if let Some(c) = num(&r[1]) {
                assert!((c - 3.5).abs() < 1e-12, "center {c}");
            }
            if let (Some(lo), Some(hi)) = (num(&r[2]), num(&r[3])) {
                assert!(hi - lo > 0.0);
                assert!(r[7].contains("floor"), "flags {:?}", &r[7]);
                banded += 1;
            }
        }
        assert!(banded > 50);
    }
}

#[test]
fn iqr_of_constant_series_is_zero_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("flat.csv");
    write_series(&input, vec![-1.0; 300]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        ok(&["iqr", "--input", s(&input), "--output-dir", s(d), "--bandwidth-mode", "fixed", "--bandwidth", "0.1"]);
    }
    for r in read_rows(&a.join("iqr.csv")) {
        if let Some(c) = num(&r[1]) {
            assert_eq!(c, 0.0);
        }
    }
    let synth = data_dir().join("synthetic.csv");
    ok(&["iqr", "--input", s(&synth), "--output-dir", s(&a)]);
    ok(&["iqr", "--input", s(&synth), "--output-dir", s(&b)]);
    assert_eq!(std::fs::read(a.join("iqr.csv")).unwrap(), std::fs::read(b.join("iqr.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn deseasonalize_removes_class_means() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("monthly.csv");
    let values: Vec<f64> = (0..240).map(|i| 10.0 + (i % 12) as f64 * 0.7 + ((i * 7919) % 13) as f64 / 13.0).collect();
    write_series(&input, values);
    let output = tmp.path().join("out.csv");
    ok(&["deseasonalize", "--input", s(&input), "--period", "12", "--output", s(&output)]);
    let d = parse_dataset(std::fs::File::open(&output).unwrap()).unwrap();
    assert_eq!(d.len(), 240);
    assert!(max_class_mean(&d.values, 12) <= 1e-12);

    let sine: Vec<f64> = (0..120).map(|i| 2.0 * (2.0 * std::f64::consts::PI * i as f64 / 12.0).sin()).collect();
    write_series(&input, sine);
    let out = ok(&["deseasonalize", "--input", s(&input), "--period", "12"]);
    let d = parse_dataset(out.stdout.as_slice()).unwrap();
    assert!(d.values.iter().all(|v| v.abs() < 1e-12));

    let out = nsquant(&["deseasonalize", "--input", s(&input), "--period", "61"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_echoes_identity_process_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"process": {"kind": "linear", "coefficients": [{"type": "poly", "params": [1.0]}]}, "n": 500, "seed": 3}"#,
    );
    let a = ok(&["simulate", "--config", s(&cfg)]).stdout;
    let b = ok(&["simulate", "--config", s(&cfg)]).stdout;
    assert_eq!(a, b);
    let c = ok(&["simulate", "--config", s(&cfg), "--seed", "4"]).stdout;
    assert_ne!(a, c);
    let d = parse_dataset(a.as_slice()).unwrap();
    assert_eq!(d.len(), 500);
    let mean = d.values.iter().sum::<f64>() / 500.0;
    let var = d.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 499.0;
    assert!(mean.abs() < 0.2 && (var - 1.0).abs() < 0.2, "mean {mean}, var {var}");
}

#[test]
fn simulate_rejects_non_contracting_tvtar() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"process": {"kind": "tvtar", "a": {"type": "poly", "params": [0.5]}, "b": {"type": "poly", "params": [0.3, 0.8]}}, "n": 100}"#,
    );
    let out = nsquant(&["simulate", "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("contraction"));
}

#[test]
fn single_replication_coverage_is_zero_or_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!(r#"{{"process": {IID}, "n": 400, "replications": 1, "seed": 5}}"#));
    ok(&["coverage", "--config", s(&cfg), "--output-dir", s(tmp.path())]);
    let rows = read_rows(&tmp.path().join("coverage.csv"));
    assert_eq!(rows.len(), 3);
    for r in rows {
        let c = num(&r[5]).unwrap();
        assert!(c == 0.0 || c == 1.0);
    }
}

#[test]
fn failed_replications_are_counted_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!(r#"{{"process": {IID}, "n": 200, "replications": 3}}"#));
    let out = ok(&[
        "coverage", "--config", s(&cfg), "--output-dir", s(tmp.path()), "--bandwidth-mode", "fixed", "--bandwidth", "0.9",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("3 of 3"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("coverage.json")).unwrap()).unwrap();
    assert_eq!(json[0]["report"]["failures"], 3);
}

#[test]
fn bandwidth_report_lists_each_level() {
    let tmp = tempfile::tempdir().unwrap();
    let input = data_dir().join("synthetic.csv");
    ok(&["bandwidth", "--input", s(&input), "--output-dir", s(tmp.path()), "--alpha", "0.25", "--alpha", "0.75"]);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("bandwidth.json")).unwrap()).unwrap();
    let levels = json.as_array().unwrap();
    assert_eq!(levels.len(), 2);
    let b = levels[0]["selection"]["b_star"].as_f64().unwrap();
    assert!((2.0 / 1000.0..=0.25).contains(&b));

    ok(&[
        "bandwidth", "--input", s(&input), "--output-dir", s(tmp.path()), "--alpha", "0.5", "--bandwidth-mode",
        "auto-local", "--grid-points", "21",
    ]);
    let rows = read_rows(&tmp.path().join("bandwidth_0.5.csv"));
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| num(&r[3]).unwrap() > 0.0));
}
