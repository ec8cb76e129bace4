use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gofbt(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gofbt"))
        .args(args)
        .env("GOFBT_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let dir = tmp.path().join(name);
        let o = gofbt(
            &[
                "experiment",
                "fig2",
                "--trials",
                "1000",
                "--seed",
                "3",
                "--threshold-trials",
                "5000",
                "--threads",
                threads,
                "--out-dir",
                dir.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        dir
    };
    let a = csv_files(&run("a", "1"));
    let b = csv_files(&run("b", "4"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn manifest_lists_outputs_and_resolved_knobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 5, "paths": 3}"#).unwrap();
    let out = tmp.path().join("out");
    let o = gofbt(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--seed",
            "6",
            "--horizon",
            "0.5",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 6);
    assert_eq!(m["config"]["seed"]["source"], "flag");
    assert_eq!(m["config"]["paths"]["source"], "config");
    assert_eq!(m["config"]["paths"]["value"], 3);
    assert_eq!(m["config"]["gamma"]["source"], "default");
    let files: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["file"].as_str().unwrap())
        .collect();
    assert!(files.contains(&"ou_paths.csv"));
    let csv = fs::read_to_string(out.join("ou_paths.csv")).unwrap();
    assert!(csv.starts_with("# "));
    assert!(csv.contains("# seed=6"));
}

#[test]
fn unknown_figure_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gofbt(&["experiment", "fig6"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("fig1") && e.contains("table3"), "{e}");
}

#[test]
fn stat_rejects_fixture_backtest_pits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bt");
    let o = gofbt(
        &[
            "backtest",
            "--gamma",
            "1",
            "--dates",
            "2002-12-27,2004-12-24,2006-12-22,2008-12-19,2010-12-17",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let records = fs::read_to_string(out.join("backtest.csv")).unwrap();
    let mut lines = records.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "pit").unwrap();
    let pits: Vec<String> = lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect();
    assert_eq!(pits.len(), 5);
    let input = tmp.path().join("pits.csv");
    fs::write(&input, format!("pit\n{}\n", pits.join("\n"))).unwrap();
    let o = gofbt(
        &["stat", "--input", input.to_str().unwrap(), "--test", "ad"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("verdict=REJECT"), "{s}");
    assert!(s.contains("Monte Carlo at n=5"), "{s}");
    assert!(s.contains("warn=true"), "{s}");
}

#[test]
fn stat_single_half_is_accepted_by_ks() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("one.csv");
    fs::write(&input, "0.5\n").unwrap();
    let o = gofbt(
        &["stat", "--input", input.to_str().unwrap(), "--test", "ks"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("statistic=0.5 "), "{s}");
    assert!(s.contains("verdict=ACCEPT"), "{s}");
}

#[test]
fn stat_accepts_near_uniform_at_tight_confidence() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("u.csv");
    let body: String = (0..10).map(|i| format!("{}\n", (i as f64 + 0.5) / 10.0)).collect();
    fs::write(&input, body).unwrap();
    let o = gofbt(
        &[
            "stat",
            "--input",
            input.to_str().unwrap(),
            "--test",
            "ad",
            "--confidence",
            "0.001",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict=ACCEPT"));
}

#[test]
fn stat_reports_malformed_line() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.csv");
    fs::write(&input, "pit\n0.2\n0.4\nnope\n").unwrap();
    let o = gofbt(&["stat", "--input", input.to_str().unwrap()], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn critical_value_table_and_draws_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cv");
    let o = gofbt(
        &[
            "critvals",
            "--test",
            "ad",
            "--n",
            "5",
            "--trials",
            "2000",
            "--draws",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("critvals_ad_n5.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("0.05,")), "{table}");
    assert!(out.join("null_ad_n5.csv").exists());
}
