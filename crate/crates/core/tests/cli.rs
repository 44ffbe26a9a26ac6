use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mesomarket");

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"agents": 20, "steps": 60, "learning_steps": 40, "runs": 2}"#,
    )
    .unwrap();
    path
}

fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MESOMARKET_OUT_DIR")
        .output()
        .unwrap()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = cli(&[
            "run",
            "--config",
            cfg,
            "--seed",
            "42",
            "--dump-policies",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = files_under(&tmp.path().join("a"));
    let b = files_under(&tmp.path().join("b"));
    assert_eq!(a.len(), 5);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(
            fs::read(x).unwrap(),
            fs::read(y).unwrap(),
            "{}",
            x.display()
        );
    }
    let series =
        fs::read_to_string(tmp.path().join("a/delay_discounting/0/0/series_s0.csv")).unwrap();
    assert!(series.starts_with("t,phase,price,volume,spread,fundamental,bankrupt_count\n"));
    assert_eq!(series.lines().count(), 1 + 100 + 1);
    assert!(series.lines().last().unwrap().starts_with("# config_hash="));
}

#[test]
fn sweep_writes_one_directory_per_run_and_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    let o = cli(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--bias",
        "fear",
        "--p-grid",
        "0,50,100",
        "--runs",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let root = out.join("fear");
    let mut run_dirs = 0;
    for p in ["0", "50", "100"] {
        for r in 0..2 {
            let d = root.join(p).join(r.to_string());
            assert!(d.join("series_s0.csv").is_file());
            assert!(d.join("metrics.json").is_file());
            run_dirs += 1;
        }
    }
    assert_eq!(run_dirs, 6);
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert!(summary.starts_with("bias,p,run,metric,value\n"));
    assert!(summary
        .lines()
        .any(|l| l.starts_with("fear,100,1,crash_count,")));
}

#[test]
fn env_var_sets_default_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("MESOMARKET_OUT_DIR", tmp.path().join("env"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp
        .path()
        .join("env/delay_discounting/0/0/agents.csv")
        .is_file());
}

#[test]
fn analyze_constant_series_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("real.csv");
    let mut text = String::from("date,close,volume\n");
    for d in 1..=28 {
        text.push_str(&format!("2015-02-{d:02},50,1000\n"));
    }
    fs::write(&csv, text).unwrap();
    let metrics = tmp.path().join("real.json");
    let o = cli(&[
        "analyze",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(m["mean_abs_log_return"], 0.0);
    assert_eq!(m["crash_count"], 0.0);
    assert!(m.get("mean_spread_pct").is_none());

    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    let o = cli(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--p-grid",
        "0",
        "--runs",
        "1",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let o = cli(&[
        "compare",
        "--summary",
        out.join("delay_discounting/summary.csv").to_str().unwrap(),
        "--real",
        metrics.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("bias,p,run,metric,value,real_value\n"));
    let row = table
        .lines()
        .find(|l| l.contains(",mean_abs_log_return,"))
        .unwrap();
    assert!(row.ends_with(",0"), "{row}");
}

#[test]
fn bad_inputs_exit_nonzero_with_a_json_error_line() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    fs::write(
        &csv,
        "date,close,volume\n2015-02-02,50,1\n2015-02-01,51,1\n",
    )
    .unwrap();
    let o = cli(&["analyze", "--input", csv.to_str().unwrap()]);
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("row 3"));

    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"agents": 10, "bias_percent": 150}"#).unwrap();
    let o = cli(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "config");

    fs::write(&cfg, r#"{"agentz": 10}"#).unwrap();
    let o = cli(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());

    let o = cli(&[
        "run",
        "--p",
        "101",
        "--config",
        small_config(tmp.path()).to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}
