use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn halfspace(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halfspace")).arg("--out").arg(out).args(args).output().unwrap()
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn oracle_runs_and_tags_outputs() {
    let d = tempfile::tempdir().unwrap();
    let o = halfspace(d.path(), &["oracle", "--picard-n", "6", "--cosine-k", "40"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["ode_lattice.csv", "picard.csv", "cosine.csv", "oracle.json"] {
        assert!(d.path().join(name).exists(), "{} missing", name);
    }
    let csv = fs::read_to_string(d.path().join("picard.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with("# halfspace ") && first.contains(" chi_table "), "{}", first);
    assert!(csv.contains("\r\n"));
}

#[test]
fn malformed_configs_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let bad = [
        r#"{"subcommand": "cascade", "N": 5, "bogus": 1}"#,
        r#"{"subcommand": "oracle"}"#,
        r#"[1, 2]"#,
        r#"{"subcommand": "cascade", "N": "#,
    ];
    for text in bad {
        let c = config(d.path(), text);
        let o = halfspace(&d.path().join("out"), &["--config", &c, "cascade"]);
        assert_eq!(o.status.code(), Some(1), "{}", text);
    }
    let o = halfspace(d.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
    let o = halfspace(d.path(), &["--config", "/nonexistent/config.json", "cascade"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(halfspace(d.path(), &["--seed", "11", "cascade", "--N", "12"]).status.code(), Some(0));
        assert_eq!(halfspace(d.path(), &["--seed", "11", "weights", "--triples", "2", "--pairs", "20", "--grid", "40"]).status.code(), Some(0));
        assert_eq!(halfspace(d.path(), &["--seed", "11", "residual", "--samples", "1", "--equation", "burgers"]).status.code(), Some(0));
    }
    let mut compared = 0;
    for e in fs::read_dir(a.path()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().map(|x| x == "csv").unwrap_or(false) {
            let other = b.path().join(p.file_name().unwrap());
            assert_eq!(fs::read(&p).unwrap(), fs::read(other).unwrap(), "{}", p.display());
            compared += 1;
        }
    }
    assert!(compared >= 5);
}

#[test]
fn burgers_tstar_below_log_a() {
    let d = tempfile::tempdir().unwrap();
    let o = halfspace(d.path(), &["burgers", "--a", "10", "--N", "60"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(d.path().join("burgers.json")).unwrap()).unwrap();
    let t = v["tstar"]["estimate"].as_f64().unwrap();
    assert!(t > 0.0 && t <= 10f64.ln() + 1e-9);
}

#[test]
fn solve_config_and_plot() {
    let d = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/solve_kdv.json");
    let o = halfspace(d.path(), &["--config", cfg, "solve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(d.path().join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(v["residual"]["exact_zero"], Value::Bool(true));
    let csv = d.path().join("norm_trace.csv");
    let header = fs::read_to_string(&csv).unwrap().lines().nth(1).unwrap().to_string();
    let cols: Vec<&str> = header.split(',').collect();
    let svg = d.path().join("trace.svg");
    let o = Command::new(env!("CARGO_BIN_EXE_halfspace"))
        .args(["plot", csv.to_str().unwrap(), "--x", cols[0], "--y", cols[1], "--output", svg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));
}
