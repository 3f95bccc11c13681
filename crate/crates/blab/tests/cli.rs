use std::path::Path;
use std::process::{Command, Output};

fn blab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blab")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn metric_demo_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.json", r#"{"experiment": "metric-demo", "h": 0.01}"#);
    let out = dir.path().join("out");
    let o = blab(&["metric", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("metric-demo.csv")).unwrap();
    assert!(csv.starts_with("stage,label,parameter,rho1,rho2"));
    assert!(out.join("metric-demo.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS slit-separates"));
}

#[test]
fn failed_assertion_exits_two() {
    // at h = 0.1 the slit removes a 0.2-wide band, too much volume for the demo claim
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.json", r#"{"h": 0.1}"#);
    let o = blab(&["metric", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL slit-separates"));
}

#[test]
fn invalid_configs_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "a.json", r#"{"h": 0.01, "colour": "red"}"#);
    let bad_h = write(dir.path(), "b.json", r#"{"h": 0.01}"#);
    let no_exp = write(dir.path(), "c.json", r#"{"h": 0.01}"#);
    let bad_shape = write(dir.path(), "d.json", r#"{"h": 0.01, "domain": {"shape": "disc", "center": [0, 0], "radius": -1}}"#);
    let d = dir.path().to_str().unwrap();
    assert_eq!(blab(&["metric", &unknown, "--out", d]).status.code(), Some(3));
    assert_eq!(blab(&["metric", &bad_h, "--h", "-1", "--out", d]).status.code(), Some(3));
    assert_eq!(blab(&["experiment", &no_exp, "--out", d]).status.code(), Some(3));
    assert_eq!(blab(&["zeros", &bad_shape, "--out", d]).status.code(), Some(3));
    assert_eq!(blab(&["metric", "/nonexistent.json", "--out", d]).status.code(), Some(3));
    assert_eq!(blab(&["metric"]).status.code(), Some(3));
    assert_eq!(blab(&["--help"]).status.code(), Some(0));
}

#[test]
fn kernel_dump_and_seeded_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "k.json",
        r#"{"h": 0.02, "domain": {"shape": "annulus", "center": [0, 0], "inner": 0.1, "outer": 1}, "basis_window": [-8, 30]}"#,
    );
    let out = dir.path().join("out");
    let o = blab(&["kernel", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let field = std::fs::read_to_string(out.join("kernel_field.csv")).unwrap();
    assert_eq!(field.lines().next().unwrap(), "re_z,im_z,re_k,im_k,abs_k");
    let o = blab(&["zeros", &cfg, "--out", out.to_str().unwrap(), "--seed", "123"]);
    assert_eq!(o.status.code(), Some(0));
    let json = std::fs::read_to_string(out.join("zeros.json")).unwrap();
    assert!(json.contains("\"seed\": 123"));
    assert!(json.contains("\"certified\": true"));
}
