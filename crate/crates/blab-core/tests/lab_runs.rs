use blab_core::lab::*;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

#[test]
fn disc_exhaustion_errors_decrease() {
    let c = cfg(r#"{"experiment": "exhaustion", "h": 0.01, "domain": {"shape": "disc", "center": [0, 0], "radius": 1},
        "depths": [0.2, 0.1, 0.05], "basis_window": [0, 10], "lobe_degree": 10, "compact_margin": 0.3}"#);
    let r = run_exhaustion(&c).unwrap();
    assert_eq!(r.rows.len(), 3);
    let e: Vec<f64> = r.rows.iter().map(|r| r.kernel_error.unwrap()).collect();
    assert!(e[1] < e[0] && e[2] < e[1], "{e:?}");
    assert!(r.rows.iter().all(|r| !r.certified));
    assert!(r.passed());
}

#[test]
fn annulus_exhaustion_certifies_every_stage() {
    let c = cfg(r#"{"experiment": "exhaustion", "h": 0.0025, "domain": {"shape": "annulus", "center": [0, 0], "inner": 0.5, "outer": 1},
        "depths": [0.1, 0.05], "basis_window": [-40, 80], "compact_margin": 0.15}"#);
    let r = run_exhaustion(&c).unwrap();
    for row in &r.rows {
        assert!(row.certified, "{row:?}");
        assert!(row.certificate.as_ref().unwrap().is_valid());
    }
}

#[test]
fn single_width_barbell_has_no_persistence_assertion() {
    let c = cfg(r#"{"experiment": "barbell", "h": 0.02,
        "domain": {"shape": "disc", "center": [-2, 0], "radius": 1},
        "attach": {"shape": "annulus", "center": [2, 0], "inner": 0.1, "outer": 1},
        "segment": [[-1.1, 0], [1.1, 0]], "widths": [0.4], "basis_window": [-6, 20], "lobe_degree": 12}"#);
    let r = run_barbell(&c).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert!(r.assertions.is_empty());
    assert_eq!(r.certificate.as_ref().unwrap().winding, 1);
}

#[test]
fn barbell_rejects_overlapping_and_thin() {
    let base = r#""h": 0.02, "domain": {"shape": "disc", "center": [-2, 0], "radius": 1},
        "segment": [[-1.1, 0], [1.1, 0]], "basis_window": [-6, 20]"#;
    let thin = cfg(&format!(r#"{{{base}, "attach": {{"shape": "annulus", "center": [2, 0], "inner": 0.1, "outer": 1}}, "widths": [0.02]}}"#));
    assert!(run_barbell(&thin).unwrap_err().is_config());
    let overlap = cfg(&format!(r#"{{{base}, "attach": {{"shape": "annulus", "center": [-1.5, 0], "inner": 0.1, "outer": 1}}, "widths": [0.2]}}"#));
    assert!(run_barbell(&overlap).unwrap_err().is_config());
}

fn nowhere(connected: bool, dim: u8) -> ExperimentReport {
    let c = cfg(&format!(
        r#"{{"experiment": "nowhere-density", "h": 0.002, "delta": 0.5, "connected": {connected}, "complex_dim": {dim},
        "domain": {{"shape": "disc", "center": [0, 0], "radius": 1}}, "basis_window": [-10, 20], "lobe_degree": 15}}"#
    ));
    run_nowhere_density(&c).unwrap()
}

#[test]
fn nowhere_density_postcondition_from_report() {
    for (connected, dim) in [(false, 1), (true, 1), (true, 2)] {
        let r = nowhere(connected, dim);
        assert!(r.passed(), "{:?}", r.assertions);
        let row = &r.rows[0];
        assert!(row.rho1.unwrap() < 0.5);
        assert!(row.certificate.as_ref().unwrap().is_valid());
        // the report alone carries the evidence
        let back: ExperimentReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}

#[test]
fn reports_are_reproducible_across_thread_counts() {
    let c = cfg(r#"{"h": 0.02, "domain": {"shape": "annulus", "center": [0, 0], "inner": 0.1, "outer": 1},
        "basis_window": [-8, 30], "seed": 11}"#);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run_zeros(&c).unwrap());
    let b = three.install(|| run_zeros(&c).unwrap());
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn report_files_written() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_metric_demo(&cfg(r#"{"h": 0.02}"#)).unwrap();
    r.write(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("metric-demo.csv")).unwrap();
    assert_eq!(csv.lines().count(), r.rows.len() + 1);
    let json = std::fs::read_to_string(dir.path().join("metric-demo.json")).unwrap();
    assert!(json.contains("\"assertions\""));
}
