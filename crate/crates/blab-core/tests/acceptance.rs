//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use blab_core::basis::{BasisSpec, PlanarBasis, ReinhardtTerm};
use blab_core::geom::{is_logconvex_profile, make_domain, rho1, rho2, GridDomain, ShapeSpec};
use blab_core::kernel::{
    extremal_value, fit_kernel, fit_reinhardt, kernel_error, ClosedFormKernel, KernelModel, Reference,
};
use blab_core::lab::{
    annulus_real_zero, component_basis, run_barbell, run_exhaustion, run_metric_demo, run_nowhere_density,
    ExperimentConfig,
};
use blab_core::zeros::{certify, lu_qi_keng_verdict, ClosedSource, ProbeConfig, ReinhardtSlice, Verdict};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn single_thread<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn disc_fit(h: f64, degree: i32) -> (GridDomain<f64>, KernelModel<f64>) {
    let u = make_domain::<f64>(&ShapeSpec::disc([0.0, 0.0], 1.0), h).unwrap();
    let m = fit_kernel(&u, &BasisSpec::Planar(PlanarBasis::laurent(c(0.0, 0.0), 1.0, 0, degree))).unwrap();
    (u, m)
}

/// Disc kernel accuracy; returns the error for the stability criterion.
fn disc_accuracy() -> (Outcome, f64) {
    let t = Instant::now();
    let (u, m, err, k00) = single_thread(|| {
        let (u, m) = disc_fit(0.005, 10);
        let disc = ClosedFormKernel::disc(c(0.0, 0.0), 1.0);
        let err = kernel_error(&m, Reference::Closed(&disc, &u), 0.2).unwrap().max;
        let k00 = m.eval(c(0.0, 0.0), c(0.0, 0.0)).unwrap().re;
        (u, m, err, k00)
    });
    let _ = (u, m);
    let elapsed = t.elapsed();
    let dk = (k00 - std::f64::consts::FRAC_1_PI).abs();
    let ok = err <= 1e-2 && dk <= 1e-3 && elapsed < Duration::from_secs(30);
    (
        outcome(ok, format!("max error {err:.3e} (tol 1e-2), |K(0,0) - 1/pi| {dk:.3e} (tol 1e-3), {elapsed:.1?}")),
        err,
    )
}

fn annulus_fit() -> KernelModel<f64> {
    let u = make_domain::<f64>(&ShapeSpec::annulus([0.0, 0.0], 0.5, 1.0), 0.0025).unwrap();
    fit_kernel(&u, &BasisSpec::Planar(component_basis(&u, [-40, 80], 80))).unwrap()
}

fn annulus_zero_agreement(model: &KernelModel<f64>) -> Outcome {
    let w0 = 0.85;
    let probes = ProbeConfig {
        points: vec![[w0, 0.0]],
        ..ProbeConfig::default()
    };
    let series = ClosedFormKernel::annulus_for_range(c(0.0, 0.0), 0.5, 1.0, 0.25 * 1.1, 0.95, 1e-12).unwrap();
    let closed = ClosedSource::new(&series, model.domain.clone());
    let a = lu_qi_keng_verdict(&closed, &probes).unwrap();
    let b = lu_qi_keng_verdict(model, &probes).unwrap();
    match (a.certificate(), b.certificate()) {
        (Some(x), Some(y)) => {
            let gap = (x.z_star[0] - y.z_star[0]).hypot(x.z_star[1] - y.z_star[1]);
            let s = annulus_real_zero(&ClosedFormKernel::annulus(c(0.0, 0.0), 0.5, 1.0, 200).unwrap()).unwrap();
            outcome(
                x.winding == 1 && y.winding == 1 && gap <= 0.02,
                format!(
                    "w0 {w0}: series z* {:?}, fitted z* {:?}, gap {gap:.4} (tol 0.02), sign-change z* {:.4}",
                    x.z_star,
                    y.z_star,
                    s / w0
                ),
            )
        }
        _ => outcome(false, format!("series verdict {a:?}, fitted verdict {b:?}")),
    }
}

fn dichotomy(annulus: &KernelModel<f64>) -> Outcome {
    let probes = ProbeConfig::default();
    let floor_of = |v: &Verdict| match v {
        Verdict::NoZeroFound { floor, .. } => Some(*floor),
        Verdict::ZeroCertified(_) => None,
    };
    let (_, disc) = disc_fit(0.01, 10);
    let sq_u = make_domain::<f64>(&ShapeSpec::rectangle([0.0, 0.0], [1.0, 1.0]), 0.01).unwrap();
    let square = fit_kernel(&sq_u, &BasisSpec::Planar(component_basis(&sq_u, [0, 10], 10))).unwrap();
    let fd = floor_of(&lu_qi_keng_verdict(&disc, &probes).unwrap());
    let fs = floor_of(&lu_qi_keng_verdict(&square, &probes).unwrap());
    let va = lu_qi_keng_verdict(annulus, &probes).unwrap();
    let ok = fd.is_some_and(|f| f >= 0.05) && fs.is_some_and(|f| f >= 0.05) && va.certificate().is_some_and(|c| c.is_valid());
    outcome(
        ok,
        format!(
            "disc floor {fd:?}, square floor {fs:?}, annulus {}",
            match va.certificate() {
                Some(c) => format!("certified at {:?}", c.z_star),
                None => "not certified".into(),
            }
        ),
    )
}

fn stability(disc_error: f64) -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "exhaustion", "h": 0.005, "domain": {"shape": "disc", "center": [0, 0], "radius": 1},
            "depths": [0.2, 0.1, 0.05], "basis_window": [0, 10], "lobe_degree": 10, "compact_margin": 0.3}"#,
    )
    .unwrap();
    let r = run_exhaustion(&cfg).unwrap();
    let e: Vec<f64> = r.rows.iter().map(|r| r.kernel_error.unwrap_or(f64::NAN)).collect();
    let decreasing = e.windows(2).all(|w| w[1] < w[0]);
    let last = *e.last().unwrap();
    outcome(
        decreasing && last <= 2.0 * disc_error,
        format!("errors {e:.4?}, final {last:.4} vs bound {:.4}", 2.0 * disc_error),
    )
}

fn barbell() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "barbell", "h": 0.01,
            "domain": {"shape": "disc", "center": [-2, 0], "radius": 1},
            "attach": {"shape": "annulus", "center": [2, 0], "inner": 0.1, "outer": 1},
            "segment": [[-1.1, 0], [1.1, 0]], "widths": [0.4, 0.2, 0.1, 0.05],
            "basis_window": [-8, 30], "lobe_degree": 20}"#,
    )
    .unwrap();
    let t = Instant::now();
    let r = run_barbell(&cfg).unwrap();
    let elapsed = t.elapsed();
    let r2: Vec<f64> = r.rows.iter().map(|r| r.rho2.unwrap()).collect();
    let cert: Vec<bool> = r.rows.iter().map(|r| r.certified && r.certificate.as_ref().is_some_and(|c| c.is_valid())).collect();
    let ok = r2.windows(2).all(|w| w[1] < w[0]) && cert[2] && cert[3] && elapsed < Duration::from_secs(300);
    outcome(ok, format!("rho2 {r2:.4?}, certified {cert:?}, {elapsed:.1?}"))
}

fn nowhere_density() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "nowhere-density", "h": 0.002, "delta": 0.5, "connected": true,
            "domain": {"shape": "disc", "center": [0, 0], "radius": 1}, "basis_window": [-10, 20], "lobe_degree": 15}"#,
    )
    .unwrap();
    let r = run_nowhere_density(&cfg).unwrap();
    let row = &r.rows[0];
    let connected = r.assertions.iter().any(|a| a.name == "result-connected" && a.passed);
    let rho = row.rho1.unwrap();
    let valid = row.certificate.as_ref().is_some_and(|c| c.is_valid());
    outcome(
        connected && rho < 0.5 && valid,
        format!("connected {connected}, rho1 {rho:.4} (< 0.5), certificate valid {valid}"),
    )
}

fn metrics() -> Outcome {
    let h = 0.02;
    let disc = ShapeSpec::disc([0.0, 0.0], 1.0);
    let square = ShapeSpec::rectangle([0.0, 0.0], [1.0, 1.0]);
    let family = [
        disc.clone(),
        square.clone(),
        ShapeSpec::annulus([0.0, 0.0], 0.4, 1.0),
        ShapeSpec::Difference {
            a: Box::new(disc),
            b: Box::new(ShapeSpec::rectangle([0.0, -0.6 * h], [1.5, 0.6 * h])),
        },
        ShapeSpec::Union {
            parts: vec![
                square,
                ShapeSpec::Tube {
                    a: [1.0, 0.5],
                    b: [2.0, 0.5],
                    width: 0.05,
                },
            ],
        },
        ShapeSpec::disc([0.3, 0.2], 0.7),
    ];
    let doms: Vec<GridDomain<f64>> = family.iter().map(|s| make_domain(s, h).unwrap()).collect();
    let n = doms.len();
    let mut bad = Vec::new();
    let mut triples = 0;
    for (name, f) in [("rho1", rho1::<f64> as fn(&_, &_) -> _), ("rho2", rho2::<f64>)] {
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            if f(&doms[i], &doms[i]).unwrap() != 0.0 {
                bad.push(format!("{name} identity {i}"));
            }
            for j in 0..n {
                d[i][j] = f(&doms[i], &doms[j]).unwrap();
            }
        }
        for i in 0..n {
            for j in 0..n {
                if d[i][j] != d[j][i] {
                    bad.push(format!("{name} symmetry {i} {j}"));
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    triples += 1;
                    for (a, b, cc) in [(i, j, k), (j, k, i), (k, i, j)] {
                        if d[a][cc] > d[a][b] + d[b][cc] + 4.0 * h {
                            bad.push(format!("{name} triangle {a} {b} {cc}"));
                        }
                    }
                }
            }
        }
    }
    let demo = run_metric_demo(&ExperimentConfig::from_json(r#"{"h": 0.01}"#).unwrap()).unwrap();
    let demo_ok = demo.passed();
    outcome(
        bad.is_empty() && demo_ok && triples == 40,
        format!("{} triples per metric, violations {bad:?}, demo assertions passed {demo_ok}", triples / 2),
    )
}

fn kernel_algebra() -> Outcome {
    let h = 0.02;
    let shapes = [
        (ShapeSpec::disc([0.0, 0.0], 1.0), [0, 10], [0, 5]),
        (ShapeSpec::rectangle([0.0, 0.0], [1.0, 1.0]), [0, 10], [0, 5]),
        (ShapeSpec::annulus([0.0, 0.0], 0.5, 1.0), [-6, 8], [-3, 4]),
        (
            ShapeSpec::Union {
                parts: vec![ShapeSpec::disc([-1.2, 0.0], 1.0), ShapeSpec::disc([1.2, 0.0], 1.0)],
            },
            [0, 8],
            [0, 4],
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut fails: Vec<String> = Vec::new();
    let mut pairs = 0;
    let (mut herm, mut ext) = (0.0f64, 0.0f64);
    for (d, (shape, window, small_window)) in shapes.iter().enumerate() {
        let u = make_domain::<f64>(shape, h).unwrap();
        let m = fit_kernel(&u, &BasisSpec::Planar(component_basis(&u, *window, window[1]))).unwrap();
        let small = fit_kernel(&u, &BasisSpec::Planar(component_basis(&u, *small_window, small_window[1]))).unwrap();
        let cells: Vec<usize> = u.cells().collect();
        let pick = |rng: &mut ChaCha8Rng| {
            let p = u.lattice.center(cells[rng.gen_range(0..cells.len())]);
            c(p[0], p[1])
        };
        for _ in 0..1000 {
            pairs += 1;
            let (z, w) = (pick(&mut rng), pick(&mut rng));
            let kzw = m.eval(z, w).unwrap();
            let kwz = m.eval(w, z).unwrap();
            let kzz = m.eval(z, z).unwrap().re;
            let kww = m.eval(w, w).unwrap().re;
            let scale = (kzz * kww).sqrt();
            herm = herm.max((kzw - kwz.conj()).norm() / scale);
            if !(kzz > 0.0 && kww > 0.0) {
                fails.push(format!("positivity {d}"));
            }
            if kzw.norm_sqr() > kzz * kww * (1.0 + 1e-10) {
                fails.push(format!("cauchy-schwarz {d}"));
            }
            let same = m.label_at(z).unwrap() == m.label_at(w).unwrap();
            if (kzw == c(0.0, 0.0)) == same {
                fails.push(format!("cross-component {d}"));
            }
            let e = extremal_value(&m, z).unwrap().value;
            ext = ext.max((e - kzz).abs() / kzz);
            if m.eval(z, z).unwrap().re < small.eval(z, z).unwrap().re - 1e-9 {
                fails.push(format!("basis growth {d}"));
            }
        }
    }
    if herm > 1e-12 {
        fails.push(format!("hermitian {herm:.2e}"));
    }
    if ext > 1e-8 {
        fails.push(format!("extremal {ext:.2e}"));
    }
    fails.dedup();
    outcome(
        fails.is_empty(),
        format!("{pairs} pairs over 4 domains, hermitian rel {herm:.1e}, extremal rel {ext:.1e}, failures {fails:?}"),
    )
}

fn product_c2() -> Outcome {
    let h = 0.0025;
    let profile = make_domain::<f64>(
        &ShapeSpec::ReinhardtProfile {
            region: Box::new(ShapeSpec::rectangle([0.5, 0.0], [1.0, 1.0])),
        },
        h,
    )
    .unwrap();
    let logconvex = is_logconvex_profile(&profile).unwrap();
    let terms: Vec<ReinhardtTerm> = (-40..=80).flat_map(|a| (0..=60).map(move |b| ReinhardtTerm { a, b })).collect();
    let model = fit_reinhardt(&profile, &terms).unwrap();
    let eps = 0.15;
    let product = ClosedFormKernel::Product(vec![
        ClosedFormKernel::annulus_for_range(c(0.0, 0.0), 0.5, 1.0, (0.5 + eps) * (0.5 + eps), (1.0 - eps) * (1.0 - eps), 1e-13)
            .unwrap(),
        ClosedFormKernel::disc(c(0.0, 0.0), 1.0),
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut point = || {
        let r1 = rng.gen_range(0.5 + eps..1.0 - eps);
        let r2 = rng.gen_range(0.0..1.0 - eps);
        let (t1, t2) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
        [C64::from_polar(r1, t1), C64::from_polar(r2, t2)]
    };
    let pts: Vec<[C64; 2]> = (0..300).map(|_| point()).collect();
    let mut worst = 0.0f64;
    for (i, z) in pts.iter().enumerate() {
        let w = &pts[(i * 7 + 3) % pts.len()];
        for (a, b) in [(z, w), (z, z)] {
            let d = (model.eval(a, b).unwrap() - product.eval(a, b).unwrap()).norm();
            worst = worst.max(d);
        }
    }
    // zero of the annulus factor, seen on the slice z2 = 0.3 with w = (0.8, 0.2)
    let w1 = 0.8;
    let s = annulus_real_zero(&ClosedFormKernel::annulus(c(0.0, 0.0), 0.5, 1.0, 200).unwrap()).unwrap();
    let slice = ReinhardtSlice {
        model: &model,
        z2: c(0.3, 0.0),
        w: [c(w1, 0.0), c(0.2, 0.0)],
    };
    let cert = certify(&slice, c(w1, 0.0), c(s / w1, 0.0), 0.02, 3);
    let cert_ok = cert.as_ref().is_ok_and(|c| c.winding == 1 && c.is_valid());
    outcome(
        worst <= 1e-2 && cert_ok && logconvex,
        format!(
            "max |fitted - product| {worst:.3e} (tol 1e-2) on 600 pairs, {} terms, slice certificate {}, log-convex {logconvex}",
            model.terms.len(),
            match &cert {
                Ok(c) => format!("winding {} at {:?}", c.winding, c.z_star),
                Err(e) => e.to_string(),
            }
        ),
    )
}

fn main() {
    let mut results = Vec::new();
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("{} criterion {n} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push(o.passed);
    };
    let (o, disc_error) = disc_accuracy();
    report(1, "disc kernel accuracy", o);
    let annulus = annulus_fit();
    report(2, "annulus zero", annulus_zero_agreement(&annulus));
    report(3, "simply connected dichotomy", dichotomy(&annulus));
    report(4, "exhaustion stability", stability(disc_error));
    report(5, "barbell persistence", barbell());
    report(6, "nowhere-density construction", nowhere_density());
    report(7, "metric properties", metrics());
    report(8, "kernel algebra", kernel_algebra());
    report(9, "product domain in C^2", product_c2());
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
