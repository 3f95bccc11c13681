use blab_core::basis::BasisSpec;
use blab_core::geom::{make_domain, GridDomain, ShapeSpec};
use blab_core::kernel::{fit_kernel, KernelModel};
use blab_core::lab::{annulus_zero, component_basis};
use blab_core::zeros::{
    certify, circle, lu_qi_keng_verdict, rectangle, winding_count, KernelSource, ProbeConfig, SliceEval, Verdict,
    ZeroError, ZeroResult,
};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::sync::OnceLock;

/// Monic polynomial with known roots.
struct Poly(Vec<C64>);

impl SliceEval<f64> for Poly {
    fn eval(&self, z: C64) -> ZeroResult<(C64, f64)> {
        let v = self.0.iter().fold(C64::new(1.0, 0.0), |p, r| p * (z - r));
        let mag = self.0.iter().fold(1.0, |p, r| p * (z.norm() + r.norm()));
        Ok((v, mag * f64::EPSILON * (self.0.len() as f64 + 1.0)))
    }
    fn label(&self, _z: C64) -> Option<u32> {
        Some(1)
    }
    fn home(&self) -> u32 {
        1
    }
}

fn roots() -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y)| C64::new(x, y)), 1..6)
}

fn count(f: &Poly, contour: &[C64]) -> Option<i64> {
    match winding_count(f, contour) {
        Ok(w) => Some(w.count),
        Err(ZeroError::FloorViolated { .. }) => None,
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn winding_matches_root_count_under_refinement(rs in roots(), cx in -0.5f64..0.5, cy in -0.5f64..0.5, r in 0.1f64..1.0) {
        let f = Poly(rs.clone());
        let c = C64::new(cx, cy);
        // the contour is the inscribed polygon, so keep roots out of the sliver between 8-gon and circle
        let inner = r * (std::f64::consts::PI / 8.0).cos();
        prop_assume!(rs.iter().all(|z| { let d = (z - c).norm(); d < inner - 1e-3 || d > r + 1e-3 }));
        let inside = rs.iter().filter(|z| (*z - c).norm() < r).count() as i64;
        let counts: Vec<Option<i64>> = [8, 16, 32, 64, 128].iter().map(|&n| count(&f, &circle(c, r, n))).collect();
        for k in counts.iter().flatten() {
            prop_assert_eq!(*k, inside);
        }
    }

    #[test]
    fn winding_additive_over_split_rectangle(rs in roots(), split in -0.6f64..0.6) {
        let f = Poly(rs.clone());
        prop_assume!(rs.iter().all(|z| (z.re - split).abs() > 1e-3 && (z.re.abs() - 0.9).abs() > 1e-3 && (z.im.abs() - 0.8).abs() > 1e-3));
        let (lo, hi) = (C64::new(-0.9, -0.8), C64::new(0.9, 0.8));
        let whole = count(&f, &rectangle(lo, hi, 16));
        let left = count(&f, &rectangle(lo, C64::new(split, hi.im), 16));
        let right = count(&f, &rectangle(C64::new(split, lo.im), hi, 16));
        if let (Some(a), Some(b), Some(c)) = (whole, left, right) {
            prop_assert_eq!(a, b + c);
        }
    }
}

fn disc_model() -> &'static KernelModel<f64> {
    static M: OnceLock<KernelModel<f64>> = OnceLock::new();
    M.get_or_init(|| {
        let u = make_domain::<f64>(&ShapeSpec::disc([0.0, 0.0], 1.0), 0.02).unwrap();
        fit_kernel(&u, &BasisSpec::Planar(component_basis(&u, [0, 10], 10))).unwrap()
    })
}

fn floor_of(v: &Verdict) -> f64 {
    match v {
        Verdict::NoZeroFound { floor, .. } => *floor,
        Verdict::ZeroCertified(c) => panic!("disc certified a zero at {:?}", c.z_star),
    }
}

fn points() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0f64..0.5, 0.0f64..std::f64::consts::TAU).prop_map(|(r, t)| [r * t.cos(), r * t.sin()]), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn enlarging_probe_set_never_raises_floor(a in points(), b in points()) {
        let m = disc_model();
        let cfg = |pts: Vec<[f64; 2]>| ProbeConfig { points: pts, ..ProbeConfig::default() };
        let small = floor_of(&lu_qi_keng_verdict(m, &cfg(a.clone())).unwrap());
        let big = floor_of(&lu_qi_keng_verdict(m, &cfg([a, b].concat())).unwrap());
        prop_assert!(big <= small);
    }
}

fn annulus(h: f64) -> KernelModel<f64> {
    let u: GridDomain<f64> = make_domain(&ShapeSpec::annulus([0.0, 0.0], 0.1, 1.0), h).unwrap();
    fit_kernel(&u, &BasisSpec::Planar(component_basis(&u, [-8, 30], 30))).unwrap()
}

fn annulus_pair() -> &'static (KernelModel<f64>, KernelModel<f64>) {
    static M: OnceLock<(KernelModel<f64>, KernelModel<f64>)> = OnceLock::new();
    M.get_or_init(|| (annulus(0.02), annulus(0.01)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn certificate_survives_halving_h(angle in 0.0f64..std::f64::consts::TAU) {
        let (coarse, fine) = annulus_pair();
        let dir = C64::from_polar(1.0, angle);
        let z = annulus_zero(C64::new(0.0, 0.0), 0.1, 1.0, dir).unwrap();
        let f = KernelSource::slice(coarse, z.w0).unwrap();
        let a = certify(&f, z.w0, z.z_star, z.radius, 0).unwrap();
        let g = KernelSource::slice(fine, z.w0).unwrap();
        let b = certify(&g, z.w0, C64::new(a.z_star[0], a.z_star[1]), a.radius, 0).unwrap();
        prop_assert_eq!(a.winding, 1);
        prop_assert_eq!(b.winding, 1);
        let moved = (a.z_star[0] - b.z_star[0]).hypot(a.z_star[1] - b.z_star[1]);
        prop_assert!(moved < a.radius);
    }
}
