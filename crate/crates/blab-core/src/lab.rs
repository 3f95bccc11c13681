//! Experiment drivers, configuration and reports.

use crate::basis::{BasisSpec, Localizer, PlanarBasis, PlanarTerm, ReinhardtTerm};
use crate::geom::{
    barbell_sequence, distance_field, interior_exhaustion, is_logconvex_profile, make_domain, rho1, rho2_parts,
    GeomError, GridDomain, ShapeSpec,
};
use crate::kernel::{
    fit_kernel, fit_reinhardt, fmt12, kernel_error, kernel_field_csv, probe_cells, reproducing_residual,
    ClosedFormKernel, KernelError, KernelModel, Reference,
};
use crate::zeros::{
    certify, circle, hurwitz_track, lu_qi_keng_verdict, refine_candidate, winding_count, Candidate, ClosedSource,
    KernelSource, ProbeConfig, SliceEval, Verdict, ZeroCertificate, ZeroError, CIRCLE_SAMPLES,
};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Zero(#[from] ZeroError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Problems traceable to the config file rather than to the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, LabError::Config(_) | LabError::Geom(_))
    }
}

pub type LabResult<T> = Result<T, LabError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Exhaustion,
    Barbell,
    NowhereDensity,
    MetricDemo,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Exhaustion => "exhaustion",
            ExperimentKind::Barbell => "barbell",
            ExperimentKind::NowhereDensity => "nowhere-density",
            ExperimentKind::MetricDemo => "metric-demo",
        }
    }
}

/// Weights that confine the two lobes of a necked basis to their own side of the neck.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizerConfig {
    pub rate_attach: f64,
    pub rate_domain: f64,
    /// Half-gap of the weight's jump segment, as a fraction of the gap length.
    pub offset_fraction: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        LocalizerConfig {
            rate_attach: 6.0,
            rate_domain: 3.0,
            offset_fraction: 0.2,
        }
    }
}

fn default_window() -> [i32; 2] {
    [0, 10]
}
fn default_lobe() -> i32 {
    20
}
fn default_seed() -> u64 {
    7
}
fn default_dim() -> u8 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    /// Main domain: the target, or `G`.
    #[serde(default)]
    pub domain: Option<ShapeSpec>,
    /// Attached domain `D` of a barbell, or the second shape of a metric pair.
    #[serde(default)]
    pub attach: Option<ShapeSpec>,
    #[serde(default)]
    pub segment: Option<[[f64; 2]; 2]>,
    /// `(N-, N+)` exponent window.
    #[serde(default = "default_window")]
    pub basis_window: [i32; 2],
    /// Degree of the monomial lobe on hole-free components.
    #[serde(default = "default_lobe")]
    pub lobe_degree: i32,
    pub h: f64,
    #[serde(default)]
    pub depths: Vec<f64>,
    #[serde(default)]
    pub widths: Vec<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub connected: bool,
    #[serde(default = "default_dim")]
    pub complex_dim: u8,
    #[serde(default)]
    pub compact_margin: Option<f64>,
    #[serde(default)]
    pub w0: Option<[f64; 2]>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub probes: ProbeConfig,
    #[serde(default)]
    pub localizer: LocalizerConfig,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn strictly_monotone(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] < w[0]) || x.windows(2).all(|w| w[1] > w[0])
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> LabResult<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating, so overrides can be applied first.
    pub fn parse(text: &str) -> LabResult<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn validate(&self) -> LabResult<()> {
        let bad = |m: &str| Err(LabError::Config(m.into()));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("h must be positive");
        }
        if self.basis_window[0] > self.basis_window[1] {
            return bad("basis window is empty");
        }
        if self.lobe_degree < 0 {
            return bad("lobe degree must be nonnegative");
        }
        if !strictly_monotone(&self.depths) {
            return bad("depths must be strictly monotone");
        }
        if !strictly_monotone(&self.widths) {
            return bad("widths must be strictly monotone");
        }
        if self.complex_dim != 1 && self.complex_dim != 2 {
            return bad("complex_dim must be 1 or 2");
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        for s in [&self.domain, &self.attach].into_iter().flatten() {
            s.validate().map_err(|e| LabError::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            seed: self.seed,
            ..self.probes.clone()
        }
    }

    fn need_domain(&self) -> LabResult<&ShapeSpec> {
        self.domain.as_ref().ok_or_else(|| LabError::Config("missing domain".into()))
    }

    fn need_attach(&self) -> LabResult<&ShapeSpec> {
        self.attach.as_ref().ok_or_else(|| LabError::Config("missing attach".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: usize,
    pub label: String,
    pub parameter: f64,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub rho2_volume: Option<f64>,
    pub rho2_sup: Option<f64>,
    pub kernel_error: Option<f64>,
    pub winding: Option<i64>,
    pub certified: bool,
    pub floor: Option<f64>,
    pub n_terms: Option<usize>,
    pub certificate: Option<ZeroCertificate>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub h: f64,
    pub seed: u64,
    pub basis_window: [i32; 2],
    pub rows: Vec<StageRow>,
    pub assertions: Vec<Assertion>,
    /// Limit-domain certificate or other run-level evidence.
    pub certificate: Option<ZeroCertificate>,
    pub notes: Vec<String>,
}

const CSV_HEADER: &str = "stage,label,parameter,rho1,rho2,rho2_volume,rho2_sup,kernel_error,winding,certified,floor,n_terms,z_star_re,z_star_im,note";

fn opt(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_default()
}

impl ExperimentReport {
    fn new(kind: &str, cfg: &ExperimentConfig) -> Self {
        ExperimentReport {
            experiment: kind.into(),
            h: cfg.h,
            seed: cfg.seed,
            basis_window: cfg.basis_window,
            rows: Vec::new(),
            assertions: Vec::new(),
            certificate: None,
            notes: Vec::new(),
        }
    }

    fn assert(&mut self, name: &str, passed: bool, detail: String) {
        self.assertions.push(Assertion {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// Column of a numeric field over all rows.
    pub fn column(&self, f: impl Fn(&StageRow) -> Option<f64>) -> Vec<Option<f64>> {
        self.rows.iter().map(f).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let z = r.certificate.as_ref().map(|c| c.z_star);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.stage,
                r.label,
                fmt12(r.parameter),
                opt(r.rho1),
                opt(r.rho2),
                opt(r.rho2_volume),
                opt(r.rho2_sup),
                opt(r.kernel_error),
                r.winding.map(|w| w.to_string()).unwrap_or_default(),
                r.certified,
                opt(r.floor),
                r.n_terms.map(|n| n.to_string()).unwrap_or_default(),
                opt(z.map(|z| z[0])),
                opt(z.map(|z| z[1])),
                r.note.replace([',', '\n'], ";"),
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<name>.csv` and `<name>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> LabResult<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.experiment)), self.to_csv())?;
        std::fs::write(dir.join(format!("{}.json", self.experiment)), self.to_json())?;
        Ok(())
    }
}

fn c(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

fn cell_point(u: &GridDomain<f64>, k: usize) -> C64 {
    c(u.lattice.center(k))
}

/// Bounded holes of each component: `(owner label, centroid)`.
fn holes(u: &GridDomain<f64>, labels: &[u32]) -> Vec<(u32, C64)> {
    if u.mask.iter().all(|&b| b) {
        return Vec::new();
    }
    let comp = GridDomain {
        lattice: u.lattice.clone(),
        mask: u.mask.iter().map(|&b| !b).collect(),
        kind: u.kind,
    };
    let hl = comp.components();
    let lat = &u.lattice;
    let n = hl.count as usize + 1;
    let mut border = vec![false; n];
    let mut owner = vec![0u32; n];
    let mut sum = vec![C64::new(0.0, 0.0); n];
    let mut cnt = vec![0usize; n];
    for k in 0..lat.len() {
        let l = hl.labels[k] as usize;
        if l == 0 {
            continue;
        }
        let (i, j) = lat.ij(k);
        if i == 0 || j == 0 || i + 1 == lat.rows || j + 1 == lat.cols {
            border[l] = true;
            continue;
        }
        sum[l] += cell_point(u, k);
        cnt[l] += 1;
        if owner[l] == 0 {
            for nb in [k - 1, k + 1, k - lat.cols, k + lat.cols] {
                if labels[nb] != 0 {
                    owner[l] = labels[nb];
                    break;
                }
            }
        }
    }
    (1..n)
        .filter(|&l| !border[l] && owner[l] != 0)
        .map(|l| (owner[l], sum[l] / cnt[l] as f64))
        .collect()
}

/// Per component: a Laurent window at the centroid of its only hole, or
/// powers `0..=degree` at its centroid when it has none (or several).
pub fn component_basis(u: &GridDomain<f64>, window: [i32; 2], degree: i32) -> PlanarBasis<f64> {
    let comps = u.components();
    let hs = holes(u, &comps.labels);
    let mut basis = PlanarBasis::default();
    for l in 1..=comps.count {
        let pts: Vec<C64> = u.cells().filter(|&k| comps.labels[k] == l).map(|k| cell_point(u, k)).collect();
        let mine: Vec<C64> = hs.iter().filter(|(o, _)| *o == l).map(|(_, z)| *z).collect();
        if mine.len() == 1 {
            let center = mine[0];
            let far = pts.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
            let near = pts.iter().map(|p| (p - center).norm()).fold(f64::INFINITY, f64::min);
            if window[1] >= 0 {
                basis.extend(PlanarBasis::laurent(center, far, window[0].max(0), window[1]));
            }
            if window[0] < 0 {
                basis.extend(PlanarBasis::laurent(center, near, window[0], window[1].min(-1)));
            }
        } else {
            let center = pts.iter().sum::<C64>() / pts.len() as f64;
            let far = pts.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
            basis.extend(PlanarBasis::laurent(center, far, 0, degree));
        }
    }
    basis
}

/// Geometry of a two-lobe basis joined across a neck.
#[derive(Clone, Debug)]
pub struct NeckGeometry {
    pub g_center: C64,
    pub g_scale: f64,
    pub d_center: C64,
    pub d_inner: f64,
    pub d_outer: f64,
    /// Points on the neck axis at the edges of the gap, from `G` towards `D`.
    pub gap: [C64; 2],
}

/// Monomials on the `G` lobe and a Laurent window on the annulus `D`, each
/// multiplied by a weight that decays across the gap:
/// `E_G^(n+1) ((z-c_G)/r_G)^n`, `E_D^(n+1) ((z-c_D)/R)^n`, `E_D (rho/(z-c_D))^k`.
pub fn neck_basis(geo: &NeckGeometry, degree: i32, window: [i32; 2], cfg: &LocalizerConfig) -> PlanarBasis<f64> {
    let [a, b] = geo.gap;
    let len = (b - a).norm();
    let mid = (a + b) * 0.5;
    let normal = (b - a) / len * C64::i();
    let off = normal * (cfg.offset_fraction * len);
    let probe = Localizer {
        q_plus: mid + off,
        q_minus: mid - off,
        rate: 1.0,
        anchor: geo.g_center,
    };
    let sg = (probe.phase(geo.d_center) - probe.phase(geo.g_center)).re.signum();
    let loc_g = Localizer {
        rate: -sg * cfg.rate_domain,
        ..probe
    };
    let loc_d = Localizer {
        rate: sg * cfg.rate_attach,
        anchor: geo.d_center,
        ..probe
    };
    let mut terms = Vec::new();
    for n in 0..=degree {
        terms.push(PlanarTerm {
            center: geo.g_center,
            exponent: n,
            scale: geo.g_scale,
            localizer: Some((0, n + 1)),
        });
    }
    for n in window[0].max(0)..=window[1] {
        terms.push(PlanarTerm {
            center: geo.d_center,
            exponent: n,
            scale: geo.d_outer,
            localizer: Some((1, n + 1)),
        });
    }
    for k in window[0]..=window[1].min(-1) {
        terms.push(PlanarTerm {
            center: geo.d_center,
            exponent: k,
            scale: geo.d_inner,
            localizer: Some((1, 1)),
        });
    }
    PlanarBasis {
        terms,
        localizers: vec![loc_g, loc_d],
    }
}

/// Real zero `s*` of the annulus series on `(-R^2, -rho^2)`.
pub fn annulus_real_zero(k: &ClosedFormKernel<f64>) -> Option<f64> {
    let ClosedFormKernel::Annulus(a) = k else {
        return None;
    };
    let (lo, hi) = (-a.outer * a.outer, -a.inner * a.inner);
    let f = |s: f64| k.annulus_series(C64::new(s, 0.0)).map(|v| v.re).ok();
    let n = 400;
    let xs: Vec<f64> = (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    for w in xs.windows(2) {
        let (fa, fb) = (f(w[0])?, f(w[1])?);
        if fa * fb <= 0.0 {
            let (mut x0, mut x1, mut f0) = (w[0], w[1], fa);
            for _ in 0..80 {
                let m = 0.5 * (x0 + x1);
                let fm = f(m)?;
                if f0 * fm <= 0.0 {
                    x1 = m;
                } else {
                    x0 = m;
                    f0 = fm;
                }
            }
            return Some(0.5 * (x0 + x1));
        }
    }
    None
}

/// Annulus parameters of a shape, when it is one.
fn annulus_of(s: &ShapeSpec) -> Option<(C64, f64, f64)> {
    match s {
        ShapeSpec::Annulus { center, inner, outer } => Some((c(*center), *inner, *outer)),
        _ => None,
    }
}

/// Closed-form kernel of a disc or annulus shape, truncated for pairs at depth above `margin`.
pub fn closed_form_for(s: &ShapeSpec, margin: f64) -> Option<ClosedFormKernel<f64>> {
    match s {
        ShapeSpec::Disc { center, radius } => Some(ClosedFormKernel::disc(c(*center), *radius)),
        ShapeSpec::Annulus { center, inner, outer } => {
            let smin = (inner + margin).powi(2);
            let smax = (outer - margin).powi(2);
            if !(smin < smax) {
                return None;
            }
            ClosedFormKernel::annulus_for_range(c(*center), *inner, *outer, smin, smax, 1e-10).ok()
        }
        _ => None,
    }
}

/// Where an annulus kernel slice has its zero: `w0 = c + t n` and `z* = c - t n`, `t = sqrt|s*|`.
#[derive(Clone, Copy, Debug)]
pub struct AnnulusZero {
    pub w0: C64,
    pub z_star: C64,
    /// Contour radius keeping clear of both boundary circles.
    pub radius: f64,
}

pub fn annulus_zero(center: C64, inner: f64, outer: f64, direction: C64) -> LabResult<AnnulusZero> {
    let m = 120.max(((inner / outer).ln().abs().recip() * 30.0) as usize);
    let k = ClosedFormKernel::annulus(center, inner, outer, m)?;
    let s = annulus_real_zero(&k).ok_or_else(|| LabError::Config("annulus series has no real zero".into()))?;
    let t = s.abs().sqrt();
    let n = direction / direction.norm();
    Ok(AnnulusZero {
        w0: center + n * t,
        z_star: center - n * t,
        radius: 0.2 * (t - inner).min(outer - t),
    })
}

fn kernel_source_cert<S: SliceEval<f64>>(
    f: &S,
    u: &GridDomain<f64>,
    w0: C64,
    guess: C64,
    reach: f64,
    probes: &ProbeConfig,
) -> LabResult<ZeroCertificate> {
    let (v, _) = f.eval(guess)?;
    let cand = refine_candidate(
        f,
        u,
        Candidate {
            z: guess,
            modulus: v.norm(),
        },
        (reach / u.h()).ceil() as usize,
    );
    Ok(certify(f, w0, cand.z, u.h() * probes.radius_cells, probes.grow)?)
}

fn verdict_cols(row: &mut StageRow, v: &Verdict) {
    match v {
        Verdict::ZeroCertified(cert) => {
            row.certified = true;
            row.winding = Some(cert.winding);
            row.floor = Some(cert.min_modulus);
            row.certificate = Some(cert.clone());
        }
        Verdict::NoZeroFound { floor, resolution, .. } => {
            row.floor = Some(*floor);
            row.note = format!("no zero found at resolution {}", fmt12(*resolution));
        }
    }
}

/// Interior exhaustion of the target, each member's kernel compared with the target's.
pub fn run_exhaustion(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    let shape = cfg.need_domain()?;
    if cfg.depths.is_empty() {
        return Err(LabError::Config("depth schedule is empty".into()));
    }
    let g = make_domain::<f64>(shape, cfg.h)?;
    let seq = interior_exhaustion(&g, &cfg.depths)?;
    let dmax = cfg.depths.iter().cloned().fold(0.0, f64::max);
    let margin = cfg.compact_margin.unwrap_or(1.5 * dmax);
    if !(margin > dmax) {
        return Err(LabError::Config("compact margin must exceed every depth".into()));
    }
    let closed = closed_form_for(shape, margin);
    let fitted = match closed {
        Some(_) => None,
        None => Some(fit_kernel(
            &g,
            &BasisSpec::Planar(component_basis(&g, cfg.basis_window, cfg.lobe_degree)),
        )?),
    };
    let reference = match (&closed, &fitted) {
        (Some(k), _) => Reference::Closed(k, &g),
        (None, Some(m)) => Reference::Model(m),
        _ => unreachable!(),
    };
    let mut rep = ExperimentReport::new("exhaustion", cfg);
    rep.notes.push(match closed {
        Some(_) => "reference: closed form".into(),
        None => "reference: fitted kernel of the target".into(),
    });
    let probes = cfg.probe_config();
    for (i, (m, &eps)) in seq.members.iter().zip(&seq.params).enumerate() {
        let mut row = StageRow {
            stage: i,
            label: "depth".into(),
            parameter: eps,
            ..Default::default()
        };
        row.rho1 = Some(rho1(m, &g)?);
        let p = rho2_parts(m, &g)?;
        row.rho2 = Some(p.total());
        row.rho2_volume = Some(p.volume);
        row.rho2_sup = Some(p.sup);
        let basis = BasisSpec::Planar(component_basis(m, cfg.basis_window, cfg.lobe_degree));
        match fit_kernel(m, &basis) {
            Ok(model) => {
                row.n_terms = Some(model.n_terms());
                row.kernel_error = Some(kernel_error(&model, reference, margin)?.max);
                verdict_cols(&mut row, &lu_qi_keng_verdict(&model, &probes)?);
            }
            Err(e) => row.note = format!("fit failed: {e}"),
        }
        rep.rows.push(row);
    }
    if rep.rows.len() > 1 {
        let tail: Vec<Option<f64>> = rep.rows.iter().rev().take(3).rev().map(|r| r.kernel_error).collect();
        let ok = tail.iter().all(|e| e.is_some()) && tail.windows(2).all(|w| w[1].unwrap() <= w[0].unwrap());
        rep.assert("kernel-error-nonincreasing", ok, format!("final errors {tail:?}"));
    }
    Ok(rep)
}

fn segment_of(cfg: &ExperimentConfig) -> LabResult<[[f64; 2]; 2]> {
    cfg.segment.ok_or_else(|| LabError::Config("missing segment".into()))
}

fn shape_center_scale(s: &ShapeSpec) -> (C64, f64) {
    let (lo, hi) = s.bounds();
    let center = C64::new(0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]));
    let scale = 0.5 * ((hi[0] - lo[0]).hypot(hi[1] - lo[1]));
    match s {
        ShapeSpec::Disc { center, radius } => (c(*center), *radius),
        _ => (center, scale),
    }
}

/// Disc-like `G` joined to an annulus `D` by tubes of decreasing width.
pub fn run_barbell(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    let gs = cfg.need_domain()?;
    let ds = cfg.need_attach()?;
    let seg = segment_of(cfg)?;
    let (dc, rho, r) = annulus_of(ds).ok_or_else(|| LabError::Config("attach must be an annulus".into()))?;
    if cfg.widths.is_empty() {
        return Err(LabError::Config("width schedule is empty".into()));
    }
    let g = make_domain::<f64>(gs, cfg.h)?;
    let d = make_domain::<f64>(ds, cfg.h)?;
    let seq = barbell_sequence(&g, &d, seg, &cfg.widths)?;
    let (gc, gr) = shape_center_scale(gs);
    let axis = c(seg[1]) - c(seg[0]);
    let normal = axis / axis.norm() * C64::i();
    let zero = annulus_zero(dc, rho, r, normal)?;
    let w0 = cfg.w0.map(c).unwrap_or(zero.w0);
    let margin = cfg.compact_margin.unwrap_or(0.1 * (r - rho));
    let ann = closed_form_for(ds, margin).ok_or_else(|| LabError::Config("compact margin too large".into()))?;
    let mut rep = ExperimentReport::new("barbell", cfg);
    // the limit kernel on D is the annulus kernel, so certify there first
    let limit = ClosedSource::new(&ann, d.clone());
    let lf = limit.slice(w0)?;
    let contour = circle(zero.z_star, zero.radius, CIRCLE_SAMPLES);
    let lw = winding_count(&lf, &contour)?;
    rep.certificate = Some(ZeroCertificate {
        w0: [w0.re, w0.im],
        contour: lw.samples.iter().map(|z| [z.re, z.im]).collect(),
        winding: lw.count,
        min_modulus: lw.min_modulus,
        error_estimate: lw.max_error,
        z_star: [zero.z_star.re, zero.z_star.im],
        radius: zero.radius,
    });
    rep.notes.push(format!("limit winding {} around the annulus zero", lw.count));
    let geo = NeckGeometry {
        g_center: gc,
        g_scale: gr,
        d_center: dc,
        d_inner: rho,
        d_outer: r,
        gap: gap_points(&seq.target, c(seg[0]), c(seg[1])),
    };
    let basis = BasisSpec::Planar(neck_basis(&geo, cfg.lobe_degree, cfg.basis_window, &cfg.localizer));
    let mut models = Vec::new();
    let mut fit_notes = Vec::new();
    for m in &seq.members {
        match fit_kernel(m, &basis) {
            Ok(k) => {
                models.push(Some(k));
                fit_notes.push(String::new());
            }
            Err(e) => {
                models.push(None);
                fit_notes.push(format!("fit failed: {e}"));
            }
        }
    }
    let fitted: Vec<KernelModel<f64>> = models.iter().flatten().cloned().collect();
    let track = hurwitz_track(&fitted, w0, &contour, Some((Reference::Closed(&ann, &d), margin)));
    let mut tracked = track.into_iter();
    for (i, (m, &w)) in seq.members.iter().zip(&seq.params).enumerate() {
        let mut row = StageRow {
            stage: i,
            label: "width".into(),
            parameter: w,
            note: fit_notes[i].clone(),
            ..Default::default()
        };
        let p = rho2_parts(m, &seq.target)?;
        row.rho2 = Some(p.total());
        row.rho2_volume = Some(p.volume);
        row.rho2_sup = Some(p.sup);
        row.rho1 = Some(rho1(m, &g)?);
        if let Some(model) = &models[i] {
            row.n_terms = Some(model.n_terms());
            let t = tracked.next().expect("one entry per fitted member");
            row.kernel_error = t.kernel_error;
            row.winding = t.count;
            row.floor = t.min_modulus;
            if let Some(f) = t.failure {
                row.note = f;
            }
            if let (Some(n), Some(min), Some(err)) = (t.count, t.min_modulus, t.error_estimate) {
                if n >= 1 {
                    row.certified = true;
                    row.certificate = Some(ZeroCertificate {
                        w0: [w0.re, w0.im],
                        contour: contour.iter().map(|z| [z.re, z.im]).collect(),
                        winding: n,
                        min_modulus: min,
                        error_estimate: err,
                        z_star: [zero.z_star.re, zero.z_star.im],
                        radius: zero.radius,
                    });
                }
            }
        }
        rep.rows.push(row);
    }
    if rep.rows.len() > 1 {
        let r2: Vec<f64> = rep.rows.iter().map(|r| r.rho2.unwrap()).collect();
        rep.assert(
            "rho2-strictly-decreasing",
            r2.windows(2).all(|w| w[1] < w[0]),
            format!("{r2:?}"),
        );
        let first = rep.rows.iter().position(|r| r.certified);
        let persists = first.is_some_and(|f| rep.rows[f..].iter().all(|r| r.certified));
        rep.notes.push(match first {
            Some(f) => format!("first certified stage {f}"),
            None => "no stage certified".into(),
        });
        rep.assert("certification-persists", persists, format!("first certified stage {first:?}"));
    }
    Ok(rep)
}

/// Last point of the segment outside `G` leaving `G`, and first point inside `D`, along the axis.
fn gap_points(target: &GridDomain<f64>, a: C64, b: C64) -> [C64; 2] {
    let labels = target.components().labels;
    let h = target.h();
    let n = ((b - a).norm() / (0.25 * h)).ceil() as usize;
    let at = |t: f64| a + (b - a) * t;
    let lab = |z: C64| {
        target
            .lattice
            .locate([z.re, z.im])
            .map(|k| labels[k])
            .unwrap_or(0)
    };
    let start = lab(a);
    let end = lab(b);
    let mut left = a;
    let mut right = b;
    for i in 0..=n {
        let z = at(i as f64 / n as f64);
        let l = lab(z);
        if l == start && l != 0 {
            left = z;
        }
        if l == end && l != 0 {
            right = z;
            break;
        }
    }
    [left, right]
}

/// Rightmost point of the closure of `u` (middle of the extreme column).
fn rightmost(u: &GridDomain<f64>) -> C64 {
    let mut best = f64::NEG_INFINITY;
    let mut ys = Vec::new();
    for k in u.cells() {
        let p = u.lattice.center(k);
        if p[0] > best + 1e-12 {
            best = p[0];
            ys.clear();
        }
        if (p[0] - best).abs() <= 1e-12 {
            ys.push(p[1]);
        }
    }
    C64::new(best + 0.5 * u.h(), ys[ys.len() / 2])
}

/// Builds a domain within `delta` of `G` (in rho1) whose kernel has a certified zero.
pub fn run_nowhere_density(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    let gs = cfg.need_domain()?;
    let delta = cfg.delta.ok_or_else(|| LabError::Config("missing delta".into()))?;
    let h = cfg.h;
    if !(delta > 8.0 * h) {
        return Err(LabError::Config(format!("delta {delta} must exceed 8h = {}", 8.0 * h)));
    }
    let g = make_domain::<f64>(gs, h)?;
    if g.kind != crate::geom::DomainKind::Planar {
        return Err(LabError::Config("the domain must be planar; the second factor is added by complex_dim".into()));
    }
    let mut rep = ExperimentReport::new("nowhere-density", cfg);
    // (1) interior exhaustion member
    let eps = (delta / 16.0).max(1.5 * h);
    let member = interior_exhaustion(&g, &[eps])?.members.remove(0);
    let r1_member = rho1(&member, &g)?;
    rep.assert("exhaustion-within-quarter", r1_member < delta / 4.0, format!("rho1 {r1_member}"));
    // (2) small annulus beside G
    let p = rightmost(&g);
    let r_out = 0.9 * delta / 8.0;
    let r_in = 0.1 * r_out;
    if r_out - r_in < 6.0 * h {
        return Err(LabError::Config(format!("delta {delta} too small for the lattice spacing {h}")));
    }
    let dc = C64::new(p.re + delta / 8.0 + r_out, p.im);
    let ds = ShapeSpec::annulus([dc.re, dc.im], r_in, r_out);
    let d = make_domain::<f64>(&ds, h)?;
    let (gc, _) = shape_center_scale(gs);
    let member_scale = member.cells().map(|k| (cell_point(&member, k) - gc).norm()).fold(0.0, f64::max);
    // (3) optional neck
    let neck_from = C64::new(p.re - 2.0 * eps - 2.0 * h, p.im);
    let neck_to = dc - 0.5 * (r_out + r_in);
    let (result, basis) = if cfg.connected {
        let width = cfg.widths.last().copied().unwrap_or(4.0 * h);
        let seg = [[neck_from.re, neck_from.im], [neck_to.re, neck_to.im]];
        let seq = barbell_sequence(&member, &d, seg, &[width])?;
        let geo = NeckGeometry {
            g_center: gc,
            g_scale: member_scale,
            d_center: dc,
            d_inner: r_in,
            d_outer: r_out,
            gap: gap_points(&seq.target, neck_from, neck_to),
        };
        rep.notes.push(format!("neck width {}", fmt12(width)));
        let b = neck_basis(&geo, cfg.lobe_degree, cfg.basis_window, &cfg.localizer);
        (seq.members[0].clone(), b)
    } else {
        let u = member.union(&d)?;
        let b = component_basis(&u, cfg.basis_window, cfg.lobe_degree);
        (u, b)
    };
    let mut row = StageRow {
        stage: 0,
        label: "delta".into(),
        parameter: delta,
        ..Default::default()
    };
    let p2 = rho2_parts(&result, &g)?;
    row.rho2 = Some(p2.total());
    row.rho2_volume = Some(p2.volume);
    row.rho2_sup = Some(p2.sup);
    let planar_rho1 = rho1(&result, &g)?;
    row.rho1 = Some(if cfg.complex_dim == 2 {
        // for U x B against G x B: closures differ by H(cl), boundaries by at most max(H(bd), H(cl))
        let (a, b) = crate::geom::rho1_parts(&result, &g)?;
        a + b.max(a)
    } else {
        planar_rho1
    });
    // (4) certify a zero of the fitted kernel near the annulus zero
    let zero = annulus_zero(dc, r_in, r_out, C64::i())?;
    let model = fit_kernel(&result, &BasisSpec::Planar(basis))?;
    row.n_terms = Some(model.n_terms());
    let f = KernelSource::slice(&model, zero.w0)?;
    match kernel_source_cert(&f, &result, zero.w0, zero.z_star, zero.radius, &cfg.probe_config()) {
        Ok(cert) => {
            row.certified = true;
            row.winding = Some(cert.winding);
            row.floor = Some(cert.min_modulus);
            row.certificate = Some(cert);
        }
        Err(e) => row.note = format!("certification failed: {e}"),
    }
    if cfg.complex_dim == 2 {
        let profile = make_domain::<f64>(
            &ShapeSpec::ReinhardtProfile {
                region: Box::new(ShapeSpec::rectangle([r_in, 0.0], [r_out, 1.0])),
            },
            (r_out - r_in) / 32.0,
        )?;
        let logconvex = is_logconvex_profile(&profile)?;
        rep.assert("annulus-times-disc-logconvex", logconvex, "profile of the attached factor".into());
        rep.notes.push("second factor: unit disc; zero certified on the first-factor slice".into());
    }
    let r1 = row.rho1.unwrap();
    rep.assert("rho1-below-delta", r1 < delta, format!("rho1 {r1} delta {delta}"));
    rep.assert(
        "certificate-valid",
        row.certificate.as_ref().is_some_and(|c| c.is_valid()),
        row.note.clone(),
    );
    if cfg.connected {
        rep.assert("result-connected", result.components().count == 1, String::new());
    }
    rep.rows.push(row);
    Ok(rep)
}

/// Canonical pairs contrasting the two metrics.
pub fn run_metric_demo(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    let h = cfg.h;
    let disc = ShapeSpec::disc([0.0, 0.0], 1.0);
    let slit = ShapeSpec::Difference {
        a: Box::new(disc.clone()),
        b: Box::new(ShapeSpec::rectangle([0.0, -0.6 * h], [1.5, 0.6 * h])),
    };
    let square = ShapeSpec::rectangle([0.0, 0.0], [1.0, 1.0]);
    let tailed = ShapeSpec::Union {
        parts: vec![
            square.clone(),
            ShapeSpec::Tube {
                a: [1.0, 0.5],
                b: [2.0, 0.5],
                width: 0.05,
            },
        ],
    };
    let pairs = [
        ("slit", slit, disc.clone()),
        ("tail", tailed, square),
        ("concentric", ShapeSpec::disc([0.0, 0.0], 0.8), disc.clone()),
        ("identical", disc.clone(), disc),
    ];
    let mut rep = ExperimentReport::new("metric-demo", cfg);
    for (i, (name, a, b)) in pairs.iter().enumerate() {
        let u = make_domain::<f64>(a, h)?;
        let v = make_domain::<f64>(b, h)?;
        let p = rho2_parts(&u, &v)?;
        rep.rows.push(StageRow {
            stage: i,
            label: (*name).into(),
            parameter: h,
            rho1: Some(rho1(&u, &v)?),
            rho2: Some(p.total()),
            rho2_volume: Some(p.volume),
            rho2_sup: Some(p.sup),
            ..Default::default()
        });
    }
    let r = |i: usize| rep.rows[i].clone();
    let (s, t, id) = (r(0), r(1), r(3));
    rep.assert(
        "slit-separates",
        s.rho1.unwrap() >= 0.5 && s.rho2_volume.unwrap() <= 0.05,
        format!("rho1 {} volume {}", s.rho1.unwrap(), s.rho2_volume.unwrap()),
    );
    rep.assert(
        "tail-separates",
        t.rho2.unwrap() <= 0.2 && t.rho1.unwrap() >= 0.9,
        format!("rho2 {} rho1 {}", t.rho2.unwrap(), t.rho1.unwrap()),
    );
    rep.assert(
        "identical-zero",
        id.rho1 == Some(0.0) && id.rho2 == Some(0.0),
        String::new(),
    );
    Ok(rep)
}

/// Metric pair from the config, or the demo table when no pair is given.
pub fn run_metric(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    let (Some(a), Some(b)) = (&cfg.domain, &cfg.attach) else {
        return run_metric_demo(cfg);
    };
    let u = make_domain::<f64>(a, cfg.h)?;
    let v = make_domain::<f64>(b, cfg.h)?;
    let p = rho2_parts(&u, &v)?;
    let mut rep = ExperimentReport::new("metric", cfg);
    rep.rows.push(StageRow {
        label: "pair".into(),
        parameter: cfg.h,
        rho1: Some(rho1(&u, &v)?),
        rho2: Some(p.total()),
        rho2_volume: Some(p.volume),
        rho2_sup: Some(p.sup),
        ..Default::default()
    });
    Ok(rep)
}

/// Fits the default basis on the domain; returns the report and a kernel field dump for `w0`.
pub fn run_kernel(cfg: &ExperimentConfig) -> LabResult<(ExperimentReport, String)> {
    let u = make_domain::<f64>(cfg.need_domain()?, cfg.h)?;
    if u.kind != crate::geom::DomainKind::Planar {
        return run_reinhardt_kernel(cfg, &u);
    }
    let model = fit_kernel(&u, &BasisSpec::Planar(component_basis(&u, cfg.basis_window, cfg.lobe_degree)))?;
    let d = distance_field(&u);
    let w0 = match cfg.w0 {
        Some(p) => c(p),
        None => {
            let deep = u.cells().fold(u.cells().next().unwrap(), |a, k| if d.at(k) > d.at(a) { k } else { a });
            cell_point(&u, deep)
        }
    };
    let slice = model.slice(w0)?;
    let pts: Vec<C64> = probe_cells(&u, crate::kernel::PROBE_STRIDE).into_iter().map(|k| cell_point(&u, k)).collect();
    let vals: Vec<C64> = pts.iter().map(|&z| slice.value(z)).collect::<Result<_, _>>()?;
    let mut rep = ExperimentReport::new("kernel", cfg);
    let worst = (0..model.basis.len())
        .filter(|&i| model.parts.iter().any(|p| p.terms.contains(&i)))
        .map(|i| reproducing_residual(&model, i))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let kzz = model.eval(w0, w0)?.re;
    rep.rows.push(StageRow {
        label: "kernel".into(),
        parameter: cfg.h,
        n_terms: Some(model.n_terms()),
        floor: Some(kzz),
        note: format!("max reproducing residual {}", fmt12(worst)),
        ..Default::default()
    });
    rep.assert("reproducing-residual", worst <= 1e-6, format!("{worst}"));
    rep.assert("diagonal-positive", kzz > 0.0, format!("K(w0, w0) = {kzz}"));
    Ok((rep, kernel_field_csv(&pts, &vals)))
}

fn run_reinhardt_kernel(cfg: &ExperimentConfig, p: &GridDomain<f64>) -> LabResult<(ExperimentReport, String)> {
    let [lo, hi] = cfg.basis_window;
    let touches_axis = |axis: usize| p.cells().any(|k| p.lattice.center(k)[axis] < p.h());
    let (alo, blo) = (if touches_axis(0) { 0 } else { lo }, if touches_axis(1) { 0 } else { lo });
    let terms: Vec<ReinhardtTerm> = (alo..=hi).flat_map(|a| (blo..=hi).map(move |b| ReinhardtTerm { a, b })).collect();
    let model = fit_reinhardt(p, &terms)?;
    let mut rep = ExperimentReport::new("kernel", cfg);
    rep.assert("profile-logconvex", is_logconvex_profile(p)?, String::new());
    rep.rows.push(StageRow {
        label: "reinhardt".into(),
        parameter: cfg.h,
        n_terms: Some(model.terms.len()),
        ..Default::default()
    });
    Ok((rep, String::new()))
}

/// Lu Qi-Keng verdict of the fitted default-basis kernel on the domain.
pub fn run_zeros(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    let u = make_domain::<f64>(cfg.need_domain()?, cfg.h)?;
    let model = fit_kernel(&u, &BasisSpec::Planar(component_basis(&u, cfg.basis_window, cfg.lobe_degree)))?;
    let mut probes = cfg.probe_config();
    if let Some(w) = cfg.w0 {
        probes.points = vec![w];
    }
    let v = lu_qi_keng_verdict(&model, &probes)?;
    let mut rep = ExperimentReport::new("zeros", cfg);
    let mut row = StageRow {
        label: "verdict".into(),
        parameter: cfg.h,
        n_terms: Some(model.n_terms()),
        ..Default::default()
    };
    verdict_cols(&mut row, &v);
    rep.assert(
        "certificate-valid",
        row.certificate.as_ref().map_or(true, |c| c.is_valid()),
        String::new(),
    );
    rep.rows.push(row);
    Ok(rep)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    match cfg.experiment {
        Some(ExperimentKind::Exhaustion) => run_exhaustion(cfg),
        Some(ExperimentKind::Barbell) => run_barbell(cfg),
        Some(ExperimentKind::NowhereDensity) => run_nowhere_density(cfg),
        Some(ExperimentKind::MetricDemo) => run_metric_demo(cfg),
        None => Err(LabError::Config("missing experiment".into())),
    }
}
