//! Zeros of kernel slices `z -> K(z, w0)`: scanning, argument-principle
//! certification, verdicts and tracking along domain sequences.

use crate::geom::{distance_field, DistanceField, GridDomain};
use crate::kernel::{kernel_error, ClosedFormKernel, KernelError, KernelModel, KernelSlice, Reference, ReinhardtModel};
use crate::scalar::{Real, C};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ZeroError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("modulus {min} on the contour is not above 10x the evaluation error {bound}")]
    FloorViolated { min: f64, bound: f64 },
    #[error("contour leaves the component of w0")]
    OutsideComponent,
    #[error("argument change is not an integer multiple of 2 pi ({0})")]
    NotInteger(f64),
    #[error("contour needs at least 3 points")]
    DegenerateContour,
    #[error("argument refinement did not converge")]
    RefinementLimit,
}

pub type ZeroResult<T> = Result<T, ZeroError>;

/// A holomorphic function of `z` with an evaluation-error estimate.
pub trait SliceEval<T: Real>: Sync {
    /// Value and estimated absolute evaluation error.
    fn eval(&self, z: C<T>) -> ZeroResult<(C<T>, T)>;
    /// Component of `z`, `None` outside the domain.
    fn label(&self, z: C<T>) -> Option<u32>;
    /// Component of the fixed second argument.
    fn home(&self) -> u32;
}

/// Anything that yields slices over a labelled grid domain.
pub trait KernelSource<T: Real>: Sync {
    type Slice<'a>: SliceEval<T>
    where
        Self: 'a;
    fn slice(&self, w: C<T>) -> ZeroResult<Self::Slice<'_>>;
    fn domain(&self) -> &GridDomain<T>;
    fn labels(&self) -> &[u32];
}

fn label_in<T: Real>(u: &GridDomain<T>, labels: &[u32], z: C<T>) -> Option<u32> {
    u.lattice.locate([z.re, z.im]).map(|k| labels[k]).filter(|&l| l != 0)
}

impl<T: Real> SliceEval<T> for KernelSlice<'_, T> {
    fn eval(&self, z: C<T>) -> ZeroResult<(C<T>, T)> {
        Ok(self.value_with_bound(z)?)
    }
    fn label(&self, z: C<T>) -> Option<u32> {
        self.model.label_at(z).ok()
    }
    fn home(&self) -> u32 {
        self.label
    }
}

impl<T: Real> KernelSource<T> for KernelModel<T> {
    type Slice<'a> = KernelSlice<'a, T>;
    fn slice(&self, w: C<T>) -> ZeroResult<KernelSlice<'_, T>> {
        Ok(KernelModel::slice(self, w)?)
    }
    fn domain(&self) -> &GridDomain<T> {
        &self.domain
    }
    fn labels(&self) -> &[u32] {
        &self.labels
    }
}

/// A closed-form kernel restricted to a grid domain.
#[derive(Clone, Debug)]
pub struct ClosedSource<'k, T> {
    pub kernel: &'k ClosedFormKernel<T>,
    pub domain: GridDomain<T>,
    pub labels: Vec<u32>,
}

impl<'k, T: Real> ClosedSource<'k, T> {
    pub fn new(kernel: &'k ClosedFormKernel<T>, domain: GridDomain<T>) -> Self {
        let labels = domain.components().labels;
        ClosedSource { kernel, domain, labels }
    }
}

pub struct ClosedSlice<'a, T> {
    src: &'a ClosedSource<'a, T>,
    w: C<T>,
    home: u32,
}

impl<T: Real> SliceEval<T> for ClosedSlice<'_, T> {
    fn eval(&self, z: C<T>) -> ZeroResult<(C<T>, T)> {
        let l = self.label(z).ok_or(KernelError::OutsideDomain(z.re.as_f64(), z.im.as_f64()))?;
        if l != self.home {
            return Ok((C::new(T::zero(), T::zero()), T::zero()));
        }
        let v = self.src.kernel.eval1(z, self.w)?;
        Ok((v, self.src.kernel.error_bound1(z, self.w)?))
    }
    fn label(&self, z: C<T>) -> Option<u32> {
        label_in(&self.src.domain, &self.src.labels, z)
    }
    fn home(&self) -> u32 {
        self.home
    }
}

impl<'k, T: Real> KernelSource<T> for ClosedSource<'k, T> {
    type Slice<'a>
        = ClosedSlice<'a, T>
    where
        Self: 'a;
    fn slice(&self, w: C<T>) -> ZeroResult<ClosedSlice<'_, T>> {
        let home = label_in(&self.domain, &self.labels, w)
            .ok_or(KernelError::OutsideDomain(w.re.as_f64(), w.im.as_f64()))?;
        Ok(ClosedSlice { src: self, w, home })
    }
    fn domain(&self) -> &GridDomain<T> {
        &self.domain
    }
    fn labels(&self) -> &[u32] {
        &self.labels
    }
}

/// `z - a` on the whole plane, for exercising the argument principle.
#[derive(Clone, Copy, Debug)]
pub struct LinearProbe<T> {
    pub a: C<T>,
}

impl<T: Real> SliceEval<T> for LinearProbe<T> {
    fn eval(&self, z: C<T>) -> ZeroResult<(C<T>, T)> {
        let v = z - self.a;
        Ok((v, (z.norm() + self.a.norm()) * T::epsilon()))
    }
    fn label(&self, _z: C<T>) -> Option<u32> {
        Some(1)
    }
    fn home(&self) -> u32 {
        1
    }
}

/// `z1 -> K((z1, z2), w)` for a reinhardt model with `z2` and `w` fixed.
#[derive(Clone, Debug)]
pub struct ReinhardtSlice<'a, T> {
    pub model: &'a ReinhardtModel<T>,
    pub z2: C<T>,
    pub w: [C<T>; 2],
}

impl<T: Real> SliceEval<T> for ReinhardtSlice<'_, T> {
    fn eval(&self, z: C<T>) -> ZeroResult<(C<T>, T)> {
        let v = self.model.eval(&[z, self.z2], &self.w)?;
        let mag = self.model.eval_abs(&[z, self.z2], &self.w);
        let n = T::from_usize(self.model.terms.len()).unwrap();
        Ok((v, mag * T::epsilon() * (n + T::lit(8.0))))
    }
    fn label(&self, z: C<T>) -> Option<u32> {
        self.model.contains(&[z, self.z2]).then_some(1)
    }
    fn home(&self) -> u32 {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate<T> {
    pub z: C<T>,
    pub modulus: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScanOutcome<T> {
    /// Local minima of `|K|` below the component median, ascending.
    Candidates {
        list: Vec<Candidate<T>>,
        min: T,
        median: T,
        samples: usize,
    },
    /// The scanned component differs from the one of `w0`; every sample was exactly zero.
    CrossComponent { component: u32, samples: usize },
}

impl<T: Real> ScanOutcome<T> {
    pub fn below(&self, threshold: T) -> Vec<Candidate<T>> {
        match self {
            ScanOutcome::Candidates { list, .. } => list.iter().copied().filter(|c| c.modulus < threshold).collect(),
            ScanOutcome::CrossComponent { .. } => Vec::new(),
        }
    }

    pub fn min(&self) -> Option<T> {
        match self {
            ScanOutcome::Candidates { min, .. } => Some(*min),
            ScanOutcome::CrossComponent { .. } => None,
        }
    }
}

/// Scan of every `stride`-th interior cell (per lattice axis) of `w0`'s component.
pub fn scan_min_modulus<T: Real, S: KernelSource<T>>(src: &S, w0: C<T>, stride: usize) -> ZeroResult<ScanOutcome<T>> {
    scan_cells(src, w0, stride, None, None)
}

/// Scan restricted to `component` (default: that of `w0`) and to cells allowed by `allowed`.
pub fn scan_cells<T: Real, S: KernelSource<T>>(
    src: &S,
    w0: C<T>,
    stride: usize,
    component: Option<u32>,
    allowed: Option<&[bool]>,
) -> ZeroResult<ScanOutcome<T>> {
    let stride = stride.max(1);
    let f = src.slice(w0)?;
    let u = src.domain();
    let labels = src.labels();
    let target = component.unwrap_or(f.home());
    let lat = &u.lattice;
    let interior = |k: usize| {
        let (i, j) = lat.ij(k);
        i > 0
            && j > 0
            && i + 1 < lat.rows
            && j + 1 < lat.cols
            && u.mask[k - 1]
            && u.mask[k + 1]
            && u.mask[k - lat.cols]
            && u.mask[k + lat.cols]
    };
    let cells: Vec<usize> = u
        .cells()
        .filter(|&k| {
            let (i, j) = lat.ij(k);
            i % stride == 0
                && j % stride == 0
                && labels[k] == target
                && interior(k)
                && allowed.map_or(true, |a| a[k])
        })
        .collect();
    let vals: Vec<T> = cells
        .par_iter()
        .map(|&k| {
            let c = lat.center(k);
            f.eval(C::new(c[0], c[1])).map(|v| v.0.norm())
        })
        .collect::<ZeroResult<_>>()?;
    if target != f.home() {
        if vals.iter().all(|v| *v == T::zero()) {
            return Ok(ScanOutcome::CrossComponent {
                component: target,
                samples: vals.len(),
            });
        }
        return Err(ZeroError::Kernel(KernelError::InvalidFamily(
            "nonzero kernel across components".into(),
        )));
    }
    if vals.is_empty() {
        return Ok(ScanOutcome::Candidates {
            list: Vec::new(),
            min: T::infinity(),
            median: T::infinity(),
            samples: 0,
        });
    }
    let mut sorted = vals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let min = sorted[0];
    // position of each sample on the strided sub-grid
    let mut at = std::collections::HashMap::with_capacity(cells.len());
    for (n, &k) in cells.iter().enumerate() {
        at.insert(k, n);
    }
    let mut list = Vec::new();
    for (n, &k) in cells.iter().enumerate() {
        let v = vals[n];
        if v >= median {
            continue;
        }
        let (i, j) = lat.ij(k);
        let mut is_min = true;
        'nb: for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let ii = i as i64 + di * stride as i64;
                let jj = j as i64 + dj * stride as i64;
                if ii < 0 || jj < 0 || ii as usize >= lat.rows || jj as usize >= lat.cols {
                    continue;
                }
                let kk = lat.index(ii as usize, jj as usize);
                if let Some(&m) = at.get(&kk) {
                    // ties go to the lower index
                    if vals[m] < v || (vals[m] == v && m < n) {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
        }
        if is_min {
            let c = lat.center(k);
            list.push(Candidate {
                z: C::new(c[0], c[1]),
                modulus: v,
            });
        }
    }
    list.sort_by(|a, b| a.modulus.partial_cmp(&b.modulus).unwrap());
    Ok(ScanOutcome::Candidates {
        list,
        min,
        median,
        samples: vals.len(),
    })
}

/// Moves a scan candidate to the smallest `|f|` among nearby cells at full resolution.
pub fn refine_candidate<T: Real, S: SliceEval<T>>(f: &S, u: &GridDomain<T>, c: Candidate<T>, reach: usize) -> Candidate<T> {
    let lat = &u.lattice;
    let Some(k0) = lat.locate([c.z.re, c.z.im]) else {
        return c;
    };
    let (i0, j0) = lat.ij(k0);
    let r = reach as i64;
    let mut best = c;
    for di in -r..=r {
        for dj in -r..=r {
            let (i, j) = (i0 as i64 + di, j0 as i64 + dj);
            if i < 0 || j < 0 || i as usize >= lat.rows || j as usize >= lat.cols {
                continue;
            }
            let p = lat.center_ij(i as usize, j as usize);
            let z = C::new(p[0], p[1]);
            if f.label(z) != Some(f.home()) {
                continue;
            }
            if let Ok((v, _)) = f.eval(z) {
                if v.norm() < best.modulus {
                    best = Candidate { z, modulus: v.norm() };
                }
            }
        }
    }
    best
}

/// Counterclockwise circle sampled at `n` points.
pub fn circle<T: Real>(center: C<T>, radius: T, n: usize) -> Vec<C<T>> {
    let n = n.max(3);
    (0..n)
        .map(|k| {
            let t = T::TAU() * T::from_usize(k).unwrap() / T::from_usize(n).unwrap();
            center + C::new(t.cos(), t.sin()) * radius
        })
        .collect()
}

/// Counterclockwise rectangle boundary with `per_side` points on each side.
pub fn rectangle<T: Real>(min: C<T>, max: C<T>, per_side: usize) -> Vec<C<T>> {
    let corners = [min, C::new(max.re, min.im), max, C::new(min.re, max.im)];
    let n = per_side.max(1);
    let mut out = Vec::with_capacity(4 * n);
    for s in 0..4 {
        let (a, b) = (corners[s], corners[(s + 1) % 4]);
        for k in 0..n {
            out.push(a + (b - a) * (T::from_usize(k).unwrap() / T::from_usize(n).unwrap()));
        }
    }
    out
}

/// Result of following `arg f` around a contour.
#[derive(Clone, Debug)]
pub struct Winding<T> {
    pub count: i64,
    /// Contour after refinement, counterclockwise.
    pub samples: Vec<C<T>>,
    pub min_modulus: T,
    pub max_error: T,
}

const MAX_SAMPLES: usize = 1 << 16;

/// Zero count inside a closed polyline, from the total change of `arg f`.
///
/// Edges are bisected until successive arguments differ by less than `pi/2`,
/// and an edge is accepted only if its midpoint splits the step consistently and f is
/// close to linear along it.
/// Every sample must lie in the component of `w0` and have modulus above ten
/// times its evaluation error.
pub fn winding_count<T: Real, S: SliceEval<T>>(f: &S, contour: &[C<T>]) -> ZeroResult<Winding<T>> {
    if contour.len() < 3 {
        return Err(ZeroError::DegenerateContour);
    }
    let home = f.home();
    let probe = |z: C<T>| -> ZeroResult<(C<T>, T)> {
        if f.label(z) != Some(home) {
            return Err(ZeroError::OutsideComponent);
        }
        let (v, e) = f.eval(z)?;
        let floor = e * T::lit(10.0);
        if !(v.norm() > floor) {
            return Err(ZeroError::FloorViolated {
                min: v.norm().as_f64(),
                bound: floor.as_f64(),
            });
        }
        Ok((v, e))
    };
    let base: Vec<(C<T>, C<T>, T)> = contour
        .par_iter()
        .map(|&z| probe(z).map(|(v, e)| (z, v, e)))
        .collect::<ZeroResult<_>>()?;
    let quarter = T::FRAC_PI_2();
    let mut samples = Vec::with_capacity(base.len() * 2);
    let mut total = T::zero();
    let mut min_modulus = T::infinity();
    let mut max_error = T::zero();
    for k in 0..base.len() {
        let a = base[k];
        let b = base[(k + 1) % base.len()];
        // depth-first bisection of the edge a -> b
        let mut stack = vec![b];
        let mut cur = a;
        samples.push(cur.0);
        min_modulus = min_modulus.min(cur.1.norm());
        max_error = max_error.max(cur.2);
        while let Some(next) = stack.pop() {
            let step = (next.1 / cur.1).arg();
            let mid = (cur.0 + next.0) * T::lit(0.5);
            let (v, e) = probe(mid)?;
            // the midpoint must agree, or the edge may hide a full turn
            let s1 = (v / cur.1).arg();
            let s2 = (next.1 / v).arg();
            let agree = s1.abs() < quarter && s2.abs() < quarter && (s1 + s2 - step).abs() < T::lit(1e-9);
            // and f must be close to linear on the edge, so no turn is packed into one half
            let low = cur.1.norm().min(next.1.norm()).min(v.norm());
            let linear = ((cur.1 + next.1) * T::lit(0.5) - v).norm() < T::lit(0.25) * low;
            if step.abs() < quarter && agree && linear {
                total += s1 + s2;
                samples.push(mid);
                min_modulus = min_modulus.min(v.norm());
                max_error = max_error.max(e);
                cur = next;
                if stack.is_empty() {
                    break;
                }
                samples.push(cur.0);
                min_modulus = min_modulus.min(cur.1.norm());
                max_error = max_error.max(cur.2);
            } else {
                if samples.len() + stack.len() > MAX_SAMPLES {
                    return Err(ZeroError::RefinementLimit);
                }
                stack.push(next);
                stack.push((mid, v, e));
            }
        }
    }
    let turns = total / T::TAU();
    let count = turns.round();
    if (turns - count).abs() > T::lit(1e-6) {
        return Err(ZeroError::NotInteger(turns.as_f64()));
    }
    Ok(Winding {
        count: count.to_i64().unwrap(),
        samples,
        min_modulus,
        max_error,
    })
}

/// Certified zero inside a contour, as emitted to reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroCertificate {
    pub w0: [f64; 2],
    pub contour: Vec<[f64; 2]>,
    pub winding: i64,
    pub min_modulus: f64,
    pub error_estimate: f64,
    pub z_star: [f64; 2],
    pub radius: f64,
}

impl ZeroCertificate {
    pub fn is_valid(&self) -> bool {
        self.winding >= 1 && self.min_modulus > 10.0 * self.error_estimate && self.contour.len() >= 3
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn pt<T: Real>(z: C<T>) -> [f64; 2] {
    [z.re.as_f64(), z.im.as_f64()]
}

/// Minimum number of samples on a certification circle.
pub const CIRCLE_SAMPLES: usize = 64;

/// Tries circles of radius `r, 2r, 4r, 8r` around `z_star`, growing only on floor violations.
pub fn certify<T: Real, S: SliceEval<T>>(f: &S, w0: C<T>, z_star: C<T>, radius: T, grow: usize) -> ZeroResult<ZeroCertificate> {
    let mut r = radius;
    let mut last = ZeroError::DegenerateContour;
    for _ in 0..=grow {
        match winding_count(f, &circle(z_star, r, CIRCLE_SAMPLES)) {
            Ok(w) if w.count >= 1 => {
                let cert = ZeroCertificate {
                    w0: pt(w0),
                    contour: w.samples.iter().map(|&z| pt(z)).collect(),
                    winding: w.count,
                    min_modulus: w.min_modulus.as_f64(),
                    error_estimate: w.max_error.as_f64(),
                    z_star: pt(z_star),
                    radius: r.as_f64(),
                };
                debug_assert!(cert.is_valid());
                return Ok(cert);
            }
            Ok(w) => return Err(ZeroError::NotInteger(w.count as f64)),
            Err(e @ ZeroError::FloorViolated { .. }) => {
                last = e;
                r = r * T::lit(2.0);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    ZeroCertified(ZeroCertificate),
    /// Not a claim of zero-freeness: only the smallest `|K|` over the probes.
    NoZeroFound { resolution: f64, floor: f64, probes: usize },
}

impl Verdict {
    pub fn certificate(&self) -> Option<&ZeroCertificate> {
        match self {
            Verdict::ZeroCertified(c) => Some(c),
            Verdict::NoZeroFound { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Explicit `w0` points; when empty the default probe set is used.
    pub points: Vec<[f64; 2]>,
    pub random_per_component: usize,
    pub seed: u64,
    /// Scan stride in cells per lattice axis.
    pub stride: usize,
    /// Probes and scans stay at depth above this fraction of the component's maximum depth.
    pub margin_fraction: f64,
    pub max_candidates: usize,
    /// Contour radius in cells.
    pub radius_cells: f64,
    pub grow: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            points: Vec::new(),
            random_per_component: 8,
            seed: 7,
            stride: 4,
            margin_fraction: 0.4,
            max_candidates: 3,
            radius_cells: 3.0,
            grow: 3,
        }
    }
}

/// Cells deeper than the margin of their component, and per-component max depth.
pub fn core_mask<T: Real>(u: &GridDomain<T>, labels: &[u32], d: &DistanceField<T>, fraction: f64) -> Vec<bool> {
    let count = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut deepest = vec![T::zero(); count + 1];
    for k in u.cells() {
        let l = labels[k] as usize;
        deepest[l] = deepest[l].max(d.at(k));
    }
    (0..labels.len())
        .map(|k| u.mask[k] && d.at(k) > deepest[labels[k] as usize] * T::lit(fraction))
        .collect()
}

/// Default probes: centroid of each component when it lies in the core (else
/// the deepest cell), then random core cells drawn with a fixed seed.
pub fn default_probes<T: Real>(u: &GridDomain<T>, labels: &[u32], d: &DistanceField<T>, core: &[bool], cfg: &ProbeConfig) -> Vec<C<T>> {
    let count = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for l in 1..=count as u32 {
        let cells: Vec<usize> = u.cells().filter(|&k| labels[k] == l).collect();
        let n = T::from_usize(cells.len()).unwrap();
        let mut sum = [T::zero(); 2];
        let mut deep = cells[0];
        for &k in &cells {
            let c = u.lattice.center(k);
            sum[0] += c[0];
            sum[1] += c[1];
            if d.at(k) > d.at(deep) {
                deep = k;
            }
        }
        let centroid = [sum[0] / n, sum[1] / n];
        let first = match u.lattice.locate(centroid) {
            Some(k) if labels[k] == l && core[k] => C::new(centroid[0], centroid[1]),
            _ => {
                let c = u.lattice.center(deep);
                C::new(c[0], c[1])
            }
        };
        out.push(first);
        let pool: Vec<usize> = cells.into_iter().filter(|&k| core[k]).collect();
        let take = cfg.random_per_component.min(pool.len());
        for i in sample(&mut rng, pool.len(), take).into_iter() {
            let c = u.lattice.center(pool[i]);
            out.push(C::new(c[0], c[1]));
        }
    }
    out
}

/// Scans each probe `w0` and tries to certify its best candidates; the first
/// certificate wins, otherwise the smallest observed `|K|` is reported.
pub fn lu_qi_keng_verdict<T: Real, S: KernelSource<T>>(src: &S, cfg: &ProbeConfig) -> ZeroResult<Verdict> {
    let u = src.domain();
    let labels = src.labels();
    let d = distance_field(u);
    let core = core_mask(u, labels, &d, cfg.margin_fraction);
    let probes: Vec<C<T>> = if cfg.points.is_empty() {
        default_probes(u, labels, &d, &core, cfg)
    } else {
        cfg.points.iter().map(|p| C::new(T::lit(p[0]), T::lit(p[1]))).collect()
    };
    let h = u.h();
    let mut floor = T::infinity();
    for &w0 in &probes {
        let scan = scan_cells(src, w0, cfg.stride, None, Some(&core))?;
        if let ScanOutcome::Candidates { list, min, .. } = scan {
            floor = floor.min(min);
            let f = src.slice(w0)?;
            for c in list.into_iter().take(cfg.max_candidates) {
                let c = refine_candidate(&f, u, c, cfg.stride);
                if let Ok(cert) = certify(&f, w0, c.z, h * T::lit(cfg.radius_cells), cfg.grow) {
                    return Ok(Verdict::ZeroCertified(cert));
                }
            }
        }
    }
    Ok(Verdict::NoZeroFound {
        resolution: (h * T::from_usize(cfg.stride.max(1)).unwrap()).as_f64(),
        floor: floor.as_f64(),
        probes: probes.len(),
    })
}

/// Per-member outcome of tracking a fixed contour along a sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    /// `None` when the member's count is indeterminate.
    pub count: Option<i64>,
    pub min_modulus: Option<f64>,
    pub error_estimate: Option<f64>,
    pub failure: Option<String>,
    pub kernel_error: Option<f64>,
}

/// Winding counts of `K_j(., w0)` around one fixed contour for each member,
/// in order, with each member's kernel error against the limit reference.
pub fn hurwitz_track<T: Real>(
    models: &[KernelModel<T>],
    w0: C<T>,
    contour: &[C<T>],
    reference: Option<(Reference<'_, T>, T)>,
) -> Vec<TrackEntry> {
    models
        .iter()
        .map(|m| {
            let kernel_error = reference.and_then(|(r, eps)| kernel_error(m, r, eps).ok().map(|e| e.max.as_f64()));
            let res = KernelSource::slice(m, w0).and_then(|f| winding_count(&f, contour));
            match res {
                Ok(w) => TrackEntry {
                    count: Some(w.count),
                    min_modulus: Some(w.min_modulus.as_f64()),
                    error_estimate: Some(w.max_error.as_f64()),
                    failure: None,
                    kernel_error,
                },
                Err(e) => TrackEntry {
                    count: None,
                    min_modulus: None,
                    error_estimate: None,
                    failure: Some(e.to_string()),
                    kernel_error,
                },
            }
        })
        .collect()
}
