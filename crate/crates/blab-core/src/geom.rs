//! Lattice domains, distance fields, Hausdorff-type metrics and domain constructors.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("domain mask is empty")]
    EmptyMask,
    #[error("lattices are not aligned (spacing or origin offset differ)")]
    MismatchedLattice,
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("exhaustion depth {0} leaves an empty set")]
    EmptyExhaustion(f64),
    #[error("exhaustion depth {depth} must exceed the spacing {h}")]
    DepthBelowSpacing { depth: f64, h: f64 },
    #[error("domains overlap or touch")]
    NotDisjoint,
    #[error("neck width {width} below the minimum {min}")]
    WidthTooSmall { width: f64, min: f64 },
    #[error("member with width {0} is not lattice-connected")]
    Disconnected(f64),
    #[error("operation requires a planar domain")]
    NotPlanar,
    #[error("operation requires a reinhardt profile")]
    NotReinhardt,
    #[error("empty point selection")]
    EmptySelection,
    #[error("grid file: {0}")]
    Parse(String),
}

pub type GeomResult<T> = Result<T, GeomError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Planar,
    ReinhardtProfile,
}

impl DomainKind {
    fn tag(self) -> &'static str {
        match self {
            DomainKind::Planar => "planar",
            DomainKind::ReinhardtProfile => "reinhardt-profile",
        }
    }
}

/// Uniform lattice. Cell `(i, j)` is centred at `origin + h (i + 1/2, j + 1/2)`;
/// `i` runs over `rows` along the first axis, `j` over `cols` along the second.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice<T> {
    pub origin: [T; 2],
    pub h: T,
    pub rows: usize,
    pub cols: usize,
}

impl<T: Real> Lattice<T> {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx / self.cols, idx % self.cols)
    }

    #[inline]
    pub fn center(&self, idx: usize) -> [T; 2] {
        let (i, j) = self.ij(idx);
        self.center_ij(i, j)
    }

    #[inline]
    pub fn center_ij(&self, i: usize, j: usize) -> [T; 2] {
        let half = T::lit(0.5);
        [
            self.origin[0] + self.h * (T::from_usize(i).unwrap() + half),
            self.origin[1] + self.h * (T::from_usize(j).unwrap() + half),
        ]
    }

    /// Cell whose closed square contains `p`, if it lies in the array.
    pub fn locate(&self, p: [T; 2]) -> Option<usize> {
        let fi = ((p[0] - self.origin[0]) / self.h).floor();
        let fj = ((p[1] - self.origin[1]) / self.h).floor();
        if fi < T::zero() || fj < T::zero() {
            return None;
        }
        let (i, j) = (fi.to_usize()?, fj.to_usize()?);
        (i < self.rows && j < self.cols).then(|| self.index(i, j))
    }

    /// Integer offset of `other`'s origin in units of `h`, if the lattices align.
    fn offset_of(&self, other: &Lattice<T>) -> Option<(i64, i64)> {
        if self.h != other.h {
            return None;
        }
        let mut out = [0i64; 2];
        for k in 0..2 {
            let q = ((other.origin[k] - self.origin[k]) / self.h).as_f64();
            let r = q.round();
            if (q - r).abs() > 1e-6 {
                return None;
            }
            out[k] = r as i64;
        }
        Some((out[0], out[1]))
    }

    pub fn aligned(&self, other: &Lattice<T>) -> bool {
        self.offset_of(other).is_some()
    }

    /// Smallest aligned lattice covering both.
    pub fn cover(&self, other: &Lattice<T>) -> GeomResult<Lattice<T>> {
        let (di, dj) = self.offset_of(other).ok_or(GeomError::MismatchedLattice)?;
        let i0 = di.min(0);
        let j0 = dj.min(0);
        let i1 = (self.rows as i64).max(di + other.rows as i64);
        let j1 = (self.cols as i64).max(dj + other.cols as i64);
        Ok(Lattice {
            origin: [
                self.origin[0] + self.h * T::from_i64(i0).unwrap(),
                self.origin[1] + self.h * T::from_i64(j0).unwrap(),
            ],
            h: self.h,
            rows: (i1 - i0) as usize,
            cols: (j1 - j0) as usize,
        })
    }

    /// Aligned lattice with spacing `h` covering the box `[lo, hi]` plus `pad` cells.
    pub fn covering_box(lo: [f64; 2], hi: [f64; 2], h: f64, pad: i64) -> Lattice<T> {
        let i0 = (lo[0] / h).floor() as i64 - pad;
        let j0 = (lo[1] / h).floor() as i64 - pad;
        let i1 = (hi[0] / h).ceil() as i64 + pad;
        let j1 = (hi[1] / h).ceil() as i64 + pad;
        Lattice {
            origin: [T::lit(i0 as f64 * h), T::lit(j0 as f64 * h)],
            h: T::lit(h),
            rows: (i1 - i0).max(1) as usize,
            cols: (j1 - j0).max(1) as usize,
        }
    }
}

/// Bounded open set as a cell mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDomain<T> {
    pub lattice: Lattice<T>,
    pub mask: Vec<bool>,
    pub kind: DomainKind,
}

impl<T: Real> GridDomain<T> {
    pub fn new(lattice: Lattice<T>, mask: Vec<bool>, kind: DomainKind) -> GeomResult<Self> {
        assert_eq!(mask.len(), lattice.len(), "mask size");
        if !mask.iter().any(|&b| b) {
            return Err(GeomError::EmptyMask);
        }
        if kind == DomainKind::ReinhardtProfile {
            for (idx, _) in mask.iter().enumerate().filter(|(_, b)| **b) {
                let c = lattice.center(idx);
                if c[0] < T::zero() || c[1] < T::zero() {
                    return Err(GeomError::InvalidShape(
                        "reinhardt profile has a cell with negative radius".into(),
                    ));
                }
            }
        }
        Ok(GridDomain {
            lattice,
            mask,
            kind,
        })
    }

    pub fn h(&self) -> T {
        self.lattice.h
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
    }

    pub fn contains(&self, p: [T; 2]) -> bool {
        self.lattice.locate(p).is_some_and(|k| self.mask[k])
    }

    /// Re-embeds the mask into an aligned lattice that covers every true cell.
    pub fn embed(&self, target: &Lattice<T>) -> GeomResult<GridDomain<T>> {
        let (di, dj) = target
            .offset_of(&self.lattice)
            .ok_or(GeomError::MismatchedLattice)?;
        let mut mask = vec![false; target.len()];
        for k in self.cells() {
            let (i, j) = self.lattice.ij(k);
            let (ti, tj) = (i as i64 + di, j as i64 + dj);
            if ti < 0 || tj < 0 || ti >= target.rows as i64 || tj >= target.cols as i64 {
                return Err(GeomError::InvalidShape(
                    "target lattice does not cover the domain".into(),
                ));
            }
            mask[target.index(ti as usize, tj as usize)] = true;
        }
        Ok(GridDomain {
            lattice: target.clone(),
            mask,
            kind: self.kind,
        })
    }

    fn binary(
        &self,
        other: &GridDomain<T>,
        op: impl Fn(bool, bool) -> bool,
    ) -> GeomResult<(Lattice<T>, Vec<bool>)> {
        if self.kind != other.kind {
            return Err(GeomError::MismatchedLattice);
        }
        let lat = self.lattice.cover(&other.lattice)?;
        let a = self.embed(&lat)?;
        let b = other.embed(&lat)?;
        let mask = a.mask.iter().zip(&b.mask).map(|(&x, &y)| op(x, y)).collect();
        Ok((lat, mask))
    }

    pub fn union(&self, other: &GridDomain<T>) -> GeomResult<GridDomain<T>> {
        let (lat, mask) = self.binary(other, |a, b| a || b)?;
        GridDomain::new(lat, mask, self.kind)
    }

    pub fn difference(&self, other: &GridDomain<T>) -> GeomResult<GridDomain<T>> {
        let (lat, mask) = self.binary(other, |a, b| a && !b)?;
        GridDomain::new(lat, mask, self.kind)
    }

    /// True when the two masks share no cell.
    pub fn disjoint(&self, other: &GridDomain<T>) -> GeomResult<bool> {
        let (_, mask) = self.binary(other, |a, b| a && b)?;
        Ok(!mask.iter().any(|&b| b))
    }

    /// 4-connected component labels (0 outside, 1.. inside, numbered by first cell).
    pub fn components(&self) -> Components {
        let lat = &self.lattice;
        let mut labels = vec![0u32; lat.len()];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..lat.len() {
            if !self.mask[start] || labels[start] != 0 {
                continue;
            }
            count += 1;
            labels[start] = count;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = lat.ij(k);
                let mut visit = |ni: usize, nj: usize| {
                    let n = lat.index(ni, nj);
                    if self.mask[n] && labels[n] == 0 {
                        labels[n] = count;
                        stack.push(n);
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < lat.rows {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < lat.cols {
                    visit(i, j + 1);
                }
            }
        }
        Components { labels, count }
    }

    /// Mask of true cells that have a false 4-neighbour. Outside the array counts
    /// as false, except across a coordinate axis of a reinhardt profile, where
    /// the mirrored cell is the cell itself.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let lat = &self.lattice;
        let axis = self.axis_sides();
        let mut out = vec![false; lat.len()];
        for k in self.cells() {
            let (i, j) = lat.ij(k);
            let low_i = if i == 0 { axis[0] } else { self.mask[k - lat.cols] };
            let high_i = i + 1 < lat.rows && self.mask[k + lat.cols];
            let low_j = if j == 0 { axis[1] } else { self.mask[k - 1] };
            let high_j = j + 1 < lat.cols && self.mask[k + 1];
            out[k] = !(low_i && high_i && low_j && high_j);
        }
        out
    }

    /// Whether the low edge of each axis is a coordinate axis (r = 0) of a profile.
    fn axis_sides(&self) -> [bool; 2] {
        if self.kind != DomainKind::ReinhardtProfile {
            return [false, false];
        }
        let tol = self.lattice.h * T::lit(1e-6);
        [
            self.lattice.origin[0].abs() <= tol,
            self.lattice.origin[1].abs() <= tol,
        ]
    }

    /// Volume element of one cell (h² planar, (2π)² r₁ r₂ h² for profiles).
    pub fn cell_volume(&self, idx: usize) -> T {
        let h2 = self.lattice.h * self.lattice.h;
        match self.kind {
            DomainKind::Planar => h2,
            DomainKind::ReinhardtProfile => {
                let c = self.lattice.center(idx);
                let tau = T::TAU();
                tau * tau * c[0] * c[1] * h2
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    pub labels: Vec<u32>,
    pub count: u32,
}

/// Shape description used to rasterize domains (also the config-file format).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeSpec {
    Disc {
        center: [f64; 2],
        radius: f64,
    },
    Annulus {
        center: [f64; 2],
        inner: f64,
        outer: f64,
    },
    Rectangle {
        min: [f64; 2],
        max: [f64; 2],
    },
    /// Closed tube of the given width around a segment.
    Tube {
        a: [f64; 2],
        b: [f64; 2],
        width: f64,
    },
    Union {
        parts: Vec<ShapeSpec>,
    },
    Difference {
        a: Box<ShapeSpec>,
        b: Box<ShapeSpec>,
    },
    ReinhardtProfile {
        region: Box<ShapeSpec>,
    },
}

impl ShapeSpec {
    pub fn disc(center: [f64; 2], radius: f64) -> Self {
        ShapeSpec::Disc { center, radius }
    }

    pub fn annulus(center: [f64; 2], inner: f64, outer: f64) -> Self {
        ShapeSpec::Annulus {
            center,
            inner,
            outer,
        }
    }

    pub fn rectangle(min: [f64; 2], max: [f64; 2]) -> Self {
        ShapeSpec::Rectangle { min, max }
    }

    pub fn validate(&self) -> GeomResult<()> {
        let bad = |m: &str| Err(GeomError::InvalidShape(m.into()));
        match self {
            ShapeSpec::Disc { radius, .. } if !(*radius > 0.0) => bad("disc radius must be positive"),
            ShapeSpec::Annulus { inner, outer, .. } if !(*inner > 0.0 && inner < outer) => {
                bad("annulus needs 0 < inner < outer")
            }
            ShapeSpec::Rectangle { min, max } if !(min[0] < max[0] && min[1] < max[1]) => {
                bad("rectangle corners out of order")
            }
            ShapeSpec::Tube { width, .. } if !(*width > 0.0) => bad("tube width must be positive"),
            ShapeSpec::Union { parts } => {
                if parts.is_empty() {
                    return bad("empty union");
                }
                parts.iter().try_for_each(|p| p.validate())
            }
            ShapeSpec::Difference { a, b } => {
                a.validate()?;
                b.validate()
            }
            ShapeSpec::ReinhardtProfile { region } => {
                if matches!(**region, ShapeSpec::ReinhardtProfile { .. }) {
                    return bad("nested reinhardt profile");
                }
                region.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> DomainKind {
        match self {
            ShapeSpec::ReinhardtProfile { .. } => DomainKind::ReinhardtProfile,
            _ => DomainKind::Planar,
        }
    }

    /// Membership of a point (open shapes, closed tubes).
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            ShapeSpec::Disc { center, radius } => dist(p, *center) < *radius,
            ShapeSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(p, *center);
                *inner < r && r < *outer
            }
            ShapeSpec::Rectangle { min, max } => {
                min[0] < p[0] && p[0] < max[0] && min[1] < p[1] && p[1] < max[1]
            }
            ShapeSpec::Tube { a, b, width } => segment_distance(p, *a, *b) <= 0.5 * width,
            ShapeSpec::Union { parts } => parts.iter().any(|s| s.contains(p)),
            ShapeSpec::Difference { a, b } => a.contains(p) && !b.contains(p),
            ShapeSpec::ReinhardtProfile { region } => {
                p[0] >= 0.0 && p[1] >= 0.0 && region.contains(p)
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            ShapeSpec::Disc { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            ShapeSpec::Annulus { center, outer, .. } => (
                [center[0] - outer, center[1] - outer],
                [center[0] + outer, center[1] + outer],
            ),
            ShapeSpec::Rectangle { min, max } => (*min, *max),
            ShapeSpec::Tube { a, b, width } => {
                let r = 0.5 * width;
                (
                    [a[0].min(b[0]) - r, a[1].min(b[1]) - r],
                    [a[0].max(b[0]) + r, a[1].max(b[1]) + r],
                )
            }
            ShapeSpec::Union { parts } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for s in parts {
                    let (l, u) = s.bounds();
                    for k in 0..2 {
                        lo[k] = lo[k].min(l[k]);
                        hi[k] = hi[k].max(u[k]);
                    }
                }
                (lo, hi)
            }
            ShapeSpec::Difference { a, .. } => a.bounds(),
            ShapeSpec::ReinhardtProfile { region } => {
                let (lo, hi) = region.bounds();
                ([lo[0].max(0.0), lo[1].max(0.0)], hi)
            }
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

/// Rasterizes `shape` at spacing `h` on the aligned lattice covering its bounds.
pub fn make_domain<T: Real>(shape: &ShapeSpec, h: f64) -> GeomResult<GridDomain<T>> {
    if !(h > 0.0) {
        return Err(GeomError::InvalidShape("spacing must be positive".into()));
    }
    shape.validate()?;
    let (lo, hi) = shape.bounds();
    let mut lat = Lattice::<T>::covering_box(lo, hi, h, 2);
    if shape.kind() == DomainKind::ReinhardtProfile {
        // profiles start at the coordinate axes
        for k in 0..2 {
            if lat.origin[k] < T::zero() {
                let shift = (-lat.origin[k] / lat.h).round().to_usize().unwrap();
                lat.origin[k] = T::zero();
                if k == 0 {
                    lat.rows -= shift.min(lat.rows - 1);
                } else {
                    lat.cols -= shift.min(lat.cols - 1);
                }
            }
        }
    }
    make_domain_on(shape, &lat)
}

/// Rasterizes `shape` on a given lattice.
pub fn make_domain_on<T: Real>(shape: &ShapeSpec, lat: &Lattice<T>) -> GeomResult<GridDomain<T>> {
    shape.validate()?;
    let mask = (0..lat.len())
        .map(|k| {
            let c = lat.center(k);
            shape.contains([c[0].as_f64(), c[1].as_f64()])
        })
        .collect();
    GridDomain::new(lat.clone(), mask, shape.kind())
}

/// Sampled distance to the complement on the lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField<T> {
    pub lattice: Lattice<T>,
    pub values: Vec<T>,
}

impl<T: Real> DistanceField<T> {
    pub fn at(&self, idx: usize) -> T {
        self.values[idx]
    }

    /// Value at the cell containing `p`, zero off the array.
    pub fn sample(&self, p: [T; 2]) -> T {
        self.lattice.locate(p).map_or(T::zero(), |k| self.values[k])
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v))
    }
}

const FAR: f64 = 1e30;

/// Exact squared distance transform (in cell units) of the zero set of `f`,
/// separable lower-envelope algorithm. `f` holds 0 at sites and `FAR` elsewhere.
fn edt_squared(f: &mut [f64], rows: usize, cols: usize) {
    let mut buf = vec![0.0; rows.max(cols)];
    let mut out = vec![0.0; rows.max(cols)];
    let mut v = vec![0usize; rows.max(cols)];
    let mut z = vec![0.0; rows.max(cols) + 1];
    for i in 0..rows {
        buf[..cols].copy_from_slice(&f[i * cols..(i + 1) * cols]);
        envelope(&buf[..cols], &mut out[..cols], &mut v, &mut z);
        f[i * cols..(i + 1) * cols].copy_from_slice(&out[..cols]);
    }
    for j in 0..cols {
        for i in 0..rows {
            buf[i] = f[i * cols + j];
        }
        envelope(&buf[..rows], &mut out[..rows], &mut v, &mut z);
        for i in 0..rows {
            f[i * cols + j] = out[i];
        }
    }
}

fn envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut any = false;
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        if !any {
            any = true;
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !any {
        d.fill(FAR);
        return;
    }
    let mut k = 0usize;
    for q in 0..n {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        d[q] = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Distance from every cell centre of `lat` to the nearest site cell centre,
/// with optional rings of virtual site cells just outside each side
/// (`[low_i, high_i, low_j, high_j]`).
fn site_distance<T: Real>(lat: &Lattice<T>, site: &[bool], pad: [bool; 4]) -> Vec<T> {
    let p = [pad[0] as usize, pad[1] as usize, pad[2] as usize, pad[3] as usize];
    let rows = lat.rows + p[0] + p[1];
    let cols = lat.cols + p[2] + p[3];
    let mut f = vec![FAR; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let inside_i = i >= p[0] && i < p[0] + lat.rows;
            let inside_j = j >= p[2] && j < p[2] + lat.cols;
            let is_site = if inside_i && inside_j {
                site[lat.index(i - p[0], j - p[2])]
            } else {
                true
            };
            if is_site {
                f[i * cols + j] = 0.0;
            }
        }
    }
    edt_squared(&mut f, rows, cols);
    let h = lat.h;
    let mut out = Vec::with_capacity(lat.len());
    for i in 0..lat.rows {
        for j in 0..lat.cols {
            let d2 = f[(i + p[0]) * cols + j + p[2]];
            out.push(if d2 >= FAR { T::infinity() } else { h * T::lit(d2.sqrt()) });
        }
    }
    out
}

/// Exact Euclidean distance from each cell centre to the nearest complement cell centre.
pub fn distance_field<T: Real>(u: &GridDomain<T>) -> DistanceField<T> {
    let axis = u.axis_sides();
    // virtual complement cells beyond the array, except across coordinate axes
    let pad = [!axis[0], true, !axis[1], true];
    let complement: Vec<bool> = u.mask.iter().map(|&b| !b).collect();
    let values = site_distance(&u.lattice, &complement, pad);
    DistanceField {
        lattice: u.lattice.clone(),
        values,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Closure,
    Boundary,
}

/// Discretized closure and boundary of a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    pub points: Vec<[T; 2]>,
    /// `true` when the point is a boundary cell (every point is a closure cell).
    pub boundary: Vec<bool>,
}

impl<T: Real> PointSet<T> {
    pub fn select(&self, sel: Selection) -> Vec<[T; 2]> {
        match sel {
            Selection::Closure => self.points.clone(),
            Selection::Boundary => self
                .points
                .iter()
                .zip(&self.boundary)
                .filter_map(|(p, &b)| b.then_some(*p))
                .collect(),
        }
    }
}

pub fn extract_sets<T: Real>(u: &GridDomain<T>) -> PointSet<T> {
    let bmask = u.boundary_mask();
    let mut points = Vec::new();
    let mut boundary = Vec::new();
    for k in u.cells() {
        points.push(u.lattice.center(k));
        boundary.push(bmask[k]);
    }
    PointSet { points, boundary }
}

/// Exact Hausdorff distance between finite point sets.
pub fn hausdorff<T: Real>(a: &[[T; 2]], b: &[[T; 2]]) -> GeomResult<T> {
    if a.is_empty() || b.is_empty() {
        return Err(GeomError::EmptySelection);
    }
    Ok(directed(a, b).max(directed(b, a)))
}

/// `sup_{p in a} dist(p, b)` using an x-sorted sweep with pruning.
fn directed<T: Real>(a: &[[T; 2]], b: &[[T; 2]]) -> T {
    let mut sorted: Vec<[T; 2]> = b.to_vec();
    sorted.sort_by(|p, q| p[0].partial_cmp(&q[0]).unwrap().then(p[1].partial_cmp(&q[1]).unwrap()));
    let mut worst = T::zero();
    for p in a {
        let start = sorted.partition_point(|q| q[0] < p[0]);
        let mut best2 = T::infinity();
        let mut scan = |q: &[T; 2]| -> bool {
            let dx = q[0] - p[0];
            if dx * dx >= best2 {
                return false;
            }
            let dy = q[1] - p[1];
            best2 = best2.min(dx * dx + dy * dy);
            true
        };
        for q in &sorted[start..] {
            if !scan(q) {
                break;
            }
        }
        for q in sorted[..start].iter().rev() {
            if !scan(q) {
                break;
            }
        }
        worst = worst.max(best2.sqrt());
        // no early exit on worst: the sup needs every point
    }
    worst
}

/// Hausdorff distance between two cell-centre sets on one lattice (via transforms).
fn lattice_hausdorff<T: Real>(lat: &Lattice<T>, a: &[bool], b: &[bool]) -> GeomResult<T> {
    if !a.iter().any(|&x| x) || !b.iter().any(|&x| x) {
        return Err(GeomError::EmptySelection);
    }
    let none = [false; 4];
    let db = site_distance(lat, b, none);
    let da = site_distance(lat, a, none);
    let mut m = T::zero();
    for k in 0..lat.len() {
        if a[k] {
            m = m.max(db[k]);
        }
        if b[k] {
            m = m.max(da[k]);
        }
    }
    Ok(m)
}

fn common<T: Real>(u: &GridDomain<T>, v: &GridDomain<T>) -> GeomResult<(GridDomain<T>, GridDomain<T>)> {
    if u.kind != v.kind {
        return Err(GeomError::MismatchedLattice);
    }
    let lat = u.lattice.cover(&v.lattice)?;
    Ok((u.embed(&lat)?, v.embed(&lat)?))
}

/// Hausdorff distance of closures plus Hausdorff distance of boundaries.
pub fn rho1<T: Real>(u: &GridDomain<T>, v: &GridDomain<T>) -> GeomResult<T> {
    rho1_parts(u, v).map(|(c, b)| c + b)
}

/// `(closures, boundaries)` terms of `rho1`.
pub fn rho1_parts<T: Real>(u: &GridDomain<T>, v: &GridDomain<T>) -> GeomResult<(T, T)> {
    let (a, b) = common(u, v)?;
    let closures = lattice_hausdorff(&a.lattice, &a.mask, &b.mask)?;
    let boundaries = lattice_hausdorff(&a.lattice, &a.boundary_mask(), &b.boundary_mask())?;
    Ok((closures, boundaries))
}

/// The two parts of the volume-plus-depth metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rho2Parts<T> {
    pub volume: T,
    pub sup: T,
}

impl<T: Real> Rho2Parts<T> {
    pub fn total(&self) -> T {
        self.volume + self.sup
    }
}

pub fn rho2_parts<T: Real>(u: &GridDomain<T>, v: &GridDomain<T>) -> GeomResult<Rho2Parts<T>> {
    let (a, b) = common(u, v)?;
    let mut vol = Vec::new();
    for k in 0..a.lattice.len() {
        if a.mask[k] != b.mask[k] {
            vol.push(a.cell_volume(k));
        }
    }
    let da = distance_field(&a);
    let db = distance_field(&b);
    let sup = da
        .values
        .iter()
        .zip(&db.values)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()));
    Ok(Rho2Parts {
        volume: pairwise_sum(&vol),
        sup,
    })
}

pub fn rho2<T: Real>(u: &GridDomain<T>, v: &GridDomain<T>) -> GeomResult<T> {
    rho2_parts(u, v).map(|p| p.total())
}

pub fn volume<T: Real>(u: &GridDomain<T>) -> T {
    let parts: Vec<T> = u.cells().map(|k| u.cell_volume(k)).collect();
    pairwise_sum(&parts)
}

/// Deterministic pairwise summation.
pub fn pairwise_sum<T: Real>(x: &[T]) -> T {
    if x.len() <= 16 {
        return x.iter().fold(T::zero(), |s, &v| s + v);
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSequence<T> {
    pub members: Vec<GridDomain<T>>,
    pub params: Vec<T>,
    pub target: GridDomain<T>,
}

/// Members `{d_G > eps_k}` for each depth.
pub fn interior_exhaustion<T: Real>(g: &GridDomain<T>, depths: &[T]) -> GeomResult<DomainSequence<T>> {
    let d = distance_field(g);
    let mut members = Vec::with_capacity(depths.len());
    for &eps in depths {
        if !(eps > g.h()) {
            return Err(GeomError::DepthBelowSpacing {
                depth: eps.as_f64(),
                h: g.h().as_f64(),
            });
        }
        let mask: Vec<bool> = d.values.iter().map(|&v| v > eps).collect();
        let m = GridDomain::new(g.lattice.clone(), mask, g.kind)
            .map_err(|_| GeomError::EmptyExhaustion(eps.as_f64()))?;
        members.push(m);
    }
    Ok(DomainSequence {
        members,
        params: depths.to_vec(),
        target: g.clone(),
    })
}

/// Cells of `lat` whose centres lie within `width / 2` of the segment.
pub fn tube_mask<T: Real>(lat: &Lattice<T>, seg: [[f64; 2]; 2], width: f64) -> Vec<bool> {
    (0..lat.len())
        .map(|k| {
            let c = lat.center(k);
            segment_distance([c[0].as_f64(), c[1].as_f64()], seg[0], seg[1]) <= 0.5 * width
        })
        .collect()
}

/// `G ∪ D ∪ neck_k` for each width, on a lattice covering all pieces.
pub fn barbell_sequence<T: Real>(
    g: &GridDomain<T>,
    d: &GridDomain<T>,
    seg: [[f64; 2]; 2],
    widths: &[T],
) -> GeomResult<DomainSequence<T>> {
    if g.kind != DomainKind::Planar || d.kind != DomainKind::Planar {
        return Err(GeomError::NotPlanar);
    }
    let target = g.union(d)?;
    if target.components().count != g.components().count + d.components().count {
        return Err(GeomError::NotDisjoint);
    }
    let h = g.h().as_f64();
    let wmax = widths.iter().fold(0.0f64, |m, w| m.max(w.as_f64()));
    let tube_box = Lattice::<T>::covering_box(
        [seg[0][0].min(seg[1][0]) - wmax, seg[0][1].min(seg[1][1]) - wmax],
        [seg[0][0].max(seg[1][0]) + wmax, seg[0][1].max(seg[1][1]) + wmax],
        h,
        2,
    );
    let lat = target.lattice.cover(&tube_box)?;
    let target = target.embed(&lat)?;
    let mut members = Vec::with_capacity(widths.len());
    for &w in widths {
        let wf = w.as_f64();
        if wf < 3.0 * h * (1.0 - 1e-9) {
            return Err(GeomError::WidthTooSmall {
                width: wf,
                min: 3.0 * h,
            });
        }
        let tube = tube_mask(&lat, seg, wf);
        let mask = target.mask.iter().zip(&tube).map(|(&a, &b)| a || b).collect();
        let m = GridDomain::new(lat.clone(), mask, DomainKind::Planar)?;
        if m.components().count != 1 {
            return Err(GeomError::Disconnected(wf));
        }
        members.push(m);
    }
    Ok(DomainSequence {
        members,
        params: widths.to_vec(),
        target,
    })
}

/// Logarithmic convexity of a reinhardt profile, with completeness along axes,
/// both up to a tolerance of two cells.
pub fn is_logconvex_profile<T: Real>(u: &GridDomain<T>) -> GeomResult<bool> {
    if u.kind != DomainKind::ReinhardtProfile {
        return Err(GeomError::NotReinhardt);
    }
    let lat = &u.lattice;
    let h = lat.h.as_f64();
    let tol = 2.0 * h;
    let near = site_distance(lat, &u.mask, [false; 4]);
    let close = |p: [f64; 2]| -> bool {
        match lat.locate([T::lit(p[0]), T::lit(p[1])]) {
            Some(k) => near[k].as_f64() <= tol,
            None => {
                // off the array: accept only within tolerance of the array edge
                let lo = [lat.origin[0].as_f64(), lat.origin[1].as_f64()];
                let hi = [lo[0] + h * lat.rows as f64, lo[1] + h * lat.cols as f64];
                let dx = (lo[0] - p[0]).max(p[0] - hi[0]).max(0.0);
                let dy = (lo[1] - p[1]).max(p[1] - hi[1]).max(0.0);
                dx.hypot(dy) <= tol && {
                    let q = [p[0].clamp(lo[0], hi[0] - 1e-12), p[1].clamp(lo[1], hi[1] - 1e-12)];
                    lat.locate([T::lit(q[0]), T::lit(q[1])])
                        .is_some_and(|k| near[k].as_f64() + dx.hypot(dy) <= tol)
                }
            }
        }
    };
    let centers: Vec<[f64; 2]> = u
        .cells()
        .map(|k| {
            let c = lat.center(k);
            [c[0].as_f64(), c[1].as_f64()]
        })
        .collect();
    // completeness: touching an axis forces the segment down to that axis
    let touches = [
        centers.iter().any(|c| c[0] < h),
        centers.iter().any(|c| c[1] < h),
    ];
    for c in &centers {
        for axis in 0..2 {
            if !touches[axis] {
                continue;
            }
            let steps = (c[axis] / h).ceil() as usize;
            for s in 0..steps {
                let mut p = *c;
                p[axis] = h * (s as f64 + 0.5);
                if !close(p) {
                    return Ok(false);
                }
            }
        }
    }
    // convexity of the log image, tested along segments between boundary cells
    let bmask = u.boundary_mask();
    let mut edge: Vec<[f64; 2]> = u
        .cells()
        .filter(|&k| bmask[k])
        .map(|k| {
            let c = lat.center(k);
            [c[0].as_f64(), c[1].as_f64()]
        })
        .collect();
    let cap = 400;
    if edge.len() > cap {
        let stride = edge.len().div_ceil(cap);
        edge = edge.into_iter().step_by(stride).collect();
    }
    for (a_i, a) in edge.iter().enumerate() {
        let la = [a[0].ln(), a[1].ln()];
        for b in &edge[a_i + 1..] {
            let lb = [b[0].ln(), b[1].ln()];
            let chord = dist(*a, *b) + (la[0] - lb[0]).abs().max((la[1] - lb[1]).abs()) * h;
            let n = ((4.0 * chord / h).ceil() as usize + 8).min(600);
            for s in 1..n {
                let t = s as f64 / n as f64;
                let p = [
                    (la[0] + t * (lb[0] - la[0])).exp(),
                    (la[1] + t * (lb[1] - la[1])).exp(),
                ];
                if !close(p) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Serializes to the run-length grid format: a header line
/// `grid v1 <h> <origin-x> <origin-y> <rows> <cols> <kind>` followed by one line
/// per row of alternating run lengths, starting with a (possibly empty) false run.
pub fn write_grid<T: Real>(u: &GridDomain<T>) -> String {
    let lat = &u.lattice;
    let mut s = format!(
        "grid v1 {:e} {:e} {:e} {} {} {}\n",
        lat.h.as_f64(),
        lat.origin[0].as_f64(),
        lat.origin[1].as_f64(),
        lat.rows,
        lat.cols,
        u.kind.tag()
    );
    for i in 0..lat.rows {
        let row = &u.mask[i * lat.cols..(i + 1) * lat.cols];
        let mut cur = false;
        let mut run = 0usize;
        let mut first = true;
        for &b in row {
            if b == cur {
                run += 1;
            } else {
                if !first {
                    s.push(' ');
                }
                let _ = write!(s, "{run}");
                first = false;
                cur = b;
                run = 1;
            }
        }
        if !first {
            s.push(' ');
        }
        let _ = write!(s, "{run}");
        s.push('\n');
    }
    s
}

pub fn read_grid<T: Real>(text: &str) -> GeomResult<GridDomain<T>> {
    let perr = |m: &str| GeomError::Parse(m.to_string());
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| perr("missing header"))?
        .split_whitespace()
        .collect();
    if header.len() != 8 || header[0] != "grid" || header[1] != "v1" {
        return Err(perr("bad header"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| perr("bad number"));
    let int = |s: &str| s.parse::<usize>().map_err(|_| perr("bad integer"));
    let h = num(header[2])?;
    let origin = [T::lit(num(header[3])?), T::lit(num(header[4])?)];
    let (rows, cols) = (int(header[5])?, int(header[6])?);
    let kind = match header[7] {
        "planar" => DomainKind::Planar,
        "reinhardt-profile" => DomainKind::ReinhardtProfile,
        _ => return Err(perr("unknown kind")),
    };
    if !(h > 0.0) || rows == 0 || cols == 0 {
        return Err(perr("degenerate lattice"));
    }
    let mut mask = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = lines.next().ok_or_else(|| perr("missing row"))?;
        let mut cur = false;
        let start = mask.len();
        for tok in line.split_whitespace() {
            let n = int(tok)?;
            mask.extend(std::iter::repeat(cur).take(n));
            cur = !cur;
        }
        if mask.len() - start != cols {
            return Err(perr("row length mismatch"));
        }
    }
    GridDomain::new(
        Lattice {
            origin,
            h: T::lit(h),
            rows,
            cols,
        },
        mask,
        kind,
    )
}
