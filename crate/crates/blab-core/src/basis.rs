//! Holomorphic basis families and their L² Gram matrices by midpoint quadrature.

use crate::geom::{DomainKind, GridDomain};
use crate::scalar::{cpowi, norm2, Real, C};
use rayon::prelude::*;
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("term {0} is not square-integrable on the domain")]
    Inadmissible(usize),
    #[error("empty domain or empty basis")]
    Empty,
    #[error("basis family does not match the domain kind")]
    KindMismatch,
    #[error("duplicate term {0}")]
    Duplicate(usize),
    #[error("gram matrix is not positive definite even after regularization")]
    NotPositiveDefinite,
    #[error("basis text: {0}")]
    Parse(String),
}

pub type BasisResult<T> = Result<T, BasisError>;

/// Holomorphic weight `exp(rate (u(z) - u(anchor)))` built from the phase
/// `u(z) = -i Log(-(z - q_plus) / (z - q_minus)) / (2 pi)`.
///
/// `Re u` jumps by one across the segment `[q_minus, q_plus]`, so the weight is
/// near 1 on one side of that segment and near `exp(-|rate|)` on the other.
/// The branch cut consists of the two rays leaving `q_plus` away from `q_minus`
/// and leaving `q_minus` away from `q_plus`; they must avoid the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Localizer<T> {
    pub q_plus: C<T>,
    pub q_minus: C<T>,
    pub rate: T,
    pub anchor: C<T>,
}

impl<T: Real> Localizer<T> {
    pub fn phase(&self, z: C<T>) -> C<T> {
        let r = -(z - self.q_plus) / (z - self.q_minus);
        let l = r.ln();
        C::new(l.im, -l.re) / T::TAU()
    }

    pub fn value(&self, z: C<T>) -> C<T> {
        ((self.phase(z) - self.phase(self.anchor)) * self.rate).exp()
    }

    /// Whether a point lies within `tol` of one of the branch rays.
    fn near_cut(&self, z: C<T>, tol: T) -> bool {
        let ray_dist = |q: C<T>, dir: C<T>| {
            let d = dir / dir.norm();
            let t = ((z - q) * d.conj()).re.max(T::zero());
            (z - (q + d * t)).norm()
        };
        let dir = self.q_plus - self.q_minus;
        ray_dist(self.q_plus, dir) <= tol || ray_dist(self.q_minus, -dir) <= tol
    }
}

/// Planar term `E_l(z)^power * ((z - center) / scale)^exponent`, the weight
/// factor present only when `localizer` is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarTerm<T> {
    pub center: C<T>,
    pub exponent: i32,
    pub scale: T,
    pub localizer: Option<(usize, i32)>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PlanarBasis<T> {
    pub terms: Vec<PlanarTerm<T>>,
    pub localizers: Vec<Localizer<T>>,
}

/// `z1^a z2^b` on a reinhardt profile; negative `a` (or `b`) needs the profile
/// to stay away from the corresponding axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReinhardtTerm {
    pub a: i32,
    pub b: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BasisSpec<T> {
    Planar(PlanarBasis<T>),
    Reinhardt(Vec<ReinhardtTerm>),
}

impl<T: Real> PlanarBasis<T> {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Centred powers `((z - c)/s)^n` for `n` in `lo..=hi`.
    pub fn laurent(center: C<T>, scale: T, lo: i32, hi: i32) -> Self {
        let terms = (lo..=hi)
            .map(|n| PlanarTerm {
                center,
                exponent: n,
                scale,
                localizer: None,
            })
            .collect();
        PlanarBasis {
            terms,
            localizers: Vec::new(),
        }
    }

    /// Concatenation; localizer indices of `other` are shifted.
    pub fn extend(&mut self, other: PlanarBasis<T>) {
        let shift = self.localizers.len();
        self.localizers.extend(other.localizers);
        self.terms.extend(other.terms.into_iter().map(|mut t| {
            if let Some((l, p)) = t.localizer {
                t.localizer = Some((l + shift, p));
            }
            t
        }));
    }

    pub fn retain(&self, keep: &[usize]) -> PlanarBasis<T> {
        PlanarBasis {
            terms: keep.iter().map(|&k| self.terms[k]).collect(),
            localizers: self.localizers.clone(),
        }
    }

    /// Evaluates every term at `z` into `out`.
    pub fn eval_into(&self, z: C<T>, weights: &mut Vec<C<T>>, out: &mut [C<T>]) {
        weights.clear();
        weights.extend(self.localizers.iter().map(|l| l.value(z)));
        for (o, t) in out.iter_mut().zip(&self.terms) {
            let mut v = cpowi((z - t.center) / t.scale, t.exponent);
            if let Some((l, p)) = t.localizer {
                v = v * cpowi(weights[l], p);
            }
            *o = v;
        }
    }

    pub fn eval(&self, z: C<T>) -> Vec<C<T>> {
        let mut out = vec![C::new(T::zero(), T::zero()); self.len()];
        self.eval_into(z, &mut Vec::new(), &mut out);
        out
    }

    fn check_distinct(&self) -> BasisResult<()> {
        for (i, a) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(a) {
                return Err(BasisError::Duplicate(i));
            }
        }
        Ok(())
    }

    /// Negative powers need their centre off the closure; weights need their cuts off it.
    pub fn check_admissible(&self, u: &GridDomain<T>) -> BasisResult<()> {
        if u.kind != DomainKind::Planar {
            return Err(BasisError::KindMismatch);
        }
        self.check_distinct()?;
        let h = u.h();
        let pts: Vec<C<T>> = u
            .cells()
            .map(|k| {
                let c = u.lattice.center(k);
                C::new(c[0], c[1])
            })
            .collect();
        let mut checked_centers: Vec<C<T>> = Vec::new();
        let mut checked_loc: Vec<usize> = Vec::new();
        for (i, t) in self.terms.iter().enumerate() {
            if t.exponent < 0 && !checked_centers.contains(&t.center) {
                let in_square = |p: &C<T>| {
                    let d = *p - t.center;
                    d.re.abs().max(d.im.abs()) <= h * T::lit(0.5 + 1e-9)
                };
                if pts.iter().any(in_square) {
                    return Err(BasisError::Inadmissible(i));
                }
                checked_centers.push(t.center);
            }
            if let Some((l, _)) = t.localizer {
                let loc = self.localizers.get(l).ok_or(BasisError::Inadmissible(i))?;
                if !checked_loc.contains(&l) {
                    if pts.iter().any(|&p| loc.near_cut(p, h * T::lit(0.75))) {
                        return Err(BasisError::Inadmissible(i));
                    }
                    checked_loc.push(l);
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> BasisSpec<T> {
    pub fn len(&self) -> usize {
        match self {
            BasisSpec::Planar(b) => b.len(),
            BasisSpec::Reinhardt(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn retain(&self, keep: &[usize]) -> BasisSpec<T> {
        match self {
            BasisSpec::Planar(b) => BasisSpec::Planar(b.retain(keep)),
            BasisSpec::Reinhardt(t) => BasisSpec::Reinhardt(keep.iter().map(|&k| t[k]).collect()),
        }
    }

    /// Text form: `basis v1 <family> <count> <localizers>`, then one line per
    /// localizer and one per term.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self {
            BasisSpec::Planar(b) => {
                let _ = writeln!(s, "basis v1 planar {} {}", b.terms.len(), b.localizers.len());
                for l in &b.localizers {
                    let _ = writeln!(
                        s,
                        "loc {:e} {:e} {:e} {:e} {:e} {:e} {:e}",
                        l.q_plus.re.as_f64(),
                        l.q_plus.im.as_f64(),
                        l.q_minus.re.as_f64(),
                        l.q_minus.im.as_f64(),
                        l.rate.as_f64(),
                        l.anchor.re.as_f64(),
                        l.anchor.im.as_f64()
                    );
                }
                for t in &b.terms {
                    let _ = write!(
                        s,
                        "term {:e} {:e} {} {:e}",
                        t.center.re.as_f64(),
                        t.center.im.as_f64(),
                        t.exponent,
                        t.scale.as_f64()
                    );
                    if let Some((l, p)) = t.localizer {
                        let _ = write!(s, " {l} {p}");
                    }
                    s.push('\n');
                }
            }
            BasisSpec::Reinhardt(ts) => {
                let _ = writeln!(s, "basis v1 reinhardt {} 0", ts.len());
                for t in ts {
                    let _ = writeln!(s, "term {} {}", t.a, t.b);
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> BasisResult<BasisSpec<T>> {
        let perr = |m: &str| BasisError::Parse(m.into());
        let f = |s: &str| s.parse::<f64>().map(T::lit).map_err(|_| perr("bad number"));
        let i = |s: &str| s.parse::<i64>().map_err(|_| perr("bad integer"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head: Vec<&str> = lines.next().ok_or_else(|| perr("missing header"))?.split_whitespace().collect();
        if head.len() != 5 || head[0] != "basis" || head[1] != "v1" {
            return Err(perr("bad header"));
        }
        let (nt, nl) = (i(head[3])? as usize, i(head[4])? as usize);
        match head[2] {
            "planar" => {
                let mut b = PlanarBasis::default();
                for _ in 0..nl {
                    let w: Vec<&str> = lines.next().ok_or_else(|| perr("missing localizer"))?.split_whitespace().collect();
                    if w.len() != 8 || w[0] != "loc" {
                        return Err(perr("bad localizer line"));
                    }
                    b.localizers.push(Localizer {
                        q_plus: C::new(f(w[1])?, f(w[2])?),
                        q_minus: C::new(f(w[3])?, f(w[4])?),
                        rate: f(w[5])?,
                        anchor: C::new(f(w[6])?, f(w[7])?),
                    });
                }
                for _ in 0..nt {
                    let w: Vec<&str> = lines.next().ok_or_else(|| perr("missing term"))?.split_whitespace().collect();
                    if !(w.len() == 5 || w.len() == 7) || w[0] != "term" {
                        return Err(perr("bad term line"));
                    }
                    let localizer = if w.len() == 7 {
                        let l = i(w[5])? as usize;
                        if l >= nl {
                            return Err(perr("localizer index out of range"));
                        }
                        Some((l, i(w[6])? as i32))
                    } else {
                        None
                    };
                    b.terms.push(PlanarTerm {
                        center: C::new(f(w[1])?, f(w[2])?),
                        exponent: i(w[3])? as i32,
                        scale: f(w[4])?,
                        localizer,
                    });
                }
                Ok(BasisSpec::Planar(b))
            }
            "reinhardt" => {
                let mut ts = Vec::with_capacity(nt);
                for _ in 0..nt {
                    let w: Vec<&str> = lines.next().ok_or_else(|| perr("missing term"))?.split_whitespace().collect();
                    if w.len() != 3 || w[0] != "term" {
                        return Err(perr("bad term line"));
                    }
                    ts.push(ReinhardtTerm {
                        a: i(w[1])? as i32,
                        b: i(w[2])? as i32,
                    });
                }
                Ok(BasisSpec::Reinhardt(ts))
            }
            _ => Err(perr("unknown family")),
        }
    }
}

/// Hermitian Gram matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix<T> {
    pub n: usize,
    pub data: Vec<C<T>>,
    pub cond_estimate: T,
}

impl<T: Real> GramMatrix<T> {
    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.data[i * self.n + j]
    }

    pub fn diag(&self, i: usize) -> T {
        self.data[i * self.n + i].re
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |s, i| s + self.diag(i))
    }

    /// Builds from an upper triangle, mirroring conjugates so symmetry is exact.
    pub fn from_upper(n: usize, mut data: Vec<C<T>>) -> Self {
        for i in 0..n {
            data[i * n + i].im = T::zero();
            for j in 0..i {
                data[i * n + j] = data[j * n + i].conj();
            }
        }
        let mut g = GramMatrix {
            n,
            data,
            cond_estimate: T::infinity(),
        };
        g.cond_estimate = g.estimate_condition();
        g
    }

    pub fn submatrix(&self, keep: &[usize]) -> GramMatrix<T> {
        let n = keep.len();
        let mut data = Vec::with_capacity(n * n);
        for &i in keep {
            for &j in keep {
                data.push(self.get(i, j));
            }
        }
        GramMatrix::from_upper(n, data)
    }

    /// Indices kept by the growth policy (diagonal at least 1e-14 of the largest).
    pub fn significant_terms(&self) -> Vec<usize> {
        let dmax = (0..self.n).fold(T::zero(), |m, i| m.max(self.diag(i)));
        (0..self.n)
            .filter(|&i| self.diag(i) >= T::lit(1e-14) * dmax)
            .collect()
    }

    pub fn mul_vec(&self, x: &[C<T>]) -> Vec<C<T>> {
        (0..self.n)
            .map(|i| {
                (0..self.n).fold(C::new(T::zero(), T::zero()), |s, j| s + self.get(i, j) * x[j])
            })
            .collect()
    }

    /// Ratio of extreme eigenvalues from power and inverse iteration.
    fn estimate_condition(&self) -> T {
        let n = self.n;
        if n == 0 {
            return T::one();
        }
        let Ok(f) = cholesky(self, T::zero()) else {
            return T::infinity();
        };
        let start: Vec<C<T>> = (0..n)
            .map(|k| C::new(T::one() + T::lit(0.1 * ((k * 7 % 11) as f64)), T::zero()))
            .collect();
        let normalize = |v: &mut Vec<C<T>>| {
            let s = v.iter().fold(T::zero(), |a, z| a + norm2(*z)).sqrt();
            v.iter_mut().for_each(|z| *z = *z / s);
            s
        };
        let mut v = start.clone();
        normalize(&mut v);
        let mut hi = T::zero();
        for _ in 0..40 {
            v = self.mul_vec(&v);
            hi = normalize(&mut v);
        }
        let mut v = start;
        normalize(&mut v);
        let mut inv = T::zero();
        for _ in 0..40 {
            v = f.solve(&v);
            inv = normalize(&mut v);
        }
        hi * inv
    }

    /// Plain-text export: `gram v1 <n>` then `n` rows of `re im` pairs.
    pub fn to_text(&self) -> String {
        let mut s = format!("gram v1 {}\n", self.n);
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| {
                    let z = self.get(i, j);
                    format!("{:.17e} {:.17e}", z.re.as_f64(), z.im.as_f64())
                })
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> BasisResult<GramMatrix<T>> {
        let perr = |m: &str| BasisError::Parse(m.into());
        let mut lines = text.lines();
        let head: Vec<&str> = lines.next().ok_or_else(|| perr("missing header"))?.split_whitespace().collect();
        if head.len() != 3 || head[0] != "gram" || head[1] != "v1" {
            return Err(perr("bad header"));
        }
        let n: usize = head[2].parse().map_err(|_| perr("bad size"))?;
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n {
            let vals: Vec<f64> = lines
                .next()
                .ok_or_else(|| perr("missing row"))?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| perr("bad number")))
                .collect::<Result<_, _>>()?;
            if vals.len() != 2 * n {
                return Err(perr("row length"));
            }
            data.extend(vals.chunks(2).map(|p| C::new(T::lit(p[0]), T::lit(p[1]))));
        }
        let mut g = GramMatrix {
            n,
            data,
            cond_estimate: T::infinity(),
        };
        g.cond_estimate = g.estimate_condition();
        Ok(g)
    }
}

const BLOCK: usize = 1024;
const GROUP: usize = 16;

/// Streaming pairwise reduction: partial sums at equal depth are merged in
/// arrival order, so the result depends only on the block sequence.
struct PairwiseStack<T> {
    stack: Vec<(u32, Vec<T>)>,
}

impl<T: Real> PairwiseStack<T> {
    fn new() -> Self {
        PairwiseStack { stack: Vec::new() }
    }

    fn push(&mut self, mut v: Vec<T>) {
        let mut level = 0;
        while let Some((l, _)) = self.stack.last() {
            if *l != level {
                break;
            }
            let (_, top) = self.stack.pop().unwrap();
            for (a, b) in v.iter_mut().zip(top) {
                *a = b + *a;
            }
            level += 1;
        }
        self.stack.push((level, v));
    }

    fn finish(mut self, len: usize) -> Vec<T> {
        let mut acc = match self.stack.pop() {
            Some((_, v)) => v,
            None => return vec![T::zero(); len],
        };
        while let Some((_, v)) = self.stack.pop() {
            for (a, b) in acc.iter_mut().zip(v) {
                *a = b + *a;
            }
        }
        acc
    }
}

/// `[sum b_r b_r^T + b_i b_i^T | sum b_i b_r^T]` over one block of evaluated rows.
fn block_products<T: Real>(n: usize, re: &[T], im: &[T], rows: usize) -> Vec<T> {
    let mut out = vec![T::zero(); 2 * n * n];
    let (sym, cross) = out.split_at_mut(n * n);
    let ni = n as isize;
    T::gemm_acc(n, rows, n, re, 1, ni, re, ni, 1, sym, ni, 1);
    T::gemm_acc(n, rows, n, im, 1, ni, im, ni, 1, sym, ni, 1);
    T::gemm_acc(n, rows, n, im, 1, ni, re, ni, 1, cross, ni, 1);
    out
}

/// Midpoint-rule Gram matrix of a planar basis over the given cells
/// (summed in increasing cell order whatever the input order).
pub fn planar_gram<T: Real>(basis: &PlanarBasis<T>, u: &GridDomain<T>, cells: &[usize]) -> GramMatrix<T> {
    let n = basis.len();
    let mut cells = cells.to_vec();
    cells.sort_unstable();
    let blocks: Vec<&[usize]> = cells.chunks(BLOCK).collect();
    let mut acc = PairwiseStack::new();
    for group in blocks.chunks(GROUP) {
        let parts: Vec<Vec<T>> = group
            .par_iter()
            .map(|blk| {
                let mut re = vec![T::zero(); blk.len() * n];
                let mut im = vec![T::zero(); blk.len() * n];
                let mut vals = vec![C::new(T::zero(), T::zero()); n];
                let mut w = Vec::new();
                for (r, &k) in blk.iter().enumerate() {
                    let c = u.lattice.center(k);
                    basis.eval_into(C::new(c[0], c[1]), &mut w, &mut vals);
                    for (t, v) in vals.iter().enumerate() {
                        re[r * n + t] = v.re;
                        im[r * n + t] = v.im;
                    }
                }
                block_products(n, &re, &im, blk.len())
            })
            .collect();
        for p in parts {
            acc.push(p);
        }
    }
    let raw = acc.finish(2 * n * n);
    let h2 = u.h() * u.h();
    let mut data = vec![C::new(T::zero(), T::zero()); n * n];
    for i in 0..n {
        for j in i..n {
            let re = raw[i * n + j] * h2;
            let im = (raw[n * n + i * n + j] - raw[n * n + j * n + i]) * h2;
            data[i * n + j] = C::new(re, im);
        }
    }
    GramMatrix::from_upper(n, data)
}

/// Squared norms of `z1^a z2^b` over a reinhardt profile (exactly diagonal Gram).
pub fn reinhardt_norms<T: Real>(terms: &[ReinhardtTerm], u: &GridDomain<T>) -> BasisResult<Vec<T>> {
    if u.kind != DomainKind::ReinhardtProfile {
        return Err(BasisError::KindMismatch);
    }
    let h = u.h();
    let min_r = |axis: usize| {
        u.cells()
            .map(|k| u.lattice.center(k)[axis])
            .fold(T::infinity(), |m, r| m.min(r))
    };
    let (r1min, r2min) = (min_r(0), min_r(1));
    let mut seen = std::collections::HashSet::new();
    for (i, t) in terms.iter().enumerate() {
        if !seen.insert(*t) {
            return Err(BasisError::Duplicate(i));
        }
        // integrability of r^(2a+1) near the axis needs a > -1 unless the axis is excluded
        if (t.a < 0 && r1min < h) || (t.b < 0 && r2min < h) {
            return Err(BasisError::Inadmissible(i));
        }
    }
    let centers: Vec<[T; 2]> = u.cells().map(|k| u.lattice.center(k)).collect();
    let scale = T::TAU() * T::TAU() * h * h;
    // per-axis power tables, shared by every term with that exponent
    let table = |axis: usize, exps: Vec<i32>| -> std::collections::HashMap<i32, Vec<T>> {
        exps.into_par_iter()
            .map(|e| (e, centers.iter().map(|c| c[axis].powi(2 * e + 1)).collect()))
            .collect()
    };
    let distinct = |f: fn(&ReinhardtTerm) -> i32| {
        let mut v: Vec<i32> = terms.iter().map(f).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let p1 = table(0, distinct(|t| t.a));
    let p2 = table(1, distinct(|t| t.b));
    Ok(terms
        .par_iter()
        .map(|t| {
            let vals: Vec<T> = p1[&t.a].iter().zip(&p2[&t.b]).map(|(&x, &y)| scale * x * y).collect();
            crate::geom::pairwise_sum(&vals)
        })
        .collect())
}

/// Gram matrix of any basis over the whole domain.
pub fn gram_matrix<T: Real>(basis: &BasisSpec<T>, u: &GridDomain<T>) -> BasisResult<GramMatrix<T>> {
    if basis.is_empty() {
        return Err(BasisError::Empty);
    }
    match basis {
        BasisSpec::Planar(b) => {
            b.check_admissible(u)?;
            let cells: Vec<usize> = u.cells().collect();
            Ok(planar_gram(b, u, &cells))
        }
        BasisSpec::Reinhardt(ts) => {
            let norms = reinhardt_norms(ts, u)?;
            let n = norms.len();
            let mut data = vec![C::new(T::zero(), T::zero()); n * n];
            for (i, v) in norms.into_iter().enumerate() {
                data[i * n + i] = C::new(v, T::zero());
            }
            Ok(GramMatrix::from_upper(n, data))
        }
    }
}

/// Lower-triangular factor `L` with `G + shift I = L L^H`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramFactor<T> {
    pub n: usize,
    pub l: Vec<C<T>>,
    /// Diagonal shift added before a successful retry, if any.
    pub regularization: Option<T>,
}

fn cholesky<T: Real>(g: &GramMatrix<T>, shift: T) -> BasisResult<GramFactor<T>> {
    let n = g.n;
    let mut l = vec![C::new(T::zero(), T::zero()); n * n];
    for j in 0..n {
        let mut d = g.diag(j) + shift;
        for k in 0..j {
            d -= norm2(l[j * n + k]);
        }
        if !(d > T::zero()) {
            return Err(BasisError::NotPositiveDefinite);
        }
        let ljj = d.sqrt();
        l[j * n + j] = C::new(ljj, T::zero());
        for i in j + 1..n {
            let mut s = g.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(GramFactor {
        n,
        l,
        regularization: None,
    })
}

/// Cholesky factorization; on failure retries once with `1e-12 trace / n` on the diagonal.
pub fn factorize<T: Real>(g: &GramMatrix<T>) -> BasisResult<GramFactor<T>> {
    if g.n == 0 {
        return Err(BasisError::Empty);
    }
    match cholesky(g, T::zero()) {
        Ok(f) => Ok(f),
        Err(_) => {
            let shift = T::lit(1e-12) * g.trace() / T::from_usize(g.n).unwrap();
            let mut f = cholesky(g, shift)?;
            f.regularization = Some(shift);
            Ok(f)
        }
    }
}

impl<T: Real> GramFactor<T> {
    /// `L^{-1} b`.
    pub fn forward(&self, b: &[C<T>]) -> Vec<C<T>> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        y
    }

    /// `L^{-H} y`.
    pub fn backward(&self, y: &[C<T>]) -> Vec<C<T>> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i].conj() * x[k];
            }
            x[i] = s / self.l[i * n + i].re;
        }
        x
    }

    pub fn solve(&self, b: &[C<T>]) -> Vec<C<T>> {
        self.backward(&self.forward(b))
    }

    /// Squared ratio of extreme pivots, a cheap lower bound on the condition number.
    pub fn pivot_condition(&self) -> T {
        let n = self.n;
        let (mut lo, mut hi) = (T::infinity(), T::zero());
        for i in 0..n {
            let d = self.l[i * n + i].re;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (hi / lo).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{make_domain, ShapeSpec};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    fn unit_disc(h: f64) -> GridDomain<f64> {
        make_domain(&ShapeSpec::disc([0.0, 0.0], 1.0), h).unwrap()
    }

    /// 1-D midpoint rule for `2 pi int_a^b r^(2n+1) dr`.
    fn radial_moment(n: i32, a: f64, b: f64) -> f64 {
        let m = 200_000;
        let dr = (b - a) / m as f64;
        (0..m)
            .map(|k| {
                let r = a + (k as f64 + 0.5) * dr;
                r.powi(2 * n + 1) * dr
            })
            .sum::<f64>()
            * 2.0
            * PI
    }

    #[test]
    fn constant_on_disc() {
        let d = unit_disc(0.01);
        let g = gram_matrix(&BasisSpec::Planar(PlanarBasis::laurent(c(0.0, 0.0), 1.0, 0, 0)), &d).unwrap();
        assert!((g.diag(0) / PI - 1.0).abs() < 0.02);
    }

    #[test]
    fn monomials_nearly_orthogonal() {
        let d = unit_disc(0.005);
        let g = gram_matrix(&BasisSpec::Planar(PlanarBasis::laurent(c(0.0, 0.0), 1.0, 0, 1)), &d).unwrap();
        assert!(g.get(0, 1).norm() <= 1e-3 * (g.diag(0) * g.diag(1)).sqrt());
        assert!((g.diag(0) - radial_moment(0, 0.0, 1.0)).abs() < 0.01);
        assert!((g.diag(1) - radial_moment(1, 0.0, 1.0)).abs() < 0.01);
    }

    #[test]
    fn laurent_on_annulus() {
        let a = make_domain(&ShapeSpec::annulus([0.0, 0.0], 0.5, 1.0), 0.005).unwrap();
        let g = gram_matrix(&BasisSpec::Planar(PlanarBasis::laurent(c(0.0, 0.0), 1.0, -1, 1)), &a).unwrap();
        for (k, n) in [-1, 0, 1].into_iter().enumerate() {
            let want = radial_moment(n, 0.5, 1.0);
            assert!((g.diag(k) / want - 1.0).abs() < 0.01, "n={n}");
        }
        assert!((radial_moment(-1, 0.5, 1.0) - 2.0 * PI * 2f64.ln()).abs() < 1e-6);
        assert!((radial_moment(1, 0.5, 1.0) - 15.0 * PI / 32.0).abs() < 1e-6);
    }

    #[test]
    fn off_diagonal_decays_with_h() {
        let off = |h: f64| {
            let d = unit_disc(h);
            let g = gram_matrix(&BasisSpec::Planar(PlanarBasis::laurent(c(0.0, 0.0), 1.0, 0, 3)), &d).unwrap();
            let mut m = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        m = m.max(g.get(i, j).norm());
                    }
                }
            }
            m
        };
        // odd cell counts make the lattice symmetric; compare a generic pair of spacings
        let (a, b) = (off(0.013), off(0.0065));
        assert!(b < a || b < 1e-12, "{a} {b}");
    }

    #[test]
    fn negative_power_at_domain_point_rejected() {
        let d = unit_disc(0.02);
        let b = BasisSpec::Planar(PlanarBasis::laurent(c(0.0, 0.0), 1.0, -1, 0));
        assert_eq!(gram_matrix(&b, &d).unwrap_err(), BasisError::Inadmissible(0));
    }

    #[test]
    fn gram_is_hermitian_and_order_independent() {
        let d = make_domain(&ShapeSpec::rectangle([0.0, 0.0], [1.0, 0.6]), 0.01).unwrap();
        let b = PlanarBasis::laurent(c(0.4, 0.3), 0.8, 0, 7);
        let cells: Vec<usize> = d.cells().collect();
        let g1 = planar_gram(&b, &d, &cells);
        let mut rev = cells.clone();
        rev.reverse();
        let g2 = planar_gram(&b, &d, &rev);
        assert_eq!(g1, g2);
        for i in 0..g1.n {
            for j in 0..g1.n {
                assert_eq!(g1.get(i, j), g1.get(j, i).conj());
            }
        }
    }

    #[test]
    fn gram_matches_naive_sum() {
        let d = make_domain(&ShapeSpec::disc([0.2, -0.1], 0.7), 0.02).unwrap();
        let b = PlanarBasis::laurent(c(0.2, -0.1), 0.7, 0, 5);
        let g = gram_matrix(&BasisSpec::Planar(b.clone()), &d).unwrap();
        let mut naive = vec![c(0.0, 0.0); 36];
        for k in d.cells() {
            let p = d.lattice.center(k);
            let v = b.eval(c(p[0], p[1]));
            for i in 0..6 {
                for j in 0..6 {
                    naive[i * 6 + j] += v[i] * v[j].conj() * 0.0004;
                }
            }
        }
        for i in 0..36 {
            assert!((naive[i] - g.data[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn factor_small_cases() {
        let g = GramMatrix::from_upper(1, vec![c(PI, 0.0)]);
        let f = factorize(&g).unwrap();
        assert!((f.l[0].re - PI.sqrt()).abs() < 1e-15);
        let g = GramMatrix::from_upper(3, vec![c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(9.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let f = factorize(&g).unwrap();
        assert_eq!(f.l[0].re, 2.0);
        assert_eq!(f.l[4].re, 3.0);
        assert!((f.l[8].re - 2f64.sqrt()).abs() < 1e-15);
        assert!(f.regularization.is_none());
    }

    #[test]
    fn solve_residual_on_assembled_gram() {
        let d = make_domain(&ShapeSpec::annulus([0.0, 0.0], 0.3, 1.0), 0.01).unwrap();
        let b = PlanarBasis::laurent(c(0.0, 0.0), 1.0, -3, 8);
        let g = gram_matrix(&BasisSpec::Planar(b), &d).unwrap();
        let f = factorize(&g).unwrap();
        let mut e0 = vec![c(0.0, 0.0); g.n];
        e0[0] = c(1.0, 0.0);
        let x = f.solve(&e0);
        let r = g.mul_vec(&x);
        let err: f64 = r.iter().zip(&e0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-8);
    }

    #[test]
    fn singular_gram_is_regularized() {
        let g = GramMatrix::from_upper(2, vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let f = factorize(&g).unwrap();
        assert!(f.regularization.unwrap() > 0.0);
        let bad = GramMatrix::from_upper(2, vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(factorize(&bad).unwrap_err(), BasisError::NotPositiveDefinite);
    }

    #[test]
    fn reinhardt_polydisc_norms() {
        let p = make_domain(
            &ShapeSpec::ReinhardtProfile { region: Box::new(ShapeSpec::rectangle([-1.0, -1.0], [1.0, 1.0])) },
            0.005,
        )
        .unwrap();
        let terms = [ReinhardtTerm { a: 0, b: 0 }, ReinhardtTerm { a: 2, b: 1 }];
        let g = gram_matrix::<f64>(&BasisSpec::Reinhardt(terms.to_vec()), &p).unwrap();
        // int over the unit bidisc of |z1|^(2a) |z2|^(2b) = pi^2 / ((a+1)(b+1))
        assert!((g.diag(0) / (PI * PI) - 1.0).abs() < 1e-3);
        assert!((g.diag(1) / (PI * PI / 6.0) - 1.0).abs() < 1e-3);
        assert_eq!(g.get(0, 1), c(0.0, 0.0));
        let bad = BasisSpec::Reinhardt(vec![ReinhardtTerm { a: -1, b: 0 }]);
        assert_eq!(gram_matrix(&bad, &p).unwrap_err(), BasisError::Inadmissible(0));
    }

    #[test]
    fn localizer_phase_jumps_across_gap() {
        let l = Localizer { q_plus: c(0.0, 0.1), q_minus: c(0.0, -0.1), rate: 1.0, anchor: c(1.0, 0.0) };
        let left = l.phase(c(-1.0, 0.0)).re;
        let right = l.phase(c(1.0, 0.0)).re;
        assert!(((left - right).abs() - 0.87).abs() < 0.1, "{left} {right}");
        assert!((l.value(c(1.0, 0.0)) - c(1.0, 0.0)).norm() < 1e-15);
        // holomorphic: Cauchy-Riemann by finite differences
        let z = c(0.7, 0.4);
        let e = 1e-6;
        let dx = (l.value(z + c(e, 0.0)) - l.value(z - c(e, 0.0))) / (2.0 * e);
        let dy = (l.value(z + c(0.0, e)) - l.value(z - c(0.0, e))) / (2.0 * e);
        assert!((dy - dx * c(0.0, 1.0)).norm() < 1e-6);
    }

    #[test]
    fn text_round_trips() {
        let mut b = PlanarBasis::laurent(c(0.5, -0.25), 2.0, -2, 3);
        b.localizers.push(Localizer { q_plus: c(0.0, 0.1), q_minus: c(0.0, -0.1), rate: 6.0, anchor: c(1.0, 0.0) });
        b.terms[0].localizer = Some((0, 1));
        let spec = BasisSpec::Planar(b);
        assert_eq!(BasisSpec::<f64>::from_text(&spec.to_text()).unwrap(), spec);
        let r = BasisSpec::<f64>::Reinhardt(vec![ReinhardtTerm { a: 1, b: 2 }]);
        assert_eq!(BasisSpec::<f64>::from_text(&r.to_text()).unwrap(), r);
        let g = GramMatrix::from_upper(2, vec![c(2.0, 0.0), c(0.5, -0.25), c(0.5, 0.25), c(1.0, 0.0)]);
        let back = GramMatrix::<f64>::from_text(&g.to_text()).unwrap();
        assert_eq!(back.data, g.data);
    }
}
