//! Finite-rank Bergman kernels from Gram factors, closed-form reference kernels,
//! and error measurements between them.

use crate::basis::{
    factorize, planar_gram, reinhardt_norms, BasisError, BasisSpec, GramFactor,
    GramMatrix, PlanarBasis, ReinhardtTerm,
};
use crate::geom::{distance_field, DomainKind, GridDomain};
use crate::scalar::{cpowi, Real, C};
use rayon::prelude::*;
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("point ({0}, {1}) is outside the domain")]
    OutsideDomain(f64, f64),
    #[error("series argument |s| = {0} outside the annulus of convergence")]
    OutsideConvergence(f64),
    #[error("invalid closed form: {0}")]
    InvalidFamily(String),
    #[error("component {0} has no basis terms")]
    UncoveredComponent(u32),
    #[error("compact set is empty")]
    EmptyCompact,
    #[error("basis index {0} out of range")]
    BadIndex(usize),
    #[error("extremal solution violates the constraint (relative gap {0})")]
    ConstraintGap(f64),
    #[error("dimension mismatch")]
    Dimension,
}

pub type KernelResult<T> = Result<T, KernelError>;

fn zero<T: Real>() -> C<T> {
    C::new(T::zero(), T::zero())
}

/// Fit of one connected component: its own terms, Gram matrix and factor.
#[derive(Clone, Debug)]
pub struct ComponentFit<T> {
    pub label: u32,
    /// Indices into the model's full basis.
    pub terms: Vec<usize>,
    pub basis: PlanarBasis<T>,
    pub gram: GramMatrix<T>,
    pub factor: GramFactor<T>,
}

/// Finite-rank kernel `K(z, w) = b(w)^H G^{-1} b(z)` per component, with
/// `G_ij = sum b_i conj(b_j) h^2`; zero across components.
#[derive(Clone, Debug)]
pub struct KernelModel<T> {
    pub domain: GridDomain<T>,
    pub labels: Vec<u32>,
    pub basis: PlanarBasis<T>,
    pub parts: Vec<ComponentFit<T>>,
}

/// Component owning each term: the one containing its centre, else the one
/// surrounding the hole that contains it, else the nearest one.
fn assign_terms<T: Real>(basis: &PlanarBasis<T>, u: &GridDomain<T>, labels: &[u32]) -> Vec<u32> {
    let lat = &u.lattice;
    // bounded complement components and the domain component next to each
    let comp = GridDomain {
        lattice: lat.clone(),
        mask: u.mask.iter().map(|&b| !b).collect(),
        kind: u.kind,
    };
    let holes = if comp.mask.iter().any(|&b| b) {
        Some(comp.components())
    } else {
        None
    };
    let mut hole_owner: Vec<Option<u32>> = Vec::new();
    if let Some(h) = &holes {
        hole_owner = vec![None; h.count as usize + 1];
        let mut touches_border = vec![false; h.count as usize + 1];
        for k in 0..lat.len() {
            let l = h.labels[k] as usize;
            if l == 0 {
                continue;
            }
            let (i, j) = lat.ij(k);
            if i == 0 || j == 0 || i + 1 == lat.rows || j + 1 == lat.cols {
                touches_border[l] = true;
            }
            if hole_owner[l].is_none() {
                let nb = [
                    (i > 0).then(|| k - lat.cols),
                    (i + 1 < lat.rows).then(|| k + lat.cols),
                    (j > 0).then(|| k - 1),
                    (j + 1 < lat.cols).then(|| k + 1),
                ];
                for n in nb.into_iter().flatten() {
                    if labels[n] != 0 {
                        hole_owner[l] = Some(labels[n]);
                        break;
                    }
                }
            }
        }
        for (l, t) in touches_border.iter().enumerate() {
            if *t {
                hole_owner[l] = None;
            }
        }
    }
    let mut cache: Vec<(C<T>, u32)> = Vec::new();
    basis
        .terms
        .iter()
        .map(|t| {
            if let Some(&(_, l)) = cache.iter().find(|(c, _)| *c == t.center) {
                return l;
            }
            let l = owner_of(t.center, u, labels, holes.as_ref().map(|h| &h.labels[..]), &hole_owner);
            cache.push((t.center, l));
            l
        })
        .collect()
}

fn owner_of<T: Real>(
    p: C<T>,
    u: &GridDomain<T>,
    labels: &[u32],
    hole_labels: Option<&[u32]>,
    hole_owner: &[Option<u32>],
) -> u32 {
    if let Some(k) = u.lattice.locate([p.re, p.im]) {
        if labels[k] != 0 {
            return labels[k];
        }
        if let Some(hl) = hole_labels {
            if let Some(o) = hole_owner[hl[k] as usize] {
                return o;
            }
        }
    }
    let mut best = (T::infinity(), 0u32);
    for k in u.cells() {
        let c = u.lattice.center(k);
        let d = (C::new(c[0], c[1]) - p).norm();
        if d < best.0 {
            best = (d, labels[k]);
        }
    }
    best.1
}

/// Fits the finite-rank kernel of a planar basis, one Gram block per component.
pub fn fit_kernel<T: Real>(u: &GridDomain<T>, basis: &BasisSpec<T>) -> KernelResult<KernelModel<T>> {
    let BasisSpec::Planar(b) = basis else {
        return Err(KernelError::Basis(BasisError::KindMismatch));
    };
    if b.is_empty() {
        return Err(BasisError::Empty.into());
    }
    b.check_admissible(u)?;
    let comps = u.components();
    let owner = assign_terms(b, u, &comps.labels);
    let mut cells_by: Vec<Vec<usize>> = vec![Vec::new(); comps.count as usize + 1];
    for k in u.cells() {
        cells_by[comps.labels[k] as usize].push(k);
    }
    let mut parts = Vec::new();
    for label in 1..=comps.count {
        let idx: Vec<usize> = (0..b.len()).filter(|&i| owner[i] == label).collect();
        if idx.is_empty() {
            return Err(KernelError::UncoveredComponent(label));
        }
        let sub = b.retain(&idx);
        let gram = planar_gram(&sub, u, &cells_by[label as usize]);
        let keep = gram.significant_terms();
        let (terms, sub, gram) = if keep.len() == idx.len() {
            (idx, sub, gram)
        } else {
            let terms: Vec<usize> = keep.iter().map(|&k| idx[k]).collect();
            (terms, sub.retain(&keep), gram.submatrix(&keep))
        };
        let factor = factorize(&gram)?;
        parts.push(ComponentFit {
            label,
            terms,
            basis: sub,
            gram,
            factor,
        });
    }
    Ok(KernelModel {
        domain: u.clone(),
        labels: comps.labels,
        basis: b.clone(),
        parts,
    })
}

/// `K(·, w)` for fixed `w`: `conj(G^{-1} b(w))` dotted with `b(z)`.
#[derive(Clone, Debug)]
pub struct KernelSlice<'a, T> {
    pub model: &'a KernelModel<T>,
    pub w: C<T>,
    pub label: u32,
    coef: Vec<C<T>>,
    cond: T,
}

impl<'a, T: Real> KernelSlice<'a, T> {
    /// Kernel value, exactly zero when `z` is in another component.
    pub fn value(&self, z: C<T>) -> KernelResult<C<T>> {
        Ok(self.value_with_bound(z)?.0)
    }

    /// Value with an estimate of its floating-point evaluation error.
    ///
    /// The Cholesky solve is backward stable, so the computed coefficients
    /// are those of a Gram matrix perturbed far below quadrature error; the
    /// estimate covers rounding in evaluating the basis and the final sum,
    /// amplified by `cond * eps` for the solve.
    pub fn value_with_bound(&self, z: C<T>) -> KernelResult<(C<T>, T)> {
        let label = self.model.label_at(z)?;
        if label != self.label {
            return Ok((zero(), T::zero()));
        }
        let part = self.model.part(label);
        let b = part.basis.eval(z);
        let mut s = zero();
        let mut mag = T::zero();
        for (c, v) in self.coef.iter().zip(&b) {
            s += *c * *v;
            mag += c.norm() * v.norm();
        }
        let n = T::from_usize(b.len()).unwrap();
        let eps = T::epsilon();
        let bound = mag * eps * (n + T::lit(8.0)) + mag * eps * eps * self.cond;
        Ok((s, bound))
    }
}

impl<T: Real> KernelModel<T> {
    pub fn h(&self) -> T {
        self.domain.h()
    }

    pub fn n_terms(&self) -> usize {
        self.parts.iter().map(|p| p.terms.len()).sum()
    }

    pub fn label_at(&self, z: C<T>) -> KernelResult<u32> {
        match self.domain.lattice.locate([z.re, z.im]) {
            Some(k) if self.labels[k] != 0 => Ok(self.labels[k]),
            _ => Err(KernelError::OutsideDomain(z.re.as_f64(), z.im.as_f64())),
        }
    }

    pub fn part(&self, label: u32) -> &ComponentFit<T> {
        &self.parts[label as usize - 1]
    }

    /// Component label and `L^{-1} b(z)`.
    pub fn features(&self, z: C<T>) -> KernelResult<(u32, Vec<C<T>>)> {
        let label = self.label_at(z)?;
        let part = self.part(label);
        Ok((label, part.factor.forward(&part.basis.eval(z))))
    }

    pub fn eval(&self, z: C<T>, w: C<T>) -> KernelResult<C<T>> {
        let (lz, vz) = self.features(z)?;
        let (lw, vw) = self.features(w)?;
        Ok(pair(lz, &vz, lw, &vw))
    }

    pub fn slice(&self, w: C<T>) -> KernelResult<KernelSlice<'_, T>> {
        let label = self.label_at(w)?;
        let part = self.part(label);
        let y = part.factor.solve(&part.basis.eval(w));
        let cond = if part.gram.cond_estimate.is_finite() {
            part.gram.cond_estimate
        } else {
            part.factor.pivot_condition()
        };
        Ok(KernelSlice {
            model: self,
            w,
            label,
            coef: y.iter().map(|v| v.conj()).collect(),
            cond,
        })
    }

    /// Batch form: `K(z_k, w)` for many `z` with one solve.
    pub fn eval_batch(&self, zs: &[C<T>], w: C<T>) -> KernelResult<Vec<C<T>>> {
        let s = self.slice(w)?;
        zs.par_iter().map(|&z| s.value(z)).collect()
    }
}

fn pair<T: Real>(lz: u32, vz: &[C<T>], lw: u32, vw: &[C<T>]) -> C<T> {
    if lz != lw {
        return zero();
    }
    vz.iter().zip(vw).fold(zero::<T>(), |s, (a, b)| s + b.conj() * *a)
}

/// Maximizer of `f(z)` over the span subject to `f(z) >= ||f||^2`.
#[derive(Clone, Debug)]
pub struct Extremal<T> {
    pub value: T,
    /// Coefficients of the maximizer in the component's basis terms.
    pub coefficients: Vec<C<T>>,
    pub norm_sq: T,
}

pub fn extremal_value<T: Real>(model: &KernelModel<T>, z: C<T>) -> KernelResult<Extremal<T>> {
    let label = model.label_at(z)?;
    let part = model.part(label);
    let beta = part.basis.eval(z);
    // with f = sum conj(d_i) b_i: f(z) = d^H beta and ||f||^2 = d^H G d,
    // so the optimum direction is d = G^{-1} beta
    let d = part.factor.solve(&beta);
    let fz = d.iter().zip(&beta).fold(zero::<T>(), |s, (a, b)| s + a.conj() * *b);
    let gd = part.gram.mul_vec(&d);
    let nrm = d.iter().zip(&gd).fold(zero::<T>(), |s, (a, b)| s + a.conj() * *b);
    let value = fz.re;
    let diff: C<T> = fz - nrm;
    let gap = (diff.norm() / value.abs().max(T::min_positive_value())).as_f64();
    if !(gap <= 1e-8) {
        return Err(KernelError::ConstraintGap(gap));
    }
    Ok(Extremal {
        value,
        coefficients: d.iter().map(|v| v.conj()).collect(),
        norm_sq: nrm.re,
    })
}

/// Deterministic probe cells: lattice cells with both indices divisible by `stride`.
pub fn probe_cells<T: Real>(u: &GridDomain<T>, stride: usize) -> Vec<usize> {
    u.cells()
        .filter(|&k| {
            let (i, j) = u.lattice.ij(k);
            i % stride == 0 && j % stride == 0
        })
        .collect()
}

fn residual_probes<T: Real>(u: &GridDomain<T>) -> Vec<C<T>> {
    let n = u.count();
    let mut stride = 1;
    while n / (stride * stride) > 64 {
        stride += 1;
    }
    probe_cells(u, stride)
        .into_iter()
        .map(|k| {
            let c = u.lattice.center(k);
            C::new(c[0], c[1])
        })
        .collect()
}

/// Reproducing-identity residual of basis term `i` on the model's own quadrature.
pub fn reproducing_residual<T: Real>(model: &KernelModel<T>, i: usize) -> KernelResult<T> {
    reproducing_residual_with(model, i, &model.domain)
}

/// Same residual with the integral taken on another rasterization of the domain.
pub fn reproducing_residual_with<T: Real>(
    model: &KernelModel<T>,
    i: usize,
    quad: &GridDomain<T>,
) -> KernelResult<T> {
    let (part, pos) = model
        .parts
        .iter()
        .find_map(|p| p.terms.iter().position(|&t| t == i).map(|k| (p, k)))
        .ok_or(KernelError::BadIndex(i))?;
    // g_j = int b_i conj(b_j) over the component, on the quadrature lattice
    let cells: Vec<usize> = quad
        .cells()
        .filter(|&k| {
            let c = quad.lattice.center(k);
            model.label_at(C::new(c[0], c[1])).ok() == Some(part.label)
        })
        .collect();
    let n = part.basis.len();
    let g = planar_gram(&part.basis, quad, &cells);
    let row: Vec<C<T>> = (0..n).map(|j| g.get(pos, j)).collect();
    let mut worst = T::zero();
    for z in residual_probes(&model.domain) {
        if model.label_at(z)? != part.label {
            continue;
        }
        let bz = part.basis.eval(z);
        let x = part.factor.solve(&bz);
        // int K(z, w) b_i(w) dV(w) = sum_j g_j (G^{-1} b(z))_j
        let integral = row.iter().zip(&x).fold(zero::<T>(), |s, (a, b)| s + *a * *b);
        let diff: C<T> = integral - bz[pos];
        let r = diff.norm() / (T::one() + bz[pos].norm());
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Truncated Laurent series of the annulus kernel in `s = (z - c) conj(w - c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnulusSeries<T> {
    pub center: C<T>,
    pub inner: T,
    pub outer: T,
    /// Terms with `|n| <= m` are kept.
    pub m: usize,
    // c_n R^(2n) for n = 0..=m, and c_(-k) rho^(-2k) for k = 2..=m
    pos: Vec<T>,
    neg: Vec<T>,
    mid: T,
}

impl<T: Real> AnnulusSeries<T> {
    fn new(center: C<T>, inner: T, outer: T, m: usize) -> Self {
        let (rho, r) = (inner, outer);
        let pi = T::PI();
        let q = rho / r;
        let one = T::one();
        // n >= 0: (n+1) / (pi R^2 (1 - q^(2n+2))) (s/R^2)^n
        let pos = (0..=m)
            .map(|n| {
                let nf = T::from_usize(n).unwrap();
                (nf + one) / (pi * r * r * (one - q.powi(2 * n as i32 + 2)))
            })
            .collect();
        // n = -k, k >= 2: (k-1) / (pi rho^2 (1 - q^(2k-2))) (rho^2/s)^k
        let neg = (0..=m)
            .map(|k| {
                if k < 2 {
                    return T::zero();
                }
                let kf = T::from_usize(k).unwrap();
                (kf - one) / (pi * rho * rho * (one - q.powi(2 * k as i32 - 2)))
            })
            .collect();
        let mid = one / (T::TAU() * (r / rho).ln());
        AnnulusSeries {
            center,
            inner,
            outer,
            m,
            pos,
            neg,
            mid,
        }
    }

    /// Bound on the dropped terms at `|s|`.
    pub fn tail(&self, abs_s: T) -> KernelResult<T> {
        let (rho, r) = (self.inner, self.outer);
        let x = abs_s / (r * r);
        let y = rho * rho / abs_s;
        if !(x < T::one() && y < T::one()) {
            return Err(KernelError::OutsideConvergence(abs_s.as_f64()));
        }
        let q2 = (rho / r).powi(2);
        let mf = T::from_usize(self.m).unwrap();
        let one = T::one();
        let two = one + one;
        let pos = x.powi(self.m as i32 + 1) * ((mf + two) * (one - x) + x) / (one - x).powi(2)
            / (T::PI() * r * r * (one - q2));
        let neg = y.powi(self.m as i32 + 1) * (mf * (one - y) + y) / (one - y).powi(2)
            / (T::PI() * rho * rho * (one - q2));
        Ok(pos + neg)
    }

    /// Series value, Horner-summed from the highest power down.
    pub fn at(&self, s: C<T>) -> KernelResult<C<T>> {
        let (rho, r) = (self.inner, self.outer);
        let abs_s = s.norm();
        if !(abs_s < r * r && abs_s > rho * rho) {
            return Err(KernelError::OutsideConvergence(abs_s.as_f64()));
        }
        let t = s / (r * r);
        let mut pos: C<T> = zero();
        for c in self.pos.iter().rev() {
            pos = pos * t + C::new(*c, T::zero());
        }
        let mid = C::new(self.mid, T::zero()) / s;
        let v = C::new(rho * rho, T::zero()) / s;
        let mut neg: C<T> = zero();
        for c in self.neg[2..].iter().rev() {
            neg = neg * v + C::new(*c, T::zero());
        }
        Ok(pos + mid + neg * v * v)
    }
}

/// Closed-form reference kernels.
#[derive(Clone, Debug, PartialEq)]
pub enum ClosedFormKernel<T> {
    Disc { center: C<T>, radius: T },
    Annulus(AnnulusSeries<T>),
    /// Product of discs.
    Polydisc { centers: Vec<C<T>>, radii: Vec<T> },
    /// Unit ball of complex dimension `n`.
    Ball { n: usize },
    Product(Vec<ClosedFormKernel<T>>),
}

impl<T: Real> ClosedFormKernel<T> {
    pub fn disc(center: C<T>, radius: T) -> Self {
        ClosedFormKernel::Disc { center, radius }
    }

    pub fn annulus(center: C<T>, inner: T, outer: T, m: usize) -> KernelResult<Self> {
        if !(inner > T::zero() && inner < outer) {
            return Err(KernelError::InvalidFamily("annulus needs 0 < inner < outer".into()));
        }
        if m < 8 {
            return Err(KernelError::InvalidFamily("annulus truncation must be at least 8".into()));
        }
        Ok(ClosedFormKernel::Annulus(AnnulusSeries::new(center, inner, outer, m)))
    }

    /// Smallest truncation whose tail bound stays below `tol` for `|s|` in `[smin, smax]`.
    pub fn annulus_for_range(center: C<T>, inner: T, outer: T, smin: T, smax: T, tol: T) -> KernelResult<Self> {
        let mut m = 8;
        loop {
            let k = Self::annulus(center, inner, outer, m)?;
            let worst = k.annulus_tail(smin)?.max(k.annulus_tail(smax)?);
            if worst < tol {
                return Ok(k);
            }
            m += 4;
            if m > 4000 {
                return Err(KernelError::OutsideConvergence(smax.as_f64()));
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ClosedFormKernel::Disc { .. } | ClosedFormKernel::Annulus(_) => 1,
            ClosedFormKernel::Polydisc { centers, .. } => centers.len(),
            ClosedFormKernel::Ball { n } => *n,
            ClosedFormKernel::Product(f) => f.iter().map(|k| k.dim()).sum(),
        }
    }

    /// Bound on the dropped terms of the annulus series at `|s|`; zero for exact families.
    pub fn annulus_tail(&self, abs_s: T) -> KernelResult<T> {
        match self {
            ClosedFormKernel::Annulus(a) => a.tail(abs_s),
            _ => Ok(T::zero()),
        }
    }

    /// Annulus series as a function of `s = (z - c) conj(w - c)`.
    pub fn annulus_series(&self, s: C<T>) -> KernelResult<C<T>> {
        match self {
            ClosedFormKernel::Annulus(a) => a.at(s),
            _ => Err(KernelError::InvalidFamily("not an annulus".into())),
        }
    }

    /// Kernel at points of `C^dim`.
    pub fn eval(&self, z: &[C<T>], w: &[C<T>]) -> KernelResult<C<T>> {
        if z.len() != self.dim() || w.len() != self.dim() {
            return Err(KernelError::Dimension);
        }
        match self {
            ClosedFormKernel::Disc { center, radius } => {
                let s = (z[0] - center) * (w[0] - center).conj();
                let r2 = *radius * *radius;
                if !(s.norm() < r2) {
                    return Err(KernelError::OutsideConvergence(s.norm().as_f64()));
                }
                let d = C::new(r2, T::zero()) - s;
                Ok(C::new(r2, T::zero()) / (d * d * T::PI()))
            }
            ClosedFormKernel::Annulus(a) => a.at((z[0] - a.center) * (w[0] - a.center).conj()),
            ClosedFormKernel::Polydisc { centers, radii } => {
                let mut acc = C::new(T::one(), T::zero());
                for k in 0..centers.len() {
                    acc = acc * Self::disc(centers[k], radii[k]).eval(&z[k..k + 1], &w[k..k + 1])?;
                }
                Ok(acc)
            }
            ClosedFormKernel::Ball { n } => {
                let ip = z.iter().zip(w).fold(zero::<T>(), |s, (a, b)| s + *a * b.conj());
                if !(ip.norm() < T::one()) {
                    return Err(KernelError::OutsideConvergence(ip.norm().as_f64()));
                }
                let fact = (1..=*n).fold(T::one(), |f, k| f * T::from_usize(k).unwrap());
                let d = cpowi(C::new(T::one(), T::zero()) - ip, *n as i32 + 1);
                Ok(C::new(fact / T::PI().powi(*n as i32), T::zero()) / d)
            }
            ClosedFormKernel::Product(fs) => {
                let mut acc = C::new(T::one(), T::zero());
                let mut at = 0;
                for f in fs {
                    let d = f.dim();
                    acc = acc * f.eval(&z[at..at + d], &w[at..at + d])?;
                    at += d;
                }
                Ok(acc)
            }
        }
    }

    /// Planar convenience form.
    pub fn eval1(&self, z: C<T>, w: C<T>) -> KernelResult<C<T>> {
        self.eval(&[z], &[w])
    }

    /// Evaluation error estimate at a planar pair: series tail plus rounding.
    pub fn error_bound1(&self, z: C<T>, w: C<T>) -> KernelResult<T> {
        let v = self.eval1(z, w)?;
        let eps = T::epsilon();
        let tail = match self {
            ClosedFormKernel::Annulus(a) => {
                let s = (z - a.center) * (w - a.center).conj();
                // coefficients are positive, so the series at |s| is the absolute sum
                let abs = a.at(C::new(s.norm(), T::zero()))?.re;
                a.tail(s.norm())? + abs * eps * T::from_usize(4 * a.m + 8).unwrap()
            }
            _ => T::zero(),
        };
        Ok(tail + v.norm() * eps * T::lit(16.0))
    }
}

/// Kernel on a reinhardt profile with the exactly diagonal monomial Gram.
#[derive(Clone, Debug)]
pub struct ReinhardtModel<T> {
    pub profile: GridDomain<T>,
    pub terms: Vec<ReinhardtTerm>,
    pub norms: Vec<T>,
}

pub fn fit_reinhardt<T: Real>(profile: &GridDomain<T>, terms: &[ReinhardtTerm]) -> KernelResult<ReinhardtModel<T>> {
    if profile.kind != DomainKind::ReinhardtProfile {
        return Err(BasisError::KindMismatch.into());
    }
    if terms.is_empty() {
        return Err(BasisError::Empty.into());
    }
    // the Gram is diagonal, so no conditioning-driven pruning: norms may span many decades
    let norms = reinhardt_norms(terms, profile)?;
    let keep: Vec<usize> = (0..terms.len()).filter(|&k| norms[k] > T::zero() && norms[k].is_finite()).collect();
    Ok(ReinhardtModel {
        profile: profile.clone(),
        terms: keep.iter().map(|&k| terms[k]).collect(),
        norms: keep.iter().map(|&k| norms[k]).collect(),
    })
}

impl<T: Real> ReinhardtModel<T> {
    pub fn contains(&self, z: &[C<T>; 2]) -> bool {
        self.profile.contains([z[0].norm(), z[1].norm()])
    }

    pub fn eval(&self, z: &[C<T>; 2], w: &[C<T>; 2]) -> KernelResult<C<T>> {
        for p in [z, w] {
            if !self.contains(p) {
                return Err(KernelError::OutsideDomain(p[0].norm().as_f64(), p[1].norm().as_f64()));
            }
        }
        let s1 = z[0] * w[0].conj();
        let s2 = z[1] * w[1].conj();
        let mut acc = zero();
        for (t, n) in self.terms.iter().zip(&self.norms) {
            acc += cpowi(s1, t.a) * cpowi(s2, t.b) / *n;
        }
        Ok(acc)
    }

    /// Sum of term magnitudes, the rounding scale of `eval`.
    pub fn eval_abs(&self, z: &[C<T>; 2], w: &[C<T>; 2]) -> T {
        let s1 = (z[0] * w[0].conj()).norm();
        let s2 = (z[1] * w[1].conj()).norm();
        let mut acc = T::zero();
        for (t, n) in self.terms.iter().zip(&self.norms) {
            acc += s1.powi(t.a) * s2.powi(t.b) / *n;
        }
        acc
    }
}

/// What a fitted kernel is compared against.
pub enum Reference<'a, T> {
    Model(&'a KernelModel<T>),
    Closed(&'a ClosedFormKernel<T>, &'a GridDomain<T>),
}

impl<T> Clone for Reference<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Reference<'_, T> {}

impl<'a, T: Real> Reference<'a, T> {
    pub fn domain(&self) -> &GridDomain<T> {
        match self {
            Reference::Model(m) => &m.domain,
            Reference::Closed(_, d) => d,
        }
    }
}

/// Largest pair discrepancy and where it occurs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorReport<T> {
    pub max: T,
    pub z: C<T>,
    pub w: C<T>,
    pub probes: usize,
}

/// Stride (per lattice axis) of the probe lattice used for kernel suprema.
pub const PROBE_STRIDE: usize = 4;

/// `max |K_model - K_ref|` over probe pairs in `{d_ref > eps}`.
pub fn kernel_error<T: Real>(model: &KernelModel<T>, reference: Reference<'_, T>, eps: T) -> KernelResult<ErrorReport<T>> {
    let dom = reference.domain();
    let d = distance_field(dom);
    let pts: Vec<C<T>> = probe_cells(dom, PROBE_STRIDE)
        .into_iter()
        .filter(|&k| d.at(k) > eps)
        .map(|k| {
            let c = dom.lattice.center(k);
            C::new(c[0], c[1])
        })
        .collect();
    if pts.is_empty() {
        return Err(KernelError::EmptyCompact);
    }
    let feats: Vec<(u32, Vec<C<T>>)> = pts.par_iter().map(|&z| model.features(z)).collect::<KernelResult<_>>()?;
    let rfeats: Option<Vec<(u32, Vec<C<T>>)>> = match &reference {
        Reference::Model(r) => Some(pts.par_iter().map(|&z| r.features(z)).collect::<KernelResult<_>>()?),
        Reference::Closed(..) => None,
    };
    let rows: Vec<KernelResult<(T, usize)>> = (0..pts.len())
        .into_par_iter()
        .map(|a| {
            let mut best = (T::zero(), a);
            for b in a..pts.len() {
                let k = pair(feats[a].0, &feats[a].1, feats[b].0, &feats[b].1);
                let r = match (&reference, &rfeats) {
                    (_, Some(rf)) => pair(rf[a].0, &rf[a].1, rf[b].0, &rf[b].1),
                    (Reference::Closed(c, _), None) => c.eval1(pts[a], pts[b])?,
                    _ => unreachable!(),
                };
                let e = (k - r).norm();
                if e > best.0 {
                    best = (e, b);
                }
            }
            Ok(best)
        })
        .collect();
    let mut out = ErrorReport {
        max: T::zero(),
        z: pts[0],
        w: pts[0],
        probes: pts.len(),
    };
    for (a, r) in rows.into_iter().enumerate() {
        let (e, b) = r?;
        if e > out.max {
            out.max = e;
            out.z = pts[a];
            out.w = pts[b];
        }
    }
    Ok(out)
}

/// CSV dump of `K(z, w)` for fixed `w`: columns re(z), im(z), re(K), im(K), |K|.
pub fn kernel_field_csv<T: Real>(points: &[C<T>], values: &[C<T>]) -> String {
    let mut s = String::from("re_z,im_z,re_k,im_k,abs_k\n");
    for (z, k) in points.iter().zip(values) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt12(z.re.as_f64()),
            fmt12(z.im.as_f64()),
            fmt12(k.re.as_f64()),
            fmt12(k.im.as_f64()),
            fmt12(k.norm().as_f64())
        );
    }
    s
}

/// Twelve significant digits.
pub fn fmt12(x: f64) -> String {
    format!("{:.11e}", x)
}
