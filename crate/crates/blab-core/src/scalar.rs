//! Scalar abstraction shared by every numerical module.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real floating type the lattice and kernel code is generic over.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// `c <- c + a * b` for strided row/column layouts (BLAS-like).
    #[allow(clippy::too_many_arguments)]
    fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    /// Converts an `f64` literal. Panics only if the type cannot hold finite f64 values.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite real")
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm_acc(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 || k == 0 {
                    return;
                }
                // bounds: the callers pass dense buffers, checked here once
                let last = |r: usize, cc: usize, rs: isize, cs: isize| {
                    (r as isize - 1) * rs + (cc as isize - 1) * cs
                };
                assert!((last(m, k, rsa, csa) as usize) < a.len());
                assert!((last(k, n, rsb, csb) as usize) < b.len());
                assert!((last(m, n, rsc, csc) as usize) < c.len());
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        1.0,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_real!(f64, matrixmultiply::dgemm);
impl_real!(f32, matrixmultiply::sgemm);

pub type C<T> = Complex<T>;

/// Modulus squared without the square root.
#[inline]
pub fn norm2<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// `z^n` for any integer `n` (negative powers invert first).
#[inline]
pub fn cpowi<T: Real>(z: C<T>, n: i32) -> C<T> {
    if n >= 0 {
        upow(z, n as u32)
    } else {
        upow(C::new(T::one(), T::zero()) / z, n.unsigned_abs())
    }
}

#[inline]
fn upow<T: Real>(mut z: C<T>, mut e: u32) -> C<T> {
    let mut acc = C::new(T::one(), T::zero());
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * z;
        }
        z = z * z;
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|x| x as f64).collect(); // 2x3 row-major
        let b: Vec<f64> = (0..12).map(|x| (x as f64) * 0.5).collect(); // 3x4
        let mut c = vec![1.0; 8];
        f64::gemm_acc(2, 3, 4, &a, 3, 1, &b, 4, 1, &mut c, 4, 1);
        for i in 0..2 {
            for j in 0..4 {
                let mut s = 1.0;
                for k in 0..3 {
                    s += a[i * 3 + k] * b[k * 4 + j];
                }
                assert_eq!(c[i * 4 + j], s);
            }
        }
    }

    #[test]
    fn integer_powers() {
        let z = C::new(0.3f64, -0.7);
        let p = cpowi(z, 5);
        let q = z * z * z * z * z;
        assert!((p - q).norm() < 1e-15);
        let r = cpowi(z, -3) * z * z * z;
        assert!((r - C::new(1.0, 0.0)).norm() < 1e-14);
    }
}
