//! Real scalar types usable by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// A real floating-point scalar: `f32` or `f64`.
///
/// Besides the usual float arithmetic, a scalar knows how to run a dense
/// matrix product over row-major buffers. The generic fallback is a plain
/// triple loop; the two primitive floats dispatch to a blocked kernel.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Storage width in bytes, as written to checkpoints.
    const WIDTH: u8;

    /// Short name used in reports (`"f32"` / `"f64"`).
    const NAME: &'static str;

    /// `c = op(a) * op(b) + beta * c` for row-major buffers.
    ///
    /// `op(a)` is `m x k`, `op(b)` is `k x n` and `c` is `m x n`. When
    /// `trans_a` is set, `a` is stored as `k x m`; likewise for `b`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    ) {
        check_gemm_lens(m, k, n, a.len(), b.len(), c.len());
        let (rsa, csa) = strides(trans_a, k, m);
        let (rsb, csb) = strides(trans_b, n, k);
        for i in 0..m {
            for j in 0..n {
                let mut acc = Self::zero();
                for p in 0..k {
                    acc += a[i * rsa + p * csa] * b[p * rsb + j * csb];
                }
                let out = &mut c[i * n + j];
                *out = if beta == Self::zero() { acc } else { acc + beta * *out };
            }
        }
    }

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every Scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_gemm_lens(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert_eq!(a, m * k, "gemm: lhs buffer length");
    assert_eq!(b, k * n, "gemm: rhs buffer length");
    assert_eq!(c, m * n, "gemm: output buffer length");
}

/// Row and column strides of a logical matrix whose untransposed storage
/// has `cols` columns (`other` is the logical row count when transposed).
fn strides(trans: bool, cols: usize, other: usize) -> (usize, usize) {
    if trans {
        (1, other)
    } else {
        (cols, 1)
    }
}

macro_rules! blocked_gemm {
    ($t:ty, $kernel:path) => {
        fn gemm(
            trans_a: bool,
            trans_b: bool,
            m: usize,
            k: usize,
            n: usize,
            a: &[Self],
            b: &[Self],
            beta: Self,
            c: &mut [Self],
        ) {
            check_gemm_lens(m, k, n, a.len(), b.len(), c.len());
            if m == 0 || n == 0 {
                return;
            }
            if k == 0 {
                c.iter_mut().for_each(|x| *x *= beta);
                return;
            }
            let (rsa, csa) = strides(trans_a, k, m);
            let (rsb, csb) = strides(trans_b, n, k);
            // SAFETY: buffer lengths were checked above and every stride
            // pair addresses exactly the logical matrix inside its buffer.
            unsafe {
                $kernel(
                    m,
                    k,
                    n,
                    1.0,
                    a.as_ptr(),
                    rsa as isize,
                    csa as isize,
                    b.as_ptr(),
                    rsb as isize,
                    csb as isize,
                    beta,
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
    };
}

impl Scalar for f32 {
    const WIDTH: u8 = 4;
    const NAME: &'static str = "f32";
    blocked_gemm!(f32, matrixmultiply::sgemm);
}

impl Scalar for f64 {
    const WIDTH: u8 = 8;
    const NAME: &'static str = "f64";
    blocked_gemm!(f64, matrixmultiply::dgemm);
}
