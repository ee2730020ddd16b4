//! Conversions between Cartesian and hyperspherical coordinates.
//!
//! Angles follow the usual n-sphere convention: `phi_1 .. phi_{n-2}` lie in
//! `[0, pi]` and the last angle `phi_{n-1}` in `[0, 2 pi)`. The canonical
//! representation everywhere in this crate is the vector of angle cosines,
//! `cos phi_k = x_k / |(x_k, .., x_n)|`, so no arccosine is ever needed on
//! the training path.

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum suffix norm accepted by the exact conversion.
pub const SUFFIX_NORM_GUARD: f64 = 1e-6;

/// Stabilizer added under the square root by the batched transform.
pub const DEFAULT_STABILIZER: f64 = 0.001;

/// Slack tolerated on cosines before they are rejected as out of range.
pub const COSINE_SLACK: f64 = 1e-12;

/// Smallest row norm for which a direction is considered defined.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Radius and angle cosines for a batch of vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct HsphCoords<T> {
    /// Euclidean norm of each row.
    pub r: Vec<T>,
    /// `batch x (n-1)`; entry `k` is `cos phi_{k+1}`.
    pub cosines: Tensor<T>,
    /// Whether the last angle lies in `(pi, 2 pi)`, i.e. `x_n < 0`.
    pub last_negative: Vec<bool>,
}

impl<T: Scalar> HsphCoords<T> {
    pub fn batch(&self) -> usize {
        self.r.len()
    }

    /// Dimension of the Cartesian space.
    pub fn dim(&self) -> usize {
        self.cosines.cols() + 1
    }
}

fn require_matrix<T: Scalar>(op: &'static str, x: &Tensor<T>) -> Result<(usize, usize)> {
    if x.shape().len() != 2 {
        return Err(Error::domain(op, format!("expected a batch x n matrix, got shape {:?}", x.shape())));
    }
    let (b, n) = (x.shape()[0], x.shape()[1]);
    if n < 2 {
        return Err(Error::domain(op, format!("need n >= 2, got n = {n}")));
    }
    Ok((b, n))
}

/// Suffix sums of squares, accumulated from the last coordinate.
fn suffix_squares<T: Scalar>(row: &[T], out: &mut Vec<T>) {
    out.clear();
    out.resize(row.len(), T::zero());
    let mut acc = T::zero();
    for (k, &x) in row.iter().enumerate().rev() {
        acc += x * x;
        out[k] = acc;
    }
}

/// Exact Cartesian to hyperspherical conversion.
///
/// Fails on rows where a suffix norm `|(x_k, .., x_n)|`, `k <= n-1`, falls
/// below [`SUFFIX_NORM_GUARD`]: there the remaining angles are undefined
/// (a pole, or the centre when `k = 1`).
pub fn cart_to_hsph_exact<T: Scalar>(x: &Tensor<T>) -> Result<HsphCoords<T>> {
    let (b, n) = require_matrix("cart_to_hsph_exact", x)?;
    let guard = T::lit(SUFFIX_NORM_GUARD);
    let mut r = Vec::with_capacity(b);
    let mut cos = Vec::with_capacity(b * (n - 1));
    let mut last_negative = Vec::with_capacity(b);
    let mut suffix = Vec::with_capacity(n);
    for (i, row) in x.iter_rows().enumerate() {
        suffix_squares(row, &mut suffix);
        for k in 0..n - 1 {
            let norm = suffix[k].sqrt();
            if !(norm > guard) {
                return Err(Error::Singularity {
                    row: i,
                    coord: k + 1,
                    norm: norm.to_f64_lossy(),
                });
            }
            cos.push(row[k] / norm);
        }
        r.push(suffix[0].sqrt());
        last_negative.push(row[n - 1] < T::zero());
    }
    Ok(HsphCoords {
        r,
        cosines: Tensor::new([b, n - 1], cos)?,
        last_negative,
    })
}

/// `sqrt(1 - c^2)` evaluated as `sqrt((1 - c)(1 + c))`.
#[inline]
fn sine_from_cosine<T: Scalar>(c: T) -> T {
    ((T::one() - c) * (T::one() + c)).max(T::zero()).sqrt()
}

/// Hyperspherical to Cartesian conversion.
///
/// Sines of `phi_1 .. phi_{n-2}` are taken non-negative; the last one
/// carries the stored sign bit. Cosines within [`COSINE_SLACK`] outside
/// `[-1, 1]` are clamped, anything further is rejected.
pub fn hsph_to_cart<T: Scalar>(c: &HsphCoords<T>) -> Result<Tensor<T>> {
    let b = c.batch();
    let m = c.cosines.cols();
    if c.cosines.rows() != b || c.last_negative.len() != b {
        return Err(Error::Invalid("radius, cosine and sign batches differ".into()));
    }
    let limit = T::one() + T::lit(COSINE_SLACK);
    let n = m + 1;
    let mut out = Vec::with_capacity(b * n);
    for i in 0..b {
        let r = c.r[i];
        if !(r > T::zero()) {
            return Err(Error::domain("hsph_to_cart", format!("row {i}: radius must be positive, got {r}")));
        }
        let mut prod = r;
        for (k, &raw) in c.cosines.row(i).iter().enumerate() {
            if !(raw.abs() <= limit) {
                return Err(Error::domain(
                    "hsph_to_cart",
                    format!("row {i}: cosine {} = {raw} outside [-1, 1]", k + 1),
                ));
            }
            let cv = raw.max(-T::one()).min(T::one());
            out.push(prod * cv);
            let mut s = sine_from_cosine(cv);
            if k == m - 1 && c.last_negative[i] {
                s = -s;
            }
            prod *= s;
        }
        out.push(prod);
    }
    Tensor::new([b, n], out)
}

/// Batched, differentiable cosine transform recorded on `tape`.
///
/// Column `k` of the result is `x_k / sqrt(sum_{j >= k} x_j^2 + eps)`; the
/// suffix sums come from a reverse cumulative sum over the squared entries.
/// The last column is dropped, leaving `n - 1` cosines per row. With
/// `eps > 0` this never fails on finite input, including all-zero rows.
pub fn cart_to_cos_on<T: Scalar>(tape: &mut Tape<T>, x: Var, eps: T) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 || shape[1] < 2 {
        return Err(Error::domain("cart_to_cos_batched", format!("need batch x n with n >= 2, got {shape:?}")));
    }
    if eps < T::zero() {
        return Err(Error::domain("cart_to_cos_batched", "stabilizer must be non-negative"));
    }
    let n = shape[1];
    let sq = tape.square(x);
    let suffix = tape.rev_cumsum_cols(sq)?;
    let shifted = tape.add_scalar(suffix, eps);
    let denom = tape.sqrt(shifted)?;
    let cos = tape.div(x, denom)?;
    tape.slice_cols(cos, 0, n - 1)
}

/// Value-only form of [`cart_to_cos_on`].
pub fn cart_to_cos_batched<T: Scalar>(x: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let out = cart_to_cos_on(&mut tape, v, eps)?;
    Ok(tape.tensor(out))
}

/// Row norms recorded on `tape` as a `batch x 1` column.
pub fn row_norms_on<T: Scalar>(tape: &mut Tape<T>, z: Var) -> Result<Var> {
    tape.row_norms(z)
}

/// Rescales every row of `z` to Euclidean norm `target`, keeping direction.
pub fn normalize_to_radius_on<T: Scalar>(tape: &mut Tape<T>, z: Var, target: T) -> Result<Var> {
    if tape.shape(z).len() != 2 {
        return Err(Error::domain("normalize_to_radius", format!("expected a matrix, got {:?}", tape.shape(z))));
    }
    if !(target > T::zero()) {
        return Err(Error::domain("normalize_to_radius", format!("target radius must be positive, got {target}")));
    }
    let norms = row_norms_on(tape, z)?;
    let min = T::lit(MIN_ROW_NORM);
    if let Some(row) = tape.value(norms).iter().position(|&v| !(v > min)) {
        return Err(Error::domain("normalize_to_radius", format!("row {row} is too close to zero to define a direction")));
    }
    let unit = tape.div(z, norms)?;
    Ok(tape.scale(unit, target))
}

/// Value-only form of [`normalize_to_radius_on`].
pub fn normalize_to_radius<T: Scalar>(z: &Tensor<T>, target: T) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let v = tape.constant(z.clone());
    let out = normalize_to_radius_on(&mut tape, v, target)?;
    Ok(tape.tensor(out))
}

/// Logarithm of the hypersphere volume element density
/// `R^{n-1} sin^{n-2}(phi_1) sin^{n-3}(phi_2) .. sin(phi_{n-2})`.
///
/// `cosines` holds `cos phi_1 .. cos phi_{n-1}`; the last angle does not
/// enter the density. Returns negative infinity at a pole.
pub fn log_volume_element<T: Scalar>(radius: T, cosines: &[T]) -> T {
    let n = cosines.len() + 1;
    let mut acc = T::lit((n - 1) as f64) * radius.ln();
    for (k, &c) in cosines.iter().take(n.saturating_sub(2)).enumerate() {
        let weight = T::lit((n - 2 - k) as f64);
        let s = sine_from_cosine(c.max(-T::one()).min(T::one()));
        if s == T::zero() {
            return T::neg_infinity();
        }
        acc += weight * s.ln();
    }
    acc
}

/// Cosines of the all-ones vector in `n` dimensions: `1 / sqrt(n - k + 1)`
/// for `k = 1 .. n-1`.
pub fn all_ones_cosines<T: Scalar>(n: usize) -> Vec<T> {
    (1..n).map(|k| T::one() / T::lit((n - k + 1) as f64).sqrt()).collect()
}

/// Angles `phi_k` recovered from cosines, for diagnostics only.
pub fn angles<T: Scalar>(c: &HsphCoords<T>) -> Tensor<T> {
    let m = c.cosines.cols();
    let two_pi = T::lit(std::f64::consts::TAU);
    let mut t = c.cosines.map(|v| v.max(-T::one()).min(T::one()).acos());
    for i in 0..c.batch() {
        if c.last_negative[i] {
            let row = t.row_mut(i);
            row[m - 1] = two_pi - row[m - 1];
        }
    }
    t
}
