use std::ops::Range;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows mapped onto the unit 2-sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereProjection<T> {
    /// `kept x 3`, unit rows.
    pub points: Tensor<T>,
    /// Source row of every output row.
    pub kept: Vec<usize>,
    /// Rows whose group means were all zero.
    pub flagged: Vec<usize>,
}

/// Three consecutive groups: `n / 3`, `n / 3` and the remainder
/// (42, 42, 44 for `n = 128`).
pub fn default_groups(n: usize) -> [Range<usize>; 3] {
    let a = n / 3;
    [0..a, a..2 * a, 2 * a..n]
}

/// Averages each row over three coordinate groups and normalizes the
/// resulting 3-vector.
pub fn project_3sphere<T: Scalar>(latents: &Tensor<T>, groups: &[Range<usize>; 3]) -> Result<SphereProjection<T>> {
    if latents.shape().len() != 2 {
        return Err(Error::domain("project_3sphere", format!("expected a matrix, got {:?}", latents.shape())));
    }
    let n = latents.cols();
    let partition = groups[0].start == 0 && groups[0].end == groups[1].start && groups[1].end == groups[2].start && groups[2].end == n;
    if !partition || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::Invalid(format!("groups {groups:?} do not partition 0..{n} into non-empty ranges")));
    }
    let mut data = Vec::with_capacity(latents.rows() * 3);
    let mut kept = Vec::new();
    let mut flagged = Vec::new();
    for (i, row) in latents.iter_rows().enumerate() {
        let means: Vec<T> = groups
            .iter()
            .map(|g| row[g.clone()].iter().copied().sum::<T>() / T::lit(g.len() as f64))
            .collect();
        let nrm = means.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if nrm > T::zero() && nrm.is_finite() {
            data.extend(means.iter().map(|v| *v / nrm));
            kept.push(i);
        } else {
            flagged.push(i);
        }
    }
    if !flagged.is_empty() {
        log::warn!("{} row(s) with zero group means left out of the projection", flagged.len());
    }
    Ok(SphereProjection {
        points: Tensor::new([kept.len(), 3], data)?,
        kept,
        flagged,
    })
}

/// Largest angle in radians between any two rows of a projection.
pub fn max_pairwise_angle<T: Scalar>(points: &Tensor<T>) -> f64 {
    let rows: Vec<Vec<f64>> = points.iter_rows().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect();
    let mut min_dot = 1.0f64;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            min_dot = min_dot.min(d);
        }
    }
    min_dot.clamp(-1.0, 1.0).acos()
}
