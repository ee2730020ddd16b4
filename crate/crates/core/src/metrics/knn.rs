use std::cmp::Ordering;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Test rows compared against the training set per matrix product.
const CHUNK: usize = 256;

fn unit_rows<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let mut out = x.data().to_vec();
    let c = x.cols();
    for row in out.chunks_mut(c) {
        let nrm = row.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if nrm > T::zero() {
            row.iter_mut().for_each(|v| *v /= nrm);
        }
    }
    out
}

/// Majority label among `neighbors` (sorted nearest first); ties go to the
/// tied class whose member comes first.
fn vote(neighbors: &[(f64, usize)], labels: &[u8]) -> u8 {
    let mut counts = [0usize; 256];
    for &(_, i) in neighbors {
        counts[labels[i] as usize] += 1;
    }
    let best = *counts.iter().max().expect("non-empty");
    neighbors
        .iter()
        .map(|&(_, i)| labels[i])
        .find(|&l| counts[l as usize] == best)
        .expect("some neighbor has the winning count")
}

/// Fraction of test rows whose majority label among the `k` nearest
/// training rows (cosine distance) matches the true label.
///
/// Zero rows have cosine similarity 0 to everything. Equal similarities are
/// ordered by training index.
pub fn knn_accuracy<T: Scalar>(
    train: &Tensor<T>,
    train_labels: &[u8],
    test: &Tensor<T>,
    test_labels: &[u8],
    k: usize,
) -> Result<f64> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Invalid(format!("k must be odd and >= 1, got {k}")));
    }
    if train.shape().len() != 2 || test.shape().len() != 2 || train.cols() != test.cols() {
        return Err(Error::shape("knn_accuracy", train.shape(), test.shape()));
    }
    let (m, t, d) = (train.rows(), test.rows(), train.cols());
    if m == 0 || t == 0 {
        return Err(Error::Invalid("knn_accuracy needs non-empty train and test sets".into()));
    }
    if train_labels.len() != m || test_labels.len() != t {
        return Err(Error::Invalid("label count differs from row count".into()));
    }
    if k > m {
        return Err(Error::Invalid(format!("k = {k} exceeds training set size {m}")));
    }
    let a = unit_rows(train);
    let b = unit_rows(test);
    let mut correct = 0usize;
    let mut sims = vec![T::zero(); CHUNK * m];
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(m);
    for start in (0..t).step_by(CHUNK) {
        let rows = CHUNK.min(t - start);
        let sims = &mut sims[..rows * m];
        T::gemm(false, true, rows, d, m, &b[start * d..(start + rows) * d], &a, T::zero(), sims);
        for r in 0..rows {
            cand.clear();
            cand.extend(sims[r * m..(r + 1) * m].iter().enumerate().map(|(i, s)| (s.to_f64_lossy(), i)));
            let order = |x: &(f64, usize), y: &(f64, usize)| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal).then(x.1.cmp(&y.1));
            if k < m {
                cand.select_nth_unstable_by(k - 1, order);
            }
            let top = &mut cand[..k];
            top.sort_unstable_by(order);
            if vote(top, train_labels) == test_labels[start + r] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / t as f64)
}
