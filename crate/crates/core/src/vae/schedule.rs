use crate::scalar::Scalar;

/// Per-angle loss gains `1 / sqrt(k + 1)` for `k = 1 .. n-1`.
pub fn gain_schedule<T: Scalar>(n: usize) -> Vec<T> {
    (1..n).map(|k| T::one() / T::lit((k + 1) as f64).sqrt()).collect()
}

/// KLD weight after `epoch` epochs: grows like `sqrt(epoch)` until
/// `anneal_epochs`, then stays at `beta_max`.
pub fn beta_schedule(epoch: usize, beta_max: f64, anneal_epochs: usize) -> f64 {
    if anneal_epochs == 0 {
        return beta_max;
    }
    let e = epoch.min(anneal_epochs) as f64;
    beta_max * (e / anneal_epochs as f64).sqrt()
}
