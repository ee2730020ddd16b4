use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hypersphere::{cart_to_cos_on, row_norms_on};
use crate::scalar::Scalar;
use crate::vae::config::{KldReduction, Mode};
use crate::vae::model::EncoderOutput;
use crate::vae::prior::PriorSpec;

/// Per-column batch mean and population standard deviation, both `1 x k`.
#[derive(Clone, Copy, Debug)]
pub struct BatchStats {
    pub mean: Var,
    pub std: Var,
}

pub fn batch_stats<T: Scalar>(tape: &mut Tape<T>, q: Var) -> Result<BatchStats> {
    let shape = tape.shape(q);
    if shape.len() != 2 || shape[0] < 2 {
        return Err(Error::domain("batch_stats", format!("need at least 2 rows, got shape {shape:?}")));
    }
    let mean = tape.mean_axis(q, 0)?;
    let std = tape.std_axis(q, 0)?;
    Ok(BatchStats { mean, std })
}

/// `sum_k gain_k (stat_k - target_k)^2` for a `1 x k` statistic.
fn weighted_sq_dev<T: Scalar>(tape: &mut Tape<T>, stat: Var, target: &[T], gain: &[T]) -> Result<Var> {
    let k = tape.shape(stat)[1];
    if target.len() != k || gain.len() != k {
        return Err(Error::shape("prior penalty", &[1, k], &[target.len(), gain.len()]));
    }
    let t = tape.constant(Tensor::new([1, k], target.to_vec())?);
    let g = tape.constant(Tensor::new([1, k], gain.to_vec())?);
    let d = tape.sub(stat, t)?;
    let d2 = tape.square(d);
    let w = tape.mul(d2, g)?;
    Ok(tape.sum(w))
}

fn add_all<T: Scalar>(tape: &mut Tape<T>, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

/// Squared reconstruction error summed over pixels, averaged over the batch.
pub fn loss_mse<T: Scalar>(tape: &mut Tape<T>, x: Var, x_hat: Var) -> Result<Var> {
    if tape.shape(x) != tape.shape(x_hat) {
        return Err(Error::shape("loss_mse", tape.shape(x), tape.shape(x_hat)));
    }
    let batch = tape.shape(x)[0];
    let d = tape.sub(x, x_hat)?;
    let d2 = tape.square(d);
    let s = tape.sum(d2);
    Ok(tape.scale(s, T::one() / T::lit(batch as f64)))
}

/// Closed-form KLD to `N(0, I)`: `-1/2 sum (1 + log sigma^2 - mu^2 - sigma^2)`.
pub fn loss_kld_standard<T: Scalar>(tape: &mut Tape<T>, e: &EncoderOutput, reduction: KldReduction) -> Result<Var> {
    let mu2 = tape.square(e.mu);
    let s2 = tape.square(e.sigma);
    let a = tape.add_scalar(e.log_var, T::one());
    let b = tape.sub(a, mu2)?;
    let c = tape.sub(b, s2)?;
    let s = tape.sum(c);
    let scale = match reduction {
        KldReduction::Sum => T::lit(-0.5),
        KldReduction::BatchMean => T::lit(-0.5) / T::lit(tape.shape(e.mu)[0] as f64),
    };
    Ok(tape.scale(s, scale))
}

/// Batch-statistics penalty towards per-coordinate Cartesian targets: mean
/// of `sigma` towards `prior_sigma`, mean of `mu` towards `prior_mu`, and
/// both batch spreads towards zero.
pub fn loss_kld_cart_prior<T: Scalar>(tape: &mut Tape<T>, e: &EncoderOutput, prior_mu: &[T], prior_sigma: &[T]) -> Result<Var> {
    let n = tape.shape(e.mu)[1];
    let ones = vec![T::one(); n];
    let zeros = vec![T::zero(); n];
    let s = batch_stats(tape, e.sigma)?;
    let m = batch_stats(tape, e.mu)?;
    let terms = [
        weighted_sq_dev(tape, s.mean, prior_sigma, &ones)?,
        weighted_sq_dev(tape, s.std, &zeros, &ones)?,
        weighted_sq_dev(tape, m.mean, prior_mu, &ones)?,
        weighted_sq_dev(tape, m.std, &zeros, &ones)?,
    ];
    add_all(tape, &terms)
}

/// Batch-statistics penalty on the angle cosines of the `mu` and `sigma`
/// rows, computed with the stabilized batched transform.
pub fn loss_kld_hsph_angles<T: Scalar>(tape: &mut Tape<T>, e: &EncoderOutput, p: &PriorSpec<T>, stabilizer: T) -> Result<Var> {
    let cos_mu = cart_to_cos_on(tape, e.mu, stabilizer)?;
    let cos_sigma = cart_to_cos_on(tape, e.sigma, stabilizer)?;
    let m = batch_stats(tape, cos_mu)?;
    let s = batch_stats(tape, cos_sigma)?;
    let terms = [
        weighted_sq_dev(tape, m.mean, &p.a_mu_angle, &p.alpha_mu_angle)?,
        weighted_sq_dev(tape, m.std, &p.b_mu_angle, &p.beta_mu_angle)?,
        weighted_sq_dev(tape, s.mean, &p.a_sigma_angle, &p.alpha_sigma_angle)?,
        weighted_sq_dev(tape, s.std, &p.b_sigma_angle, &p.beta_sigma_angle)?,
    ];
    add_all(tape, &terms)
}

/// Batch-statistics penalty on the Euclidean norms of the `mu` and `sigma`
/// rows.
pub fn loss_kld_hsph_radius<T: Scalar>(tape: &mut Tape<T>, e: &EncoderOutput, p: &PriorSpec<T>) -> Result<Var> {
    let r_mu = row_norms_on(tape, e.mu)?;
    let r_sigma = row_norms_on(tape, e.sigma)?;
    let m = batch_stats(tape, r_mu)?;
    let s = batch_stats(tape, r_sigma)?;
    let terms = [
        weighted_sq_dev(tape, m.mean, &[p.a_mu_r], &[p.alpha_mu_r])?,
        weighted_sq_dev(tape, m.std, &[p.b_mu_r], &[p.beta_mu_r])?,
        weighted_sq_dev(tape, s.mean, &[p.a_sigma_r], &[p.alpha_sigma_r])?,
        weighted_sq_dev(tape, s.std, &[p.b_sigma_r], &[p.beta_sigma_r])?,
    ];
    add_all(tape, &terms)
}

/// Settings the total loss depends on besides the data.
#[derive(Clone, Copy, Debug)]
pub struct LossSettings<T> {
    pub mode: Mode,
    pub beta: T,
    pub reduction: KldReduction,
    pub stabilizer: T,
}

/// Handles to the loss and its parts. In standard mode the angle and
/// radius terms are absent and `kld` is the closed-form Gaussian KLD.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub mse: Var,
    pub kld: Var,
    pub kld_angles: Option<Var>,
    pub kld_radius: Option<Var>,
}

/// Regularizer only, selected by mode.
pub fn kld_terms<T: Scalar>(
    tape: &mut Tape<T>,
    e: &EncoderOutput,
    s: &LossSettings<T>,
    prior: &PriorSpec<T>,
) -> Result<(Var, Option<Var>, Option<Var>)> {
    match s.mode {
        Mode::Standard => Ok((loss_kld_standard(tape, e, s.reduction)?, None, None)),
        Mode::Hyperspherical => {
            let a = loss_kld_hsph_angles(tape, e, prior, s.stabilizer)?;
            let r = loss_kld_hsph_radius(tape, e, prior)?;
            Ok((tape.add(a, r)?, Some(a), Some(r)))
        }
    }
}

/// `mse + beta * kld`.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    x_hat: Var,
    e: &EncoderOutput,
    s: &LossSettings<T>,
    prior: &PriorSpec<T>,
) -> Result<LossParts> {
    let mse = loss_mse(tape, x, x_hat)?;
    let (kld, kld_angles, kld_radius) = kld_terms(tape, e, s, prior)?;
    let weighted = tape.scale(kld, s.beta);
    let total = tape.add(mse, weighted)?;
    Ok(LossParts {
        total,
        mse,
        kld,
        kld_angles,
        kld_radius,
    })
}
