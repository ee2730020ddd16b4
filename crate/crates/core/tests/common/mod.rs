//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the tape: every value is recomputed with plain
//! loops over `f64`.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = f(&p);
            p[i] = orig - FD_STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest `|a - n| / max(1, |n|)` over the entries.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Cosine transform through an explicit upper-triangular mask matrix:
/// `denom[i, k] = sqrt(sum_j sq[i, j] * mask[j, k] + eps)` with
/// `mask[j, k] = 1` for `j >= k`. The inner sum runs over descending `j`.
pub fn mask_matrix_cosines(x: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
    let n = x[0].len();
    let mask: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|k| if j >= k { 1.0 } else { 0.0 }).collect()).collect();
    x.iter()
        .map(|row| {
            let sq: Vec<f64> = row.iter().map(|v| v * v).collect();
            (0..n - 1)
                .map(|k| {
                    let mut acc = 0.0;
                    for j in (0..n).rev() {
                        acc += sq[j] * mask[j][k];
                    }
                    row[k] / (acc + eps).sqrt()
                })
                .collect()
        })
        .collect()
}

/// Cosines from the suffix norms, without stabilizer.
pub fn exact_cosines(row: &[f64]) -> Vec<f64> {
    let n = row.len();
    (0..n - 1)
        .map(|k| {
            let s: f64 = row[k..].iter().map(|v| v * v).sum();
            row[k] / s.sqrt()
        })
        .collect()
}

pub fn suffix_norms(row: &[f64]) -> Vec<f64> {
    (0..row.len()).map(|k| row[k..].iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

pub fn column(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn ref_mse(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let total: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum();
    total / x.len() as f64
}

/// Closed-form Gaussian regularizer summed over batch and coordinates.
pub fn ref_kld_standard(mu: &[Vec<f64>], sigma: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for (m, s) in mu.iter().zip(sigma) {
        for (a, b) in m.iter().zip(s) {
            acc += 1.0 + (b * b).ln() - a * a - b * b;
        }
    }
    -0.5 * acc
}

pub fn ref_kld_cart(mu: &[Vec<f64>], sigma: &[Vec<f64>], pmu: &[f64], psigma: &[f64]) -> f64 {
    let n = mu[0].len();
    let mut acc = 0.0;
    for k in 0..n {
        let mc = column(mu, k);
        let sc = column(sigma, k);
        acc += (mean(&sc) - psigma[k]).powi(2) + pop_std(&sc).powi(2) + (mean(&mc) - pmu[k]).powi(2) + pop_std(&mc).powi(2);
    }
    acc
}

/// Plain-number prior targets and gains for the reference losses.
#[derive(Clone, Debug)]
pub struct RefPrior {
    pub a_mu: Vec<f64>,
    pub b_mu: Vec<f64>,
    pub a_sigma: Vec<f64>,
    pub b_sigma: Vec<f64>,
    pub alpha_mu: Vec<f64>,
    pub beta_mu: Vec<f64>,
    pub alpha_sigma: Vec<f64>,
    pub beta_sigma: Vec<f64>,
    pub r: [f64; 4],
    pub r_gain: [f64; 4],
}

impl RefPrior {
    /// The defaults, written out by hand.
    pub fn defaults(n: usize, a_mu: f64) -> Self {
        let gains: Vec<f64> = (1..n).map(|k| 1.0 / ((k + 1) as f64).sqrt()).collect();
        let root = (n as f64).sqrt();
        RefPrior {
            a_mu: vec![a_mu; n - 1],
            b_mu: vec![0.05; n - 1],
            a_sigma: (1..n).map(|k| 1.0 / ((n - k + 1) as f64).sqrt()).collect(),
            b_sigma: vec![0.0; n - 1],
            alpha_mu: gains.clone(),
            beta_mu: gains.clone(),
            alpha_sigma: gains.clone(),
            beta_sigma: gains,
            r: [root, 0.0, root, 0.0],
            r_gain: [1.0; 4],
        }
    }

    pub fn to_spec(&self) -> hsvae::vae::PriorSpec<f64> {
        hsvae::vae::PriorSpec {
            a_mu_angle: self.a_mu.clone(),
            b_mu_angle: self.b_mu.clone(),
            a_sigma_angle: self.a_sigma.clone(),
            b_sigma_angle: self.b_sigma.clone(),
            alpha_mu_angle: self.alpha_mu.clone(),
            beta_mu_angle: self.beta_mu.clone(),
            alpha_sigma_angle: self.alpha_sigma.clone(),
            beta_sigma_angle: self.beta_sigma.clone(),
            a_mu_r: self.r[0],
            b_mu_r: self.r[1],
            a_sigma_r: self.r[2],
            b_sigma_r: self.r[3],
            alpha_mu_r: self.r_gain[0],
            beta_mu_r: self.r_gain[1],
            alpha_sigma_r: self.r_gain[2],
            beta_sigma_r: self.r_gain[3],
        }
    }
}

fn stabilized_cosines(row: &[f64], eps: f64) -> Vec<f64> {
    let n = row.len();
    (0..n - 1)
        .map(|k| {
            let mut s = 0.0;
            for j in (k..n).rev() {
                s += row[j] * row[j];
            }
            row[k] / (s + eps).sqrt()
        })
        .collect()
}

pub fn ref_kld_angles(mu: &[Vec<f64>], sigma: &[Vec<f64>], p: &RefPrior, eps: f64) -> f64 {
    let cm: Vec<Vec<f64>> = mu.iter().map(|r| stabilized_cosines(r, eps)).collect();
    let cs: Vec<Vec<f64>> = sigma.iter().map(|r| stabilized_cosines(r, eps)).collect();
    let mut acc = 0.0;
    for k in 0..mu[0].len() - 1 {
        let m = column(&cm, k);
        let s = column(&cs, k);
        acc += p.alpha_sigma[k] * (mean(&s) - p.a_sigma[k]).powi(2) + p.beta_sigma[k] * (pop_std(&s) - p.b_sigma[k]).powi(2);
        acc += p.alpha_mu[k] * (mean(&m) - p.a_mu[k]).powi(2) + p.beta_mu[k] * (pop_std(&m) - p.b_mu[k]).powi(2);
    }
    acc
}

pub fn ref_kld_radius(mu: &[Vec<f64>], sigma: &[Vec<f64>], p: &RefPrior) -> f64 {
    let norm = |r: &Vec<f64>| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rm: Vec<f64> = mu.iter().map(norm).collect();
    let rs: Vec<f64> = sigma.iter().map(norm).collect();
    let [a_mu, b_mu, a_s, b_s] = p.r;
    let [ga, gb, gc, gd] = p.r_gain;
    ga * (mean(&rm) - a_mu).powi(2) + gb * (pop_std(&rm) - b_mu).powi(2) + gc * (mean(&rs) - a_s).powi(2) + gd * (pop_std(&rs) - b_s).powi(2)
}

/// Flattens rows for use as a finite-difference point.
pub fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

pub fn unflatten(v: &[f64], cols: usize) -> Vec<Vec<f64>> {
    v.chunks(cols).map(|c| c.to_vec()).collect()
}

/// Minimal uncompressed IDX writer, independent of the crate's serializer.
pub fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}
