//! Gaussian and von Mises-Fisher samplers, the vMF concentration estimator
//! and concentration-of-measure diagnostics.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::hypersphere::{cart_to_cos_batched, cart_to_hsph_exact, DEFAULT_STABILIZER};
use crate::scalar::Scalar;

/// Largest concentration returned by [`fit_vmf`].
pub const KAPPA_CAP: f64 = 1e6;

/// Mean resultant length below which no mean direction is defined.
pub const MIN_RESULTANT: f64 = 1e-9;

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count x n` i.i.d. standard normal entries drawn from `rng`.
pub fn gaussian_with<T: Scalar, R: Rng + ?Sized>(rng: &mut R, count: usize, n: usize) -> Tensor<T> {
    let data = (0..count * n)
        .map(|_| T::lit(StandardNormal.sample(rng)))
        .collect();
    Tensor::new([count, n], data).expect("length matches")
}

/// `count x n` standard normal samples; a pure function of its arguments.
pub fn sample_gaussian<T: Scalar>(count: usize, n: usize, seed: u64) -> Tensor<T> {
    gaussian_with(&mut rng_from_seed(seed), count, n)
}

/// Mean of the chi distribution with `n` degrees of freedom,
/// `sqrt(2) Gamma((n+1)/2) / Gamma(n/2)`.
pub fn chi_mean(n: usize) -> f64 {
    let n = n as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((n + 1.0) / 2.0) - ln_gamma(n / 2.0)).exp()
}

/// Standard deviation of the chi distribution, `sqrt(n - mean^2)`.
pub fn chi_std(n: usize) -> f64 {
    let m = chi_mean(n);
    (n as f64 - m * m).max(0.0).sqrt()
}

/// `E|<u, v>|` for independent uniform unit vectors in `n` dimensions.
pub fn uniform_abs_cosine_mean(n: usize) -> f64 {
    let n = n as f64;
    (ln_gamma(n / 2.0) - ln_gamma((n + 1.0) / 2.0)).exp() / std::f64::consts::PI.sqrt()
}

/// Parameters of a von Mises-Fisher distribution on the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct VmfParams<T> {
    mean_direction: Vec<T>,
    kappa: T,
}

impl<T: Scalar> VmfParams<T> {
    /// `mean_direction` must have unit norm and `kappa >= 0`. The norm
    /// tolerance is 1e-9, widened to `64 * eps` for scalars coarser than that.
    pub fn new(mean_direction: Vec<T>, kappa: T) -> Result<Self> {
        if mean_direction.len() < 2 {
            return Err(Error::Invalid("vMF needs dimension >= 2".into()));
        }
        let norm = norm(&mean_direction);
        let tol = (64.0 * T::epsilon().to_f64_lossy()).max(1e-9);
        if (norm - 1.0).abs() > tol {
            return Err(Error::Invalid(format!("vMF mean direction has norm {norm}, expected 1")));
        }
        if !(kappa >= T::zero()) || !kappa.is_finite() {
            return Err(Error::Invalid(format!("vMF concentration must be finite and >= 0, got {kappa}")));
        }
        Ok(VmfParams { mean_direction, kappa })
    }

    pub fn mean_direction(&self) -> &[T] {
        &self.mean_direction
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.mean_direction.len()
    }
}

fn norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.to_f64_lossy().powi(2)).sum::<f64>().sqrt()
}

/// Draws `count` unit vectors from vMF(`p`).
///
/// The component along the mean direction comes from Wood's rejection
/// sampler; the tangent component is a uniformly random direction
/// orthogonal to the mean. Each proposal is accepted with probability
/// bounded away from zero, so the loop terminates with bounded expected
/// iterations for every `kappa`.
pub fn sample_vmf<T: Scalar>(p: &VmfParams<T>, count: usize, seed: u64) -> Tensor<T> {
    let mut rng = rng_from_seed(seed);
    let n = p.dim();
    let mu: Vec<f64> = p.mean_direction.iter().map(|x| x.to_f64_lossy()).collect();
    let kappa = p.kappa.to_f64_lossy();
    let dim1 = (n - 1) as f64;
    let b = dim1 / (2.0 * kappa + (4.0 * kappa * kappa + dim1 * dim1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dim1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dim1 / 2.0, dim1 / 2.0).expect("positive shape parameters");

    let mut out = Vec::with_capacity(count * n);
    let mut tangent = vec![0.0; n];
    for _ in 0..count {
        let w = loop {
            let z: f64 = beta.sample(&mut rng);
            let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
            let u: f64 = rng.random::<f64>();
            if kappa * w + dim1 * (1.0 - x0 * w).ln() - c >= u.ln() {
                break w;
            }
        };
        loop {
            for t in tangent.iter_mut() {
                *t = StandardNormal.sample(&mut rng);
            }
            let along: f64 = tangent.iter().zip(&mu).map(|(t, m)| t * m).sum();
            tangent.iter_mut().zip(&mu).for_each(|(t, m)| *t -= along * m);
            let tn = tangent.iter().map(|t| t * t).sum::<f64>().sqrt();
            if tn > 1e-12 {
                tangent.iter_mut().for_each(|t| *t /= tn);
                break;
            }
        }
        let s = (1.0 - w * w).max(0.0).sqrt();
        let row: Vec<f64> = mu.iter().zip(&tangent).map(|(m, t)| w * m + s * t).collect();
        let rn = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.extend(row.iter().map(|v| T::lit(v / rn)));
    }
    Tensor::new([count, n], out).expect("length matches")
}

/// Mean resultant vector of the unit-normalized rows.
fn mean_resultant<T: Scalar>(latents: &Tensor<T>) -> Result<Vec<f64>> {
    let n = latents.cols();
    let m = latents.rows();
    let mut acc = vec![0.0; n];
    for (i, row) in latents.iter_rows().enumerate() {
        let rn = norm(row);
        if !(rn > 0.0) {
            return Err(Error::domain("fit_vmf", format!("row {i} has zero norm")));
        }
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x.to_f64_lossy() / rn;
        }
    }
    acc.iter_mut().for_each(|a| *a /= m as f64);
    Ok(acc)
}

/// Fits a mean direction and a scalar concentration to row vectors.
///
/// The mean direction is the normalized mean of the unit-normalized rows
/// and `kappa = rbar (n - rbar^2) / (1 - rbar^2)` (Banerjee et al.), with
/// `rbar` the mean resultant length. Concentrations above [`KAPPA_CAP`] are
/// capped with a warning.
pub fn fit_vmf<T: Scalar>(latents: &Tensor<T>) -> Result<VmfParams<T>> {
    if latents.shape().len() != 2 || latents.rows() < 2 || latents.cols() < 2 {
        return Err(Error::domain("fit_vmf", format!("need m >= 2 rows of dimension >= 2, got {:?}", latents.shape())));
    }
    let n = latents.cols() as f64;
    let resultant = mean_resultant(latents)?;
    let rbar = resultant.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(rbar >= MIN_RESULTANT) {
        return Err(Error::NoPreferredDirection(rbar));
    }
    let direction: Vec<T> = resultant.iter().map(|v| T::lit(v / rbar)).collect();
    let r = rbar.min(1.0);
    let denom = 1.0 - r * r;
    let mut kappa = if denom > 0.0 { r * (n - r * r) / denom } else { f64::INFINITY };
    if !(kappa <= KAPPA_CAP) {
        log::warn!("fitted vMF concentration {kappa:e} capped at {KAPPA_CAP:e} (mean resultant length {rbar})");
        kappa = KAPPA_CAP;
    }
    // renormalize in T so the unit-norm invariant holds at its precision
    let dn = norm(&direction);
    let direction = direction.into_iter().map(|d| d / T::lit(dn)).collect();
    VmfParams::new(direction, T::lit(kappa))
}

/// One line of a [`ConcentrationReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub statistic: String,
    pub empirical: f64,
    /// `NaN` when no closed form applies.
    pub theoretical: f64,
    /// `(empirical - theoretical) / standard error`; `NaN` when undefined.
    pub z_score: f64,
}

/// Norm, angle and pairwise-cosine statistics of a sample cloud, next to
/// their values for a standard Gaussian / uniform direction.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationReport {
    pub n: usize,
    pub count: usize,
    pub rows: Vec<ReportRow>,
}

impl ConcentrationReport {
    pub fn get(&self, statistic: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.statistic == statistic)
    }

    /// CSV with columns `statistic,empirical,theoretical,z_score`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("statistic,empirical,theoretical,z_score\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.statistic, r.empirical, r.theoretical, r.z_score);
        }
        s
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    (mean, var.sqrt())
}

fn z(emp: f64, th: f64, se: f64) -> f64 {
    if se > 0.0 {
        (emp - th) / se
    } else if emp == th {
        0.0
    } else {
        f64::NAN
    }
}

/// Concentration-of-measure summary for `m >= 100` samples.
///
/// Rows: `norm_mean`, `norm_std`, `shell_thickness` (std / mean) against
/// the chi(n) distribution; `cos_phi_k_mean` and `cos_phi_k_std` for every
/// angle against the uniform-direction values `0` and `1/sqrt(n-k+1)`;
/// `pairwise_abs_cosine` over up to 1000 disjoint row pairs.
pub fn concentration_report<T: Scalar>(samples: &Tensor<T>) -> Result<ConcentrationReport> {
    let (m, n) = (samples.rows(), samples.cols());
    if samples.shape().len() != 2 || m < 100 || n < 2 {
        return Err(Error::domain("concentration_report", format!("need at least 100 rows of dimension >= 2, got {:?}", samples.shape())));
    }
    let sqrt_m = (m as f64).sqrt();
    let norms: Vec<f64> = samples.iter_rows().map(norm).collect();
    let (nm, ns) = mean_std(&norms);
    let (cm, cs) = (chi_mean(n), chi_std(n));
    let mut rows = vec![
        ReportRow {
            statistic: "norm_mean".into(),
            empirical: nm,
            theoretical: cm,
            z_score: z(nm, cm, ns / sqrt_m),
        },
        ReportRow {
            statistic: "norm_std".into(),
            empirical: ns,
            theoretical: cs,
            z_score: z(ns, cs, ns / (2.0 * (m as f64 - 1.0)).sqrt()),
        },
        ReportRow {
            statistic: "shell_thickness".into(),
            empirical: if nm > 0.0 { ns / nm } else { f64::NAN },
            theoretical: cs / cm,
            z_score: f64::NAN,
        },
    ];

    let cos = match cart_to_hsph_exact(samples) {
        Ok(c) => c.cosines,
        Err(_) => cart_to_cos_batched(samples, T::lit(DEFAULT_STABILIZER))?,
    };
    let mut column = Vec::with_capacity(m);
    for k in 0..n - 1 {
        column.clear();
        column.extend((0..m).map(|i| cos.at(i, k).to_f64_lossy()));
        let (mean, std) = mean_std(&column);
        let th_std = 1.0 / ((n - k) as f64).sqrt();
        rows.push(ReportRow {
            statistic: format!("cos_phi_{}_mean", k + 1),
            empirical: mean,
            theoretical: 0.0,
            z_score: z(mean, 0.0, std / sqrt_m),
        });
        rows.push(ReportRow {
            statistic: format!("cos_phi_{}_std", k + 1),
            empirical: std,
            theoretical: th_std,
            z_score: f64::NAN,
        });
    }

    let pairs = (m / 2).min(1000);
    let abs_cos: Vec<f64> = (0..pairs)
        .map(|i| {
            let (a, b) = (samples.row(2 * i), samples.row(2 * i + 1));
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x.to_f64_lossy() * y.to_f64_lossy()).sum();
            let d = norm(a) * norm(b);
            if d > 0.0 {
                (dot / d).abs()
            } else {
                0.0
            }
        })
        .collect();
    let (pm, ps) = mean_std(&abs_cos);
    let pt = uniform_abs_cosine_mean(n);
    rows.push(ReportRow {
        statistic: "pairwise_abs_cosine".into(),
        empirical: pm,
        theoretical: pt,
        z_score: z(pm, pt, ps / (pairs as f64).sqrt()),
    });
    Ok(ConcentrationReport { n, count: m, rows })
}
