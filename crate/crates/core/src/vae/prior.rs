use crate::error::{Error, Result};
use crate::hypersphere::all_ones_cosines;
use crate::scalar::Scalar;
use crate::vae::schedule::gain_schedule;

/// Targets and gains of the batch-statistics losses on angle cosines and
/// radii of the encoder's `mu` and `sigma` vectors.
///
/// `a_*` are targets for the batch mean, `b_*` for the batch standard
/// deviation; `alpha_*` / `beta_*` weight the corresponding squared
/// deviations. Angle arrays have `n - 1` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec<T> {
    pub a_mu_angle: Vec<T>,
    pub b_mu_angle: Vec<T>,
    pub a_sigma_angle: Vec<T>,
    pub b_sigma_angle: Vec<T>,
    pub alpha_mu_angle: Vec<T>,
    pub beta_mu_angle: Vec<T>,
    pub alpha_sigma_angle: Vec<T>,
    pub beta_sigma_angle: Vec<T>,
    pub a_mu_r: T,
    pub b_mu_r: T,
    pub a_sigma_r: T,
    pub b_sigma_r: T,
    pub alpha_mu_r: T,
    pub beta_mu_r: T,
    pub alpha_sigma_r: T,
    pub beta_sigma_r: T,
}

/// Default batch-spread target for the `mu` cosines.
pub const DEFAULT_B_MU_ANGLE: f64 = 0.05;

impl<T: Scalar> PriorSpec<T> {
    /// Defaults for latent dimension `n` with every `mu` cosine target set
    /// to `a_mu_angle`.
    ///
    /// `sigma` targets describe the all-ones vector (cosines
    /// `1/sqrt(n-k+1)`, radius `sqrt(n)`), `mu` radius targets `sqrt(n)`,
    /// the `mu` cosine spread target is [`DEFAULT_B_MU_ANGLE`] and all other
    /// spread targets are zero. Angle gains follow [`gain_schedule`]; radius
    /// gains are one.
    pub fn with_mu_angle(n: usize, a_mu_angle: T) -> Self {
        let m = n.saturating_sub(1);
        let gains = gain_schedule::<T>(n);
        let root_n = T::lit(n as f64).sqrt();
        PriorSpec {
            a_mu_angle: vec![a_mu_angle; m],
            b_mu_angle: vec![T::lit(DEFAULT_B_MU_ANGLE); m],
            a_sigma_angle: all_ones_cosines(n),
            b_sigma_angle: vec![T::zero(); m],
            alpha_mu_angle: gains.clone(),
            beta_mu_angle: gains.clone(),
            alpha_sigma_angle: gains.clone(),
            beta_sigma_angle: gains,
            a_mu_r: root_n,
            b_mu_r: T::zero(),
            a_sigma_r: root_n,
            b_sigma_r: T::zero(),
            alpha_mu_r: T::one(),
            beta_mu_r: T::one(),
            alpha_sigma_r: T::one(),
            beta_sigma_r: T::one(),
        }
    }

    /// Compression prior: every `mu` angle pushed towards zero
    /// (`a_mu_angle = 1`).
    pub fn compression(n: usize) -> Self {
        Self::with_mu_angle(n, T::one())
    }

    /// Latent dimension implied by the angle arrays.
    pub fn latent_dim(&self) -> usize {
        self.a_mu_angle.len() + 1
    }

    /// Checks array lengths against `n` and that all gains are non-negative.
    pub fn validate(&self, n: usize) -> Result<()> {
        let m = n.checked_sub(1).filter(|&m| m >= 1).ok_or_else(|| Error::Invalid("latent dimension must be >= 2".into()))?;
        let arrays = [
            ("a_mu_angle", &self.a_mu_angle),
            ("b_mu_angle", &self.b_mu_angle),
            ("a_sigma_angle", &self.a_sigma_angle),
            ("b_sigma_angle", &self.b_sigma_angle),
            ("alpha_mu_angle", &self.alpha_mu_angle),
            ("beta_mu_angle", &self.beta_mu_angle),
            ("alpha_sigma_angle", &self.alpha_sigma_angle),
            ("beta_sigma_angle", &self.beta_sigma_angle),
        ];
        for (name, arr) in arrays {
            if arr.len() != m {
                return Err(Error::Invalid(format!("{name} has {} entries, expected {m}", arr.len())));
            }
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("{name} has non-finite entries")));
            }
        }
        let gains = self
            .alpha_mu_angle
            .iter()
            .chain(&self.beta_mu_angle)
            .chain(&self.alpha_sigma_angle)
            .chain(&self.beta_sigma_angle)
            .chain([&self.alpha_mu_r, &self.beta_mu_r, &self.alpha_sigma_r, &self.beta_sigma_r]);
        for g in gains {
            if !(*g >= T::zero()) {
                return Err(Error::Invalid(format!("gain {g} is negative")));
            }
        }
        Ok(())
    }

    /// Additionally requires a compression prior: every `a_mu_angle` nonzero
    /// and `a_mu_r = sqrt(n)`.
    pub fn validate_compression(&self, n: usize) -> Result<()> {
        self.validate(n)?;
        if let Some(k) = self.a_mu_angle.iter().position(|a| *a == T::zero()) {
            return Err(Error::Invalid(format!("compression prior needs a_mu_angle[{}] != 0", k + 1)));
        }
        let root_n = T::lit(n as f64).sqrt();
        if (self.a_mu_r - root_n).abs() > T::epsilon() * root_n * T::lit(4.0) {
            return Err(Error::Invalid(format!("compression prior needs a_mu_r = sqrt({n}), got {}", self.a_mu_r)));
        }
        Ok(())
    }
}
