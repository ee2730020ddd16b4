use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypersphere::DEFAULT_STABILIZER;

/// Which regularizer the model is trained with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Mean squared error plus the closed-form Gaussian KLD.
    #[default]
    Standard,
    /// Mean squared error plus batch-statistics losses on hyperspherical
    /// coordinates; latent samples are projected to radius `sqrt(n)`.
    Hyperspherical,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::Hyperspherical => "hyperspherical",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Mode::Standard => 0,
            Mode::Hyperspherical => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Mode::Standard),
            1 => Some(Mode::Hyperspherical),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Mode::Standard),
            "hyperspherical" | "hsph" => Ok(Mode::Hyperspherical),
            _ => Err(Error::Invalid(format!("unknown mode `{s}` (standard | hyperspherical)"))),
        }
    }
}

/// How the closed-form Gaussian KLD is reduced over the batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KldReduction {
    /// Summed over batch and latent coordinates.
    #[default]
    Sum,
    /// Summed over latent coordinates, averaged over the batch.
    BatchMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Latent dimension `n`.
    pub latent_dim: usize,
    /// Mini-batch size `N_b`.
    pub batch_size: usize,
    pub beta_max: f64,
    pub epochs: usize,
    pub anneal_epochs: usize,
    pub mode: Mode,
    pub seed: u64,
    pub learning_rate: f64,
    /// Hidden widths of the encoder; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub kld_reduction: KldReduction,
    /// Stabilizer of the batched cosine transform.
    pub stabilizer: f64,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 128,
            batch_size: 200,
            beta_max: 1.0,
            epochs: 300,
            anneal_epochs: 100,
            mode: Mode::Standard,
            seed: 0,
            learning_rate: 1e-3,
            hidden: vec![512, 256],
            kld_reduction: KldReduction::Sum,
            stabilizer: DEFAULT_STABILIZER,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 2 {
            return Err(Error::Invalid("latent_dim must be >= 2".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Invalid("batch_size must be >= 2 (batch statistics need it)".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Invalid("epochs must be >= 1".into()));
        }
        if !(self.beta_max >= 0.0) || !self.beta_max.is_finite() {
            return Err(Error::Invalid("beta_max must be finite and >= 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Invalid("learning_rate must be > 0".into()));
        }
        if !(self.stabilizer >= 0.0) {
            return Err(Error::Invalid("stabilizer must be >= 0".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Invalid("hidden widths must be positive".into()));
        }
        Ok(())
    }
}
