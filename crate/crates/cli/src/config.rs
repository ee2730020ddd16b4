use std::path::{Path, PathBuf};

use hsvae::data::{default_cache_dir, Source};
use hsvae::vae::{gain_schedule, Mode, PriorSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A prior target given either once for every angle or per angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAngle {
    All(f64),
    Each(Vec<f64>),
}

impl PerAngle {
    fn expand(&self, key: &str, m: usize) -> Result<Vec<f64>, CliError> {
        match self {
            PerAngle::All(v) => Ok(vec![*v; m]),
            PerAngle::Each(v) if v.len() == m => Ok(v.clone()),
            PerAngle::Each(v) => Err(CliError::Config(format!("prior.{key} has {} entries, expected n - 1 = {m}", v.len()))),
        }
    }
}

/// Prior targets and gains. Unset radius targets default to `sqrt(n)`,
/// unset `sigma` angle targets to the cosines of the all-ones vector, and
/// unset angle gains to `1 / sqrt(k + 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub a_mu_angle: PerAngle,
    pub b_mu_angle: PerAngle,
    pub a_sigma_angle: Option<PerAngle>,
    pub b_sigma_angle: PerAngle,
    pub alpha_mu_angle: Option<PerAngle>,
    pub beta_mu_angle: Option<PerAngle>,
    pub alpha_sigma_angle: Option<PerAngle>,
    pub beta_sigma_angle: Option<PerAngle>,
    pub a_mu_r: Option<f64>,
    pub b_mu_r: f64,
    pub a_sigma_r: Option<f64>,
    pub b_sigma_r: f64,
    pub alpha_mu_r: f64,
    pub beta_mu_r: f64,
    pub alpha_sigma_r: f64,
    pub beta_sigma_r: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            a_mu_angle: PerAngle::All(1.0),
            b_mu_angle: PerAngle::All(hsvae::vae::DEFAULT_B_MU_ANGLE),
            a_sigma_angle: None,
            b_sigma_angle: PerAngle::All(0.0),
            alpha_mu_angle: None,
            beta_mu_angle: None,
            alpha_sigma_angle: None,
            beta_sigma_angle: None,
            a_mu_r: None,
            b_mu_r: 0.0,
            a_sigma_r: None,
            b_sigma_r: 0.0,
            alpha_mu_r: 1.0,
            beta_mu_r: 1.0,
            alpha_sigma_r: 1.0,
            beta_sigma_r: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn resolve(&self, n: usize) -> Result<PriorSpec<f64>, CliError> {
        let m = n.saturating_sub(1);
        let base = PriorSpec::<f64>::with_mu_angle(n, 1.0);
        let gains = gain_schedule::<f64>(n);
        let opt = |v: &Option<PerAngle>, key: &str, dflt: &Vec<f64>| match v {
            Some(p) => p.expand(key, m),
            None => Ok(dflt.clone()),
        };
        let spec = PriorSpec {
            a_mu_angle: self.a_mu_angle.expand("a_mu_angle", m)?,
            b_mu_angle: self.b_mu_angle.expand("b_mu_angle", m)?,
            a_sigma_angle: opt(&self.a_sigma_angle, "a_sigma_angle", &base.a_sigma_angle)?,
            b_sigma_angle: self.b_sigma_angle.expand("b_sigma_angle", m)?,
            alpha_mu_angle: opt(&self.alpha_mu_angle, "alpha_mu_angle", &gains)?,
            beta_mu_angle: opt(&self.beta_mu_angle, "beta_mu_angle", &gains)?,
            alpha_sigma_angle: opt(&self.alpha_sigma_angle, "alpha_sigma_angle", &gains)?,
            beta_sigma_angle: opt(&self.beta_sigma_angle, "beta_sigma_angle", &gains)?,
            a_mu_r: self.a_mu_r.unwrap_or(base.a_mu_r),
            b_mu_r: self.b_mu_r,
            a_sigma_r: self.a_sigma_r.unwrap_or(base.a_sigma_r),
            b_sigma_r: self.b_sigma_r,
            alpha_mu_r: self.alpha_mu_r,
            beta_mu_r: self.beta_mu_r,
            alpha_sigma_r: self.alpha_sigma_r,
            beta_sigma_r: self.beta_sigma_r,
        };
        spec.validate(n).map_err(|e| CliError::Config(format!("prior: {e}")))?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Cache root; `$HSVAE_CACHE_DIR` or `~/.cache/hsvae` if unset.
    pub cache_dir: Option<PathBuf>,
    /// Never download; use the cache only.
    pub offline: bool,
    /// Fill the cache from this directory instead of the network.
    pub mirror_dir: Option<PathBuf>,
    /// Read uncompressed IDX files from here, bypassing the cache and its
    /// hash checks (for fixtures).
    pub idx_dir: Option<PathBuf>,
    /// Use only the first this many training images.
    pub train_limit: Option<usize>,
    /// Use only the first this many test images.
    pub test_limit: Option<usize>,
}

impl DataConfig {
    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(default_cache_dir)
    }

    pub fn source(&self) -> Source {
        if self.offline {
            Source::Offline
        } else if let Some(d) = &self.mirror_dir {
            Source::Dir(d.clone())
        } else {
            Source::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Any of `mse`, `knn`, `self_fid`, `concentration`.
    pub metrics: Vec<String>,
    /// Split for `mse`: `train` or `test`.
    pub mse_split: String,
    pub knn_k: usize,
    /// Samples per side of the self-FID (capped at the test-set size).
    pub fid_count: usize,
    /// Extractor weights; the shipped ones if unset.
    pub proxy_weights: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            metrics: vec!["mse".into(), "knn".into(), "self_fid".into(), "concentration".into()],
            mse_split: "test".into(),
            knn_k: 5,
            fid_count: 10_000,
            proxy_weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    pub latent_dims: Vec<usize>,
    pub modes: Vec<Mode>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            betas: vec![1.0],
            latent_dims: vec![8, 16, 32],
            modes: vec![Mode::Standard, Mode::Hyperspherical],
        }
    }
}

/// Complete configuration of a run, as read from a TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
    pub prior: PriorConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        if self.train.mode == Mode::Hyperspherical {
            self.prior.resolve(self.train.latent_dim)?;
        }
        if !matches!(self.eval.mse_split.as_str(), "train" | "test") {
            return Err(CliError::Config(format!("eval.mse_split must be `train` or `test`, got `{}`", self.eval.mse_split)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration as TOML.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs/latest"))
    }
}
