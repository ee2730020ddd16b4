//! `hsvae`: train, evaluate and inspect hyperspherical-prior VAEs on MNIST.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsvae::vae::Mode;

use crate::config::RunConfig;

/// Errors grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 3.
    Runtime(String),
    /// Exit code 4.
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl From<hsvae::Error> for CliError {
    fn from(e: hsvae::Error) -> Self {
        use hsvae::Error as E;
        match e {
            E::Idx { .. } | E::HashMismatch { .. } | E::DataUnavailable(_) | E::Download { .. } => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "hsvae", version, about = "VAEs with hyperspherical-coordinate latent priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Standard,
    Hyperspherical,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Standard => Mode::Standard,
            ModeArg::Hyperspherical => Mode::Hyperspherical,
        }
    }
}

/// Flags that override the config file.
#[derive(Args, Debug, Default, Clone)]
struct Overrides {
    /// Final KLD weight (config: train.beta_max, default 1.0).
    #[arg(long)]
    beta_max: Option<f64>,
    /// Latent dimension n (config: train.latent_dim, default 128).
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Regularizer (config: train.mode, default standard).
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Seed for initialization, batching and sampling (config: train.seed, default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs (config: train.epochs, default 300).
    #[arg(long)]
    epochs: Option<usize>,
    /// Dataset cache root (config: data.cache_dir; env HSVAE_CACHE_DIR; default ~/.cache/hsvae).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Use only cached data.
    #[arg(long)]
    offline: bool,
    /// Use only the first this many training images (config: data.train_limit).
    #[arg(long)]
    train_limit: Option<usize>,
    /// Use only the first this many test images (config: data.test_limit).
    #[arg(long)]
    test_limit: Option<usize>,
    /// Output directory (config: out, default runs/latest).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.beta_max {
            c.train.beta_max = v;
        }
        if let Some(v) = self.latent_dim {
            c.train.latent_dim = v;
        }
        if let Some(v) = self.mode {
            c.train.mode = v.into();
        }
        if let Some(v) = self.seed {
            c.train.seed = v;
        }
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = &self.cache_dir {
            c.data.cache_dir = Some(v.clone());
        }
        if self.offline {
            c.data.offline = true;
        }
        if let Some(v) = self.train_limit {
            c.data.train_limit = Some(v);
        }
        if let Some(v) = self.test_limit {
            c.data.test_limit = Some(v);
        }
        if let Some(v) = &self.out {
            c.out = Some(v.clone());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    /// Standard normal latents.
    Prior,
    /// vMF fitted to reference latents.
    Vmf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes model.ckpt, train_log.csv, timing.csv and config.toml.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the convolutional feature extractor used by the self-FID.
    TrainProxy {
        /// Where to write the weights (default: the shipped weight file).
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        proxy_epochs: usize,
        /// Fail unless test accuracy reaches this.
        #[arg(long, default_value_t = 0.97)]
        min_accuracy: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Decode random latents; writes samples.png and latents.csv.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, value_enum, default_value_t = SourceArg::Prior)]
        source: SourceArg,
        /// Latent CSV the vMF is fitted to (required with `--source vmf`).
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute metrics for a checkpoint and append them to metrics.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated subset of mse, knn, self_fid, concentration.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
        /// Split used for the mse metric (train or test).
        #[arg(long)]
        mse_split: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Project test-set latents onto the 2-sphere; writes projection.csv.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train and evaluate a grid of (mode, beta, n); writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated beta_max values (config: sweep.betas).
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        /// Comma-separated latent dimensions (config: sweep.latent_dims).
        #[arg(long, value_delimiter = ',')]
        latent_dims: Option<Vec<usize>>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn resolve(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut c = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut c);
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, overrides } => commands::train(&resolve(Some(&config), &overrides)?),
        Command::TrainProxy {
            weights,
            proxy_epochs,
            min_accuracy,
            config,
            overrides,
        } => commands::train_proxy(&resolve(config.as_ref(), &overrides)?, weights, proxy_epochs, min_accuracy),
        Command::Generate {
            checkpoint,
            count,
            source,
            reference,
            seed,
            out,
        } => commands::generate(&checkpoint, count, source, reference.as_deref(), seed, &out.unwrap_or_else(|| PathBuf::from("runs/latest"))),
        Command::Eval {
            checkpoint,
            config,
            metrics,
            mse_split,
            overrides,
        } => {
            let mut c = resolve(config.as_ref(), &overrides)?;
            if let Some(m) = metrics {
                c.eval.metrics = m;
            }
            if let Some(s) = mse_split {
                c.eval.mse_split = s;
            }
            c.validate()?;
            commands::eval(&c, &checkpoint)
        }
        Command::Project {
            checkpoint,
            config,
            overrides,
        } => commands::project(&resolve(config.as_ref(), &overrides)?, &checkpoint),
        Command::Sweep {
            config,
            betas,
            latent_dims,
            overrides,
        } => {
            let mut c = resolve(Some(&config), &overrides)?;
            if let Some(b) = betas {
                c.sweep.betas = b;
            }
            if let Some(n) = latent_dims {
                c.sweep.latent_dims = n;
            }
            commands::sweep(&c)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
