use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::batches;
use crate::diffcore::{Adam, AdamConfig, Tape, Tensor};
use crate::distributions::gaussian_with;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vae::checkpoint::save_checkpoint;
use crate::vae::config::TrainConfig;
use crate::vae::loss::{kld_terms, total_loss, LossSettings};
use crate::vae::model::{Architecture, Vae};
use crate::vae::prior::PriorSpec;
use crate::vae::schedule::beta_schedule;

pub const LOG_HEADER: &str = "epoch,mse,kld_angles,kld_radius,kld_total,beta,seconds";

/// Rows processed per tape during evaluation.
pub const EVAL_CHUNK: usize = 500;

/// One row of the training log.
///
/// Loss columns come from a deterministic pass after the epoch: the
/// reconstruction error uses the noise-free latent code over all training
/// rows, the KLD columns average the regularizer over consecutive full
/// batches. Row 0 describes the untrained model. `seconds` is the wall
/// time of the epoch's optimization steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mse: f64,
    pub kld_angles: f64,
    pub kld_radius: f64,
    pub kld_total: f64,
    pub beta: f64,
    pub seconds: f64,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:.6}",
            self.epoch, self.mse, self.kld_angles, self.kld_radius, self.kld_total, self.beta, self.seconds
        )
    }
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for row in log {
        s.push_str(&row.csv_row());
        s.push('\n');
    }
    s
}

/// Deterministic loss summary of a model on a data set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub mse: f64,
    pub kld_angles: f64,
    pub kld_radius: f64,
    pub kld_total: f64,
}

/// Reconstruction error through the noise-free latent code, summed over
/// pixels and averaged over rows.
pub fn reconstruction_mse<T: Scalar>(model: &Vae<T>, images: &Tensor<T>) -> Result<f64> {
    let recon = model.reconstruct(images, EVAL_CHUNK)?;
    let mut total = 0.0;
    for (a, b) in images.data().iter().zip(recon.data()) {
        let d = a.to_f64_lossy() - b.to_f64_lossy();
        total += d * d;
    }
    Ok(total / images.rows() as f64)
}

pub fn evaluate<T: Scalar>(model: &Vae<T>, images: &Tensor<T>, cfg: &TrainConfig, prior: &PriorSpec<T>) -> Result<Evaluation> {
    let m = images.rows();
    if m < 2 {
        return Err(Error::Invalid("evaluation needs at least 2 rows".into()));
    }
    let mse = reconstruction_mse(model, images)?;
    let settings = settings(cfg, T::zero());
    let size = cfg.batch_size.min(m);
    let idx: Vec<usize> = (0..m).collect();
    let (mut angles, mut radius, mut total) = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    for part in idx.chunks_exact(size) {
        let mut tape = Tape::new();
        let vars = model.register_frozen(&mut tape);
        let x = tape.constant(images.gather_rows(part));
        let e = model.encode(&mut tape, &vars, x)?;
        let (kld, a, r) = kld_terms(&mut tape, &e, &settings, prior)?;
        total += tape.scalar(kld).to_f64_lossy();
        angles += a.map_or(0.0, |v| tape.scalar(v).to_f64_lossy());
        radius += r.map_or(0.0, |v| tape.scalar(v).to_f64_lossy());
        count += 1;
    }
    let c = count as f64;
    Ok(Evaluation {
        mse,
        kld_angles: angles / c,
        kld_radius: radius / c,
        kld_total: total / c,
    })
}

fn settings<T: Scalar>(cfg: &TrainConfig, beta: T) -> LossSettings<T> {
    LossSettings {
        mode: cfg.mode,
        beta,
        reduction: cfg.kld_reduction,
        stabilizer: T::lit(cfg.stabilizer),
    }
}

/// The freshly initialized model a run with `cfg` starts from.
pub fn init_model<T: Scalar>(cfg: &TrainConfig, input_dim: usize) -> Result<Vae<T>> {
    let arch = Architecture {
        input_dim,
        hidden: cfg.hidden.clone(),
        latent_dim: cfg.latent_dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    Vae::new(arch, cfg.mode, &mut rng)
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions<'a> {
    /// Where checkpoints are written; none if unset.
    pub checkpoint: Option<&'a Path>,
    /// Stored in every checkpoint header.
    pub fingerprint: [u8; 32],
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: Vae<T>,
    pub log: Vec<EpochLog>,
    /// Wall time of all optimization steps.
    pub train_seconds: f64,
    /// Part of `train_seconds` spent building the regularizer terms.
    pub kld_seconds: f64,
}

/// Trains a fresh model on the rows of `images`.
///
/// Batch order comes from `(cfg.seed, epoch)`; the reparameterization noise
/// from a second generator keyed the same way. `on_epoch` sees each log row
/// as soon as it is computed.
pub fn train<T: Scalar>(
    images: &Tensor<T>,
    cfg: &TrainConfig,
    prior: &PriorSpec<T>,
    opts: &TrainOptions<'_>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if cfg.mode == crate::vae::Mode::Hyperspherical {
        prior.validate(cfg.latent_dim)?;
    }
    if images.shape().len() != 2 || images.rows() == 0 {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let m = images.rows();
    let n = cfg.latent_dim;
    let mut model = init_model::<T>(cfg, images.cols())?;
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    });

    let mut log = Vec::with_capacity(cfg.epochs + 1);
    let e0 = evaluate(&model, images, cfg, prior)?;
    let row = log_row(0, e0, beta_schedule(0, cfg.beta_max, cfg.anneal_epochs), 0.0);
    on_epoch(&row);
    log.push(row);

    let (mut train_seconds, mut kld_seconds) = (0.0, 0.0);
    for epoch in 1..=cfg.epochs {
        let beta = beta_schedule(epoch, cfg.beta_max, cfg.anneal_epochs);
        let s = settings(cfg, T::lit(beta));
        let order = batches(m, cfg.batch_size, cfg.seed, epoch as u64)?;
        let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        noise.set_stream(epoch as u64);

        let start = Instant::now();
        for (b, idx) in order.iter().enumerate() {
            let mut tape = Tape::new();
            let vars = model.register(&mut tape);
            let x = tape.constant(images.gather_rows(idx));
            let e = model.encode(&mut tape, &vars, x).map_err(|err| numeric(err, epoch, b))?;
            let eps = tape.constant(gaussian_with(&mut noise, idx.len(), n));
            let z = model.reparameterize(&mut tape, &e, eps)?;
            let x_hat = model.decode(&mut tape, &vars, z).map_err(|err| numeric(err, epoch, b))?;
            let t = Instant::now();
            let parts = total_loss(&mut tape, x, x_hat, &e, &s, prior)?;
            kld_seconds += t.elapsed().as_secs_f64();
            if !tape.scalar(parts.total).is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let grads = tape.backward(parts.total)?;
            model.params.load_grads(&grads, &vars)?;
            adam.step(&mut model.params).map_err(|err| numeric(err, epoch, b))?;
        }
        let seconds = start.elapsed().as_secs_f64();
        train_seconds += seconds;

        let ev = evaluate(&model, images, cfg, prior)?;
        let row = log_row(epoch, ev, beta, seconds);
        on_epoch(&row);
        log.push(row);

        let due = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
        if let Some(path) = opts.checkpoint {
            if due || epoch == cfg.epochs {
                save_checkpoint(path, &model, epoch as u32, &opts.fingerprint)?;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        train_seconds,
        kld_seconds,
    })
}

fn log_row(epoch: usize, e: Evaluation, beta: f64, seconds: f64) -> EpochLog {
    EpochLog {
        epoch,
        mse: e.mse,
        kld_angles: e.kld_angles,
        kld_radius: e.kld_radius,
        kld_total: e.kld_total,
        beta,
        seconds,
    }
}

/// Non-finite activations or gradients abort the run with its position.
fn numeric(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFiniteActivation { .. } | Error::NonFiniteGrad(_) => {
            log::error!("{err}");
            Error::NonFiniteLoss { epoch, batch }
        }
        other => other,
    }
}
