use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hsvae::data::{fetch_dataset, load_split_from_dir, sha256_hex, Dataset, Split};
use hsvae::distributions::{concentration_report, fit_vmf};
use hsvae::metrics::proxy::{load_pinned, pinned_weights_path, train_proxy as fit_proxy};
use hsvae::metrics::{
    default_groups, fit_latent_vmf, knn_accuracy, latent_codes, latent_samples, max_pairwise_angle, project_3sphere,
    self_fid_proxy, ProxyExtractor, ProxyTrainConfig, SampleSource,
};
use hsvae::vae::checkpoint::load_checkpoint;
use hsvae::vae::{reconstruction_mse, train as fit, Mode, PriorSpec, TrainOptions, TrainOutcome, Vae, EVAL_CHUNK, LOG_HEADER};
use hsvae::Scalar;

use crate::config::RunConfig;
use crate::output::{append_csv, fingerprint_line, read_matrix_csv, tensor_csv_rows, write_csv, write_png_grid};
use crate::{CliError, SourceArg};

pub const METRICS_HEADER: &str = "metric,mode,n,beta,value,count,seed,fingerprint,timestamp";
pub const SWEEP_HEADER: &str = "mode,beta,n,mse,self_fid_proxy,status";

fn load_split<T: Scalar>(c: &RunConfig, split: Split) -> Result<Dataset<T>, CliError> {
    let ds = match &c.data.idx_dir {
        Some(dir) => load_split_from_dir(dir, split)?,
        None => fetch_dataset(&c.data.cache_dir(), &c.data.source(), split)?,
    };
    let limit = match split {
        Split::Train => c.data.train_limit,
        Split::Test => c.data.test_limit,
    };
    Ok(match limit {
        Some(l) => ds.truncated(l),
        None => ds,
    })
}

fn prior_for(c: &RunConfig) -> Result<PriorSpec<f64>, CliError> {
    match c.train.mode {
        Mode::Hyperspherical => c.prior.resolve(c.train.latent_dim),
        Mode::Standard => Ok(PriorSpec::compression(c.train.latent_dim)),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn load_model(path: &Path) -> Result<(Vae<f64>, [u8; 32]), CliError> {
    let (header, model) = load_checkpoint::<f64>(path)?;
    Ok((model, header.fingerprint))
}

fn load_extractor(c: &RunConfig) -> Result<ProxyExtractor<f32>, CliError> {
    Ok(match &c.eval.proxy_weights {
        Some(p) => ProxyExtractor::load(p)?,
        None => load_pinned()?,
    })
}

/// Trains with `c` writing model.ckpt, train_log.csv, timing.csv and
/// config.toml to `dir`.
fn train_into(c: &RunConfig, train_set: &Dataset<f64>, dir: &Path) -> Result<TrainOutcome<f64>, CliError> {
    create_dir(dir)?;
    let fp = c.fingerprint();
    fs::write(dir.join("config.toml"), c.to_toml())?;
    let prior = prior_for(c)?;
    let log_path = dir.join("train_log.csv");
    fs::write(&log_path, format!("{}{LOG_HEADER}\n", fingerprint_line(&fp)))?;
    let ckpt = dir.join("model.ckpt");
    let opts = TrainOptions {
        checkpoint: Some(&ckpt),
        fingerprint: fp,
    };
    let mut write_err = None;
    let outcome = fit(train_set.images(), &c.train, &prior, &opts, |row| {
        log::info!(
            "epoch {:>4}  mse {:.4}  kld {:.4}  beta {:.3}  {:.1}s",
            row.epoch,
            row.mse,
            row.kld_total,
            row.beta,
            row.seconds
        );
        if let Err(e) = append_csv(&log_path, LOG_HEADER, &[row.csv_row()]) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let overhead = 100.0 * outcome.kld_seconds / (outcome.train_seconds - outcome.kld_seconds).max(f64::MIN_POSITIVE);
    let per_epoch = outcome.train_seconds / c.train.epochs as f64;
    write_csv(
        &dir.join("timing.csv"),
        &fp,
        "mode,epochs,train_seconds,seconds_per_epoch,kld_seconds,kld_overhead_pct",
        &[format!(
            "{},{},{:.6},{:.6},{:.6},{:.3}",
            c.train.mode, c.train.epochs, outcome.train_seconds, per_epoch, outcome.kld_seconds, overhead
        )],
    )?;
    println!(
        "trained {} epochs in {:.1}s ({:.2}s/epoch); loss-term construction {:.1}s ({overhead:.1}% of the rest)",
        c.train.epochs, outcome.train_seconds, per_epoch, outcome.kld_seconds
    );
    Ok(outcome)
}

pub fn train(c: &RunConfig) -> Result<(), CliError> {
    let train_set = load_split::<f64>(c, Split::Train)?;
    let dir = c.out_dir();
    train_into(c, &train_set, &dir)?;
    println!("wrote {}", dir.join("model.ckpt").display());
    Ok(())
}

pub fn train_proxy(c: &RunConfig, weights: Option<PathBuf>, epochs: usize, min_accuracy: f64) -> Result<(), CliError> {
    let train_set = load_split::<f32>(c, Split::Train)?;
    let test_set = load_split::<f32>(c, Split::Test)?;
    let cfg = ProxyTrainConfig {
        epochs,
        seed: c.train.seed,
        ..ProxyTrainConfig::default()
    };
    let mut last = 0.0;
    let model = fit_proxy(&train_set, &test_set, &cfg, |epoch, secs, acc| {
        println!("epoch {epoch}: test accuracy {acc:.4} ({secs:.1}s)");
        last = acc;
    })?;
    if last < min_accuracy {
        return Err(CliError::Runtime(format!("test accuracy {last:.4} below required {min_accuracy}")));
    }
    let path = weights.unwrap_or_else(pinned_weights_path);
    model.save(&path)?;
    println!("wrote {} (sha256 {})", path.display(), sha256_hex(&model.to_bytes()));
    Ok(())
}

fn image_side(d: usize) -> Option<usize> {
    let s = (d as f64).sqrt().round() as usize;
    (s * s == d).then_some(s)
}

pub fn generate(
    checkpoint: &Path,
    count: usize,
    source: SourceArg,
    reference: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Config("--count must be positive".into()));
    }
    let (model, fp) = load_model(checkpoint)?;
    let src = match source {
        SourceArg::Prior => SampleSource::Prior,
        SourceArg::Vmf => {
            let path = reference.ok_or_else(|| CliError::Config("`--source vmf` needs `--reference <latents.csv>`".into()))?;
            let latents = read_matrix_csv(path)?;
            if latents.cols() != model.latent_dim() {
                return Err(CliError::Data(format!(
                    "reference latents have {} columns, model has n = {}",
                    latents.cols(),
                    model.latent_dim()
                )));
            }
            SampleSource::Vmf(fit_vmf(&latents)?)
        }
    };
    create_dir(out)?;
    if let SampleSource::Vmf(p) = &src {
        let header = std::iter::once("kappa".to_string())
            .chain((1..=p.dim()).map(|i| format!("u{i}")))
            .collect::<Vec<_>>()
            .join(",");
        let row = std::iter::once(format!("{:e}", p.kappa()))
            .chain(p.mean_direction().iter().map(|v| format!("{v:e}")))
            .collect::<Vec<_>>()
            .join(",");
        write_csv(&out.join("vmf_fit.csv"), &fp, &header, &[row])?;
    }
    let z = latent_samples(&model, &src, count, seed)?;
    let images = model.decode_batch(&z, EVAL_CHUNK)?;
    let (header, rows) = tensor_csv_rows(&z);
    write_csv(&out.join("latents.csv"), &fp, &header, &rows)?;
    match image_side(model.arch.input_dim) {
        Some(side) => write_png_grid(&out.join("samples.png"), &images, side, &fp)?,
        None => log::warn!("input dimension {} is not square; no image grid written", model.arch.input_dim),
    }
    println!("wrote {count} samples to {}", out.display());
    Ok(())
}

const KNOWN_METRICS: &[&str] = &["mse", "knn", "self_fid", "concentration"];

/// Evaluation results as (metric, value, count) triples.
fn compute_metrics(
    c: &RunConfig,
    model: &Vae<f64>,
    train_set: Option<&Dataset<f64>>,
    test_set: &Dataset<f64>,
    out: &Path,
    fp: &[u8; 32],
) -> Result<Vec<(String, f64, usize)>, CliError> {
    let mut rows = Vec::new();
    for m in &c.eval.metrics {
        match m.as_str() {
            "mse" => {
                let ds = if c.eval.mse_split == "train" { train_set.expect("loaded") } else { test_set };
                rows.push((format!("mse_{}", c.eval.mse_split), reconstruction_mse(model, ds.images())?, ds.len()));
            }
            "knn" => {
                let tr = train_set.expect("loaded");
                let a = latent_codes(model, tr.images())?;
                let b = latent_codes(model, test_set.images())?;
                let acc = knn_accuracy(&a, tr.labels(), &b, test_set.labels(), c.eval.knn_k)?;
                rows.push(("knn_accuracy".into(), acc, test_set.len()));
            }
            "self_fid" => {
                let extractor = load_extractor(c)?;
                let source = match model.mode {
                    Mode::Standard => SampleSource::Prior,
                    Mode::Hyperspherical => SampleSource::Vmf(fit_latent_vmf(model, test_set.images())?),
                };
                let count = c.eval.fid_count.min(test_set.len());
                let r = self_fid_proxy(model, test_set.images(), &source, &extractor, count, c.train.seed)?;
                rows.push(("self_fid_proxy".into(), r.value, r.count));
                rows.push(("self_fid_regularized".into(), if r.regularized { 1.0 } else { 0.0 }, r.count));
            }
            "concentration" => {
                let mu = model.embed(test_set.images(), EVAL_CHUNK)?;
                let report = concentration_report(&mu)?;
                let body = report.to_csv();
                fs::write(out.join("concentration.csv"), format!("{}{body}", fingerprint_line(fp)))?;
                for r in &report.rows {
                    rows.push((format!("concentration_{}", r.statistic), r.empirical, report.count));
                }
            }
            other => return Err(CliError::Config(format!("unknown metric `{other}` (known: {})", KNOWN_METRICS.join(", ")))),
        }
    }
    Ok(rows)
}

fn check_metrics(c: &RunConfig) -> Result<(), CliError> {
    if c.eval.metrics.is_empty() {
        return Err(CliError::Config("metric list is empty".into()));
    }
    if let Some(m) = c.eval.metrics.iter().find(|m| !KNOWN_METRICS.contains(&m.as_str())) {
        return Err(CliError::Config(format!("unknown metric `{m}` (known: {})", KNOWN_METRICS.join(", "))));
    }
    Ok(())
}

pub fn eval(c: &RunConfig, checkpoint: &Path) -> Result<(), CliError> {
    check_metrics(c)?;
    let (model, fp) = load_model(checkpoint)?;
    let needs_train = c.eval.metrics.iter().any(|m| m == "knn" || (m == "mse" && c.eval.mse_split == "train"));
    let train_set = if needs_train { Some(load_split::<f64>(c, Split::Train)?) } else { None };
    let test_set = load_split::<f64>(c, Split::Test)?;
    let out = c.out_dir();
    create_dir(&out)?;
    let results = compute_metrics(c, &model, train_set.as_ref(), &test_set, &out, &fp)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let rows: Vec<String> = results
        .iter()
        .map(|(metric, value, count)| {
            println!("{metric:<32} {value:.6}");
            format!(
                "{metric},{},{},{},{value:e},{count},{},{},{stamp}",
                model.mode,
                model.latent_dim(),
                c.train.beta_max,
                c.train.seed,
                hex::encode(fp)
            )
        })
        .collect();
    append_csv(&out.join("metrics.csv"), METRICS_HEADER, &rows)?;
    Ok(())
}

pub fn project(c: &RunConfig, checkpoint: &Path) -> Result<(), CliError> {
    let (model, fp) = load_model(checkpoint)?;
    let test_set = load_split::<f64>(c, Split::Test)?;
    let mu = model.embed(test_set.images(), EVAL_CHUNK)?;
    let p = project_3sphere(&mu, &default_groups(model.latent_dim()))?;
    let rows: Vec<String> = p
        .points
        .iter_rows()
        .zip(&p.kept)
        .map(|(r, &i)| format!("{:e},{:e},{:e},{}", r[0], r[1], r[2], test_set.labels()[i]))
        .collect();
    let out = c.out_dir();
    create_dir(&out)?;
    write_csv(&out.join("projection.csv"), &fp, "x,y,z,label", &rows)?;
    println!(
        "projected {} rows ({} flagged); max pairwise angle {:.4} rad",
        p.kept.len(),
        p.flagged.len(),
        max_pairwise_angle(&p.points)
    );
    Ok(())
}

fn sweep_cell(
    c: &RunConfig,
    train_set: &Dataset<f64>,
    test_set: &Dataset<f64>,
    extractor: &ProxyExtractor<f32>,
    dir: &Path,
) -> Result<(f64, f64), CliError> {
    c.validate()?;
    let outcome = train_into(c, train_set, dir)?;
    let model = outcome.model;
    let mse = reconstruction_mse(&model, test_set.images())?;
    let source = match model.mode {
        Mode::Standard => SampleSource::Prior,
        Mode::Hyperspherical => SampleSource::Vmf(fit_latent_vmf(&model, test_set.images())?),
    };
    let count = c.eval.fid_count.min(test_set.len());
    let fid = self_fid_proxy(&model, test_set.images(), &source, extractor, count, c.train.seed)?;
    Ok((mse, fid.value))
}

pub fn sweep(c: &RunConfig) -> Result<(), CliError> {
    if c.sweep.betas.is_empty() || c.sweep.latent_dims.is_empty() || c.sweep.modes.is_empty() {
        return Err(CliError::Config("sweep needs at least one beta, latent dimension and mode".into()));
    }
    let train_set = load_split::<f64>(c, Split::Train)?;
    let test_set = load_split::<f64>(c, Split::Test)?;
    let extractor = load_extractor(c)?;
    let out = c.out_dir();
    create_dir(&out)?;
    let mut rows = Vec::new();
    for &mode in &c.sweep.modes {
        for &beta in &c.sweep.betas {
            for &n in &c.sweep.latent_dims {
                let mut cell = c.clone();
                cell.train.mode = mode;
                cell.train.beta_max = beta;
                cell.train.latent_dim = n;
                let dir = out.join("cells").join(format!("{mode}_beta{beta}_n{n}"));
                log::info!("sweep cell {mode} beta={beta} n={n}");
                let row = match sweep_cell(&cell, &train_set, &test_set, &extractor, &dir) {
                    Ok((mse, fid)) => format!("{mode},{beta},{n},{mse:e},{fid:e},ok"),
                    Err(e) => {
                        log::error!("cell {mode} beta={beta} n={n} failed: {e}");
                        let msg = e.to_string().replace([',', '\n'], ";");
                        format!("{mode},{beta},{n},,,{msg}")
                    }
                };
                rows.push(row);
            }
        }
    }
    write_csv(&out.join("sweep.csv"), &c.fingerprint(), SWEEP_HEADER, &rows)?;
    println!("wrote {} rows to {}", rows.len(), out.join("sweep.csv").display());
    Ok(())
}
