use crate::diffcore::Tensor;
use crate::distributions::{fit_vmf, sample_gaussian, sample_vmf, VmfParams};
use crate::error::{Error, Result};
use crate::hypersphere::normalize_to_radius;
use crate::metrics::frechet::{frechet_distance, GaussianFit};
use crate::metrics::proxy::ProxyExtractor;
use crate::scalar::Scalar;
use crate::vae::{Mode, Vae, EVAL_CHUNK};

/// Covariances whose smallest eigenvalue falls below this are treated as
/// degenerate.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-12;
pub const REGULARIZATION: f64 = 1e-6;

/// Where generated latent codes come from.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleSource<T> {
    /// Standard normal codes; projected to radius `sqrt(n)` for a
    /// hyperspherical model.
    Prior,
    /// vMF directions scaled to radius `sqrt(n)`.
    Vmf(VmfParams<T>),
    /// Fixed codes, used in order.
    Latents(Tensor<T>),
}

/// `count` latent codes drawn from `source` for `model`.
pub fn latent_samples<T: Scalar>(model: &Vae<T>, source: &SampleSource<T>, count: usize, seed: u64) -> Result<Tensor<T>> {
    let n = model.latent_dim();
    match source {
        SampleSource::Prior => {
            let z = sample_gaussian::<T>(count, n, seed);
            match model.mode {
                Mode::Standard => Ok(z),
                Mode::Hyperspherical => normalize_to_radius(&z, model.latent_radius()),
            }
        }
        SampleSource::Vmf(p) => {
            if p.dim() != n {
                return Err(Error::shape("latent_samples", &[n], &[p.dim()]));
            }
            let r = model.latent_radius();
            Ok(sample_vmf(p, count, seed).map(|v| v * r))
        }
        SampleSource::Latents(z) => {
            if z.cols() != n || z.rows() < count {
                return Err(Error::shape("latent_samples", &[count, n], z.shape()));
            }
            let idx: Vec<usize> = (0..count).collect();
            Ok(z.gather_rows(&idx))
        }
    }
}

/// Latent codes the model assigns to `images`: encoder means, projected to
/// radius `sqrt(n)` in hyperspherical mode.
pub fn latent_codes<T: Scalar>(model: &Vae<T>, images: &Tensor<T>) -> Result<Tensor<T>> {
    let mu = model.embed(images, EVAL_CHUNK)?;
    match model.mode {
        Mode::Standard => Ok(mu),
        Mode::Hyperspherical => normalize_to_radius(&mu, model.latent_radius()),
    }
}

/// vMF fit to the directions of the encoder means of `images`.
pub fn fit_latent_vmf<T: Scalar>(model: &Vae<T>, images: &Tensor<T>) -> Result<VmfParams<T>> {
    fit_vmf(&model.embed(images, EVAL_CHUNK)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfFid {
    pub value: f64,
    pub count: usize,
    /// Set when a covariance was degenerate and got `+1e-6 I`.
    pub regularized: bool,
}

fn checked_fit(features: &Tensor<f64>, regularized: &mut bool) -> Result<GaussianFit> {
    let fit = GaussianFit::fit(features)?;
    if fit.min_eigenvalue() < DEGENERATE_EIGENVALUE {
        log::warn!("degenerate feature covariance; adding {REGULARIZATION:e} I");
        *regularized = true;
        Ok(fit.regularized(REGULARIZATION))
    } else {
        Ok(fit)
    }
}

/// Fréchet distance between extractor features of `images_a` and
/// `images_b`.
pub fn feature_distance<T: Scalar, U: Scalar>(
    extractor: &ProxyExtractor<U>,
    images_a: &Tensor<T>,
    images_b: &Tensor<T>,
) -> Result<SelfFid> {
    let fa: Tensor<f64> = extractor.features(&images_a.cast())?.cast();
    let fb: Tensor<f64> = extractor.features(&images_b.cast())?.cast();
    let mut regularized = false;
    let a = checked_fit(&fa, &mut regularized)?;
    let b = checked_fit(&fb, &mut regularized)?;
    Ok(SelfFid {
        value: frechet_distance(&a, &b)?,
        count: images_a.rows().min(images_b.rows()),
        regularized,
    })
}

/// Fréchet distance in proxy-feature space between `count` decoded samples
/// from `source` and the reconstructions of the first `count` test images.
pub fn self_fid_proxy<T: Scalar, U: Scalar>(
    model: &Vae<T>,
    test_images: &Tensor<T>,
    source: &SampleSource<T>,
    extractor: &ProxyExtractor<U>,
    count: usize,
    seed: u64,
) -> Result<SelfFid> {
    if count < 2 || count > test_images.rows() {
        return Err(Error::Invalid(format!(
            "self-FID count {count} must be in 2..={} (test rows)",
            test_images.rows()
        )));
    }
    let idx: Vec<usize> = (0..count).collect();
    let recon = model.reconstruct(&test_images.gather_rows(&idx), EVAL_CHUNK)?;
    let z = latent_samples(model, source, count, seed)?;
    let generated = model.decode_batch(&z, EVAL_CHUNK)?;
    feature_distance(extractor, &generated, &recon)
}
