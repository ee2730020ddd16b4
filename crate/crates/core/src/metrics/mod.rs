//! Evaluation: latent k-NN accuracy, sphere projection, Fréchet distance
//! and a proxy self-FID.

mod fid;
mod frechet;
mod knn;
pub mod proxy;
mod projection;

pub use fid::{
    feature_distance, fit_latent_vmf, latent_codes, latent_samples, self_fid_proxy, SampleSource, SelfFid,
    DEGENERATE_EIGENVALUE, REGULARIZATION,
};
pub use frechet::{frechet_distance, GaussianFit};
pub use knn::knn_accuracy;
pub use projection::{default_groups, max_pairwise_angle, project_3sphere, SphereProjection};
pub use proxy::{ProxyExtractor, ProxyTrainConfig};
