//! The VAE model, its losses, priors, schedules and training loop.

pub mod checkpoint;
mod config;
pub mod loss;
mod model;
mod prior;
mod schedule;
mod train;

pub use config::{KldReduction, Mode, TrainConfig};
pub use model::{reparameterize, Architecture, EncoderOutput, Vae};
pub use prior::{PriorSpec, DEFAULT_B_MU_ANGLE};
pub use schedule::{beta_schedule, gain_schedule};
pub use train::{
    evaluate, init_model, log_to_csv, reconstruction_mse, train, EpochLog, Evaluation, TrainOptions, TrainOutcome,
    EVAL_CHUNK, LOG_HEADER,
};
