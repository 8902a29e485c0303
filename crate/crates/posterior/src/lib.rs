//! Stage-two inference: posterior over the latent input of a trained
//! functional prior given noisy measurements.

pub mod error;
pub mod likelihood;
pub mod model;
pub mod nuts;
pub mod observation;
pub mod summary;
pub mod vi;

pub use error::{PosteriorError, Result};
pub use likelihood::{log_likelihood, log_likelihood_tape, log_posterior_grad, log_prior_xi};
pub use model::{LatentModel, LinearModel};
pub use nuts::{leapfrog_energy, nuts_latent, nuts_sample, LatentPosterior, LogDensity, NutsConfig, NutsResult};
pub use observation::{group_observations, FieldObservations, Observation};
pub use summary::{column_moments, coverage_fraction, posterior_summary, rms_difference, PosteriorSummary};
pub use vi::{flow_draws, vi_loss_full, vi_loss_minibatch, vi_train, Batching, ViConfig, ViResult};
