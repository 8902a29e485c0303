//! Stage-one prior learning.

pub mod error;
pub mod gan;
pub mod grid;
pub mod prior;

pub use error::{PriorError, Result};
pub use gan::{
    critic_losses, gradient_penalty, gradient_penalty_tape, standard_discriminator, train_prior, wgan_losses,
    GanRecord, GanTrainConfig,
};
pub use grid::{FieldTag, FunctionDataset, SensorGrid};
pub use prior::{compose_operator_prior, pigan_fake_sample, GeneratorPrior, PriorKind};
