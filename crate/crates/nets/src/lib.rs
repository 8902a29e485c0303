//! Network architectures used by the prior and posterior stages.

pub mod checkpoint;
pub mod deeponet;
pub mod error;
pub mod generator;
pub mod iaf;
pub mod mlp;

pub use checkpoint::Checkpoint;
pub use deeponet::{deeponet_train, DeepOnet, DeepOnetData, DeepOnetTrainConfig, DeepOnetTrainReport};
pub use error::NetError;
pub use generator::GeneratorNet;
pub use iaf::{iaf_log_density, IafFlow, IafSpec};
pub use mlp::{Activation, Mlp, MlpSpec};
