//! The class-conditional graph VAE: parameters, networks, objectives and
//! training.

mod file;
mod networks;
mod objective;
mod params;
mod train;

pub use file::{ModelFile, MODEL_FORMAT_VERSION};
pub use networks::{
    decode, decode_vars, encode, encode_vars, gaussian_kld_vars, graph_log_likelihood,
    graph_log_likelihood_vars, prior, prior_vars, reparameterize_vars, DecodedGraph, DecodedVars,
};
pub use objective::{
    celbo_loss, celbo_loss_value, celbo_loss_with_gradients, discriminative_logistic_loss,
    discriminative_objective, Objective,
};
pub use params::{BoundParams, GcvaeParams, Hyperparams, Part};
pub use train::{
    fit, fit_observed, AccessEvent, Adam, EpochRecord, FitOutcome, TrainConfig, TrainedModel,
    TwoTowerModel,
};

pub(crate) use networks::check_graph;

use thiserror::Error;

use crate::graph::{GraphError, Label};
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("graph {index} is unlabeled")]
    Unlabeled { index: usize },
    #[error("training set has no graphs labelled {0}")]
    EmptyClass(Label),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("validation scoring failed: {0}")]
    Validation(String),
}
