//! Training objectives: the conditional ELBO loss and the two
//! discriminative objectives built from it.

use serde::{Deserialize, Serialize};

use super::networks::{
    decode_vars, encode_vars, gaussian_kld_vars, graph_log_likelihood_vars, prior_vars,
    reparameterize_vars,
};
use super::params::{BoundParams, GcvaeParams, Hyperparams};
use super::ModelError;
use crate::graph::{Graph, Label};
use crate::numerics::{Gradients, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// One GCVAE per label, each trained on the c-ELBO of its own graphs.
    TwoTower,
    /// One shared GCVAE trained on the c-ELBO with the observed label.
    Celbo,
    /// Maximise `Σ -y (L(y=+1) - L(y=-1))`.
    Discriminative,
    /// Minimise `Σ -ln σ(y (L(y=-1) - L(y=+1)))`.
    DiscriminativeLogistic,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::TwoTower,
        Objective::Celbo,
        Objective::Discriminative,
        Objective::DiscriminativeLogistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::TwoTower => "two-tower",
            Objective::Celbo => "celbo",
            Objective::Discriminative => "discriminative",
            Objective::DiscriminativeLogistic => "discriminative-logistic",
        }
    }

    pub fn is_discriminative(self) -> bool {
        matches!(
            self,
            Objective::Discriminative | Objective::DiscriminativeLogistic
        )
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| {
                format!("unknown objective {s:?}; expected two-tower, celbo, discriminative or discriminative-logistic")
            })
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `L(A, X, y; θ) = -E_q[ln p(A, X | y, z)] + KL(q(z | A, X, y) ‖ p(z | y))`
/// with the expectation replaced by one reparameterised draw at `noise`.
pub fn celbo_loss(
    tape: &mut Tape,
    params: &BoundParams,
    hp: &Hyperparams,
    graph: &Graph,
    y: Label,
    noise: &[f64],
) -> Result<Var, ModelError> {
    if noise.len() != hp.d_z {
        return Err(ModelError::Shape(format!(
            "noise has width {}, model expects {}",
            noise.len(),
            hp.d_z
        )));
    }
    let q = encode_vars(tape, params, hp, graph, y)?;
    let p = prior_vars(tape, params, y)?;
    let z = reparameterize_vars(tape, q, noise)?;
    let decoded = decode_vars(tape, params, z, y)?;
    let recon = graph_log_likelihood_vars(tape, hp, graph, &decoded)?;
    let kld = gaussian_kld_vars(tape, q, p)?;
    Ok(tape.sub(kld, recon)?)
}

/// `L(y=+1) - L(y=-1)` with the same noise in both branches.
fn loss_gap(
    tape: &mut Tape,
    params: &BoundParams,
    hp: &Hyperparams,
    graph: &Graph,
    noise: &[f64],
) -> Result<Var, ModelError> {
    let pos = celbo_loss(tape, params, hp, graph, Label::Pos, noise)?;
    let neg = celbo_loss(tape, params, hp, graph, Label::Neg, noise)?;
    Ok(tape.sub(pos, neg)?)
}

fn require_label(graph: &Graph, index: usize) -> Result<Label, ModelError> {
    graph.label.ok_or(ModelError::Unlabeled { index })
}

/// The discriminative objective `Σⱼ -yʲ [L(Aʲ,Xʲ,+1) - L(Aʲ,Xʲ,-1)]`, a
/// quantity to maximise. `noise[j]` is shared by both label branches of
/// graph `j`.
pub fn discriminative_objective(
    tape: &mut Tape,
    params: &BoundParams,
    hp: &Hyperparams,
    batch: &[Graph],
    noise: &[Vec<f64>],
) -> Result<Var, ModelError> {
    if noise.len() != batch.len() {
        return Err(ModelError::Shape(format!(
            "{} noise vectors for {} graphs",
            noise.len(),
            batch.len()
        )));
    }
    let mut terms = Vec::with_capacity(batch.len());
    for (j, (graph, eps)) in batch.iter().zip(noise).enumerate() {
        let y = require_label(graph, j)?;
        let gap = loss_gap(tape, params, hp, graph, eps)?;
        terms.push(tape.scale(gap, -y.sign())?);
    }
    let stacked = tape.concat(&terms)?;
    Ok(tape.sum(stacked)?)
}

/// Bounded variant: `Σⱼ softplus(yʲ [L(+1) - L(-1)])`, a loss to minimise.
pub fn discriminative_logistic_loss(
    tape: &mut Tape,
    params: &BoundParams,
    hp: &Hyperparams,
    batch: &[Graph],
    noise: &[Vec<f64>],
) -> Result<Var, ModelError> {
    if noise.len() != batch.len() {
        return Err(ModelError::Shape(format!(
            "{} noise vectors for {} graphs",
            noise.len(),
            batch.len()
        )));
    }
    let mut terms = Vec::with_capacity(batch.len());
    for (j, (graph, eps)) in batch.iter().zip(noise).enumerate() {
        let y = require_label(graph, j)?;
        let gap = loss_gap(tape, params, hp, graph, eps)?;
        let signed = tape.scale(gap, y.sign())?;
        terms.push(tape.softplus(signed)?);
    }
    let stacked = tape.concat(&terms)?;
    Ok(tape.sum(stacked)?)
}

/// Per-graph loss to minimise under `objective`. `label` is the label the
/// generative objectives condition on.
pub(crate) fn graph_training_loss(
    tape: &mut Tape,
    params: &BoundParams,
    hp: &Hyperparams,
    graph: &Graph,
    label: Label,
    objective: Objective,
    noise: &[f64],
) -> Result<Var, ModelError> {
    match objective {
        Objective::TwoTower | Objective::Celbo => celbo_loss(tape, params, hp, graph, label, noise),
        Objective::Discriminative => {
            let gap = loss_gap(tape, params, hp, graph, noise)?;
            Ok(tape.scale(gap, label.sign())?)
        }
        Objective::DiscriminativeLogistic => {
            let gap = loss_gap(tape, params, hp, graph, noise)?;
            let signed = tape.scale(gap, label.sign())?;
            Ok(tape.softplus(signed)?)
        }
    }
}

/// Value of [`celbo_loss`] on a fresh tape.
pub fn celbo_loss_value(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
    noise: &[f64],
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let loss = celbo_loss(&mut tape, &bound, params.hyper(), graph, y, noise)?;
    Ok(tape.scalar(loss))
}

/// Value and parameter gradients of [`celbo_loss`].
pub fn celbo_loss_with_gradients(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
    noise: &[f64],
) -> Result<(f64, Gradients), ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let loss = celbo_loss(&mut tape, &bound, params.hyper(), graph, y, noise)?;
    Ok((tape.scalar(loss), tape.backprop(loss)?))
}
