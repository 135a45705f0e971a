//! Test-time class-conditional likelihoods, log-odds and classification
//! metrics.
//!
//! Four scorers estimate `ln p(A, X | y)`:
//!
//! * `Deterministic` decodes at the prior mean of `p(z | y)`.
//! * `MonteCarlo` averages `p(A, X | y, z)` over draws from the prior.
//! * `Importance` draws from the recognition network and reweights by
//!   `p(z | y) / q(z | A, X, y)`.
//! * `Celbo` plugs in the conditional ELBO (the surrogate the
//!   discriminative objectives train).
//!
//! Sampling averages are taken in log space. The same seed drives both
//! label branches of a log-odds computation.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Dataset, Graph, GraphError, Label};
use crate::model::{
    celbo_loss_value, check_graph, decode, encode, graph_log_likelihood, prior, GcvaeParams,
    ModelError, TrainedModel,
};
use crate::numerics::{
    adaptive_simpson, gaussian_kld, gaussian_log_density, logsumexp, reparameterize, sigmoid,
    softplus, GaussianParams, NumericsError, LN_2PI,
};
use crate::seeding::{derive_seed, rng_from};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("sampling estimators need at least one sample")]
    ZeroSamples,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("graph {index} is unlabeled")]
    Unlabeled { index: usize },
    #[error("log-odds must be finite, got {0}")]
    NonFiniteLogOdds(f64),
    #[error("class priors must lie in (0, 1) and sum to 1, got ({0}, {1})")]
    InvalidPriors(f64, f64),
    #[error("quadrature needs a one-dimensional latent, model has d_z={0}")]
    LatentWidth(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(alias = "det")]
    Deterministic,
    #[serde(alias = "mc")]
    MonteCarlo,
    #[serde(alias = "is")]
    Importance,
    Celbo,
}

impl Method {
    pub fn short_name(self) -> &'static str {
        match self {
            Method::Deterministic => "det",
            Method::MonteCarlo => "mc",
            Method::Importance => "is",
            Method::Celbo => "celbo",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" | "deterministic" => Ok(Method::Deterministic),
            "mc" | "monte-carlo" => Ok(Method::MonteCarlo),
            "is" | "importance" => Ok(Method::Importance),
            "celbo" => Ok(Method::Celbo),
            other => Err(format!(
                "unknown inference method {other:?}; expected det, mc, is or celbo"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub method: Method,
    /// Sample count `S`; ignored by `Deterministic`.
    pub samples: usize,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn deterministic() -> Self {
        Self {
            method: Method::Deterministic,
            samples: 1,
            seed: 0,
        }
    }

    fn sample_count(&self) -> Result<usize, InferenceError> {
        if self.samples == 0 && self.method != Method::Deterministic {
            return Err(InferenceError::ZeroSamples);
        }
        Ok(self.samples)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPriors {
    pub p_pos: f64,
    pub p_neg: f64,
}

impl ClassPriors {
    pub fn new(p_pos: f64, p_neg: f64) -> Result<Self, InferenceError> {
        let ok = |p: f64| p > 0.0 && p < 1.0;
        if !ok(p_pos) || !ok(p_neg) || (p_pos + p_neg - 1.0).abs() > 1e-12 {
            return Err(InferenceError::InvalidPriors(p_pos, p_neg));
        }
        Ok(Self { p_pos, p_neg })
    }

    pub fn uniform() -> Self {
        Self {
            p_pos: 0.5,
            p_neg: 0.5,
        }
    }

    /// `ln P(y=+1) / P(y=-1)`.
    pub fn log_ratio(&self) -> f64 {
        self.p_pos.ln() - self.p_neg.ln()
    }
}

/// Laplace-smoothed label frequencies `(n₊+1)/(m+2)`, `(n₋+1)/(m+2)`.
pub fn estimate_class_priors(dataset: &Dataset) -> Result<ClassPriors, InferenceError> {
    if dataset.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    let labels = labels_of(dataset)?;
    let m = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l == Label::Pos).count() as f64;
    ClassPriors::new((pos + 1.0) / (m + 2.0), (m - pos + 1.0) / (m + 2.0))
}

fn labels_of(dataset: &Dataset) -> Result<Vec<Label>, InferenceError> {
    dataset.labels().map_err(|e| match e {
        GraphError::Unlabeled { index } => InferenceError::Unlabeled { index },
        other => InferenceError::Model(ModelError::Graph(other)),
    })
}

fn standard_normals(rng: &mut impl rand::Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn log_likelihood_at(graph: &Graph, y: Label, params: &GcvaeParams, z: &[f64]) -> Result<f64, InferenceError> {
    let decoded = decode(z, y, &graph.mask, params)?;
    Ok(graph_log_likelihood(graph, &decoded)?)
}

/// `ln p(A, X | y, z*)` at the prior mean `z* = E[z | y]`.
pub fn log_likelihood_deterministic(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
) -> Result<f64, InferenceError> {
    check_graph(graph, params.hyper())?;
    let p = prior(y, params)?;
    log_likelihood_at(graph, y, params, &p.mean)
}

/// `ln (1/S) Σ p(A, X | y, zˢ)` with `zˢ ~ p(z | y)`.
pub fn log_likelihood_monte_carlo(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
    cfg: &EstimatorConfig,
) -> Result<f64, InferenceError> {
    let samples = cfg.sample_count()?;
    check_graph(graph, params.hyper())?;
    let p = prior(y, params)?;
    sampled_estimate(graph, y, params, &p, None, samples, cfg.seed)
}

/// `ln (1/S) Σ p(A, X | y, zˢ) p(zˢ | y) / q(zˢ | A, X, y)` with
/// `zˢ ~ q(z | A, X, y)`.
pub fn log_likelihood_importance(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
    cfg: &EstimatorConfig,
) -> Result<f64, InferenceError> {
    let samples = cfg.sample_count()?;
    check_graph(graph, params.hyper())?;
    let q = encode(graph, y, params)?;
    let p = prior(y, params)?;
    sampled_estimate(graph, y, params, &q, Some(&p), samples, cfg.seed)
}

/// Draws from `proposal`; when `target_prior` is given, each term is
/// reweighted by `target_prior(z) / proposal(z)`.
fn sampled_estimate(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
    proposal: &GaussianParams,
    target_prior: Option<&GaussianParams>,
    samples: usize,
    seed: u64,
) -> Result<f64, InferenceError> {
    let mut rng = rng_from(seed);
    let mut terms = Vec::with_capacity(samples);
    for _ in 0..samples {
        let eps = standard_normals(&mut rng, proposal.dim());
        let z = reparameterize(proposal, &eps)?;
        let mut term = log_likelihood_at(graph, y, params, &z)?;
        if let Some(p) = target_prior {
            term += gaussian_log_density(&z, p)? - gaussian_log_density(&z, proposal)?;
        }
        terms.push(term);
    }
    Ok(logsumexp(&terms)? - (samples as f64).ln())
}

/// `-L(A, X, y)` averaged over `S` reparameterised draws.
pub fn log_likelihood_celbo(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
    cfg: &EstimatorConfig,
) -> Result<f64, InferenceError> {
    let samples = cfg.sample_count()?;
    let mut rng = rng_from(cfg.seed);
    let mut total = 0.0;
    for _ in 0..samples {
        let eps = standard_normals(&mut rng, params.hyper().d_z);
        total -= celbo_loss_value(graph, y, params, &eps)?;
    }
    Ok(total / samples as f64)
}

/// Half-width, in standard deviations, of the quadrature window.
const QUAD_HALF_WIDTH: f64 = 12.0;
const QUAD_TOLERANCE: f64 = 1e-12;

fn std_normal_density(u: f64) -> f64 {
    (-0.5 * (u * u + LN_2PI)).exp()
}

/// `∫ f(u) φ(u) du` over `±QUAD_HALF_WIDTH`, one Simpson run per unit
/// interval.
fn integrate_against_normal<F: Fn(f64) -> f64>(f: F) -> Result<f64, InferenceError> {
    let mut total = 0.0;
    let mut a = -QUAD_HALF_WIDTH;
    while a < QUAD_HALF_WIDTH {
        total += adaptive_simpson(|u| f(u) * std_normal_density(u), a, a + 1.0, QUAD_TOLERANCE, 40)?;
        a += 1.0;
    }
    Ok(total)
}

fn require_scalar_latent(params: &GcvaeParams) -> Result<(), InferenceError> {
    match params.hyper().d_z {
        1 => Ok(()),
        other => Err(InferenceError::LatentWidth(other)),
    }
}

/// `ln ∫ p(A, X | y, z) p(z | y) dz` by adaptive quadrature; requires
/// `d_z = 1`.
pub fn log_likelihood_quadrature(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
) -> Result<f64, InferenceError> {
    require_scalar_latent(params)?;
    check_graph(graph, params.hyper())?;
    let p = prior(y, params)?;
    let (m, s) = (p.mean[0], (0.5 * p.logvar[0]).exp());
    let ll = |u: f64| log_likelihood_at(graph, y, params, &[m + s * u]);
    // shift by the largest log-likelihood on a grid to keep exp in range
    let mut shift = f64::NEG_INFINITY;
    for k in 0..=480 {
        let u = -QUAD_HALF_WIDTH + k as f64 * (2.0 * QUAD_HALF_WIDTH / 480.0);
        shift = shift.max(ll(u)?);
    }
    let integral = integrate_against_normal(|u| match ll(u) {
        Ok(v) => (v - shift).exp(),
        Err(_) => f64::NAN,
    })?;
    Ok(shift + integral.ln())
}

/// `E_q[ln p(A, X | y, z)] - KL(q ‖ p)` with the expectation by adaptive
/// quadrature; requires `d_z = 1`.
pub fn celbo_quadrature(graph: &Graph, y: Label, params: &GcvaeParams) -> Result<f64, InferenceError> {
    require_scalar_latent(params)?;
    check_graph(graph, params.hyper())?;
    let q = encode(graph, y, params)?;
    let p = prior(y, params)?;
    let (m, s) = (q.mean[0], (0.5 * q.logvar[0]).exp());
    let expected = integrate_against_normal(|u| {
        log_likelihood_at(graph, y, params, &[m + s * u]).unwrap_or(f64::NAN)
    })?;
    Ok(expected - gaussian_kld(&q, &p)?)
}

/// Class-conditional log-likelihood under the configured method.
pub fn class_log_likelihood(
    graph: &Graph,
    y: Label,
    params: &GcvaeParams,
    cfg: &EstimatorConfig,
) -> Result<f64, InferenceError> {
    match cfg.method {
        Method::Deterministic => log_likelihood_deterministic(graph, y, params),
        Method::MonteCarlo => log_likelihood_monte_carlo(graph, y, params, cfg),
        Method::Importance => log_likelihood_importance(graph, y, params, cfg),
        Method::Celbo => log_likelihood_celbo(graph, y, params, cfg),
    }
}

/// `P(y=+1 | A, X) = σ(L)`.
pub fn class_probability(log_odds: f64) -> Result<f64, InferenceError> {
    if !log_odds.is_finite() {
        return Err(InferenceError::NonFiniteLogOdds(log_odds));
    }
    Ok(sigmoid(log_odds))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogOddsRecord {
    pub index: usize,
    pub ll_pos: f64,
    pub ll_neg: f64,
    pub log_odds: f64,
    pub pred: Label,
    pub p_pos: f64,
    #[serde(default)]
    pub label: Option<Label>,
}

impl LogOddsRecord {
    /// Record for a given log-odds; `L = 0` predicts `-1`.
    pub fn from_log_odds(
        index: usize,
        ll_pos: f64,
        ll_neg: f64,
        log_odds: f64,
        label: Option<Label>,
    ) -> Result<Self, InferenceError> {
        let p_pos = class_probability(log_odds)?;
        Ok(Self {
            index,
            ll_pos,
            ll_neg,
            log_odds,
            pred: if log_odds > 0.0 { Label::Pos } else { Label::Neg },
            p_pos,
            label,
        })
    }
}

/// `L = ln p(A,X | +1) - ln p(A,X | -1) + ln P(+1)/P(-1)`.
pub fn log_odds(
    graph: &Graph,
    index: usize,
    model: &TrainedModel,
    priors: &ClassPriors,
    cfg: &EstimatorConfig,
) -> Result<LogOddsRecord, InferenceError> {
    let ll_pos = class_log_likelihood(graph, Label::Pos, model.params_for(Label::Pos), cfg)?;
    let ll_neg = class_log_likelihood(graph, Label::Neg, model.params_for(Label::Neg), cfg)?;
    let l = ll_pos - ll_neg + priors.log_ratio();
    LogOddsRecord::from_log_odds(index, ll_pos, ll_neg, l, graph.label)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub logloss: f64,
    /// `None` when only one label is present.
    pub auc: Option<f64>,
    pub records: Vec<LogOddsRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// Scores every graph; graph `j` uses seed `derive(cfg.seed, j)`.
pub fn evaluate(
    dataset: &Dataset,
    model: &TrainedModel,
    priors: &ClassPriors,
    cfg: &EstimatorConfig,
) -> Result<MetricsReport, InferenceError> {
    if dataset.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    labels_of(dataset)?;
    let records = dataset
        .graphs()
        .par_iter()
        .enumerate()
        .map(|(j, g)| {
            let graph_cfg = EstimatorConfig {
                seed: derive_seed(cfg.seed, &[j as u64]),
                ..cfg.clone()
            };
            log_odds(g, j, model, priors, &graph_cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(metrics_from_records(records))
}

/// Accuracy, mean log-loss and rank AUC of labelled records.
pub fn metrics_from_records(records: Vec<LogOddsRecord>) -> MetricsReport {
    let labelled: Vec<(f64, Label, Label)> = records
        .iter()
        .filter_map(|r| r.label.map(|l| (r.log_odds, l, r.pred)))
        .collect();
    let m = labelled.len().max(1) as f64;
    let accuracy = labelled.iter().filter(|(_, l, p)| l == p).count() as f64 / m;
    let logloss = labelled
        .iter()
        .map(|(score, l, _)| softplus(-l.sign() * score))
        .sum::<f64>()
        / m;
    let auc = rank_auc(
        &labelled
            .iter()
            .map(|(s, l, _)| (*s, *l))
            .collect::<Vec<_>>(),
    );
    MetricsReport {
        accuracy,
        logloss,
        auc,
        records,
        config: None,
    }
}

/// Mann-Whitney AUC with midranks for ties.
pub fn rank_auc(scored: &[(f64, Label)]) -> Option<f64> {
    let pos = scored.iter().filter(|(_, l)| *l == Label::Pos).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut ranks = vec![0.0; scored.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = scored
        .iter()
        .zip(&ranks)
        .filter(|((_, l), _)| *l == Label::Pos)
        .map(|(_, r)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}
