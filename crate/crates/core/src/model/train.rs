//! Full-batch Adam training for all objectives.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::networks::check_graph;
use super::objective::{graph_training_loss, Objective};
use super::params::{GcvaeParams, Hyperparams};
use super::ModelError;
use crate::graph::{Dataset, Graph, Label};
use crate::inference::{estimate_class_priors, evaluate, ClassPriors, EstimatorConfig, Method};
use crate::numerics::{Tape, Tensor};
use crate::seeding::{derive_seed, hash_str, rng_from};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Early-stopping patience in epochs on validation accuracy. Only used
    /// by the discriminative objectives and only when a validation set is
    /// supplied.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::TwoTower,
            epochs: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
            patience: Some(20),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment decays must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm must be positive, got {c}"));
            }
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1".into());
        }
        Ok(())
    }
}

/// Two independent GCVAEs, one per label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoTowerModel {
    pub model_pos: GcvaeParams,
    pub model_neg: GcvaeParams,
}

impl TwoTowerModel {
    pub fn tower(&self, label: Label) -> &GcvaeParams {
        match label {
            Label::Pos => &self.model_pos,
            Label::Neg => &self.model_neg,
        }
    }

    /// The same towers with their roles exchanged.
    pub fn swapped(&self) -> TwoTowerModel {
        TwoTowerModel {
            model_pos: self.model_neg.clone(),
            model_neg: self.model_pos.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainedModel {
    Single { params: GcvaeParams },
    TwoTower(TwoTowerModel),
}

impl TrainedModel {
    pub fn hyper(&self) -> &Hyperparams {
        match self {
            TrainedModel::Single { params } => params.hyper(),
            TrainedModel::TwoTower(t) => t.model_pos.hyper(),
        }
    }

    /// Parameters that score `label`'s class-conditional likelihood.
    pub fn params_for(&self, label: Label) -> &GcvaeParams {
        match self {
            TrainedModel::Single { params } => params,
            TrainedModel::TwoTower(t) => t.tower(label),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Set for two-tower training.
    pub tower: Option<Label>,
    /// Mean per-graph training loss before the update.
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: TrainedModel,
    pub history: Vec<EpochRecord>,
}

/// One training-set read: which tower requested it and the label of the
/// graph it touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessEvent {
    pub tower: Option<Label>,
    pub graph_label: Option<Label>,
}

pub fn fit(
    train: &Dataset,
    val: Option<&Dataset>,
    hyper: &Hyperparams,
    config: &TrainConfig,
    seed: u64,
) -> Result<FitOutcome, ModelError> {
    fit_observed(train, val, hyper, config, seed, &|_| {})
}

/// [`fit`] with a callback invoked on every per-graph loss evaluation.
pub fn fit_observed(
    train: &Dataset,
    val: Option<&Dataset>,
    hyper: &Hyperparams,
    config: &TrainConfig,
    seed: u64,
    observer: &(dyn Fn(AccessEvent) + Sync),
) -> Result<FitOutcome, ModelError> {
    config.validate()?;
    hyper.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    for g in train {
        check_graph(g, hyper)?;
    }
    train.labels().map_err(|e| match e {
        crate::graph::GraphError::Unlabeled { index } => ModelError::Unlabeled { index },
        other => ModelError::Graph(other),
    })?;

    match config.objective {
        Objective::TwoTower => {
            let mut history = Vec::new();
            let mut towers = Vec::with_capacity(2);
            for label in Label::BOTH {
                let subset = train.with_label(label);
                if subset.is_empty() {
                    return Err(ModelError::EmptyClass(label));
                }
                let tower_seed = derive_seed(seed, &[hash_str("tower"), label.sign().to_bits()]);
                let trainer = Trainer {
                    graphs: subset.graphs(),
                    tower: Some(label),
                    config,
                    seed: tower_seed,
                    observer,
                };
                let (params, records) = trainer.run(GcvaeParams::init(hyper.clone(), tower_seed)?, None)?;
                towers.push(params);
                history.extend(records);
            }
            let model_neg = towers.pop().expect("two towers");
            let model_pos = towers.pop().expect("two towers");
            Ok(FitOutcome {
                model: TrainedModel::TwoTower(TwoTowerModel { model_pos, model_neg }),
                history,
            })
        }
        objective => {
            if objective.is_discriminative() {
                for label in Label::BOTH {
                    if train.count_label(label) == 0 {
                        return Err(ModelError::EmptyClass(label));
                    }
                }
            }
            let val = val.filter(|_| objective.is_discriminative() && config.patience.is_some());
            let trainer = Trainer {
                graphs: train.graphs(),
                tower: None,
                config,
                seed,
                observer,
            };
            let early = match val {
                Some(v) => Some((v, estimate_class_priors(train).map_err(|e| ModelError::Validation(e.to_string()))?)),
                None => None,
            };
            let init = GcvaeParams::init(hyper.clone(), derive_seed(seed, &[hash_str("init")]))?;
            let (params, history) = trainer.run(init, early)?;
            Ok(FitOutcome {
                model: TrainedModel::Single { params },
                history,
            })
        }
    }
}

struct Trainer<'a> {
    graphs: &'a [Graph],
    tower: Option<Label>,
    config: &'a TrainConfig,
    seed: u64,
    observer: &'a (dyn Fn(AccessEvent) + Sync),
}

impl Trainer<'_> {
    fn run(
        &self,
        mut params: GcvaeParams,
        early: Option<(&Dataset, ClassPriors)>,
    ) -> Result<(GcvaeParams, Vec<EpochRecord>), ModelError> {
        let mut adam = Adam::new(&params);
        let mut history = Vec::with_capacity(self.config.epochs);
        let mut best: Option<((f64, f64), GcvaeParams)> = None;
        let mut since_best = 0;

        for epoch in 1..=self.config.epochs {
            let (loss, grads) = self.batch_gradient(&params, epoch)?;
            adam.step(&mut params, grads, self.config);
            if !params.is_finite() {
                return Err(ModelError::Divergence { epoch });
            }
            let mut record = EpochRecord {
                epoch,
                tower: self.tower,
                loss,
                val_accuracy: None,
            };
            if let Some((val, priors)) = &early {
                let cfg = EstimatorConfig {
                    method: Method::Celbo,
                    samples: 1,
                    seed: derive_seed(self.seed, &[hash_str("validation")]),
                };
                let model = TrainedModel::Single {
                    params: params.clone(),
                };
                let report = evaluate(val, &model, priors, &cfg)
                    .map_err(|e| ModelError::Validation(e.to_string()))?;
                record.val_accuracy = Some(report.accuracy);
                // Ties on accuracy go to the lower log-loss.
                let score = (report.accuracy, -report.logloss);
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, params.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                }
            }
            history.push(record);
            if let (Some(patience), true) = (self.config.patience, early.is_some()) {
                if since_best >= patience {
                    break;
                }
            }
        }
        let params = best.map_or(params, |(_, p)| p);
        Ok((params, history))
    }

    /// Mean loss and mean gradient over all graphs, before the update.
    fn batch_gradient(&self, params: &GcvaeParams, epoch: usize) -> Result<(f64, Vec<Tensor>), ModelError> {
        let hp = params.hyper();
        let objective = self.config.objective;
        let per_graph: Vec<Result<(f64, Vec<Tensor>), ModelError>> = self
            .graphs
            .par_iter()
            .enumerate()
            .map(|(j, graph)| {
                (self.observer)(AccessEvent {
                    tower: self.tower,
                    graph_label: graph.label,
                });
                let label = graph.label.ok_or(ModelError::Unlabeled { index: j })?;
                let mut rng = rng_from(derive_seed(self.seed, &[epoch as u64, j as u64]));
                let noise: Vec<f64> = (0..hp.d_z).map(|_| StandardNormal.sample(&mut rng)).collect();
                let mut tape = Tape::new();
                let bound = params.bind(&mut tape)?;
                let loss = graph_training_loss(&mut tape, &bound, hp, graph, label, objective, &noise)
                    .map_err(|e| match e {
                        ModelError::Numerics(_) => ModelError::Divergence { epoch },
                        other => other,
                    })?;
                let value = tape.scalar(loss);
                let grads = tape
                    .backprop(loss)
                    .map_err(|_| ModelError::Divergence { epoch })?;
                Ok((value, grads.into_vec()))
            })
            .collect();

        let scale = 1.0 / self.graphs.len() as f64;
        let mut total = 0.0;
        let mut sum: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        for item in per_graph {
            let (value, grads) = item?;
            total += value;
            for (acc, g) in sum.iter_mut().zip(grads) {
                for (a, v) in acc.values_mut().iter_mut().zip(g.values()) {
                    *a += v * scale;
                }
            }
        }
        let mean = total * scale;
        if !mean.is_finite() {
            return Err(ModelError::Divergence { epoch });
        }
        Ok((mean, sum))
    }
}

/// Adaptive moment estimation with optional global-norm clipping.
pub struct Adam {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    pub fn new(params: &GcvaeParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut GcvaeParams, mut grads: Vec<Tensor>, config: &TrainConfig) {
        if let Some(clip) = config.clip_norm {
            let norm = grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                for g in &mut grads {
                    g.values_mut().iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        self.step += 1;
        let bc1 = 1.0 - config.beta1.powi(self.step);
        let bc2 = 1.0 - config.beta2.powi(self.step);
        for (k, (tensor, grad)) in params.tensors_mut().iter_mut().zip(&grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for (i, (w, &g)) in tensor.values_mut().iter_mut().zip(grad.values()).enumerate() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> Dataset {
        let mut graphs = Vec::new();
        for i in 0..6 {
            let label = if i % 2 == 0 { Label::Pos } else { Label::Neg };
            let edges: Vec<(usize, usize)> = if label == Label::Pos {
                vec![(0, 1), (1, 2), (2, 3), (0, 3)]
            } else {
                vec![(0, 1)]
            };
            let feats = (0..4).map(|k| (i + k) as f64 * 0.1).collect();
            graphs.push(Graph::from_edges(4, &edges, feats, 1, Some(label)).unwrap());
        }
        Dataset::from_graphs(graphs, None).unwrap()
    }

    fn small_hyper() -> Hyperparams {
        let mut hp = Hyperparams::new(4, 1);
        hp.d_z = 2;
        hp.recognition_hidden = 8;
        hp.prior_hidden = 4;
        hp.decoder_hidden = 8;
        hp
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let ds = tiny_dataset();
        let cfg = TrainConfig {
            objective: Objective::Celbo,
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = fit(&ds, None, &small_hyper(), &cfg, 3).unwrap();
        let init = GcvaeParams::init(small_hyper(), derive_seed(3, &[hash_str("init")])).unwrap();
        assert_eq!(out.model, TrainedModel::Single { params: init });
        assert!(out.history.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = tiny_dataset();
        for objective in Objective::ALL {
            let cfg = TrainConfig {
                objective,
                epochs: 5,
                ..TrainConfig::default()
            };
            let a = fit(&ds, Some(&ds), &small_hyper(), &cfg, 11).unwrap();
            let b = fit(&ds, Some(&ds), &small_hyper(), &cfg, 11).unwrap();
            assert_eq!(a.model, b.model, "{objective}");
            assert_eq!(a.history, b.history);
        }
    }

    #[test]
    fn celbo_training_lowers_loss() {
        let ds = tiny_dataset();
        let cfg = TrainConfig {
            objective: Objective::Celbo,
            epochs: 60,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = fit(&ds, None, &small_hyper(), &cfg, 1).unwrap();
        let first = out.history.first().unwrap().loss;
        let last = out.history.last().unwrap().loss;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn empty_class_rejected() {
        let ds = tiny_dataset().with_label(Label::Pos);
        for objective in [Objective::TwoTower, Objective::Discriminative] {
            let cfg = TrainConfig {
                objective,
                epochs: 1,
                ..TrainConfig::default()
            };
            assert!(matches!(
                fit(&ds, None, &small_hyper(), &cfg, 0),
                Err(ModelError::EmptyClass(Label::Neg))
            ));
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let ds = tiny_dataset();
        let cfg = TrainConfig {
            objective: Objective::Celbo,
            epochs: 3,
            learning_rate: 1e300,
            clip_norm: None,
            ..TrainConfig::default()
        };
        match fit(&ds, None, &small_hyper(), &cfg, 0) {
            Err(ModelError::Divergence { epoch }) => assert!((1..=3).contains(&epoch)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn hyper_must_match_data() {
        let ds = tiny_dataset();
        let mut hp = small_hyper();
        hp.n_max = 7;
        assert!(matches!(
            fit(&ds, None, &hp, &TrainConfig::default(), 0),
            Err(ModelError::Shape(_))
        ));
    }
}
