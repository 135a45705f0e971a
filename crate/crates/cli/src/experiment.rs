//! End-to-end runs: data, training, evaluation, persistence, sweeps.

use std::fs;
use std::path::Path;

use gcvae_core::datagen::{generate, ScenarioConfig};
use gcvae_core::graph::{holdout, load_dataset, Dataset, Label};
use gcvae_core::inference::{
    estimate_class_priors, evaluate, EstimatorConfig, MetricsReport,
};
use gcvae_core::model::{fit, ModelError, ModelFile, Objective};
use gcvae_core::seeding::{derive_seed, hash_str, rng_from};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DataConfig, RunConfig};
use crate::error::{CliError, Stage};

pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_HEADER: [&str; 6] = ["objective", "m", "seed", "accuracy", "logloss", "auc"];

fn stream(seed: u64, name: &str) -> u64 {
    derive_seed(seed, &[hash_str(name)])
}

/// Train and test sets described by `cfg.data`.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::bad_input(Stage::DataLoad, e.to_string());
    match &cfg.data {
        DataConfig::Generate {
            scenario,
            n,
            d,
            train_per_class,
            test_per_class,
        } => {
            let make = |per_class: usize, part: &str| {
                generate(&ScenarioConfig {
                    scenario: scenario.clone(),
                    per_class,
                    n: *n,
                    d: *d,
                    seed: stream(cfg.seed, part),
                })
                .map_err(|e| bad(&e))
            };
            Ok((make(*train_per_class, "train")?, make(*test_per_class, "test")?))
        }
        DataConfig::Files { train, test, n_max } => {
            let train = load_dataset(train, *n_max).map_err(|e| bad(&e))?;
            let n_max = Some(n_max.unwrap_or(train.n_max()));
            let test = load_dataset(test, n_max).map_err(|e| bad(&e))?;
            if test.d() != train.d() && !test.is_empty() {
                return Err(CliError::bad_input(
                    Stage::DataLoad,
                    format!("test feature width {} differs from train width {}", test.d(), train.d()),
                ));
            }
            Ok((train, test))
        }
    }
}

fn training_error(e: ModelError) -> CliError {
    match e {
        ModelError::Divergence { .. } | ModelError::Numerics(_) | ModelError::Validation(_) => {
            CliError::internal(Stage::Training, e.to_string())
        }
        other => CliError::bad_input(Stage::Training, other.to_string()),
    }
}

/// Trains on `train` per `cfg` and scores `test`.
pub fn train_and_evaluate(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<(ModelFile, MetricsReport), CliError> {
    let objective = cfg.objective;
    let hyper = cfg.model.hyperparams(train.n_max(), train.d());
    let train_cfg = cfg.train.train_config(objective);
    let (fit_set, val) = if cfg.train.uses_validation(objective) {
        let (rest, val) = holdout(train, cfg.train.val_fraction, stream(seed, "validation-split"))
            .map_err(|e| CliError::bad_input(Stage::Training, e.to_string()))?;
        (rest, Some(val))
    } else {
        (train.clone(), None)
    };
    let outcome = fit(&fit_set, val.as_ref(), &hyper, &train_cfg, stream(seed, "fit")).map_err(training_error)?;
    let priors = estimate_class_priors(train).map_err(|e| CliError::bad_input(Stage::Training, e.to_string()))?;

    let estimator = EstimatorConfig {
        method: cfg.estimator.method_for(objective),
        samples: cfg.estimator.samples,
        seed: stream(seed, "evaluation"),
    };
    let report = evaluate(test, &outcome.model, &priors, &estimator)
        .map_err(|e| CliError::bad_input(Stage::Evaluation, e.to_string()))?;
    Ok((ModelFile::new(objective, priors, outcome.model), report))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutput {
    pub model: ModelFile,
    pub report: MetricsReport,
}

/// Full pipeline; writes `model.json` and `report.json` under `cfg.out`
/// when set.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    let (model, mut report) = train_and_evaluate(cfg, &train, &test, cfg.seed)?;
    report.config = Some(
        serde_json::to_value(cfg).map_err(|e| CliError::internal(Stage::Output, e.to_string()))?,
    );
    if let Some(dir) = &cfg.out {
        write_outputs(dir, &model, &report)?;
    }
    Ok(ExperimentOutput { model, report })
}

fn write_outputs(dir: &Path, model: &ModelFile, report: &MetricsReport) -> Result<(), CliError> {
    let io = |e: &dyn std::fmt::Display| CliError::bad_input(Stage::Output, format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(|e| io(&e))?;
    model.save(&dir.join(MODEL_FILE)).map_err(|e| io(&e))?;
    fs::write(dir.join(REPORT_FILE), report_json(report)?).map_err(|e| io(&e))
}

pub fn report_json(report: &MetricsReport) -> Result<String, CliError> {
    let mut text =
        serde_json::to_string_pretty(report).map_err(|e| CliError::internal(Stage::Output, e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Label-stratified subsample of `m` graphs: each label keeps its pool
/// share, rounded, with at least one graph per present label.
pub fn stratified_subsample(pool: &Dataset, m: usize, seed: u64) -> Result<Dataset, CliError> {
    let bad = |msg: String| Err(CliError::bad_input(Stage::DataLoad, msg));
    if m > pool.len() {
        return bad(format!("sample size {m} exceeds the {} graphs in the pool", pool.len()));
    }
    let labels = pool
        .labels()
        .map_err(|e| CliError::bad_input(Stage::DataLoad, e.to_string()))?;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Pos).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Neg).collect();
    let mut n_pos = ((m as f64) * pos.len() as f64 / pool.len() as f64).round() as usize;
    n_pos = n_pos.clamp(usize::from(!pos.is_empty()), pos.len());
    let mut n_neg = m - n_pos.min(m);
    if n_neg > neg.len() {
        n_neg = neg.len();
        n_pos = m - n_neg;
    }
    if n_neg == 0 && !neg.is_empty() && m >= 2 {
        n_neg = 1;
        n_pos = m - 1;
    }
    if n_pos > pos.len() || n_pos + n_neg != m {
        return bad(format!("cannot draw a stratified sample of {m} graphs"));
    }
    let mut rng = rng_from(seed);
    let mut chosen = Vec::with_capacity(m);
    for (members, count) in [(pos, n_pos), (neg, n_neg)] {
        let mut members = members;
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..count]);
    }
    chosen.sort_unstable();
    Ok(pool.subset(&chosen))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub objective: Objective,
    pub m: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub logloss: f64,
    pub auc: Option<f64>,
}

/// One training run per `(objective, m, replicate)`, evaluated on the
/// test set. Cells run in parallel; rows come back sorted by
/// `(objective, m, seed)`.
pub fn sweep(
    cfg: &RunConfig,
    objectives: &[Objective],
    sizes: &[usize],
    replicates: usize,
) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    let (pool, test) = load_data(cfg)?;
    if let Some(&m) = sizes.iter().find(|&&m| m > pool.len()) {
        return Err(CliError::bad_input(
            Stage::Config,
            format!("sweep size {m} exceeds the {} training graphs available", pool.len()),
        ));
    }
    let mut cells = Vec::new();
    for &objective in objectives {
        for &m in sizes {
            for r in 0..replicates {
                cells.push((objective, m, derive_seed(cfg.seed, &[r as u64])));
            }
        }
    }
    let mut rows = cells
        .par_iter()
        .map(|&(objective, m, seed)| {
            let cell_cfg = RunConfig {
                objective,
                ..cfg.clone()
            };
            let train = stratified_subsample(&pool, m, derive_seed(seed, &[m as u64]))?;
            let (_, report) = train_and_evaluate(&cell_cfg, &train, &test, derive_seed(seed, &[m as u64]))?;
            Ok(SweepRow {
                objective,
                m,
                seed,
                accuracy: report.accuracy,
                logloss: report.logloss,
                auc: report.auc,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    rows.sort_by(|a, b| {
        (a.objective.name(), a.m, a.seed).cmp(&(b.objective.name(), b.m, b.seed))
    });
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::internal(Stage::Output, e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.objective.name().to_string(),
            r.m.to_string(),
            r.seed.to_string(),
            r.accuracy.to_string(),
            r.logloss.to_string(),
            r.auc.map(|a| a.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::internal(Stage::Output, e.to_string()))
}
