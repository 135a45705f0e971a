//! Command-line surface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gcvae_core::graph::{load_dataset, save_dataset, Dataset};
use gcvae_core::inference::{evaluate, log_odds, ClassPriors, EstimatorConfig, Method};
use gcvae_core::model::{Hyperparams, ModelFile, Objective};
use serde_json::json;

use crate::config::{DataConfig, Overrides, RunConfig};
use crate::error::{CliError, Stage};
use crate::experiment::{load_data, report_json, run_experiment, sweep, write_sweep_csv};

#[derive(Debug, Parser)]
#[command(name = "gcvae", version, about = "Graph classification by class-conditional likelihood")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured synthetic train and test sets as JSON Lines.
    GenData(GenDataArgs),
    /// Train, evaluate on the test set, write model.json and report.json.
    Train(RunArgs),
    /// Score a labelled JSON Lines file with a saved model.
    Eval(EvalArgs),
    /// Print one log-odds record per graph in a JSON Lines file.
    Predict(PredictArgs),
    /// Sample-size sweep; writes CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_name = "det|mc|is|celbo")]
    pub inference: Option<Method>,
    #[arg(long, value_name = "S")]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    /// Report path; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub graph: PathBuf,
    /// Positive-class prior; the model file's priors otherwise.
    #[arg(long, value_name = "P")]
    pub p_pos: Option<f64>,
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100,200")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub replicates: usize,
    /// Objectives to compare; all four when absent.
    #[arg(long, value_delimiter = ',', value_parser = parse_objective)]
    pub objectives: Vec<Objective>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    Objective::ALL
        .into_iter()
        .find(|o| o.name() == s)
        .ok_or_else(|| format!("unknown objective `{s}`"))
}

fn resolve(shared: &SharedArgs, o: Overrides) -> Result<RunConfig, CliError> {
    RunConfig::resolve(
        shared.config.as_deref(),
        &Overrides {
            seed: shared.seed,
            out: shared.out.clone(),
            ..o
        },
    )
}

/// Runs one command, writing its primary output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => gen_data(&a, stdout),
        Command::Train(a) => {
            let cfg = resolve(
                &a.shared,
                Overrides {
                    objective: a.objective,
                    method: a.estimator.inference,
                    samples: a.estimator.samples,
                    epochs: a.epochs,
                    learning_rate: a.learning_rate,
                    ..Overrides::default()
                },
            )?;
            let out = run_experiment(&cfg)?;
            emit(stdout, &report_json(&out.report)?)
        }
        Command::Eval(a) => eval(&a, stdout),
        Command::Predict(a) => predict(&a, stdout),
        Command::Sweep(a) => {
            let mut cfg = resolve(
                &a.shared,
                Overrides {
                    method: a.estimator.inference,
                    samples: a.estimator.samples,
                    epochs: a.epochs,
                    ..Overrides::default()
                },
            )?;
            let out_path = cfg.out.take();
            if a.replicates == 0 || a.sizes.is_empty() {
                return Err(CliError::bad_input(Stage::Config, "sweep needs at least one size and one replicate"));
            }
            let objectives = if a.objectives.is_empty() {
                Objective::ALL.to_vec()
            } else {
                a.objectives.clone()
            };
            let rows = sweep(&cfg, &objectives, &a.sizes, a.replicates)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            match out_path {
                Some(p) => write_file(&p, &buf),
                None => emit(stdout, &String::from_utf8_lossy(&buf)),
            }
        }
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::internal(Stage::Output, e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::bad_input(Stage::Output, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::bad_input(Stage::Output, format!("{}: {e}", path.display())))
}

fn gen_data(a: &GenDataArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve(&a.shared, Overrides::default())?;
    if !matches!(cfg.data, DataConfig::Generate { .. }) {
        return Err(CliError::bad_input(Stage::Config, "gen-data needs a generate data source"));
    }
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::bad_input(Stage::Config, "gen-data needs --out"))?;
    let (train, test) = load_data(&cfg)?;
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::bad_input(Stage::Output, format!("{}: {e}", dir.display())))?;
    for (name, set) in [("train.jsonl", &train), ("test.jsonl", &test)] {
        let path = dir.join(name);
        save_dataset(set, &path).map_err(|e| CliError::bad_input(Stage::Output, e.to_string()))?;
        emit(stdout, &format!("{}\t{} graphs\n", path.display(), set.len()))?;
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    ModelFile::load(path).map_err(|e| CliError::bad_input(Stage::DataLoad, e.to_string()))
}

/// Loads graphs and pads them to the model's `n_max`, rejecting width or
/// size mismatches.
pub fn load_for_model(path: &Path, hp: &Hyperparams) -> Result<Dataset, CliError> {
    let raw = load_dataset(path, None).map_err(|e| CliError::bad_input(Stage::DataLoad, e.to_string()))?;
    if raw.is_empty() {
        return Err(CliError::bad_input(Stage::DataLoad, format!("{}: no graphs", path.display())));
    }
    if raw.d() != hp.d {
        return Err(CliError::bad_input(
            Stage::DataLoad,
            format!(
                "{}: feature width mismatch, model expects d={} but graphs have d={}",
                path.display(),
                hp.d,
                raw.d()
            ),
        ));
    }
    if raw.n_max() > hp.n_max {
        return Err(CliError::bad_input(
            Stage::DataLoad,
            format!(
                "{}: node count mismatch, model expects at most n_max={} but a graph has {} nodes",
                path.display(),
                hp.n_max,
                raw.n_max()
            ),
        ));
    }
    load_dataset(path, Some(hp.n_max)).map_err(|e| CliError::bad_input(Stage::DataLoad, e.to_string()))
}

fn estimator(args: &EstimatorArgs, objective: Objective, seed: u64) -> EstimatorConfig {
    let defaults = crate::config::EstimatorSettings::default();
    let settings = crate::config::EstimatorSettings {
        method: args.inference,
        samples: args.samples.unwrap_or(defaults.samples),
    };
    EstimatorConfig {
        method: settings.method_for(objective),
        samples: settings.samples,
        seed,
    }
}

fn eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = load_model(&a.model)?;
    let data = load_for_model(&a.data, file.model.hyper())?;
    let cfg = estimator(&a.estimator, file.objective, a.seed);
    let mut report = evaluate(&data, &file.model, &file.priors, &cfg)
        .map_err(|e| CliError::bad_input(Stage::Evaluation, e.to_string()))?;
    report.config = Some(json!({
        "model": a.model,
        "data": a.data,
        "objective": file.objective,
        "estimator": cfg,
    }));
    let text = report_json(&report)?;
    match &a.out {
        Some(p) => write_file(p, text.as_bytes()),
        None => emit(stdout, &text),
    }
}

fn predict(a: &PredictArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = load_model(&a.model)?;
    let priors = match a.p_pos {
        Some(p) => ClassPriors::new(p, 1.0 - p).map_err(|e| CliError::bad_input(Stage::Config, e.to_string()))?,
        None => file.priors,
    };
    let data = load_for_model(&a.graph, file.model.hyper())?;
    let cfg = estimator(&a.estimator, file.objective, a.seed);
    for (j, g) in data.iter().enumerate() {
        let record = log_odds(g, j, &file.model, &priors, &cfg)
            .map_err(|e| CliError::bad_input(Stage::Evaluation, e.to_string()))?;
        let line = serde_json::to_string(&record).map_err(|e| CliError::internal(Stage::Output, e.to_string()))?;
        emit(stdout, &format!("{line}\n"))?;
    }
    Ok(())
}
