mod common;

use gcvae_core::graph::{Graph, Label};
use gcvae_core::model::{
    celbo_loss, discriminative_logistic_loss, discriminative_objective, GcvaeParams,
};
use gcvae_core::numerics::{check_gradients, Tape, Tensor};
use gcvae_core::seeding::rng_from;
use rand_distr::{Distribution, StandardNormal};

const H: f64 = 1e-4;
const FLOOR: f64 = 1e-6;
const TOLERANCE: f64 = 1e-3;
const PROBES: usize = 120;

fn setup() -> (GcvaeParams, Vec<Graph>, Vec<Vec<f64>>) {
    let hp = common::small_hyper(6, 2, 2);
    let params = GcvaeParams::init(hp, 91).unwrap();
    let graphs = common::er_dataset(2, 6, 2, 17)
        .into_graphs()
        .into_iter()
        .map(|g| g.pad_to(6).unwrap())
        .collect::<Vec<_>>();
    let mut rng = rng_from(5);
    let noise = graphs
        .iter()
        .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    (params, graphs, noise)
}

fn with_tensors(base: &GcvaeParams, tensors: &[Tensor]) -> GcvaeParams {
    let mut p = base.clone();
    p.tensors_mut().clone_from_slice(tensors);
    p
}

type Objective = fn(&mut Tape, &GcvaeParams, &[Graph], &[Vec<f64>]) -> gcvae_core::numerics::Var;

fn celbo_sum(tape: &mut Tape, p: &GcvaeParams, graphs: &[Graph], noise: &[Vec<f64>]) -> gcvae_core::numerics::Var {
    let bound = p.bind(tape).unwrap();
    let mut total = None;
    for (g, eps) in graphs.iter().zip(noise) {
        let l = celbo_loss(tape, &bound, p.hyper(), g, g.label.unwrap(), eps).unwrap();
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l).unwrap(),
        });
    }
    total.unwrap()
}

fn disc(tape: &mut Tape, p: &GcvaeParams, graphs: &[Graph], noise: &[Vec<f64>]) -> gcvae_core::numerics::Var {
    let bound = p.bind(tape).unwrap();
    discriminative_objective(tape, &bound, p.hyper(), graphs, noise).unwrap()
}

fn disc_logistic(tape: &mut Tape, p: &GcvaeParams, graphs: &[Graph], noise: &[Vec<f64>]) -> gcvae_core::numerics::Var {
    let bound = p.bind(tape).unwrap();
    discriminative_logistic_loss(tape, &bound, p.hyper(), graphs, noise).unwrap()
}

fn check(objective: Objective) -> f64 {
    let (params, graphs, noise) = setup();
    let mut tape = Tape::new();
    let out = objective(&mut tape, &params, &graphs, &noise);
    let analytic = tape.backprop(out).unwrap().into_vec();
    let probes = common::random_probes(params.tensors(), PROBES, 23);
    let report = check_gradients(params.tensors(), &analytic, &probes, H, FLOOR, |t| {
        let p = with_tensors(&params, t);
        let mut tape = Tape::new();
        let v = objective(&mut tape, &p, &graphs, &noise);
        tape.scalar(v)
    });
    assert_eq!(report.probes, PROBES);
    report.max_relative_error
}

#[test]
fn celbo_loss_matches_central_differences() {
    let err = check(celbo_sum);
    assert!(err < TOLERANCE, "max relative error {err}");
}

#[test]
fn discriminative_objective_matches_central_differences() {
    let err = check(disc);
    assert!(err < TOLERANCE, "max relative error {err}");
}

#[test]
fn logistic_variant_matches_central_differences() {
    let err = check(disc_logistic);
    assert!(err < TOLERANCE, "max relative error {err}");
}

#[test]
fn discriminative_objective_negates_under_label_flip() {
    let (params, graphs, noise) = setup();
    let flipped: Vec<Graph> = graphs
        .iter()
        .cloned()
        .map(|g| {
            let l = g.label.unwrap().flip();
            g.with_label(Some(l))
        })
        .collect();
    let value = |gs: &[Graph]| {
        let mut tape = Tape::new();
        let v = disc(&mut tape, &params, gs, &noise);
        tape.scalar(v)
    };
    assert_eq!(value(&graphs), -value(&flipped));
    assert!(graphs.iter().any(|g| g.label == Some(Label::Pos)));
}
