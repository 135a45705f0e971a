#![allow(dead_code)]

use gcvae_core::datagen::{generate, Scenario, ScenarioConfig};
use gcvae_core::graph::{Dataset, Graph};
use gcvae_core::model::{fit, GcvaeParams, Hyperparams, Objective, TrainConfig, TrainedModel};
use gcvae_core::numerics::Tensor;
use gcvae_core::seeding::rng_from;
use rand::Rng;

pub fn er_dataset(per_class: usize, n: usize, d: usize, seed: u64) -> Dataset {
    generate(&ScenarioConfig {
        scenario: Scenario::ErSplit {
            p_pos: 0.6,
            p_neg: 0.2,
        },
        per_class,
        n,
        d,
        seed,
    })
    .unwrap()
}

pub fn small_hyper(n_max: usize, d: usize, d_z: usize) -> Hyperparams {
    let mut hp = Hyperparams::new(n_max, d);
    hp.d_z = d_z;
    hp.recognition_hidden = 6;
    hp.prior_hidden = 5;
    hp.decoder_hidden = 7;
    hp
}

/// A d_z = 1 model briefly trained with the c-ELBO, then frozen.
pub fn frozen_scalar_latent_model() -> (GcvaeParams, Dataset) {
    let data = er_dataset(10, 5, 1, 404);
    let hp = small_hyper(5, 1, 1);
    let cfg = TrainConfig {
        objective: Objective::Celbo,
        epochs: 40,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let out = fit(&data, None, &hp, &cfg, 7).unwrap();
    let TrainedModel::Single { params } = out.model else {
        panic!("celbo training yields a single model");
    };
    (params, data)
}

/// Ten labelled graphs on five nodes for the oracle checks.
pub fn oracle_graphs() -> Vec<Graph> {
    er_dataset(5, 5, 1, 505).into_graphs()
}

/// `count` distinct `(tensor, element)` positions, uniform over all weights.
pub fn random_probes(tensors: &[Tensor], count: usize, seed: u64) -> Vec<(usize, usize)> {
    let flat: Vec<(usize, usize)> = tensors
        .iter()
        .enumerate()
        .flat_map(|(t, x)| (0..x.len()).map(move |i| (t, i)))
        .collect();
    assert!(flat.len() >= count);
    let mut rng = rng_from(seed);
    let mut chosen = std::collections::BTreeSet::new();
    while chosen.len() < count {
        chosen.insert(flat[rng.random_range(0..flat.len())]);
    }
    chosen.into_iter().collect()
}
