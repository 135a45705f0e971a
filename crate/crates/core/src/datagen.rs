//! Seeded synthetic scenarios.
//!
//! Every graph draws from its own stream `derive(seed, scenario, class,
//! index)`, so changing `per_class` never reshuffles earlier graphs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Dataset, Graph, GraphError, Label};
use crate::seeding::{derive_seed, hash_str, rng_from};

/// Node count of the triangle-chain gadget.
pub const CONFOUND_NODES: usize = 30;
pub const CONFOUND_TRIANGLES: usize = CONFOUND_NODES / 3;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum Scenario {
    /// Class +1 ~ ER(n, p_pos), class -1 ~ ER(n, p_neg).
    ErSplit { p_pos: f64, p_neg: f64 },
    /// Fixed triangle chain; features N(±mu, I).
    TriangleConfound {
        #[serde(default = "default_mu")]
        mu: f64,
    },
    /// Class +1 is a two-block SBM, class -1 is ER at the matched density.
    Sbm { p_in: f64, p_out: f64 },
}

fn default_mu() -> f64 {
    0.5
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::ErSplit { .. } => "er-split",
            Scenario::TriangleConfound { .. } => "triangle-confound",
            Scenario::Sbm { .. } => "sbm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub scenario: Scenario,
    pub per_class: usize,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |msg: String| Err(DatagenError::InvalidConfig(msg));
        let prob = |name: &str, p: f64| -> Result<(), DatagenError> {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(DatagenError::InvalidConfig(format!("{name}={p} is not in [0, 1]")))
            }
        };
        if self.per_class == 0 {
            return bad("per_class must be at least 1".into());
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        match self.scenario {
            Scenario::ErSplit { p_pos, p_neg } => {
                prob("p_pos", p_pos)?;
                prob("p_neg", p_neg)?;
                if p_pos == p_neg {
                    return bad(format!("p_pos and p_neg must differ, both are {p_pos}"));
                }
            }
            Scenario::TriangleConfound { mu } => {
                if self.n != CONFOUND_NODES {
                    return bad(format!(
                        "triangle-confound uses n={CONFOUND_NODES}, got n={}",
                        self.n
                    ));
                }
                if self.d == 0 {
                    return bad("triangle-confound needs d >= 1".into());
                }
                if !mu.is_finite() {
                    return bad(format!("mu must be finite, got {mu}"));
                }
            }
            Scenario::Sbm { p_in, p_out } => {
                prob("p_in", p_in)?;
                prob("p_out", p_out)?;
                if self.n < 2 {
                    return bad("sbm needs n >= 2".into());
                }
                if p_in <= p_out {
                    return bad(format!("sbm needs p_in > p_out, got {p_in} <= {p_out}"));
                }
            }
        }
        Ok(())
    }
}

/// Each unordered pair present independently with probability `p`.
pub fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>, DatagenError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DatagenError::InvalidConfig(format!("edge probability {p} is not in [0, 1]")));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}

/// ER graph as a [`Graph`] with zero-width features.
pub fn erdos_renyi_graph(n: usize, p: f64, rng: &mut impl Rng) -> Result<Graph, DatagenError> {
    let edges = erdos_renyi(n, p, rng)?;
    Ok(Graph::from_edges(n, &edges, Vec::new(), 0, None)?)
}

/// Sizes of the two SBM blocks.
pub fn sbm_blocks(n: usize) -> (usize, usize) {
    (n / 2, n - n / 2)
}

/// ER probability with the same expected edge count as the two-block SBM.
pub fn sbm_matched_p(n: usize, p_in: f64, p_out: f64) -> f64 {
    let (a, b) = sbm_blocks(n);
    let pairs = |k: usize| (k * k.saturating_sub(1) / 2) as f64;
    (p_in * (pairs(a) + pairs(b)) + p_out * (a * b) as f64) / pairs(n)
}

fn sbm_edges(n: usize, p_in: f64, p_out: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let (a, _) = sbm_blocks(n);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if (i < a) == (j < a) { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Ten disjoint triangles with node 0 of each linked to node 0 of the next.
pub fn triangle_chain_edges() -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for t in 0..CONFOUND_TRIANGLES {
        let b = 3 * t;
        edges.extend([(b, b + 1), (b + 1, b + 2), (b, b + 2)]);
        if t + 1 < CONFOUND_TRIANGLES {
            edges.push((b, b + 3));
        }
    }
    edges
}

fn normals(rng: &mut impl Rng, count: usize, shift: f64) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut *rng);
            shift + e
        })
        .collect()
}

fn generate_one(cfg: &ScenarioConfig, label: Label, index: usize) -> Result<Graph, DatagenError> {
    let stream = derive_seed(
        cfg.seed,
        &[hash_str(cfg.scenario.name()), label.sign().to_bits(), index as u64],
    );
    let mut rng = rng_from(stream);
    let (edges, shift) = match cfg.scenario {
        Scenario::ErSplit { p_pos, p_neg } => {
            let p = if label == Label::Pos { p_pos } else { p_neg };
            (erdos_renyi(cfg.n, p, &mut rng)?, 0.0)
        }
        Scenario::TriangleConfound { mu } => (triangle_chain_edges(), label.sign() * mu),
        Scenario::Sbm { p_in, p_out } => {
            let edges = if label == Label::Pos {
                sbm_edges(cfg.n, p_in, p_out, &mut rng)
            } else {
                erdos_renyi(cfg.n, sbm_matched_p(cfg.n, p_in, p_out), &mut rng)?
            };
            (edges, 0.0)
        }
    };
    let features = normals(&mut rng, cfg.n * cfg.d, shift);
    Ok(Graph::from_edges(cfg.n, &edges, features, cfg.d, Some(label))?)
}

/// Generates `per_class` graphs of class +1 followed by `per_class` of -1.
pub fn generate(cfg: &ScenarioConfig) -> Result<Dataset, DatagenError> {
    cfg.validate()?;
    let jobs: Vec<(Label, usize)> = [Label::Pos, Label::Neg]
        .into_iter()
        .flat_map(|l| (0..cfg.per_class).map(move |i| (l, i)))
        .collect();
    let graphs = jobs
        .par_iter()
        .map(|&(l, i)| generate_one(cfg, l, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::from_graphs(graphs, Some(cfg.n))?)
}

fn expect_scenario(cfg: &ScenarioConfig, name: &str) -> Result<(), DatagenError> {
    if cfg.scenario.name() != name {
        return Err(DatagenError::InvalidConfig(format!(
            "expected a {name} config, got {}",
            cfg.scenario.name()
        )));
    }
    Ok(())
}

pub fn gen_er_split(cfg: &ScenarioConfig) -> Result<Dataset, DatagenError> {
    expect_scenario(cfg, "er-split")?;
    generate(cfg)
}

pub fn gen_triangle_confound(cfg: &ScenarioConfig) -> Result<Dataset, DatagenError> {
    expect_scenario(cfg, "triangle-confound")?;
    generate(cfg)
}

pub fn gen_sbm(cfg: &ScenarioConfig) -> Result<Dataset, DatagenError> {
    expect_scenario(cfg, "sbm")?;
    generate(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::write_dataset;
    use proptest::prelude::*;

    fn er(per_class: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            scenario: Scenario::ErSplit {
                p_pos: 0.6,
                p_neg: 0.2,
            },
            per_class,
            n: 12,
            d: 2,
            seed,
        }
    }

    fn confound(d: usize, mu: f64, per_class: usize) -> ScenarioConfig {
        ScenarioConfig {
            scenario: Scenario::TriangleConfound { mu },
            per_class,
            n: CONFOUND_NODES,
            d,
            seed: 5,
        }
    }

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut out = Vec::new();
        write_dataset(ds, &mut out).unwrap();
        out
    }

    #[test]
    fn er_extremes() {
        let mut rng = rng_from(1);
        assert!(erdos_renyi(7, 0.0, &mut rng).unwrap().is_empty());
        assert_eq!(erdos_renyi(7, 1.0, &mut rng).unwrap().len(), 21);
        assert!(erdos_renyi(7, 1.5, &mut rng).is_err());
        assert!(erdos_renyi(7, -0.1, &mut rng).is_err());
    }

    #[test]
    fn er_edge_count_matches_binomial() {
        let mut rng = rng_from(2);
        let draws = 10_000;
        let counts: Vec<f64> = (0..draws)
            .map(|_| erdos_renyi(10, 0.3, &mut rng).unwrap().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / draws as f64;
        let se = (45.0 * 0.3 * 0.7 / draws as f64).sqrt();
        assert!((mean - 13.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn er_split_counts_and_determinism() {
        let ds = gen_er_split(&er(50, 3)).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.count_label(Label::Pos), 50);
        assert_eq!(ds.count_label(Label::Neg), 50);
        assert_eq!(bytes(&ds), bytes(&gen_er_split(&er(50, 3)).unwrap()));
        assert_ne!(bytes(&ds), bytes(&gen_er_split(&er(50, 4)).unwrap()));
    }

    #[test]
    fn er_split_density_matches_p() {
        let ds = gen_er_split(&er(200, 9)).unwrap();
        let dens: Vec<f64> = ds
            .iter()
            .filter(|g| g.label == Some(Label::Pos))
            .map(|g| g.density())
            .collect();
        let mean = dens.iter().sum::<f64>() / dens.len() as f64;
        let se = (0.6 * 0.4 / 66.0 / dens.len() as f64).sqrt();
        assert!((mean - 0.6).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn growing_per_class_keeps_earlier_graphs() {
        let small = gen_er_split(&er(5, 11)).unwrap();
        let large = gen_er_split(&er(8, 11)).unwrap();
        for i in 0..5 {
            assert_eq!(small.get(i), large.get(i));
            assert_eq!(small.get(5 + i), large.get(8 + i));
        }
    }

    #[test]
    fn confound_has_ten_triangles_and_fixed_structure() {
        let ds = gen_triangle_confound(&confound(4, 0.5, 30)).unwrap();
        let first = ds.get(0).unwrap().adj.clone();
        for g in ds.iter() {
            assert_eq!(g.triangle_count().unwrap(), 10);
            assert_eq!(g.adj, first);
            assert!(g.validate().is_ok());
        }
        // chain edges connect the gadget
        assert_eq!(triangle_chain_edges().len(), 3 * 10 + 9);
    }

    #[test]
    fn confound_feature_mean_tracks_label() {
        let ds = gen_triangle_confound(&confound(4, 2.0, 500)).unwrap();
        let hits = ds
            .iter()
            .filter(|g| {
                let mean = g.features.iter().sum::<f64>() / g.features.len() as f64;
                (mean > 0.0) == (g.label == Some(Label::Pos))
            })
            .count();
        assert!(hits as f64 / ds.len() as f64 >= 0.999);
    }

    #[test]
    fn confound_rejects_bad_configs() {
        assert!(gen_triangle_confound(&confound(0, 0.5, 2)).is_err());
        let mut cfg = confound(2, 0.5, 2);
        cfg.n = 12;
        assert!(gen_triangle_confound(&cfg).is_err());
        assert!(gen_triangle_confound(&confound(2, f64::NAN, 2)).is_err());
        assert!(gen_er_split(&confound(2, 0.5, 2)).is_err());
    }

    #[test]
    fn sbm_matched_density() {
        let n = 10;
        let (a, b) = sbm_blocks(n);
        assert_eq!(a + b, n);
        let p = sbm_matched_p(n, 0.8, 0.2);
        let expected = (0.8 * 10.0 * 2.0 + 0.2 * 25.0) / 45.0;
        assert!((p - expected).abs() < 1e-15);
        let cfg = ScenarioConfig {
            scenario: Scenario::Sbm {
                p_in: 0.8,
                p_out: 0.2,
            },
            per_class: 5000,
            n,
            d: 0,
            seed: 17,
        };
        let ds = gen_sbm(&cfg).unwrap();
        let mean = |l: Label| {
            let v: Vec<f64> = ds.iter().filter(|g| g.label == Some(l)).map(|g| g.density()).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let all = (mean(Label::Pos) + mean(Label::Neg)) / 2.0;
        let se = (p * (1.0 - p) / 45.0 / 10_000.0).sqrt();
        assert!((all - p).abs() < 4.0 * se);
        assert!((mean(Label::Pos) - mean(Label::Neg)).abs() < 0.01);
        assert_eq!(bytes(&ds), bytes(&gen_sbm(&cfg).unwrap()));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = er(0, 1);
        assert!(generate(&cfg).is_err());
        cfg = er(2, 1);
        cfg.scenario = Scenario::ErSplit {
            p_pos: 0.3,
            p_neg: 0.3,
        };
        assert!(generate(&cfg).is_err());
        cfg.scenario = Scenario::Sbm {
            p_in: 0.2,
            p_out: 0.5,
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn config_json_shape() {
        let json = r#"{"scenario":"er-split","p_pos":0.6,"p_neg":0.2,"per_class":3,"n":5,"d":1,"seed":2}"#;
        let cfg: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.per_class, 3);
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let c: ScenarioConfig = serde_json::from_str(
            r#"{"scenario":"triangle-confound","per_class":1,"n":30,"d":4,"seed":0}"#,
        )
        .unwrap();
        assert_eq!(c.scenario, Scenario::TriangleConfound { mu: 0.5 });
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn generated_graphs_validate(seed in any::<u64>(), n in 2usize..9, d in 0usize..3, sbm in any::<bool>()) {
            let scenario = if sbm {
                Scenario::Sbm { p_in: 0.7, p_out: 0.1 }
            } else {
                Scenario::ErSplit { p_pos: 0.5, p_neg: 0.1 }
            };
            let cfg = ScenarioConfig { scenario, per_class: 3, n, d, seed };
            let ds = generate(&cfg).unwrap();
            prop_assert_eq!(ds.len(), 6);
            for g in ds.iter() {
                prop_assert!(g.validate().is_ok());
            }
        }
    }
}
