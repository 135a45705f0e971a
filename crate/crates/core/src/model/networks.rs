//! Forward passes of the recognition, prior and decoder networks, and the
//! graph likelihood `ln p(A, X | z, y)`.
//!
//! Every network is written once against the [`Tape`]; the value-level
//! entry points (`encode`, `prior`, `decode`) run the same code on a
//! throwaway tape.

use serde::{Deserialize, Serialize};

use super::params::{BoundParams, GcvaeParams, Hyperparams, Part};
use super::ModelError;
use crate::graph::{Graph, Label};
use crate::numerics::{
    bernoulli_log_likelihood, GaussianParams, NumericsError, Tape, Tensor, Var, LN_2PI,
    LOGVAR_MAX, LOGVAR_MIN,
};

/// Decoder output for one latent/label pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedGraph {
    pub n_max: usize,
    pub d: usize,
    /// Row-major `n_max × n_max`, symmetric, zero diagonal.
    pub edge_logits: Vec<f64>,
    pub exist_logits: Vec<f64>,
    /// Row-major `n_max × d`.
    pub feature_means: Vec<f64>,
    /// `None` when features are not scored.
    pub feature_variance: Option<f64>,
}

/// Tape handles of a decoder pass. `edges` holds the upper triangle in
/// row-major pair order.
#[derive(Clone, Copy, Debug)]
pub struct DecodedVars {
    pub edges: Var,
    pub exist: Var,
    pub features: Var,
}

pub(crate) fn check_graph(graph: &Graph, hp: &Hyperparams) -> Result<(), ModelError> {
    if graph.n_max != hp.n_max || graph.d != hp.d {
        return Err(ModelError::Shape(format!(
            "graph has n_max={} and feature width {}, model expects n_max={} and feature width {}",
            graph.n_max, graph.d, hp.n_max, hp.d
        )));
    }
    Ok(())
}

fn one_hot(tape: &mut Tape, y: Label) -> Var {
    tape.constant(Tensor::from_parts(vec![1, 2], y.one_hot().to_vec()))
}

/// Row-normalised `A + I` over observed nodes; padded rows are zero.
fn propagation_matrix(graph: &Graph) -> Tensor {
    let n = graph.n_max;
    let mut m = vec![0.0; n * n];
    for i in 0..graph.n {
        let row = &mut m[i * n..(i + 1) * n];
        row[i] = 1.0;
        for (j, v) in row.iter_mut().enumerate().take(graph.n) {
            if graph.edge(i, j) {
                *v = 1.0;
            }
        }
        let deg: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= deg;
        }
    }
    Tensor::from_parts(vec![n, n], m)
}

fn node_inputs(graph: &Graph, hp: &Hyperparams) -> Tensor {
    let n = graph.n_max;
    let w = hp.node_input_width();
    let scale = (n.max(2) - 1) as f64;
    let mut x = vec![0.0; n * w];
    for i in 0..graph.n {
        let row = &mut x[i * w..(i + 1) * w];
        row[..graph.d].copy_from_slice(graph.feature_row(i));
        row[graph.d] = 1.0;
        let degree = (0..graph.n).filter(|&j| graph.edge(i, j)).count();
        row[graph.d + 1] = degree as f64 / scale;
    }
    Tensor::from_parts(vec![n, w], x)
}

fn mask_row(graph: &Graph) -> Tensor {
    Tensor::from_parts(
        vec![1, graph.n_max],
        graph.mask.iter().map(|&m| f64::from(m)).collect(),
    )
}

/// `q(z | A, X, y)`: message passing, masked sum pooling, label
/// concatenation, affine mean/log-variance heads.
pub fn encode_vars(
    tape: &mut Tape,
    params: &BoundParams,
    hp: &Hyperparams,
    graph: &Graph,
    y: Label,
) -> Result<(Var, Var), ModelError> {
    check_graph(graph, hp)?;
    let propagation = tape.constant(propagation_matrix(graph));
    let mut h = tape.constant(node_inputs(graph, hp));
    for layer in 0..hp.message_passing_layers {
        let mixed = tape.matmul(propagation, h)?;
        let projected = tape.matmul(mixed, params.get(Part::RecognitionLayer(layer)))?;
        h = tape.tanh(projected)?;
    }
    let mask = tape.constant(mask_row(graph));
    let pooled = tape.matmul(mask, h)?;
    let label = one_hot(tape, y);
    let input = tape.concat(&[pooled, label])?;
    gaussian_heads(
        tape,
        params,
        input,
        (Part::RecognitionMeanWeight, Part::RecognitionMeanBias),
        (Part::RecognitionLogvarWeight, Part::RecognitionLogvarBias),
    )
}

/// `p(z | y)`: one-hot label, one tanh hidden layer, mean/log-variance heads.
pub fn prior_vars(tape: &mut Tape, params: &BoundParams, y: Label) -> Result<(Var, Var), ModelError> {
    let label = one_hot(tape, y);
    let hidden = tape.affine(
        label,
        params.get(Part::PriorHiddenWeight),
        params.get(Part::PriorHiddenBias),
    )?;
    let hidden = tape.tanh(hidden)?;
    gaussian_heads(
        tape,
        params,
        hidden,
        (Part::PriorMeanWeight, Part::PriorMeanBias),
        (Part::PriorLogvarWeight, Part::PriorLogvarBias),
    )
}

fn gaussian_heads(
    tape: &mut Tape,
    params: &BoundParams,
    input: Var,
    mean: (Part, Part),
    logvar: (Part, Part),
) -> Result<(Var, Var), ModelError> {
    let m = tape.affine(input, params.get(mean.0), params.get(mean.1))?;
    let lv = tape.affine(input, params.get(logvar.0), params.get(logvar.1))?;
    let lv = tape.clamp(lv, LOGVAR_MIN, LOGVAR_MAX)?;
    Ok((m, lv))
}

/// `p(A, X | z, y)` parameters from `[z ; one-hot(y)]` through two tanh
/// layers.
pub fn decode_vars(
    tape: &mut Tape,
    params: &BoundParams,
    z: Var,
    y: Label,
) -> Result<DecodedVars, ModelError> {
    let label = one_hot(tape, y);
    let input = tape.concat(&[z, label])?;
    let h1 = tape.affine(
        input,
        params.get(Part::DecoderHidden1Weight),
        params.get(Part::DecoderHidden1Bias),
    )?;
    let h1 = tape.tanh(h1)?;
    let h2 = tape.affine(
        h1,
        params.get(Part::DecoderHidden2Weight),
        params.get(Part::DecoderHidden2Bias),
    )?;
    let h2 = tape.tanh(h2)?;
    let edges = tape.affine(h2, params.get(Part::DecoderEdgeWeight), params.get(Part::DecoderEdgeBias))?;
    let exist = tape.affine(h2, params.get(Part::DecoderExistWeight), params.get(Part::DecoderExistBias))?;
    let features = tape.affine(
        h2,
        params.get(Part::DecoderFeatureWeight),
        params.get(Part::DecoderFeatureBias),
    )?;
    Ok(DecodedVars {
        edges,
        exist,
        features,
    })
}

/// Bernoulli edge term over observed pairs, Bernoulli existence term over
/// all slots, Gaussian feature term over observed nodes.
pub fn graph_log_likelihood_vars(
    tape: &mut Tape,
    hp: &Hyperparams,
    graph: &Graph,
    decoded: &DecodedVars,
) -> Result<Var, ModelError> {
    check_graph(graph, hp)?;
    let n = hp.n_max;
    let mut pair_targets = Vec::with_capacity(hp.pair_count());
    let mut pair_mask = Vec::with_capacity(hp.pair_count());
    for i in 0..n {
        for j in i + 1..n {
            let observed = f64::from(graph.mask[i] * graph.mask[j]);
            pair_mask.push(observed);
            pair_targets.push(observed * f64::from(graph.adj[i * n + j]));
        }
    }
    let edge_term = bernoulli_vars(tape, decoded.edges, pair_targets, pair_mask)?;
    let slot_targets: Vec<f64> = graph.mask.iter().map(|&m| f64::from(m)).collect();
    let exist_term = bernoulli_vars(tape, decoded.exist, slot_targets, vec![1.0; n])?;
    let mut total = tape.add(edge_term, exist_term)?;

    if hp.model_features && hp.d > 0 {
        let var = hp.feature_variance;
        let x = tape.constant(Tensor::from_parts(vec![1, n * hp.d], graph.features.clone()));
        let diff = tape.sub(x, decoded.features)?;
        let sq = tape.mul(diff, diff)?;
        let weights: Vec<f64> = graph
            .mask
            .iter()
            .flat_map(|&m| std::iter::repeat_n(f64::from(m), hp.d))
            .collect();
        let sse = tape.weighted_sum(sq, Tensor::from_parts(vec![1, n * hp.d], weights))?;
        let scaled = tape.scale(sse, -0.5 / var)?;
        let count = (graph.n * hp.d) as f64;
        let feature_term = tape.add_scalar(scaled, -0.5 * count * (LN_2PI + var.ln()))?;
        total = tape.add(total, feature_term)?;
    }
    Ok(total)
}

fn bernoulli_vars(
    tape: &mut Tape,
    logits: Var,
    targets: Vec<f64>,
    mask: Vec<f64>,
) -> Result<Var, NumericsError> {
    let len = targets.len();
    let linear = tape.weighted_sum(logits, Tensor::from_parts(vec![1, len], targets))?;
    let sp = tape.softplus(logits)?;
    let normaliser = tape.weighted_sum(sp, Tensor::from_parts(vec![1, len], mask))?;
    tape.sub(linear, normaliser)
}

/// `KL(q ‖ p)` for diagonal Gaussians given as `(mean, logvar)` handles.
pub fn gaussian_kld_vars(
    tape: &mut Tape,
    q: (Var, Var),
    p: (Var, Var),
) -> Result<Var, NumericsError> {
    let (mq, lq) = q;
    let (mp, lp) = p;
    let dim = tape.value(mq).len() as f64;
    let lv_diff = tape.sub(lq, lp)?;
    let ratio = tape.exp(lv_diff)?;
    let dm = tape.sub(mq, mp)?;
    let dm2 = tape.mul(dm, dm)?;
    let neg_lp = tape.scale(lp, -1.0)?;
    let inv_var = tape.exp(neg_lp)?;
    let mahal = tape.mul(dm2, inv_var)?;
    let s = tape.add(ratio, mahal)?;
    let s = tape.sub(s, lv_diff)?;
    let total = tape.sum(s)?;
    let half = tape.scale(total, 0.5)?;
    tape.add_scalar(half, -0.5 * dim)
}

/// `mean + exp(logvar / 2) ⊙ noise`.
pub fn reparameterize_vars(
    tape: &mut Tape,
    q: (Var, Var),
    noise: &[f64],
) -> Result<Var, NumericsError> {
    let (mean, logvar) = q;
    let half = tape.scale(logvar, 0.5)?;
    let std = tape.exp(half)?;
    let eps = tape.constant(Tensor::row(noise.to_vec())?);
    let shift = tape.mul(std, eps)?;
    tape.add(mean, shift)
}

fn gaussian_from(tape: &Tape, pair: (Var, Var)) -> Result<GaussianParams, ModelError> {
    Ok(GaussianParams::new(
        tape.value(pair.0).values().to_vec(),
        tape.value(pair.1).values().to_vec(),
    )?)
}

pub fn encode(graph: &Graph, y: Label, params: &GcvaeParams) -> Result<GaussianParams, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let q = encode_vars(&mut tape, &bound, params.hyper(), graph, y)?;
    gaussian_from(&tape, q)
}

pub fn prior(y: Label, params: &GcvaeParams) -> Result<GaussianParams, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let p = prior_vars(&mut tape, &bound, y)?;
    gaussian_from(&tape, p)
}

pub fn decode(
    z: &[f64],
    y: Label,
    graph_mask: &[u8],
    params: &GcvaeParams,
) -> Result<DecodedGraph, ModelError> {
    let hp = params.hyper();
    if z.len() != hp.d_z {
        return Err(ModelError::Shape(format!(
            "latent has width {}, model expects {}",
            z.len(),
            hp.d_z
        )));
    }
    if graph_mask.len() != hp.n_max {
        return Err(ModelError::Shape(format!(
            "mask has {} slots, model expects {}",
            graph_mask.len(),
            hp.n_max
        )));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let zv = tape.constant(Tensor::row(z.to_vec())?);
    let out = decode_vars(&mut tape, &bound, zv, y)?;
    Ok(decoded_from(&tape, hp, &out))
}

fn decoded_from(tape: &Tape, hp: &Hyperparams, out: &DecodedVars) -> DecodedGraph {
    let n = hp.n_max;
    let upper = tape.value(out.edges).values();
    let mut edge_logits = vec![0.0; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            edge_logits[i * n + j] = upper[k];
            edge_logits[j * n + i] = upper[k];
            k += 1;
        }
    }
    DecodedGraph {
        n_max: n,
        d: hp.d,
        edge_logits,
        exist_logits: tape.value(out.exist).values().to_vec(),
        feature_means: tape.value(out.features).values().to_vec(),
        feature_variance: hp.model_features.then_some(hp.feature_variance),
    }
}

/// `ln p(A, X | z, y)` evaluated directly from a [`DecodedGraph`].
pub fn graph_log_likelihood(graph: &Graph, decoded: &DecodedGraph) -> Result<f64, ModelError> {
    if graph.n_max != decoded.n_max || graph.d != decoded.d {
        return Err(ModelError::Shape(format!(
            "graph has n_max={} d={}, decoded graph has n_max={} d={}",
            graph.n_max, graph.d, decoded.n_max, decoded.d
        )));
    }
    let n = graph.n_max;
    let mut targets = Vec::new();
    let mut logits = Vec::new();
    for i in 0..graph.n {
        for j in i + 1..graph.n {
            targets.push(f64::from(graph.adj[i * n + j]));
            logits.push(decoded.edge_logits[i * n + j]);
        }
    }
    let ones = vec![1.0; targets.len()];
    let mut total = bernoulli_log_likelihood(&targets, &logits, &ones)?;
    let slots: Vec<f64> = graph.mask.iter().map(|&m| f64::from(m)).collect();
    total += bernoulli_log_likelihood(&slots, &decoded.exist_logits, &vec![1.0; n])?;
    if let Some(var) = decoded.feature_variance {
        for i in 0..graph.n {
            for k in 0..graph.d {
                let r = graph.features[i * graph.d + k] - decoded.feature_means[i * graph.d + k];
                total += -0.5 * (LN_2PI + var.ln() + r * r / var);
            }
        }
    }
    Ok(total)
}
