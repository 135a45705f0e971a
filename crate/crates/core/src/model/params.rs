use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::{NumericsError, Tape, Tensor, Var};
use crate::seeding::rng_from;

/// Architecture and likelihood settings shared by all three networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Pad size of the graphs the model scores.
    pub n_max: usize,
    /// Node feature width.
    pub d: usize,
    pub d_z: usize,
    pub recognition_hidden: usize,
    pub message_passing_layers: usize,
    pub prior_hidden: usize,
    pub decoder_hidden: usize,
    /// Fixed variance of the Gaussian feature likelihood.
    pub feature_variance: f64,
    /// When false the feature term is dropped from the graph likelihood.
    pub model_features: bool,
}

impl Hyperparams {
    pub fn new(n_max: usize, d: usize) -> Self {
        Self {
            n_max,
            d,
            d_z: 8,
            recognition_hidden: 32,
            message_passing_layers: 2,
            prior_hidden: 16,
            decoder_hidden: 32,
            feature_variance: 1.0,
            model_features: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_z == 0 {
            return Err(ModelError::Config("d_z must be at least 1".into()));
        }
        if self.message_passing_layers == 0 {
            return Err(ModelError::Config(
                "at least one message-passing layer is required".into(),
            ));
        }
        if self.recognition_hidden == 0 || self.prior_hidden == 0 || self.decoder_hidden == 0 {
            return Err(ModelError::Config("hidden widths must be positive".into()));
        }
        if !(self.feature_variance > 0.0 && self.feature_variance.is_finite()) {
            return Err(ModelError::Config(format!(
                "feature variance must be positive, got {}",
                self.feature_variance
            )));
        }
        Ok(())
    }

    /// Upper-triangle pair count `n_max(n_max-1)/2`.
    pub fn pair_count(&self) -> usize {
        self.n_max * self.n_max.saturating_sub(1) / 2
    }

    /// Per-node recognition input: features, mask flag, scaled degree.
    pub(crate) fn node_input_width(&self) -> usize {
        self.d + 2
    }
}

/// Named slot of one weight tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    RecognitionLayer(usize),
    RecognitionMeanWeight,
    RecognitionMeanBias,
    RecognitionLogvarWeight,
    RecognitionLogvarBias,
    PriorHiddenWeight,
    PriorHiddenBias,
    PriorMeanWeight,
    PriorMeanBias,
    PriorLogvarWeight,
    PriorLogvarBias,
    DecoderHidden1Weight,
    DecoderHidden1Bias,
    DecoderHidden2Weight,
    DecoderHidden2Bias,
    DecoderEdgeWeight,
    DecoderEdgeBias,
    DecoderExistWeight,
    DecoderExistBias,
    DecoderFeatureWeight,
    DecoderFeatureBias,
}

const FIXED_PARTS: [Part; 20] = [
    Part::RecognitionMeanWeight,
    Part::RecognitionMeanBias,
    Part::RecognitionLogvarWeight,
    Part::RecognitionLogvarBias,
    Part::PriorHiddenWeight,
    Part::PriorHiddenBias,
    Part::PriorMeanWeight,
    Part::PriorMeanBias,
    Part::PriorLogvarWeight,
    Part::PriorLogvarBias,
    Part::DecoderHidden1Weight,
    Part::DecoderHidden1Bias,
    Part::DecoderHidden2Weight,
    Part::DecoderHidden2Bias,
    Part::DecoderEdgeWeight,
    Part::DecoderEdgeBias,
    Part::DecoderExistWeight,
    Part::DecoderExistBias,
    Part::DecoderFeatureWeight,
    Part::DecoderFeatureBias,
];

impl Part {
    /// Every slot in storage order for a given layer count.
    pub fn all(message_passing_layers: usize) -> Vec<Part> {
        (0..message_passing_layers)
            .map(Part::RecognitionLayer)
            .chain(FIXED_PARTS)
            .collect()
    }

    fn index(self, message_passing_layers: usize) -> usize {
        match self {
            Part::RecognitionLayer(l) => l,
            other => {
                message_passing_layers
                    + FIXED_PARTS
                        .iter()
                        .position(|p| *p == other)
                        .expect("fixed part")
            }
        }
    }

    fn shape(self, hp: &Hyperparams) -> Vec<usize> {
        let rh = hp.recognition_hidden;
        let ph = hp.prior_hidden;
        let dh = hp.decoder_hidden;
        let feat_out = hp.n_max * hp.d;
        match self {
            Part::RecognitionLayer(0) => vec![hp.node_input_width(), rh],
            Part::RecognitionLayer(_) => vec![rh, rh],
            Part::RecognitionMeanWeight | Part::RecognitionLogvarWeight => vec![rh + 2, hp.d_z],
            Part::RecognitionMeanBias | Part::RecognitionLogvarBias => vec![1, hp.d_z],
            Part::PriorHiddenWeight => vec![2, ph],
            Part::PriorHiddenBias => vec![1, ph],
            Part::PriorMeanWeight | Part::PriorLogvarWeight => vec![ph, hp.d_z],
            Part::PriorMeanBias | Part::PriorLogvarBias => vec![1, hp.d_z],
            Part::DecoderHidden1Weight => vec![hp.d_z + 2, dh],
            Part::DecoderHidden1Bias => vec![1, dh],
            Part::DecoderHidden2Weight => vec![dh, dh],
            Part::DecoderHidden2Bias => vec![1, dh],
            Part::DecoderEdgeWeight => vec![dh, hp.pair_count()],
            Part::DecoderEdgeBias => vec![1, hp.pair_count()],
            Part::DecoderExistWeight => vec![dh, hp.n_max],
            Part::DecoderExistBias => vec![1, hp.n_max],
            Part::DecoderFeatureWeight => vec![dh, feat_out],
            Part::DecoderFeatureBias => vec![1, feat_out],
        }
    }

    fn is_bias(self) -> bool {
        matches!(
            self,
            Part::RecognitionMeanBias
                | Part::RecognitionLogvarBias
                | Part::PriorHiddenBias
                | Part::PriorMeanBias
                | Part::PriorLogvarBias
                | Part::DecoderHidden1Bias
                | Part::DecoderHidden2Bias
                | Part::DecoderEdgeBias
                | Part::DecoderExistBias
                | Part::DecoderFeatureBias
        )
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Part::RecognitionLayer(l) => return write!(f, "recognition.layer{l}.weight"),
            Part::RecognitionMeanWeight => "recognition.mean.weight",
            Part::RecognitionMeanBias => "recognition.mean.bias",
            Part::RecognitionLogvarWeight => "recognition.logvar.weight",
            Part::RecognitionLogvarBias => "recognition.logvar.bias",
            Part::PriorHiddenWeight => "prior.hidden.weight",
            Part::PriorHiddenBias => "prior.hidden.bias",
            Part::PriorMeanWeight => "prior.mean.weight",
            Part::PriorMeanBias => "prior.mean.bias",
            Part::PriorLogvarWeight => "prior.logvar.weight",
            Part::PriorLogvarBias => "prior.logvar.bias",
            Part::DecoderHidden1Weight => "decoder.hidden1.weight",
            Part::DecoderHidden1Bias => "decoder.hidden1.bias",
            Part::DecoderHidden2Weight => "decoder.hidden2.weight",
            Part::DecoderHidden2Bias => "decoder.hidden2.bias",
            Part::DecoderEdgeWeight => "decoder.edges.weight",
            Part::DecoderEdgeBias => "decoder.edges.bias",
            Part::DecoderExistWeight => "decoder.exist.weight",
            Part::DecoderExistBias => "decoder.exist.bias",
            Part::DecoderFeatureWeight => "decoder.features.weight",
            Part::DecoderFeatureBias => "decoder.features.bias",
        };
        f.write_str(name)
    }
}

/// Trainable weights of the prior, recognition and decoder networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SavedParams", into = "SavedParams")]
pub struct GcvaeParams {
    hyper: Hyperparams,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    #[serde(flatten)]
    tensor: Tensor,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedParams {
    hyper: Hyperparams,
    tensors: Vec<NamedTensor>,
}

impl From<GcvaeParams> for SavedParams {
    fn from(p: GcvaeParams) -> Self {
        let parts = Part::all(p.hyper.message_passing_layers);
        SavedParams {
            tensors: parts
                .iter()
                .zip(p.tensors)
                .map(|(part, tensor)| NamedTensor {
                    name: part.to_string(),
                    tensor,
                })
                .collect(),
            hyper: p.hyper,
        }
    }
}

impl TryFrom<SavedParams> for GcvaeParams {
    type Error = ModelError;

    fn try_from(saved: SavedParams) -> Result<Self, Self::Error> {
        saved.hyper.validate()?;
        let parts = Part::all(saved.hyper.message_passing_layers);
        if parts.len() != saved.tensors.len() {
            return Err(ModelError::Format(format!(
                "expected {} tensors, found {}",
                parts.len(),
                saved.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(parts.len());
        for (part, named) in parts.iter().zip(saved.tensors) {
            let expected = part.shape(&saved.hyper);
            if named.name != part.to_string() || named.tensor.shape() != expected.as_slice() {
                return Err(ModelError::Format(format!(
                    "tensor {:?} with shape {:?} does not match slot {part} with shape {expected:?}",
                    named.name,
                    named.tensor.shape()
                )));
            }
            tensors.push(named.tensor);
        }
        Ok(GcvaeParams {
            hyper: saved.hyper,
            tensors,
        })
    }
}

impl GcvaeParams {
    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(hyper: Hyperparams, seed: u64) -> Result<Self, ModelError> {
        hyper.validate()?;
        let mut rng = rng_from(seed);
        let tensors = Part::all(hyper.message_passing_layers)
            .into_iter()
            .map(|part| {
                let shape = part.shape(&hyper);
                let mut t = Tensor::zeros(&shape);
                if !part.is_bias() {
                    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    for v in t.values_mut() {
                        *v = rng.random_range(-bound..bound);
                    }
                }
                t
            })
            .collect();
        Ok(Self { hyper, tensors })
    }

    /// All weights zero: every network outputs zeros.
    pub fn zeros(hyper: Hyperparams) -> Result<Self, ModelError> {
        hyper.validate()?;
        let tensors = Part::all(hyper.message_passing_layers)
            .into_iter()
            .map(|p| Tensor::zeros(&p.shape(&hyper)))
            .collect();
        Ok(Self { hyper, tensors })
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn parts(&self) -> Vec<Part> {
        Part::all(self.hyper.message_passing_layers)
    }

    pub fn tensor(&self, part: Part) -> &Tensor {
        &self.tensors[part.index(self.hyper.message_passing_layers)]
    }

    pub fn tensor_mut(&mut self, part: Part) -> &mut Tensor {
        let idx = part.index(self.hyper.message_passing_layers);
        &mut self.tensors[idx]
    }

    /// Tensors in storage order; the order matches [`GcvaeParams::parts`].
    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Registers every tensor on `tape`, parameter id = storage index.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams, NumericsError> {
        let vars = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundParams {
            vars,
            layers: self.hyper.message_passing_layers,
        })
    }
}

/// Tape handles for one [`GcvaeParams`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
    layers: usize,
}

impl BoundParams {
    pub fn get(&self, part: Part) -> Var {
        self.vars[part.index(self.layers)]
    }
}
