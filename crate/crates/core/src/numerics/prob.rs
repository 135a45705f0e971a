//! Scalar probability primitives on plain slices.

use serde::{Deserialize, Serialize};

use super::NumericsError;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Bounds applied to every log-variance a network emits.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`, finite for every finite `x`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn logsumexp(values: &[f64]) -> Result<f64, NumericsError> {
    let max = values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Err(NumericsError::Empty("logsumexp"));
    }
    if !max.is_finite() {
        return Err(NumericsError::NonFinite("logsumexp"));
    }
    let total: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + total.ln())
}

/// Diagonal Gaussian over a latent vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl GaussianParams {
    /// Builds the distribution, clamping `logvar` into `[-10, 10]`.
    pub fn new(mean: Vec<f64>, logvar: Vec<f64>) -> Result<Self, NumericsError> {
        if mean.len() != logvar.len() {
            return Err(NumericsError::DimensionMismatch {
                op: "gaussian params",
                expected: mean.len(),
                got: logvar.len(),
            });
        }
        let logvar = logvar
            .into_iter()
            .map(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX))
            .collect();
        Ok(Self { mean, logvar })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            logvar: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_dim(&self, op: &'static str, got: usize) -> Result<(), NumericsError> {
        if self.dim() != got {
            return Err(NumericsError::DimensionMismatch {
                op,
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// `KL(q ‖ p)` in closed form for diagonal Gaussians.
pub fn gaussian_kld(q: &GaussianParams, p: &GaussianParams) -> Result<f64, NumericsError> {
    p.check_dim("gaussian_kld", q.dim())?;
    let mut total = 0.0;
    for i in 0..q.dim() {
        let (mq, lq) = (q.mean[i], q.logvar[i]);
        let (mp, lp) = (p.mean[i], p.logvar[i]);
        let dm = mq - mp;
        total += 0.5 * ((lq - lp).exp() + dm * dm * (-lp).exp() - 1.0 + lp - lq);
    }
    Ok(total)
}

pub fn gaussian_log_density(x: &[f64], params: &GaussianParams) -> Result<f64, NumericsError> {
    params.check_dim("gaussian_log_density", x.len())?;
    Ok(x
        .iter()
        .zip(params.mean.iter().zip(&params.logvar))
        .map(|(&x, (&m, &lv))| {
            let d = x - m;
            -0.5 * (LN_2PI + lv + d * d * (-lv).exp())
        })
        .sum())
}

/// `Σ mask·[t ln σ(ℓ) + (1−t) ln(1−σ(ℓ))]` in softplus form.
pub fn bernoulli_log_likelihood(
    targets: &[f64],
    logits: &[f64],
    mask: &[f64],
) -> Result<f64, NumericsError> {
    if targets.len() != logits.len() || mask.len() != logits.len() {
        return Err(NumericsError::DimensionMismatch {
            op: "bernoulli_log_likelihood",
            expected: logits.len(),
            got: if targets.len() != logits.len() {
                targets.len()
            } else {
                mask.len()
            },
        });
    }
    let mut total = 0.0;
    for ((&t, &l), &m) in targets.iter().zip(logits).zip(mask) {
        if t != 0.0 && t != 1.0 {
            return Err(NumericsError::NonBinaryTarget(t));
        }
        if m != 0.0 {
            let term = if t == 1.0 { -softplus(-l) } else { -softplus(l) };
            total += m * term;
        }
    }
    Ok(total)
}

/// `μ + exp(lv/2) ⊙ noise`.
pub fn reparameterize(params: &GaussianParams, noise: &[f64]) -> Result<Vec<f64>, NumericsError> {
    params.check_dim("reparameterize", noise.len())?;
    Ok(params
        .mean
        .iter()
        .zip(&params.logvar)
        .zip(noise)
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect())
}
