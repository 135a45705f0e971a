//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! through [`Tape::param`] with a caller-chosen id; [`Tape::backprop`] walks
//! the recording backwards from a scalar loss and returns one gradient per
//! registered parameter id. A tape is used for exactly one forward pass and
//! then dropped.

use std::collections::BTreeMap;

use super::prob::{sigmoid, softplus};
use super::{NumericsError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    WeightedSum(Var, Tensor),
    Concat(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<usize, Var>,
}

/// Gradients of a scalar loss keyed by parameter id.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_param: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, param: usize) -> Option<&Tensor> {
        self.by_param.get(&param)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }

    pub fn into_vec(self) -> Vec<Tensor> {
        self.by_param.into_values().collect()
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let values = a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), values)
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape().to_vec(), a.values().iter().map(|&x| f(x)).collect())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, var: Var) -> f64 {
        self.value(var).values()[0]
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Result<Var, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a trainable leaf. Registering the same id twice is an error.
    pub fn param(&mut self, id: usize, value: Tensor) -> Result<Var, NumericsError> {
        if self.params.contains_key(&id) {
            return Err(NumericsError::DuplicateParam(id));
        }
        let var = self.push(value, Op::Param, true)?;
        self.params.insert(id, var);
        Ok(var)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).matmul(self.value(b))?;
        let tracked = self.tracked(&[a, b]);
        self.push(value, Op::MatMul(a, b), tracked)
    }

    /// `a + bias` with `bias` of shape `[1, n]` broadcast over the rows of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, NumericsError> {
        let (rows, cols) = self.value(a).dims2()?;
        let (br, bc) = self.value(bias).dims2()?;
        if br != 1 || bc != cols {
            return Err(NumericsError::ShapeMismatch {
                op: "add_bias",
                left: self.value(a).shape().to_vec(),
                right: self.value(bias).shape().to_vec(),
            });
        }
        let b = self.value(bias).values();
        let mut out = self.value(a).values().to_vec();
        for r in 0..rows {
            for (o, &bv) in out[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *o += bv;
            }
        }
        let value = Tensor::from_parts(vec![rows, cols], out);
        let tracked = self.tracked(&[a, bias]);
        self.push(value, Op::AddBias(a, bias), tracked)
    }

    /// `input · weight + bias`.
    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, NumericsError> {
        let product = self.matmul(input, weight)?;
        self.add_bias(product, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        same_shape("add", self.value(a), self.value(b))?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let tracked = self.tracked(&[a, b]);
        self.push(value, Op::Add(a, b), tracked)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        same_shape("sub", self.value(a), self.value(b))?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let tracked = self.tracked(&[a, b]);
        self.push(value, Op::Sub(a, b), tracked)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        same_shape("mul", self.value(a), self.value(b))?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let tracked = self.tracked(&[a, b]);
        self.push(value, Op::Mul(a, b), tracked)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NumericsError> {
        let value = map(self.value(a), |x| x * factor);
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Scale(a, factor), tracked)
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var, NumericsError> {
        let value = map(self.value(a), |x| x + offset);
        let tracked = self.tracked(&[a]);
        self.push(value, Op::AddScalar(a), tracked)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericsError> {
        let value = map(self.value(a), f64::tanh);
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Tanh(a), tracked)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumericsError> {
        let value = map(self.value(a), f64::exp);
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Exp(a), tracked)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, NumericsError> {
        let value = map(self.value(a), softplus);
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Softplus(a), tracked)
    }

    /// Elementwise clamp into `[lo, hi]`; the gradient is zero outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NumericsError> {
        let value = map(self.value(a), |x| x.clamp(lo, hi));
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Clamp(a, lo, hi), tracked)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let value = Tensor::from_parts(Vec::new(), vec![self.value(a).sum()]);
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Sum(a), tracked)
    }

    /// `Σ wᵢ aᵢ` against constant weights of the same shape.
    pub fn weighted_sum(&mut self, a: Var, weights: Tensor) -> Result<Var, NumericsError> {
        if self.value(a).len() != weights.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "weighted_sum",
                left: self.value(a).shape().to_vec(),
                right: weights.shape().to_vec(),
            });
        }
        let total = self
            .value(a)
            .values()
            .iter()
            .zip(weights.values())
            .map(|(x, w)| x * w)
            .sum();
        let value = Tensor::from_parts(Vec::new(), vec![total]);
        let tracked = self.tracked(&[a]);
        self.push(value, Op::WeightedSum(a, weights), tracked)
    }

    /// Concatenates the flattened inputs into one `[1, n]` row.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let mut values = Vec::new();
        for p in parts {
            values.extend_from_slice(self.value(*p).values());
        }
        let n = values.len();
        let value = Tensor::from_parts(vec![1, n], values);
        let tracked = self.tracked(parts);
        self.push(value, Op::Concat(parts.to_vec()), tracked)
    }

    /// Gradients of the scalar `loss` with respect to every registered
    /// parameter. Parameters the loss does not reach get zeros.
    pub fn backprop(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(NumericsError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_parts(loss_value.shape().to_vec(), vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let g = upstream.values();
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    grads[idx] = Some(upstream);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.nodes[a.0].tracked {
                        let da = upstream.matmul(&bv.transpose()?)?;
                        self.accumulate(&mut grads, *a, da.into_values());
                    }
                    if self.nodes[b.0].tracked {
                        let db = av.transpose()?.matmul(&upstream)?;
                        self.accumulate(&mut grads, *b, db.into_values());
                    }
                }
                Op::AddBias(a, bias) => {
                    self.accumulate(&mut grads, *a, g.to_vec());
                    let (rows, cols) = upstream.dims2()?;
                    let mut db = vec![0.0; cols];
                    for r in 0..rows {
                        for (d, &x) in db.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                            *d += x;
                        }
                    }
                    self.accumulate(&mut grads, *bias, db);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.to_vec());
                    self.accumulate(&mut grads, *b, g.to_vec());
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, g.to_vec());
                    self.accumulate(&mut grads, *b, g.iter().map(|x| -x).collect());
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).values();
                    let bv = self.value(*b).values();
                    self.accumulate(&mut grads, *a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                    self.accumulate(&mut grads, *b, g.iter().zip(av).map(|(x, y)| x * y).collect());
                }
                Op::Scale(a, factor) => {
                    self.accumulate(&mut grads, *a, g.iter().map(|x| x * factor).collect());
                }
                Op::AddScalar(a) => self.accumulate(&mut grads, *a, g.to_vec()),
                Op::Tanh(a) => {
                    let y = node.value.values();
                    let da = g.iter().zip(y).map(|(x, y)| x * (1.0 - y * y)).collect();
                    self.accumulate(&mut grads, *a, da);
                }
                Op::Exp(a) => {
                    let y = node.value.values();
                    self.accumulate(&mut grads, *a, g.iter().zip(y).map(|(x, y)| x * y).collect());
                }
                Op::Softplus(a) => {
                    let input = self.value(*a).values();
                    let da = g.iter().zip(input).map(|(x, v)| x * sigmoid(*v)).collect();
                    self.accumulate(&mut grads, *a, da);
                }
                Op::Clamp(a, lo, hi) => {
                    let input = self.value(*a).values();
                    let da = g
                        .iter()
                        .zip(input)
                        .map(|(x, v)| if v < lo || v > hi { 0.0 } else { *x })
                        .collect();
                    self.accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    self.accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::WeightedSum(a, weights) => {
                    let da = weights.values().iter().map(|w| w * g[0]).collect();
                    self.accumulate(&mut grads, *a, da);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        self.accumulate(&mut grads, *p, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
            }
        }

        let mut by_param = BTreeMap::new();
        for (&id, &var) in &self.params {
            let grad = match grads.get_mut(var.0).and_then(Option::take) {
                Some(g) => g,
                None => Tensor::zeros(self.value(var).shape()),
            };
            if !grad.is_finite() {
                return Err(NumericsError::NonFinite("backprop"));
            }
            by_param.insert(id, grad);
        }
        Ok(Gradients { by_param })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: Var, delta: Vec<f64>) {
        if !self.nodes[target.0].tracked {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => {
                for (e, d) in existing.values_mut().iter_mut().zip(&delta) {
                    *e += d;
                }
            }
            slot @ None => {
                let shape = self.value(target).shape().to_vec();
                *slot = Some(Tensor::from_parts(shape, delta));
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "constant",
        Op::Param => "param",
        Op::MatMul(..) => "matmul",
        Op::AddBias(..) => "add_bias",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Tanh(..) => "tanh",
        Op::Exp(..) => "exp",
        Op::Softplus(..) => "softplus",
        Op::Clamp(..) => "clamp",
        Op::Sum(..) => "sum",
        Op::WeightedSum(..) => "weighted_sum",
        Op::Concat(..) => "concat",
    }
}
