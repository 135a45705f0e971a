use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense row-major `f64` tensor.
///
/// Values are always finite; constructors reject NaN and infinities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = NumericsError;

    fn try_from(raw: RawTensor) -> Result<Self, Self::Error> {
        Tensor::new(raw.shape, raw.values)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NumericsError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NumericsError::ValueCount {
                shape,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("tensor construction"));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; len],
        }
    }

    pub fn scalar(value: f64) -> Result<Self, NumericsError> {
        Self::new(Vec::new(), vec![value])
    }

    /// A `[1, n]` row vector.
    pub fn row(values: Vec<f64>) -> Result<Self, NumericsError> {
        Self::new(vec![1, values.len()], values)
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, NumericsError> {
        Self::new(vec![rows, cols], values)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.values[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a tensor without the finiteness scan. Callers guarantee the
    /// shape/value-count agreement.
    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, values }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Interprets the tensor as a matrix. Vectors of shape `[n]` are
    /// treated as `[1, n]`, scalars as `[1, 1]`.
    pub fn dims2(&self) -> Result<(usize, usize), NumericsError> {
        match self.shape.as_slice() {
            [] => Ok((1, 1)),
            [n] => Ok((1, *n)),
            [r, c] => Ok((*r, *c)),
            _ => Err(NumericsError::Rank {
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    pub fn get2(&self, row: usize, col: usize) -> f64 {
        let (_, cols) = self.dims2().expect("rank <= 2");
        self.values[row * cols + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn transpose(&self) -> Result<Tensor, NumericsError> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.values[i * c + j];
            }
        }
        Ok(Tensor::from_parts(vec![c, r], out))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, NumericsError> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.values[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (p, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = &other.values[p * n..(p + 1) * n];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(Tensor::from_parts(vec![m, n], out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_value_count() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(NumericsError::NonFinite(_))
        ));
        assert!(Tensor::row(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().values(), &[17.0, 39.0]);
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn zero_extent_matmul() {
        let a = Tensor::zeros(&[3, 0]);
        let b = Tensor::zeros(&[0, 4]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[3, 4]);
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn serde_rejects_inconsistent_shape() {
        let bad = r#"{"shape":[2,2],"values":[1.0,2.0,3.0]}"#;
        assert!(serde_json::from_str::<Tensor>(bad).is_err());
        let good = r#"{"shape":[1,2],"values":[1.5,-2.0]}"#;
        let t: Tensor = serde_json::from_str(good).unwrap();
        assert_eq!(t.values(), &[1.5, -2.0]);
    }
}
