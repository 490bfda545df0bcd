use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

fn same_shape(y: &Tensor, f: &Tensor) -> Result<()> {
    if y.shape() != f.shape() {
        return Err(Error::Dimension(format!(
            "target shape {:?} does not match prediction shape {:?}",
            y.shape(),
            f.shape()
        )));
    }
    Ok(())
}

/// Mean squared error averaged over samples (rows): `(1/n) * sum (y - f)^2`.
pub fn loss_mse(y: &Tensor, f: &Tensor) -> Result<f64> {
    same_shape(y, f)?;
    let n = y.rows().max(1) as f64;
    let s: f64 = y
        .data()
        .iter()
        .zip(f.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / n)
}

/// Gradient of [`loss_mse`] with respect to the prediction.
pub fn loss_mse_grad(y: &Tensor, f: &Tensor) -> Result<Tensor> {
    same_shape(y, f)?;
    let n = y.rows().max(1) as f64;
    let g = y
        .data()
        .iter()
        .zip(f.data())
        .map(|(a, b)| 2.0 * (b - a) / n)
        .collect();
    Tensor::new(f.shape().to_vec(), g)
}

/// Checks that every row is a one-hot vector.
pub fn validate_one_hot(y: &Tensor) -> Result<()> {
    let k = y.row_len();
    for i in 0..y.rows() {
        let row = y.row(i);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != k - 1 {
            return Err(Error::Validation(format!("label row {i} is not one-hot: {row:?}")));
        }
    }
    Ok(())
}

/// Categorical cross-entropy averaged over samples.
pub fn loss_cross_entropy(y_onehot: &Tensor, p: &Tensor) -> Result<f64> {
    same_shape(y_onehot, p)?;
    validate_one_hot(y_onehot)?;
    for i in 0..p.rows() {
        let s: f64 = p.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "probability row {i} sums to {s}, not 1"
            )));
        }
    }
    let n = p.rows().max(1) as f64;
    let total: f64 = y_onehot
        .data()
        .iter()
        .zip(p.data())
        .filter(|(y, _)| **y != 0.0)
        .map(|(y, pk)| -y * pk.clamp(PROB_FLOOR, 1.0).ln())
        .sum();
    Ok(total / n)
}

impl LossKind {
    pub fn evaluate(self, y: &Tensor, f: &Tensor) -> Result<f64> {
        match self {
            LossKind::Mse => loss_mse(y, f),
            LossKind::CrossEntropy => loss_cross_entropy(y, f),
        }
    }
}

/// One-hot encodes class indices into an `n x k` tensor.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::Validation(format!("label {l} out of range for {k} classes")));
        }
        data[i * k + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), k], data)
}
