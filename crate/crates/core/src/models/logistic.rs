//! L2-regularized logistic regression on standardized features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per-feature (mean, stddev) from the training data.
    pub standardization: Vec<(f64, f64)>,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.standardization)
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Log-odds for a row of the expected arity.
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.bias
            + row
                .iter()
                .zip(&self.standardization)
                .zip(&self.weights)
                .map(|((v, (m, s)), w)| w * (v - m) / s)
                .sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.standardization.len() {
            return Err(Error::InvalidModel("weights and standardization differ in length".into()));
        }
        let finite = self.bias.is_finite()
            && self.weights.iter().all(|w| w.is_finite())
            && self
                .standardization
                .iter()
                .all(|(m, s)| m.is_finite() && s.is_finite() && *s > 0.0);
        if !finite {
            return Err(Error::InvalidModel("non-finite linear parameters".into()));
        }
        Ok(())
    }
}

/// Column means and standard deviations; a zero deviation becomes 1 so a
/// constant column standardizes to all zeros.
pub fn standardization(x: &[&[f64]]) -> Vec<(f64, f64)> {
    let n = x.len() as f64;
    let f = x.first().map_or(0, |r| r.len());
    (0..f)
        .map(|j| {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

/// Mean log-loss plus `l2/2 * |w|^2` (bias unpenalized) and its gradient.
/// `params` holds the weights followed by the bias.
pub fn loss_and_gradient(params: &[f64], z: &[Vec<f64>], y: &[u8], l2: f64) -> (f64, Vec<f64>) {
    let f = params.len() - 1;
    let (w, b) = (&params[..f], params[f]);
    let n = z.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; f + 1];
    for (row, &label) in z.iter().zip(y) {
        let s = b + row.iter().zip(w).map(|(v, w)| v * w).sum::<f64>();
        let t = f64::from(label);
        // log(1 + e^s) - t*s, computed without overflow
        loss += s.max(0.0) + (-s.abs()).exp().ln_1p() - t * s;
        let r = sigmoid(s) - t;
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad[f] += r;
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    for j in 0..f {
        loss += 0.5 * l2 * w[j] * w[j];
        grad[j] += l2 * w[j];
    }
    (loss, grad)
}

pub(crate) fn require_both_classes(y: &[u8]) -> Result<()> {
    if !y.iter().any(|&l| l == 1) {
        return Err(Error::MissingClass(1));
    }
    if !y.iter().any(|&l| l == 0) {
        return Err(Error::MissingClass(0));
    }
    Ok(())
}

/// Full-batch gradient descent. A step that raises the loss is rejected and
/// the learning rate halved, so the recorded losses never increase.
pub fn train_logistic(x: &[&[f64]], y: &[u8], l2: f64, lr: f64, epochs: usize) -> Result<(LinearModel, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    require_both_classes(y)?;
    if !(l2 >= 0.0) || !(lr > 0.0) {
        return Err(Error::Config(format!("invalid logistic hyperparameters l2={l2} lr={lr}")));
    }
    let stdz = standardization(x);
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&stdz).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    let f = stdz.len();
    let mut params = vec![0.0; f + 1];
    let (mut loss, mut grad) = loss_and_gradient(&params, &z, y, l2);
    let mut history = vec![loss];
    let mut step = lr;
    for _ in 0..epochs {
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let (l, g) = loss_and_gradient(&trial, &z, y, l2);
            if l <= loss {
                params = trial;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        history.push(loss);
        if !accepted {
            break;
        }
    }
    let model = LinearModel {
        weights: params[..f].to_vec(),
        bias: params[f],
        standardization: stdz,
    };
    model.validate()?;
    Ok((model, history))
}
