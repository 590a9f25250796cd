use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => leaky_relu(x, slope),
            Activation::Identity => x,
        }
    }

    /// Derivative at `x`; the positive branch is taken at 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
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

/// Shape and menu choices of one layer: `Linear → [BatchNorm] → activation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub batchnorm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    /// Linear → BatchNorm → LeakyReLU.
    pub fn hidden(in_dim: usize, out_dim: usize, slope: f64) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            batchnorm: true,
            activation: Activation::LeakyRelu { slope },
        }
    }

    /// Bare affine map.
    pub fn linear(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            batchnorm: false,
            activation: Activation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Shape(format!(
                "layer dims must be at least 1, got {}→{}",
                self.in_dim, self.out_dim
            )));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !(slope > 0.0 && slope < 1.0) {
                return Err(Error::Validation(format!(
                    "LeakyReLU slope must lie in (0, 1), got {slope}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Training,
    Inference,
}

/// Per-feature batch normalization parameters and running statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BnCache {
    pub mode: Mode,
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Unbiased batch variance, used for the running estimate.
    pub batch_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Training mode normalizes with batch statistics, inference mode with
    /// the running estimates. Running statistics are not touched here.
    pub fn forward(&self, z: &Matrix, mode: Mode) -> Result<(Matrix, BnCache)> {
        let (b, d) = z.shape();
        if d != self.dim() {
            return Err(Error::Shape(format!("batchnorm over {} features got {d}", self.dim())));
        }
        let (mean, var_biased, var_unbiased) = match mode {
            Mode::Training => {
                if b < 2 {
                    return Err(Error::Shape(
                        "batch normalization in training mode needs at least 2 rows".into(),
                    ));
                }
                let mut mean = z.column_sums();
                mean.iter_mut().for_each(|m| *m /= b as f64);
                let mut ss = vec![0.0; d];
                for i in 0..b {
                    for ((s, &v), &m) in ss.iter_mut().zip(z.row(i)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                let biased = ss.iter().map(|s| s / b as f64).collect::<Vec<_>>();
                let unbiased = ss.iter().map(|s| s / (b - 1) as f64).collect();
                (mean, biased, unbiased)
            }
            Mode::Inference => (self.running_mean.clone(), self.running_var.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var_biased.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let mut xhat = Matrix::zeros(b, d);
        let mut y = Matrix::zeros(b, d);
        for i in 0..b {
            for j in 0..d {
                let h = (z[(i, j)] - mean[j]) * inv_std[j];
                xhat[(i, j)] = h;
                y[(i, j)] = self.gamma[j] * h + self.beta[j];
            }
        }
        Ok((
            y,
            BnCache {
                mode,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var_unbiased,
            },
        ))
    }

    /// Returns `(dL/dz, dL/dgamma, dL/dbeta)`.
    pub fn backward(&self, cache: &BnCache, dy: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let (b, d) = dy.shape();
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        for i in 0..b {
            for j in 0..d {
                dgamma[j] += dy[(i, j)] * cache.xhat[(i, j)];
                dbeta[j] += dy[(i, j)];
            }
        }
        let mut dz = Matrix::zeros(b, d);
        match cache.mode {
            Mode::Inference => {
                for i in 0..b {
                    for j in 0..d {
                        dz[(i, j)] = dy[(i, j)] * self.gamma[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Training => {
                // dxhat = dy·γ; dz = inv_std/B · (B·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                let n = b as f64;
                let sum_dxhat: Vec<f64> = (0..d).map(|j| dbeta[j] * self.gamma[j]).collect();
                let sum_dxhat_xhat: Vec<f64> = (0..d).map(|j| dgamma[j] * self.gamma[j]).collect();
                for i in 0..b {
                    for j in 0..d {
                        let dxhat = dy[(i, j)] * self.gamma[j];
                        dz[(i, j)] = cache.inv_std[j] / n
                            * (n * dxhat - sum_dxhat[j] - cache.xhat[(i, j)] * sum_dxhat_xhat[j]);
                    }
                }
            }
        }
        (dz, dgamma, dbeta)
    }

    pub fn update_running(&mut self, cache: &BnCache) {
        if cache.mode != Mode::Training {
            return;
        }
        for j in 0..self.dim() {
            self.running_mean[j] = (1.0 - BN_MOMENTUM) * self.running_mean[j] + BN_MOMENTUM * cache.batch_mean[j];
            self.running_var[j] = (1.0 - BN_MOMENTUM) * self.running_var[j] + BN_MOMENTUM * cache.batch_var[j];
        }
    }
}
