use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{BatchNorm, BnCache, LayerSpec, Mode};
use super::{Matrix, Parameterized};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    /// `out_dim × in_dim`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub batchnorm: Option<BatchNorm>,
}

/// Feedforward stack of [`Layer`]s.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    mode: Mode,
    /// Bumped on every mutable parameter access; ties caches to parameters.
    #[serde(skip)]
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.mode == other.mode
    }
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    pub input: Matrix,
    pub bn: Option<BnCache>,
    /// Input of the activation function (after BN when present).
    pub pre_activation: Matrix,
}

/// Everything `backward` needs from one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub layers: Vec<LayerCache>,
    pub output: Matrix,
    mode: Mode,
    version: u64,
}

impl Forward {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Parameter gradients in [`Parameterized`] order plus the input gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
    pub input: Matrix,
}

/// Kaiming-uniform weights (variance 2 / fan_in), zero biases, identity batchnorm.
pub fn init_network(specs: &[LayerSpec], seed: u64) -> Result<Network> {
    if specs.is_empty() {
        return Err(Error::Shape("network needs at least one layer".into()));
    }
    for (k, pair) in specs.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::Shape(format!(
                "layer {k} outputs {} features but layer {} expects {}",
                pair[0].out_dim,
                k + 1,
                pair[1].in_dim
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        let bound = (6.0 / spec.in_dim as f64).sqrt();
        let data = (0..spec.in_dim * spec.out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        layers.push(Layer {
            spec: *spec,
            weights: Matrix::new(spec.out_dim, spec.in_dim, data)?,
            bias: vec![0.0; spec.out_dim],
            batchnorm: spec.batchnorm.then(|| BatchNorm::new(spec.out_dim)),
        });
    }
    Ok(Network {
        layers,
        mode: Mode::Training,
        version: 0,
    })
}

impl Network {
    /// Rebuilds a network from stored layers, checking every invariant.
    pub fn from_layers(layers: Vec<Layer>, mode: Mode) -> Result<Self> {
        let net = Network {
            layers,
            mode,
            version: 0,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let spec = layer.spec;
            spec.validate()?;
            if layer.weights.shape() != (spec.out_dim, spec.in_dim) || layer.bias.len() != spec.out_dim {
                return Err(Error::Shape(format!("layer {k}: parameter shapes do not match its spec")));
            }
            match (&layer.batchnorm, spec.batchnorm) {
                (Some(bn), true) => {
                    let d = spec.out_dim;
                    if bn.gamma.len() != d || bn.beta.len() != d || bn.running_mean.len() != d || bn.running_var.len() != d {
                        return Err(Error::Shape(format!("layer {k}: batchnorm shapes do not match")));
                    }
                    if bn.running_var.iter().any(|&v| !(v > 0.0)) {
                        return Err(Error::Validation(format!("layer {k}: running variance must be positive")));
                    }
                }
                (None, false) => {}
                _ => return Err(Error::Shape(format!("layer {k}: batchnorm presence disagrees with spec"))),
            }
            if k > 0 && self.layers[k - 1].spec.out_dim != spec.in_dim {
                return Err(Error::Shape(format!("layer {k}: dimension chain broken")));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().spec.out_dim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Mutable access to one layer; invalidates outstanding caches.
    pub fn layer_mut(&mut self, k: usize) -> &mut Layer {
        self.version += 1;
        &mut self.layers[k]
    }

    /// Forward pass in the network's current mode. Does not update running statistics.
    pub fn forward(&self, input: &Matrix) -> Result<Forward> {
        self.forward_in(input, self.mode)
    }

    pub fn forward_in(&self, input: &Matrix, mode: Mode) -> Result<Forward> {
        if input.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "network expects {} input features, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let mut z = x.matmul_transposed(&layer.weights);
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let (pre, bn) = match &layer.batchnorm {
                Some(bn) => {
                    let (y, cache) = bn.forward(&z, mode)?;
                    (y, Some(cache))
                }
                None => (z, None),
            };
            let act = layer.spec.activation;
            let out = pre.map(|v| act.apply(v));
            caches.push(LayerCache {
                input: x,
                bn,
                pre_activation: pre,
            });
            x = out;
        }
        Ok(Forward {
            layers: caches,
            output: x,
            mode,
            version: self.version,
        })
    }

    /// Inference-mode output.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.forward_in(input, Mode::Inference)?.output)
    }

    /// Folds the batch statistics of a training-mode pass into the running estimates.
    pub fn update_running_stats(&mut self, fwd: &Forward) {
        for (layer, cache) in self.layers.iter_mut().zip(&fwd.layers) {
            if let (Some(bn), Some(c)) = (layer.batchnorm.as_mut(), cache.bn.as_ref()) {
                bn.update_running(c);
            }
        }
    }

    /// Exact gradients of a scalar loss given `dL/d(output)`.
    pub fn backward(&self, fwd: &Forward, output_grad: &Matrix) -> Result<Gradients> {
        if fwd.version != self.version || fwd.layers.len() != self.layers.len() {
            return Err(Error::Validation(
                "forward cache is stale: parameters changed since the forward pass".into(),
            ));
        }
        if output_grad.shape() != fwd.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, forward output is {:?}",
                output_grad.shape(),
                fwd.output.shape()
            )));
        }
        let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        let mut grad = output_grad.clone();
        for (layer, cache) in self.layers.iter().zip(&fwd.layers).rev() {
            let act = layer.spec.activation;
            let mut d_pre = grad;
            for (d, &a) in d_pre.as_mut_slice().iter_mut().zip(cache.pre_activation.as_slice()) {
                *d *= act.derivative(a);
            }
            let (dz, bn_grads) = match (&layer.batchnorm, &cache.bn) {
                (Some(bn), Some(c)) => {
                    let (dz, dgamma, dbeta) = bn.backward(c, &d_pre);
                    (dz, Some((dgamma, dbeta)))
                }
                _ => (d_pre, None),
            };
            let dw = dz.transposed_matmul(&cache.input);
            let db = dz.column_sums();
            grad = dz.matmul(&layer.weights);
            let mut tensors = vec![dw.into_vec(), db];
            if let Some((dgamma, dbeta)) = bn_grads {
                tensors.push(dgamma);
                tensors.push(dbeta);
            }
            per_layer.push(tensors);
        }
        per_layer.reverse();
        Ok(Gradients {
            tensors: per_layer.into_iter().flatten().collect(),
            input: grad,
        })
    }
}

impl Parameterized for Network {
    fn parameters(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(layer.weights.as_slice());
            out.push(layer.bias.as_slice());
            if let Some(bn) = &layer.batchnorm {
                out.push(bn.gamma.as_slice());
                out.push(bn.beta.as_slice());
            }
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
            if let Some(bn) = &mut layer.batchnorm {
                out.push(bn.gamma.as_mut_slice());
                out.push(bn.beta.as_mut_slice());
            }
        }
        out
    }

    fn parameter_layers(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            let n = if layer.batchnorm.is_some() { 4 } else { 2 };
            out.extend(std::iter::repeat_n(k, n));
        }
        out
    }
}
