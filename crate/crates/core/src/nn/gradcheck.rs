use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Matrix, Network, Parameterized};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Parameters sampled per layer (all of them when the layer is smaller).
    pub samples_per_layer: usize,
    pub seed: u64,
    /// Lower bound on the relative-error denominator, so that gradients that
    /// are exactly zero analytically do not turn round-off into huge ratios.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            samples_per_layer: 100,
            seed: 0,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Sample counts per layer, in layer order.
    pub checked_per_layer: Vec<usize>,
    /// `(tensor, index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` gradients against central finite differences of `loss`.
pub fn gradient_check<M, F>(model: &M, analytic: &[Vec<f64>], loss: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    M: Parameterized + Clone,
    F: Fn(&M) -> Result<f64>,
{
    let sizes: Vec<usize> = model.parameters().iter().map(|t| t.len()).collect();
    if analytic.len() != sizes.len() || analytic.iter().zip(&sizes).any(|(g, &n)| g.len() != n) {
        return Err(Error::Shape("analytic gradients do not match the parameters".into()));
    }
    let owners = model.parameter_layers();
    let n_layers = owners.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        checked_per_layer: vec![0; n_layers],
        worst: None,
    };
    for layer in 0..n_layers {
        let mut candidates = Vec::new();
        for (t, (&owner, &n)) in owners.iter().zip(&sizes).enumerate() {
            if owner == layer {
                candidates.extend((0..n).map(|i| (t, i)));
            }
        }
        let chosen: Vec<(usize, usize)> = if candidates.len() <= cfg.samples_per_layer {
            candidates
        } else {
            rand::seq::index::sample(&mut rng, candidates.len(), cfg.samples_per_layer)
                .into_iter()
                .map(|k| candidates[k])
                .collect()
        };
        for (t, i) in chosen {
            let original = probe.parameters()[t][i];
            probe.parameters_mut()[t][i] = original + cfg.eps;
            let plus = loss(&probe)?;
            probe.parameters_mut()[t][i] = original - cfg.eps;
            let minus = loss(&probe)?;
            probe.parameters_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = analytic[t][i];
            let err = relative_error(a, numeric, cfg.floor);
            if !err.is_finite() {
                return Err(Error::Validation(format!("non-finite gradient at tensor {t}, index {i}")));
            }
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((t, i, a, numeric));
            }
            report.checked += 1;
            report.checked_per_layer[layer] += 1;
        }
    }
    Ok(report)
}

/// Gradient check of a single network under `loss_fn`, which maps the network
/// output to `(loss, dL/doutput)`. The network's current mode is used throughout.
pub fn check_network<F>(net: &Network, input: &Matrix, loss_fn: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&Matrix) -> (f64, Matrix),
{
    let fwd = net.forward(input)?;
    let (_, dout) = loss_fn(&fwd.output);
    let grads = net.backward(&fwd, &dout)?;
    gradient_check(
        net,
        &grads.tensors,
        |n: &Network| Ok(loss_fn(&n.forward(input)?.output).0),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, LayerSpec, Mode};

    fn mse(target: Matrix) -> impl Fn(&Matrix) -> (f64, Matrix) {
        move |out: &Matrix| {
            let n = out.as_slice().len() as f64;
            let mut grad = Matrix::zeros(out.rows(), out.cols());
            let mut loss = 0.0;
            for (k, (&o, &t)) in out.as_slice().iter().zip(target.as_slice()).enumerate() {
                loss += (o - t).powi(2) / n;
                grad.as_mut_slice()[k] = 2.0 * (o - t) / n;
            }
            (loss, grad)
        }
    }

    fn input(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn linear_mse_passes_tightly() {
        let net = init_network(&[LayerSpec::linear(5, 3)], 1).unwrap();
        let report = check_network(&net, &input(6, 5, 2), mse(input(6, 3, 3)), GradCheckConfig::default()).unwrap();
        assert_eq!(report.checked, 18);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn batchnorm_leaky_network_passes() {
        let specs = [
            LayerSpec::hidden(4, 6, 0.1),
            LayerSpec::hidden(6, 5, 0.1),
            LayerSpec::linear(5, 2),
        ];
        for mode in [Mode::Training, Mode::Inference] {
            let mut net = init_network(&specs, 4).unwrap();
            net.set_mode(mode);
            let report = check_network(&net, &input(8, 4, 5), mse(input(8, 2, 6)), GradCheckConfig::default()).unwrap();
            assert!(report.max_rel_error < 1e-4, "{mode:?}: {report:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let net = init_network(&[LayerSpec::hidden(3, 4, 0.1), LayerSpec::linear(4, 1)], 7).unwrap();
        let x = input(5, 3, 8);
        let loss = mse(input(5, 1, 9));
        let fwd = net.forward(&x).unwrap();
        let mut grads = net.backward(&fwd, &loss(&fwd.output).1).unwrap();
        grads.tensors[0][2] = grads.tensors[0][2] * 1.5 + 0.1;
        let report = gradient_check(&net, &grads.tensors, |n: &Network| Ok(loss(&n.forward(&x)?.output).0), GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_error > 1e-2, "{report:?}");
        assert_eq!(report.worst.unwrap().0, 0);
    }
}
