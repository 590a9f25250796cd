//! Synthetic mixed-type datasets with known structure and a computable ceiling.
//!
//! Feature `j` is driven by a latent Gaussian `u_j = l_j·z + sqrt(1 − |l_j|²)·ε_j`,
//! where `z` are shared factors and `ε_j` is private noise. Binary features
//! threshold `u_j` so that `P(x_j = 1) = p_j` exactly; continuous features are
//! `mean_j + std_j·u_j`. With no loadings the features are independent.
//! Labels are drawn from `sigmoid(w·x + b)` on the complete row, before
//! cells are removed completely at random.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Column, FeatureSchema, Label, TabularDataset};
use crate::error::{Error, Result};
use crate::nn::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussParams {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_binary: usize,
    pub n_continuous: usize,
    pub bernoulli_p: Vec<f64>,
    pub gauss_params: Vec<GaussParams>,
    /// One weight per feature in column order (binary columns first).
    pub label_weights: Vec<f64>,
    pub intercept: f64,
    pub miss_rates: Vec<f64>,
    pub unlabelled_frac: f64,
    pub n_rows: usize,
    /// Per-feature loadings on shared latent factors; empty means independent features.
    #[serde(default)]
    pub factor_loadings: Vec<Vec<f64>>,
}

/// Ground truth, its masked copy, and the labels before any were stripped.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub ground_truth: TabularDataset,
    pub masked: TabularDataset,
    pub full_labels: Vec<u8>,
}

impl SynthSpec {
    pub fn n_features(&self) -> usize {
        self.n_binary + self.n_continuous
    }

    pub fn n_factors(&self) -> usize {
        self.factor_loadings.first().map_or(0, Vec::len)
    }

    pub fn schema(&self) -> FeatureSchema {
        let mut columns: Vec<Column> = (0..self.n_binary).map(|j| Column::binary(format!("b{j:02}"))).collect();
        columns.extend((0..self.n_continuous).map(|j| Column::continuous(format!("c{j:02}"))));
        FeatureSchema::new(columns).expect("generated names are unique")
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.n_features();
        let bad = |msg: String| Err(Error::Validation(msg));
        if f == 0 {
            return bad("synthetic spec needs at least one feature".into());
        }
        if self.bernoulli_p.len() != self.n_binary
            || self.gauss_params.len() != self.n_continuous
            || self.label_weights.len() != f
            || self.miss_rates.len() != f
        {
            return bad("synthetic spec vectors do not match the feature counts".into());
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !self.bernoulli_p.iter().all(|&p| prob(p)) || !self.miss_rates.iter().all(|&p| prob(p)) || !prob(self.unlabelled_frac) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if !self.gauss_params.iter().all(|g| g.mean.is_finite() && g.std > 0.0 && g.std.is_finite()) {
            return bad("gaussian std must be positive".into());
        }
        if !self.label_weights.iter().chain([&self.intercept]).all(|w| w.is_finite()) {
            return bad("label weights must be finite".into());
        }
        if !self.factor_loadings.is_empty() {
            let k = self.n_factors();
            if self.factor_loadings.len() != f || self.factor_loadings.iter().any(|l| l.len() != k) {
                return bad("factor loadings must be an F×k matrix".into());
            }
            if self.factor_loadings.iter().any(|l| l.iter().map(|v| v * v).sum::<f64>() > 1.0) {
                return bad("factor loadings of a feature must have norm at most 1".into());
            }
        }
        Ok(())
    }

    /// Shape mirroring the clinical cohort: 46 binary + 22 continuous features,
    /// 18 columns with about 5% missingness, two with more than 50%, and
    /// roughly a quarter of labelled rows positive.
    pub fn paper_like(n_rows: usize) -> Self {
        let (nb, nc) = (46usize, 22usize);
        let f = nb + nc;
        let bernoulli_p: Vec<f64> = (0..nb).map(|j| 0.1 + 0.4 * ((j * 7) % nb) as f64 / (nb - 1) as f64).collect();
        let gauss_params: Vec<GaussParams> = (0..nc)
            .map(|j| GaussParams {
                mean: 20.0 + 5.0 * j as f64,
                std: 1.0 + 2.5 * (j % 4) as f64,
            })
            .collect();
        let k = 4;
        let factor_loadings: Vec<Vec<f64>> = (0..f)
            .map(|j| {
                let mut l = vec![0.0; k];
                l[j % k] = 0.6 + 0.1 * (j % 3) as f64;
                l[(j + 1) % k] = 0.3;
                l
            })
            .collect();
        // Standardized-scale label weights, converted to raw units below.
        let mut label_weights = vec![0.0; f];
        for j in (0..nb).step_by(4) {
            label_weights[j] = if j % 8 == 0 { 0.9 } else { -0.7 };
        }
        for j in (0..nc).step_by(3) {
            label_weights[nb + j] = if j % 2 == 0 { 0.6 } else { -0.5 };
        }
        label_weights[f - 2] = 0.8;
        label_weights[f - 1] = -0.6;
        let mut intercept = 0.0;
        label_weights.iter_mut().for_each(|w| *w *= 2.0);
        for j in 0..nc {
            let g = gauss_params[j];
            label_weights[nb + j] /= g.std;
            intercept -= label_weights[nb + j] * g.mean;
        }
        let mut miss_rates = vec![0.0; f];
        for j in 0..10 {
            miss_rates[j * 4] = 0.05;
        }
        for j in 0..8 {
            miss_rates[nb + j * 2] = 0.05;
        }
        miss_rates[f - 2] = 0.56;
        miss_rates[f - 1] = 0.56;
        let mut spec = SynthSpec {
            n_binary: nb,
            n_continuous: nc,
            bernoulli_p,
            gauss_params,
            label_weights,
            intercept,
            miss_rates,
            unlabelled_frac: 0.5,
            n_rows,
            factor_loadings,
        };
        spec.calibrate_intercept(0.25, 20_000, 0x5eed);
        spec
    }

    /// Shifts the intercept until the expected positive rate equals `rate`,
    /// using a fixed Monte-Carlo sample of complete rows.
    pub fn calibrate_intercept(&mut self, rate: f64, n_mc: usize, seed: u64) {
        let sampler = RowSampler::new(self);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..n_mc)
            .map(|_| {
                let x = sampler.sample(&mut rng);
                score(&self.label_weights, 0.0, &x)
            })
            .collect();
        let rate_at = |b: f64| scores.iter().map(|s| sigmoid(s + b)).sum::<f64>() / n_mc as f64;
        let base = self.intercept;
        let (mut lo, mut hi) = (base - 50.0, base + 50.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if rate_at(mid) < rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.intercept = 0.5 * (lo + hi);
    }
}

fn score(weights: &[f64], intercept: f64, x: &[f64]) -> f64 {
    intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
}

/// Draws complete rows; consumes a fixed number of random values per row.
struct RowSampler<'a> {
    spec: &'a SynthSpec,
    thresholds: Vec<f64>,
    private_scale: Vec<f64>,
}

impl<'a> RowSampler<'a> {
    fn new(spec: &'a SynthSpec) -> Self {
        let std_normal = Normal::standard();
        let thresholds = spec
            .bernoulli_p
            .iter()
            .map(|&p| match p {
                p if p <= 0.0 => f64::INFINITY,
                p if p >= 1.0 => f64::NEG_INFINITY,
                p => std_normal.inverse_cdf(1.0 - p),
            })
            .collect();
        let private_scale = (0..spec.n_features())
            .map(|j| {
                let norm2: f64 = spec.factor_loadings.get(j).map_or(0.0, |l| l.iter().map(|v| v * v).sum());
                (1.0 - norm2).max(0.0).sqrt()
            })
            .collect();
        RowSampler {
            spec,
            thresholds,
            private_scale,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let spec = self.spec;
        let factors: Vec<f64> = (0..spec.n_factors()).map(|_| rng.sample(StandardNormal)).collect();
        (0..spec.n_features())
            .map(|j| {
                let noise: f64 = rng.sample(StandardNormal);
                let shared: f64 = spec
                    .factor_loadings
                    .get(j)
                    .map_or(0.0, |l| l.iter().zip(&factors).map(|(a, b)| a * b).sum());
                let u = shared + self.private_scale[j] * noise;
                if j < spec.n_binary {
                    if u > self.thresholds[j] {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let g = spec.gauss_params[j - spec.n_binary];
                    g.mean + g.std * u
                }
            })
            .collect()
    }
}

/// Generates `spec.n_rows` rows; bit-identical for equal `(spec, seed)`.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let sampler = RowSampler::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = spec.n_features();
    let mut complete = Vec::with_capacity(spec.n_rows);
    let mut masked = Vec::with_capacity(spec.n_rows);
    let mut labels = Vec::with_capacity(spec.n_rows);
    let mut full_labels = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let x = sampler.sample(&mut rng);
        let p = sigmoid(score(&spec.label_weights, spec.intercept, &x));
        let y = u8::from(rng.random::<f64>() < p);
        let row_masked: Vec<Option<f64>> = (0..f)
            .map(|j| {
                let drop = rng.random::<f64>() < spec.miss_rates[j];
                (!drop).then_some(x[j])
            })
            .collect();
        let strip = rng.random::<f64>() < spec.unlabelled_frac;
        full_labels.push(y);
        labels.push(if strip { Label::Unlabelled } else { Label::from_class(y).unwrap() });
        complete.push(x.into_iter().map(Some).collect());
        masked.push(row_masked);
    }
    let schema = spec.schema();
    Ok(SynthData {
        ground_truth: TabularDataset::new(schema.clone(), complete, labels.clone())?,
        masked: TabularDataset::new(schema, masked, labels)?,
        full_labels,
    })
}

/// Monte-Carlo balanced accuracy of the Bayes rule `w·x + b ≥ 0` on complete rows.
pub fn bayes_reference(spec: &SynthSpec, n_mc: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    if n_mc < 10_000 {
        return Err(Error::Validation(format!("Monte-Carlo oracle needs n_mc ≥ 10000, got {n_mc}")));
    }
    let sampler = RowSampler::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tp, mut fneg, mut tn, mut fp) = (0u64, 0u64, 0u64, 0u64);
    for _ in 0..n_mc {
        let x = sampler.sample(&mut rng);
        let s = score(&spec.label_weights, spec.intercept, &x);
        let y = rng.random::<f64>() < sigmoid(s);
        match (y, s >= 0.0) {
            (true, true) => tp += 1,
            (true, false) => fneg += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let recall = |hit: u64, miss: u64| if hit + miss == 0 { 0.0 } else { hit as f64 / (hit + miss) as f64 };
    Ok(0.5 * (recall(tp, fneg) + recall(tn, fp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::null_mask;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_binary: 2,
            n_continuous: 2,
            bernoulli_p: vec![0.3, 0.7],
            gauss_params: vec![GaussParams { mean: 5.0, std: 2.0 }, GaussParams { mean: -1.0, std: 0.5 }],
            label_weights: vec![1.0, -1.0, 0.5, 2.0],
            intercept: -1.0,
            miss_rates: vec![0.0; 4],
            unlabelled_frac: 0.0,
            n_rows: 10_000,
            factor_loadings: vec![],
        }
    }

    #[test]
    fn no_missingness_means_identical_copies() {
        let data = generate(&small_spec(), 1).unwrap();
        assert_eq!(data.masked, data.ground_truth);
        assert_eq!(data.masked.n_labelled(), 10_000);
    }

    #[test]
    fn determinism() {
        let mut spec = small_spec();
        spec.miss_rates = vec![0.1; 4];
        spec.unlabelled_frac = 0.3;
        spec.n_rows = 500;
        assert_eq!(generate(&spec, 3).unwrap(), generate(&spec, 3).unwrap());
        assert_ne!(generate(&spec, 3).unwrap(), generate(&spec, 4).unwrap());
    }

    #[test]
    fn missingness_rate_concentrates() {
        // sd of the observed fraction at n=1e4, p=0.5 is 0.005; [0.47, 0.53] is ±6σ.
        let mut spec = small_spec();
        spec.miss_rates[2] = 0.5;
        let data = generate(&spec, 2).unwrap();
        let mask = null_mask(&data.masked);
        let observed = (0..spec.n_rows).filter(|&i| mask.get(i, 2)).count() as f64 / spec.n_rows as f64;
        assert!((0.47..=0.53).contains(&observed), "{observed}");
        assert!((0..spec.n_rows).all(|i| mask.get(i, 0)));
    }

    #[test]
    fn marginals_match_spec_within_three_sigma() {
        for loadings in [vec![], vec![vec![0.8, 0.0], vec![0.5, 0.5], vec![0.0, 0.9], vec![0.6, -0.6]]] {
            let mut spec = small_spec();
            spec.factor_loadings = loadings;
            let data = generate(&spec, 9).unwrap();
            let n = spec.n_rows as f64;
            for (j, &p) in spec.bernoulli_p.iter().enumerate() {
                let mean = data.ground_truth.rows().iter().map(|r| r[j].unwrap()).sum::<f64>() / n;
                assert!((mean - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt(), "binary {j}: {mean}");
            }
            for (k, g) in spec.gauss_params.iter().enumerate() {
                let j = spec.n_binary + k;
                let mean = data.ground_truth.rows().iter().map(|r| r[j].unwrap()).sum::<f64>() / n;
                assert!((mean - g.mean).abs() < 3.0 * g.std / n.sqrt(), "continuous {j}: {mean}");
            }
        }
    }

    #[test]
    fn missingness_is_independent_of_values() {
        let mut spec = small_spec();
        spec.miss_rates = vec![0.3; 4];
        let data = generate(&spec, 5).unwrap();
        let j = 2;
        let all: Vec<f64> = data.ground_truth.rows().iter().map(|r| r[j].unwrap()).collect();
        let obs: Vec<f64> = data.masked.rows().iter().filter_map(|r| r[j]).collect();
        let mean_all = all.iter().sum::<f64>() / all.len() as f64;
        let mean_obs = obs.iter().sum::<f64>() / obs.len() as f64;
        // observed cells are a 70% subsample: sd of the difference ≈ σ·sqrt(1/n_obs − 1/n)
        let sd = 2.0 * (1.0 / obs.len() as f64 - 1.0 / all.len() as f64).sqrt();
        assert!((mean_obs - mean_all).abs() < 3.0 * sd);
    }

    #[test]
    fn correlated_features_share_factors() {
        let mut spec = small_spec();
        spec.factor_loadings = vec![vec![0.0], vec![0.0], vec![0.9], vec![0.9]];
        let data = generate(&spec, 6).unwrap();
        let a: Vec<f64> = data.ground_truth.rows().iter().map(|r| (r[2].unwrap() - 5.0) / 2.0).collect();
        let b: Vec<f64> = data.ground_truth.rows().iter().map(|r| (r[3].unwrap() + 1.0) / 0.5).collect();
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64;
        assert!((corr - 0.81).abs() < 0.05, "{corr}");
    }

    #[test]
    fn uninformative_labels_have_half_reference() {
        let mut spec = small_spec();
        spec.label_weights = vec![0.0; 4];
        spec.intercept = 0.0;
        assert_eq!(bayes_reference(&spec, 10_000, 1).unwrap(), 0.5);
        assert!(bayes_reference(&spec, 9_999, 1).is_err());
    }

    #[test]
    fn stronger_weights_do_not_lower_the_ceiling() {
        let mut weak = small_spec();
        weak.intercept = 0.0;
        let mut strong = weak.clone();
        strong.label_weights.iter_mut().for_each(|w| *w *= 10.0);
        let lo = bayes_reference(&weak, 50_000, 2).unwrap();
        let hi = bayes_reference(&strong, 50_000, 2).unwrap();
        assert!(hi >= lo, "{hi} < {lo}");
    }

    #[test]
    fn paper_like_shape() {
        let spec = SynthSpec::paper_like(8000);
        spec.validate().unwrap();
        assert_eq!((spec.n_binary, spec.n_continuous), (46, 22));
        let expected_missing = spec.miss_rates.iter().sum::<f64>() / 68.0;
        assert!((expected_missing - 0.0298).abs() < 0.002, "{expected_missing}");
        assert_eq!(spec.miss_rates.iter().filter(|&&r| r > 0.5).count(), 2);
        let data = generate(&spec, 1).unwrap();
        let missing = data.masked.missing_fraction();
        assert!((missing - expected_missing).abs() < 0.003, "{missing}");
        let positive_rate = data.full_labels.iter().map(|&y| y as f64).sum::<f64>() / 8000.0;
        assert!((positive_rate - 0.25).abs() < 0.03, "{positive_rate}");
    }

    #[test]
    fn invalid_specs() {
        let mut spec = small_spec();
        spec.bernoulli_p[0] = 1.5;
        assert!(generate(&spec, 0).is_err());
        let mut spec = small_spec();
        spec.gauss_params[0].std = 0.0;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.factor_loadings = vec![vec![0.9, 0.9]; 4];
        assert!(spec.validate().is_err());
    }
}
