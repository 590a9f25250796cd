//! Masked-input autoencoder for mixed binary/continuous rows with missing values.
//!
//! The encoder sees `[zero-filled standardized values ; 0/1 observedness mask]`
//! (width `2F`) and produces an embedding. The decoder reconstructs the `F`
//! features: binary positions pass through a sigmoid, continuous positions are
//! linear. During training extra observed entries are hidden from the input
//! (augmentation) while the loss is always taken against the original row at
//! its originally observed positions:
//!
//! `total = w_bin · mean BCE(observed binary) + w_cont · mean MSE(observed continuous)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, FeatureSchema, StandardizationStats, TabularDataset};
use crate::error::{Error, Result};
use crate::nn::{init_network, sigmoid, AdamConfig, AdamState, Forward, LayerSpec, Matrix, Mode, Network, Parameterized};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Number of encoder layers, and of decoder layers.
pub const DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MieoConfig {
    pub embedding_dim: usize,
    /// Output widths of the four encoder layers; the last must equal `embedding_dim`.
    /// Defaults to a geometric progression from `2F` to `embedding_dim`.
    pub encoder_widths: Option<Vec<usize>>,
    /// Output widths of the four decoder layers; the last must equal `F`.
    pub decoder_widths: Option<Vec<usize>>,
    pub w_bin: f64,
    pub w_cont: f64,
    pub aug_mask_prob: f64,
    pub leaky_slope: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MieoConfig {
    fn default() -> Self {
        MieoConfig {
            embedding_dim: 32,
            encoder_widths: None,
            decoder_widths: None,
            w_bin: 1.0,
            w_cont: 1.0,
            aug_mask_prob: 0.2,
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
            lr: 1e-3,
            epochs: 20,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// `steps` widths interpolated geometrically from `from` (exclusive) to `to` (inclusive).
pub fn geometric_widths(from: usize, to: usize, steps: usize) -> Vec<usize> {
    let ratio = to as f64 / from as f64;
    (1..=steps)
        .map(|k| {
            if k == steps {
                to
            } else {
                ((from as f64) * ratio.powf(k as f64 / steps as f64)).round().max(1.0) as usize
            }
        })
        .collect()
}

impl MieoConfig {
    pub fn encoder_widths_for(&self, n_features: usize) -> Vec<usize> {
        self.encoder_widths
            .clone()
            .unwrap_or_else(|| geometric_widths(2 * n_features, self.embedding_dim, DEPTH))
    }

    pub fn decoder_widths_for(&self, n_features: usize) -> Vec<usize> {
        self.decoder_widths
            .clone()
            .unwrap_or_else(|| geometric_widths(self.embedding_dim, n_features, DEPTH))
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let f = schema.len();
        let bad = |m: String| Err(Error::Validation(m));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be at least 1".into());
        }
        if !(self.w_bin >= 0.0 && self.w_cont >= 0.0 && self.w_bin + self.w_cont > 0.0) {
            return bad(format!(
                "loss weights must be nonnegative with a positive sum, got ({}, {})",
                self.w_bin, self.w_cont
            ));
        }
        if !(0.0..1.0).contains(&self.aug_mask_prob) {
            return bad(format!("aug_mask_prob must lie in [0, 1), got {}", self.aug_mask_prob));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalization".into());
        }
        let enc = self.encoder_widths_for(f);
        let dec = self.decoder_widths_for(f);
        if enc.len() != DEPTH || dec.len() != DEPTH {
            return Err(Error::Shape(format!("encoder and decoder need {DEPTH} widths each")));
        }
        if enc[DEPTH - 1] != self.embedding_dim {
            return Err(Error::Shape(format!(
                "last encoder width {} must equal embedding_dim {}",
                enc[DEPTH - 1],
                self.embedding_dim
            )));
        }
        if dec[DEPTH - 1] != f {
            return Err(Error::Shape(format!(
                "last decoder width {} must equal the feature count {f}",
                dec[DEPTH - 1]
            )));
        }
        if enc.iter().chain(&dec).any(|&w| w == 0) {
            return Err(Error::Shape("layer widths must be at least 1".into()));
        }
        Ok(())
    }

    fn layer_specs(&self, n_features: usize) -> (Vec<LayerSpec>, Vec<LayerSpec>) {
        let slope = self.leaky_slope;
        let mut encoder = Vec::new();
        let mut prev = 2 * n_features;
        for w in self.encoder_widths_for(n_features) {
            encoder.push(LayerSpec::hidden(prev, w, slope));
            prev = w;
        }
        let mut decoder = Vec::new();
        let widths = self.decoder_widths_for(n_features);
        for (k, &w) in widths.iter().enumerate() {
            decoder.push(if k + 1 == widths.len() {
                LayerSpec::linear(prev, w)
            } else {
                LayerSpec::hidden(prev, w, slope)
            });
            prev = w;
        }
        (encoder, decoder)
    }
}

/// Rows in model space: zero-filled values plus observedness, both `B×F`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedRows {
    pub values: Matrix,
    pub observed: Vec<bool>,
}

impl MaskedRows {
    /// From an already standardized dataset.
    pub fn from_dataset(ds: &TabularDataset) -> Self {
        let (n, f) = (ds.n_rows(), ds.n_cols());
        let mut values = Matrix::zeros(n, f);
        let mut observed = vec![false; n * f];
        for (i, row) in ds.rows().iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = *cell {
                    values[(i, j)] = v;
                    observed[i * f + j] = true;
                }
            }
        }
        MaskedRows { values, observed }
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let f = self.n_cols();
        let mut observed = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            observed.extend_from_slice(&self.observed[i * f..(i + 1) * f]);
        }
        MaskedRows {
            values: self.values.select_rows(indices),
            observed,
        }
    }

    /// Encoder input `[values ; mask]` without augmentation.
    pub fn encoder_input(&self) -> Matrix {
        let mask = Matrix::new(
            self.n_rows(),
            self.n_cols(),
            self.observed.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask shape");
        let mut values = self.values.clone();
        for (v, &o) in values.as_mut_slice().iter_mut().zip(&self.observed) {
            if !o {
                *v = 0.0;
            }
        }
        values.hstack(&mask).expect("same row count")
    }
}

/// Builds the `2F`-wide encoder input for one row.
///
/// Each observed entry is additionally hidden with probability `aug_mask_prob`;
/// the returned effective mask is always a subset of `observed`.
pub fn make_masked_input(values: &[f64], observed: &[bool], aug_mask_prob: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<bool>) {
    let f = values.len();
    let mut input = vec![0.0; 2 * f];
    let mut effective = vec![false; f];
    for j in 0..f {
        // one draw per entry keeps the stream aligned regardless of the data
        let hide = rng.random::<f64>() < aug_mask_prob;
        if observed[j] && !hide {
            effective[j] = true;
            input[j] = values[j];
            input[f + j] = 1.0;
        }
    }
    (input, effective)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bce_part: f64,
    pub mse_part: f64,
    pub n_bin_observed: usize,
    pub n_cont_observed: usize,
}

/// Loss value plus its gradient with respect to the decoder's pre-head output
/// (logits on binary positions, values on continuous ones).
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedLoss {
    pub breakdown: LossBreakdown,
    pub grad: Matrix,
}

/// Composite masked loss over a batch of post-head outputs.
///
/// Entries where `target.observed` is false contribute nothing, to the value
/// or to the gradient. A part with no observed entries is 0. The binary
/// gradient is `p − t`, the derivative of the unclamped BCE; the clamp only
/// guards the logarithm.
pub fn mieo_loss(output: &Matrix, target: &MaskedRows, kinds: &[FeatureKind], w_bin: f64, w_cont: f64) -> Result<MaskedLoss> {
    if output.shape() != target.values.shape() || kinds.len() != output.cols() {
        return Err(Error::Shape(format!(
            "loss output {:?}, target {:?}, {} kinds",
            output.shape(),
            target.values.shape(),
            kinds.len()
        )));
    }
    let f = output.cols();
    let (mut bce_sum, mut mse_sum) = (0.0, 0.0);
    let (mut n_bin, mut n_cont) = (0usize, 0usize);
    for i in 0..output.rows() {
        for (j, kind) in kinds.iter().enumerate() {
            if !target.observed[i * f + j] {
                continue;
            }
            let (y, t) = (output[(i, j)], target.values[(i, j)]);
            match kind {
                FeatureKind::Binary => {
                    let p = y.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                    bce_sum -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                    n_bin += 1;
                }
                FeatureKind::Continuous => {
                    mse_sum += (y - t) * (y - t);
                    n_cont += 1;
                }
            }
        }
    }
    let bce_part = if n_bin > 0 { bce_sum / n_bin as f64 } else { 0.0 };
    let mse_part = if n_cont > 0 { mse_sum / n_cont as f64 } else { 0.0 };
    let mut grad = Matrix::zeros(output.rows(), f);
    for i in 0..output.rows() {
        for (j, kind) in kinds.iter().enumerate() {
            if !target.observed[i * f + j] {
                continue;
            }
            let (y, t) = (output[(i, j)], target.values[(i, j)]);
            grad[(i, j)] = match kind {
                FeatureKind::Binary => w_bin * (y - t) / n_bin as f64,
                FeatureKind::Continuous => w_cont * 2.0 * (y - t) / n_cont as f64,
            };
        }
    }
    Ok(MaskedLoss {
        breakdown: LossBreakdown {
            total: w_bin * bce_part + w_cont * mse_part,
            bce_part,
            mse_part,
            n_bin_observed: n_bin,
            n_cont_observed: n_cont,
        },
        grad,
    })
}

/// Encoder, decoder, and everything needed to map raw rows into model space.
#[derive(Clone, Debug, PartialEq)]
pub struct MieoModel {
    pub encoder: Network,
    pub decoder: Network,
    pub schema: FeatureSchema,
    pub standardization: StandardizationStats,
    pub config: MieoConfig,
}

/// Caches of one full forward pass.
#[derive(Clone, Debug)]
pub struct MieoForward {
    pub encoder: Forward,
    pub decoder: Forward,
    /// Post-head reconstruction.
    pub output: Matrix,
}

pub fn build_mieo(config: &MieoConfig, schema: &FeatureSchema, seed: u64) -> Result<MieoModel> {
    config.validate(schema)?;
    let (enc, dec) = config.layer_specs(schema.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = init_network(&enc, rng.random())?;
    let mut decoder = init_network(&dec, rng.random())?;
    encoder.set_mode(Mode::Inference);
    decoder.set_mode(Mode::Inference);
    Ok(MieoModel {
        encoder,
        decoder,
        schema: schema.clone(),
        standardization: StandardizationStats::identity(schema),
        config: config.clone(),
    })
}

impl MieoModel {
    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.schema.kinds()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.encoder.set_mode(mode);
        self.decoder.set_mode(mode);
    }

    fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if *schema != self.schema {
            return Err(Error::Schema("dataset schema differs from the model schema".into()));
        }
        Ok(())
    }

    fn apply_heads(&self, raw: &Matrix) -> Matrix {
        let kinds = self.kinds();
        let mut out = raw.clone();
        for i in 0..out.rows() {
            for (v, k) in out.row_mut(i).iter_mut().zip(&kinds) {
                if *k == FeatureKind::Binary {
                    *v = sigmoid(*v);
                }
            }
        }
        out
    }

    /// Forward pass on a `B×2F` encoder input in the networks' current modes.
    pub fn forward(&self, input: &Matrix) -> Result<MieoForward> {
        let encoder = self.encoder.forward(input)?;
        let decoder = self.decoder.forward(&encoder.output)?;
        let output = self.apply_heads(&decoder.output);
        Ok(MieoForward {
            encoder,
            decoder,
            output,
        })
    }

    /// Loss and parameter gradients (encoder tensors, then decoder tensors).
    pub fn loss_and_gradients(&self, input: &Matrix, target: &MaskedRows) -> Result<(MieoForward, MaskedLoss, Vec<Vec<f64>>)> {
        let fwd = self.forward(input)?;
        let loss = mieo_loss(&fwd.output, target, &self.kinds(), self.config.w_bin, self.config.w_cont)?;
        let dec_grads = self.decoder.backward(&fwd.decoder, &loss.grad)?;
        let enc_grads = self.encoder.backward(&fwd.encoder, &dec_grads.input)?;
        let mut tensors = enc_grads.tensors;
        tensors.extend(dec_grads.tensors);
        Ok((fwd, loss, tensors))
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, input: &Matrix, target: &MaskedRows) -> Result<LossBreakdown> {
        let fwd = self.forward(input)?;
        Ok(mieo_loss(&fwd.output, target, &self.kinds(), self.config.w_bin, self.config.w_cont)?.breakdown)
    }

    /// Inference-mode reconstruction loss of a standardized dataset, no augmentation.
    pub fn reconstruction_loss(&self, standardized: &TabularDataset) -> Result<LossBreakdown> {
        self.check_schema(standardized.schema())?;
        let rows = MaskedRows::from_dataset(standardized);
        let emb = self.encoder.predict(&rows.encoder_input())?;
        let out = self.apply_heads(&self.decoder.predict(&emb)?);
        Ok(mieo_loss(&out, &rows, &self.kinds(), self.config.w_bin, self.config.w_cont)?.breakdown)
    }

    fn standardized_rows(&self, ds: &TabularDataset) -> Result<MaskedRows> {
        self.check_schema(ds.schema())?;
        Ok(MaskedRows::from_dataset(&self.standardization.apply(ds)?))
    }

    /// Embeddings of every row of a dataset given in original units.
    pub fn encode_dataset(&self, ds: &TabularDataset) -> Result<Matrix> {
        let rows = self.standardized_rows(ds)?;
        self.encoder.predict(&rows.encoder_input())
    }

    pub fn encode(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        let ds = TabularDataset::unlabelled(self.schema.clone(), vec![row.to_vec()])?;
        Ok(self.encode_dataset(&ds)?.into_vec())
    }

    /// Reconstruction in original units: probabilities on binary columns.
    pub fn reconstruct_dataset(&self, ds: &TabularDataset) -> Result<Matrix> {
        let rows = self.standardized_rows(ds)?;
        let emb = self.encoder.predict(&rows.encoder_input())?;
        let mut out = self.apply_heads(&self.decoder.predict(&emb)?);
        let params = self.standardization.per_column(self.n_features());
        for i in 0..out.rows() {
            for (v, p) in out.row_mut(i).iter_mut().zip(&params) {
                if let Some((mean, std)) = p {
                    *v = *v * std + mean;
                }
            }
        }
        Ok(out)
    }

    /// Fills missing cells; observed cells are passed through unchanged.
    pub fn impute_dataset(&self, ds: &TabularDataset) -> Result<Imputation> {
        let recon = self.reconstruct_dataset(ds)?;
        let kinds = self.kinds();
        let mut soft = Vec::with_capacity(ds.n_rows());
        let mut hard = Vec::with_capacity(ds.n_rows());
        for (i, row) in ds.rows().iter().enumerate() {
            let mut s = Vec::with_capacity(row.len());
            let mut h = Vec::with_capacity(row.len());
            for (j, cell) in row.iter().enumerate() {
                match *cell {
                    Some(v) => {
                        s.push(v);
                        h.push(v);
                    }
                    None => {
                        let r = recon[(i, j)];
                        s.push(r);
                        h.push(match kinds[j] {
                            FeatureKind::Binary => {
                                if r >= 0.5 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            FeatureKind::Continuous => r,
                        });
                    }
                }
            }
            soft.push(s);
            hard.push(h);
        }
        Ok(Imputation { soft, hard })
    }

    pub fn impute(&self, row: &[Option<f64>]) -> Result<ImputedRow> {
        let ds = TabularDataset::unlabelled(self.schema.clone(), vec![row.to_vec()])?;
        let mut imp = self.impute_dataset(&ds)?;
        Ok(ImputedRow {
            soft: imp.soft.pop().unwrap(),
            hard: imp.hard.pop().unwrap(),
        })
    }
}

/// Completed rows: `soft` keeps binary probabilities, `hard` thresholds them at 0.5.
#[derive(Clone, Debug, PartialEq)]
pub struct Imputation {
    pub soft: Vec<Vec<f64>>,
    pub hard: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImputedRow {
    pub soft: Vec<f64>,
    pub hard: Vec<f64>,
}

impl Parameterized for MieoModel {
    fn parameters(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.parameters();
        p.extend(self.decoder.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.parameters_mut();
        p.extend(self.decoder.parameters_mut());
        p
    }

    fn parameter_layers(&self) -> Vec<usize> {
        let offset = self.encoder.layers().len();
        let mut l = self.encoder.parameter_layers();
        l.extend(self.decoder.parameter_layers().into_iter().map(|k| k + offset));
        l
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub validation: Option<LossBreakdown>,
}

/// Train/validation reconstruction losses; entry 0 is measured before training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MieoHistory {
    pub epochs: Vec<EpochLoss>,
}

impl MieoHistory {
    pub fn last(&self) -> Option<&EpochLoss> {
        self.epochs.last()
    }
}

/// Minibatch Adam on the masked loss. Pools must already be standardized
/// with `model.standardization`. Augmentation masks are redrawn every epoch.
pub fn train_mieo(model: &mut MieoModel, train_pool: &TabularDataset, val_pool: Option<&TabularDataset>) -> Result<MieoHistory> {
    if train_pool.is_empty() {
        return Err(Error::Validation("MIEO training pool is empty".into()));
    }
    model.check_schema(train_pool.schema())?;
    let cfg = model.config.clone();
    cfg.validate(&model.schema)?;
    let rows = MaskedRows::from_dataset(train_pool);
    let f = model.n_features();
    let mut history = MieoHistory::default();
    let record = |model: &MieoModel, epoch: usize, history: &mut MieoHistory| -> Result<()> {
        let train = model.reconstruction_loss(train_pool)?;
        let validation = val_pool.map(|v| model.reconstruction_loss(v)).transpose()?;
        if !train.total.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                detail: format!("training reconstruction loss is {}", train.total),
            });
        }
        history.epochs.push(EpochLoss { epoch, train, validation });
        Ok(())
    };
    record(model, 0, &mut history)?;

    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &*model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d69_656f_7472_6e00);
    let mut order: Vec<usize> = (0..rows.n_rows()).collect();
    model.set_mode(Mode::Training);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let target = rows.select(batch);
            let mut input = Matrix::zeros(batch.len(), 2 * f);
            for b in 0..batch.len() {
                let observed = &target.observed[b * f..(b + 1) * f];
                let (x, _) = make_masked_input(target.values.row(b), observed, cfg.aug_mask_prob, &mut rng);
                input.row_mut(b).copy_from_slice(&x);
            }
            let (fwd, loss, grads) = model.loss_and_gradients(&input, &target)?;
            if !loss.breakdown.total.is_finite() {
                model.set_mode(Mode::Inference);
                return Err(Error::NonFinite {
                    epoch,
                    detail: format!("minibatch loss is {}", loss.breakdown.total),
                });
            }
            adam.step(model, &grads)?;
            model.encoder.update_running_stats(&fwd.encoder);
            model.decoder.update_running_stats(&fwd.decoder);
        }
        record(model, epoch, &mut history)?;
    }
    model.set_mode(Mode::Inference);
    Ok(history)
}

/// Fits standardization on the labelled training rows, then builds and trains
/// a model on labelled-train ∪ unlabelled. Inputs are in original units.
pub fn fit_mieo(
    config: &MieoConfig,
    labelled_train: &TabularDataset,
    unlabelled: &TabularDataset,
    validation: Option<&TabularDataset>,
) -> Result<(MieoModel, MieoHistory)> {
    let schema = labelled_train.schema();
    let stats = StandardizationStats::fit(labelled_train);
    let pool = stats.apply(&labelled_train.concat(unlabelled)?)?;
    let val = validation.map(|v| stats.apply(v)).transpose()?;
    let mut model = build_mieo(config, schema, config.seed)?;
    model.standardization = stats;
    let history = train_mieo(&mut model, &pool, val.as_ref())?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::nn::{gradient_check, GradCheckConfig};

    fn schema(nb: usize, nc: usize) -> FeatureSchema {
        let mut cols: Vec<Column> = (0..nb).map(|j| Column::binary(format!("b{j}"))).collect();
        cols.extend((0..nc).map(|j| Column::continuous(format!("c{j}"))));
        FeatureSchema::new(cols).unwrap()
    }

    #[test]
    fn full_sized_architecture() {
        let cfg = MieoConfig {
            embedding_dim: 96,
            ..MieoConfig::default()
        };
        let model = build_mieo(&cfg, &schema(46, 22), 0).unwrap();
        assert_eq!(model.encoder.in_dim(), 136);
        assert_eq!(model.encoder.out_dim(), 96);
        assert_eq!(model.decoder.out_dim(), 68);
        assert_eq!(model.encoder.layers().len(), 4);
        assert_eq!(model.decoder.layers().len(), 4);
        assert!(model.encoder.layers().iter().all(|l| l.batchnorm.is_some()));
        let dec = model.decoder.layers();
        assert!(dec[..3].iter().all(|l| l.batchnorm.is_some()));
        assert!(dec[3].batchnorm.is_none());
    }

    #[test]
    fn default_widths_are_monotone() {
        for (from, to) in [(136, 96), (136, 8), (20, 200), (68, 1)] {
            let w = geometric_widths(from, to, 4);
            assert_eq!(w.len(), 4);
            assert_eq!(w[3], to);
            let seq: Vec<usize> = std::iter::once(from).chain(w).collect();
            let up = seq.windows(2).all(|p| p[0] <= p[1]);
            let down = seq.windows(2).all(|p| p[0] >= p[1]);
            assert!(up || down, "{seq:?}");
        }
    }

    #[test]
    fn one_dimensional_bottleneck() {
        let cfg = MieoConfig {
            embedding_dim: 1,
            ..MieoConfig::default()
        };
        let model = build_mieo(&cfg, &schema(3, 2), 0).unwrap();
        assert_eq!(model.embedding_dim(), 1);
        let emb = model.encode(&[Some(1.0), None, Some(0.0), Some(2.0), None]).unwrap();
        assert_eq!(emb.len(), 1);
    }

    #[test]
    fn width_chain_errors() {
        let s = schema(2, 2);
        let bad_last = MieoConfig {
            embedding_dim: 5,
            encoder_widths: Some(vec![8, 7, 6, 4]),
            ..MieoConfig::default()
        };
        assert!(build_mieo(&bad_last, &s, 0).is_err());
        let bad_len = MieoConfig {
            decoder_widths: Some(vec![4, 4]),
            ..MieoConfig::default()
        };
        assert!(build_mieo(&bad_len, &s, 0).is_err());
        let bad_weights = MieoConfig {
            w_bin: 0.0,
            w_cont: 0.0,
            ..MieoConfig::default()
        };
        assert!(build_mieo(&bad_weights, &s, 0).is_err());
    }

    #[test]
    fn masked_input_without_augmentation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (x, eff) = make_masked_input(&[0.5, 9.0, -1.0], &[true, false, true], 0.0, &mut rng);
        assert_eq!(x, vec![0.5, 0.0, -1.0, 1.0, 0.0, 1.0]);
        assert_eq!(eff, vec![true, false, true]);
    }

    #[test]
    fn augmentation_rate_concentrates() {
        // 10000 observed entries at p=0.2: sd 0.004, [0.17, 0.23] is ±7.5σ.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values = vec![1.0; 100];
        let observed: Vec<bool> = (0..100).map(|j| j % 4 != 0).collect();
        let (mut hidden, mut total) = (0usize, 0usize);
        while total < 10_000 {
            let (_, eff) = make_masked_input(&values, &observed, 0.2, &mut rng);
            for (e, o) in eff.iter().zip(&observed) {
                assert!(!e || *o);
                if *o {
                    total += 1;
                    hidden += usize::from(!e);
                }
            }
        }
        let frac = hidden as f64 / total as f64;
        assert!((0.17..=0.23).contains(&frac), "{frac}");
    }

    fn rows(values: Vec<f64>, observed: Vec<bool>, cols: usize) -> MaskedRows {
        MaskedRows {
            values: Matrix::new(values.len() / cols, cols, values).unwrap(),
            observed,
        }
    }

    #[test]
    fn loss_closed_forms() {
        let kinds = [FeatureKind::Binary, FeatureKind::Continuous];
        let out = Matrix::new(1, 2, vec![0.5, 3.0]).unwrap();
        let t = rows(vec![1.0, 0.0], vec![true, false], 2);
        let l = mieo_loss(&out, &t, &kinds, 1.0, 0.0).unwrap().breakdown;
        assert!((l.total - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(l.mse_part, 0.0);

        let perfect = Matrix::new(1, 2, vec![1.0, 2.5]).unwrap();
        let t = rows(vec![1.0, 2.5], vec![true, true], 2);
        let l = mieo_loss(&perfect, &t, &kinds, 1.0, 1.0).unwrap().breakdown;
        // BCE at the clamp: −ln(1 − 1e-7) ≈ 1e-7
        assert!(l.total < 2e-7);
        assert_eq!(l.mse_part, 0.0);

        let none = rows(vec![1.0, 2.5], vec![false, false], 2);
        let m = mieo_loss(&out, &none, &kinds, 1.0, 1.0).unwrap();
        assert_eq!(m.breakdown.total, 0.0);
        assert!(m.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn full_model_gradient_check() {
        let s = schema(3, 3);
        let cfg = MieoConfig {
            embedding_dim: 8,
            leaky_slope: 0.1,
            w_bin: 0.7,
            w_cont: 1.3,
            ..MieoConfig::default()
        };
        let mut model = build_mieo(&cfg, &s, 5).unwrap();
        model.set_mode(Mode::Training);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10;
        let mut values = Vec::new();
        let mut observed = Vec::new();
        for _ in 0..n {
            for j in 0..6 {
                values.push(if j < 3 { f64::from(rng.random::<bool>()) } else { rng.random_range(-2.0..2.0) });
                observed.push(rng.random::<f64>() > 0.2);
            }
        }
        let target = rows(values, observed, 6);
        let mut input = Matrix::zeros(n, 12);
        for b in 0..n {
            let (x, _) = make_masked_input(target.values.row(b), &target.observed[b * 6..(b + 1) * 6], 0.3, &mut rng);
            input.row_mut(b).copy_from_slice(&x);
        }
        let (_, _, grads) = model.loss_and_gradients(&input, &target).unwrap();
        let report = gradient_check(&model, &grads, |m: &MieoModel| Ok(m.loss(&input, &target)?.total), GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
