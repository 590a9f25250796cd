//! Downstream binary classifier: three `Linear → BN → LeakyReLU` hidden layers
//! and a single sigmoid output unit, trained on positive-weighted BCE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSchema, StandardizationStats, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::{classification_report, MetricsReport};
use crate::mieo::{MaskedRows, MieoModel, PROB_CLAMP};
use crate::nn::{init_network, sigmoid, AdamConfig, AdamState, LayerSpec, Matrix, Mode, Network, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PosWeight {
    /// `N_negative / N_positive` on the training labels.
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PosWeightRepr {
    Name(String),
    Value(f64),
}

impl Serialize for PosWeight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            PosWeight::Auto => PosWeightRepr::Name("auto".into()),
            PosWeight::Value(v) => PosWeightRepr::Value(v),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PosWeight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PosWeightRepr::deserialize(d)? {
            PosWeightRepr::Name(n) if n == "auto" => Ok(PosWeight::Auto),
            PosWeightRepr::Name(n) => Err(serde::de::Error::custom(format!("pos_weight must be a number or \"auto\", got {n:?}"))),
            PosWeightRepr::Value(v) => Ok(PosWeight::Value(v)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub pos_weight: PosWeight,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub decision_threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_widths: vec![64, 32, 16],
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
            pos_weight: PosWeight::Auto,
            lr: 1e-3,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            decision_threshold: 0.5,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.hidden_widths.len() != 3 {
            return bad(format!("classifier needs exactly 3 hidden widths, got {}", self.hidden_widths.len()));
        }
        if self.hidden_widths.contains(&0) {
            return bad("hidden widths must be at least 1".into());
        }
        if let PosWeight::Value(w) = self.pos_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("pos_weight must be positive, got {w}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalization".into());
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return bad(format!("decision_threshold must lie in [0, 1], got {}", self.decision_threshold));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// `[zero-filled standardized values ; null mask]`, width `2F`.
    RawMasked,
    /// MIEO encoder output.
    Embedding,
}

/// `−[w·t·ln p + (1−t)·ln(1−p)]` with `p` clamped like the MIEO loss.
pub fn weighted_bce(p: f64, t: f64, pos_weight: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(pos_weight * t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

pub fn auto_pos_weight(labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&t| t == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Validation(format!(
            "auto pos_weight needs both classes, got {neg} negatives and {pos} positives"
        )));
    }
    Ok(neg as f64 / pos as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub network: Network,
    pub input_mode: InputMode,
    pub config: ClassifierConfig,
    /// The weight actually used in training (`auto` resolved).
    pub pos_weight: f64,
}

pub fn build_classifier(config: &ClassifierConfig, input_mode: InputMode, input_dim: usize, seed: u64) -> Result<ClassifierModel> {
    config.validate()?;
    let mut specs = Vec::new();
    let mut prev = input_dim;
    for &w in &config.hidden_widths {
        specs.push(LayerSpec::hidden(prev, w, config.leaky_slope));
        prev = w;
    }
    specs.push(LayerSpec::linear(prev, 1));
    let mut network = init_network(&specs, seed)?;
    network.set_mode(Mode::Inference);
    Ok(ClassifierModel {
        network,
        input_mode,
        config: config.clone(),
        pos_weight: match config.pos_weight {
            PosWeight::Value(w) => w,
            PosWeight::Auto => 1.0,
        },
    })
}

/// Mean weighted BCE over a batch of logits, and its gradient w.r.t. the logits.
pub fn batch_loss(logits: &Matrix, labels: &[u8], pos_weight: f64) -> (f64, Matrix) {
    let n = labels.len() as f64;
    let mut grad = Matrix::zeros(labels.len(), 1);
    let mut loss = 0.0;
    for (i, &t) in labels.iter().enumerate() {
        let p = sigmoid(logits[(i, 0)]);
        let t = f64::from(t);
        loss += weighted_bce(p, t, pos_weight);
        grad[(i, 0)] = (-pos_weight * t * (1.0 - p) + (1.0 - t) * p) / n;
    }
    (loss / n, grad)
}

impl ClassifierModel {
    pub fn input_dim(&self) -> usize {
        self.network.in_dim()
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "classifier expects {} input features, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn probabilities(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(self.network.predict(x)?.as_slice().iter().map(|&z| sigmoid(z)).collect())
    }

    /// Probabilities and hard labels (`p ≥ threshold`).
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<f64>, Vec<u8>)> {
        let p = self.probabilities(x)?;
        let labels = p.iter().map(|&p| u8::from(p >= self.config.decision_threshold)).collect();
        Ok((p, labels))
    }

    pub fn evaluate(&self, x: &Matrix, labels: &[u8]) -> Result<MetricsReport> {
        classification_report(&self.predict(x)?.1, labels)
    }

    /// Inference-mode mean weighted BCE.
    pub fn loss(&self, x: &Matrix, labels: &[u8]) -> Result<f64> {
        self.check_width(x)?;
        Ok(batch_loss(&self.network.predict(x)?, labels, self.pos_weight).0)
    }
}

impl Parameterized for ClassifierModel {
    fn parameters(&self) -> Vec<&[f64]> {
        self.network.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.network.parameters_mut()
    }

    fn parameter_layers(&self) -> Vec<usize> {
        self.network.parameter_layers()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_balanced_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHistory {
    pub epochs: Vec<ClassifierEpoch>,
}

/// Features and labels of one split in a classifier's input representation.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledFeatures {
    pub x: Matrix,
    pub y: Vec<u8>,
}

impl LabelledFeatures {
    pub fn new(x: Matrix, y: Vec<u8>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!("{} feature rows for {} labels", x.rows(), y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&t| t > 1) {
            return Err(Error::Validation(format!("label {bad} is not 0 or 1")));
        }
        Ok(LabelledFeatures { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Minibatch Adam on weighted BCE. Resolves `auto` pos_weight from `train`.
pub fn train_classifier(model: &mut ClassifierModel, train: &LabelledFeatures, validation: Option<&LabelledFeatures>) -> Result<ClassifierHistory> {
    if train.is_empty() {
        return Err(Error::Validation("classifier training split is empty".into()));
    }
    let auto = auto_pos_weight(&train.y).map_err(|_| Error::Validation("classifier training data contains a single class".into()))?;
    if let PosWeight::Auto = model.config.pos_weight {
        model.pos_weight = auto;
    }
    model.check_width(&train.x)?;
    let cfg = model.config.clone();
    let mut history = ClassifierHistory::default();
    let record = |model: &ClassifierModel, epoch: usize, history: &mut ClassifierHistory| -> Result<()> {
        let train_loss = model.loss(&train.x, &train.y)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                detail: format!("classifier training loss is {train_loss}"),
            });
        }
        let (validation_loss, validation_balanced_accuracy) = match validation {
            Some(v) if !v.is_empty() => (Some(model.loss(&v.x, &v.y)?), Some(model.evaluate(&v.x, &v.y)?.balanced_accuracy)),
            _ => (None, None),
        };
        history.epochs.push(ClassifierEpoch {
            epoch,
            train_loss,
            validation_loss,
            validation_balanced_accuracy,
        });
        Ok(())
    };
    record(model, 0, &mut history)?;
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &*model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x636c_6173_7369_6679);
    let mut order: Vec<usize> = (0..train.len()).collect();
    model.network.set_mode(Mode::Training);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let x = train.x.select_rows(batch);
            let y: Vec<u8> = batch.iter().map(|&i| train.y[i]).collect();
            let fwd = model.network.forward(&x)?;
            let (loss, dout) = batch_loss(&fwd.output, &y, model.pos_weight);
            if !loss.is_finite() {
                model.network.set_mode(Mode::Inference);
                return Err(Error::NonFinite {
                    epoch,
                    detail: format!("classifier minibatch loss is {loss}"),
                });
            }
            let grads = model.network.backward(&fwd, &dout)?;
            adam.step(model, &grads.tensors)?;
            model.network.update_running_stats(&fwd);
        }
        model.network.set_mode(Mode::Inference);
        let r = record(model, epoch, &mut history);
        model.network.set_mode(Mode::Training);
        r?;
    }
    model.network.set_mode(Mode::Inference);
    Ok(history)
}

/// Raw-masked features `[zero-filled standardized values ; null mask]`.
pub fn raw_masked_features(stats: &StandardizationStats, ds: &TabularDataset) -> Result<Matrix> {
    Ok(MaskedRows::from_dataset(&stats.apply(ds)?).encoder_input())
}

/// How a dataset in original units becomes classifier input.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    Raw {
        schema: FeatureSchema,
        standardization: StandardizationStats,
    },
    Mieo(Box<MieoModel>),
}

impl FeatureMap {
    pub fn input_mode(&self) -> InputMode {
        match self {
            FeatureMap::Raw { .. } => InputMode::RawMasked,
            FeatureMap::Mieo(_) => InputMode::Embedding,
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        match self {
            FeatureMap::Raw { schema, .. } => schema,
            FeatureMap::Mieo(m) => &m.schema,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Raw { schema, .. } => 2 * schema.len(),
            FeatureMap::Mieo(m) => m.embedding_dim(),
        }
    }

    /// Raw mode fits standardization on `train`.
    pub fn raw(train: &TabularDataset) -> Self {
        FeatureMap::Raw {
            schema: train.schema().clone(),
            standardization: StandardizationStats::fit(train),
        }
    }

    pub fn features(&self, ds: &TabularDataset) -> Result<Matrix> {
        if ds.schema() != self.schema() {
            return Err(Error::Schema("dataset schema differs from the model schema".into()));
        }
        match self {
            FeatureMap::Raw { standardization, .. } => raw_masked_features(standardization, ds),
            FeatureMap::Mieo(m) => m.encode_dataset(ds),
        }
    }

    /// Features plus 0/1 labels of the labelled rows of `ds`.
    pub fn labelled(&self, ds: &TabularDataset) -> Result<LabelledFeatures> {
        let part = ds.labelled_part();
        LabelledFeatures::new(self.features(&part)?, part.classes()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, GradCheckConfig};
    use rand::Rng;

    #[test]
    fn weighted_bce_closed_forms() {
        let ln2 = std::f64::consts::LN_2;
        assert!((weighted_bce(0.5, 1.0, 1.0) - ln2).abs() < 1e-15);
        assert!((weighted_bce(0.5, 1.0, 3.0) - 3.0 * ln2).abs() < 1e-15);
        assert!((weighted_bce(0.5, 0.0, 3.0) - ln2).abs() < 1e-15);
    }

    #[test]
    fn auto_weight_ratios() {
        let mut y = vec![0u8; 80];
        y.extend([1u8; 20]);
        assert_eq!(auto_pos_weight(&y).unwrap(), 4.0);
        assert_eq!(auto_pos_weight(&[0, 1, 1, 0]).unwrap(), 1.0);
        let mut y = vec![0u8; 472];
        y.extend([1u8; 131]);
        assert!((auto_pos_weight(&y).unwrap() - 3.603).abs() < 1e-3);
        assert!(auto_pos_weight(&[0, 0]).is_err());
    }

    #[test]
    fn pos_weight_json() {
        assert_eq!(serde_json::to_string(&PosWeight::Auto).unwrap(), "\"auto\"");
        assert_eq!(serde_json::from_str::<PosWeight>("2.5").unwrap(), PosWeight::Value(2.5));
        assert!(serde_json::from_str::<PosWeight>("\"big\"").is_err());
    }

    #[test]
    fn architecture_and_input_modes() {
        let cfg = ClassifierConfig::default();
        let raw = build_classifier(&cfg, InputMode::RawMasked, 136, 0).unwrap();
        let emb = build_classifier(&cfg, InputMode::Embedding, 96, 0).unwrap();
        assert_eq!(raw.input_dim(), 136);
        assert_eq!(emb.input_dim(), 96);
        let layers = raw.network.layers();
        assert_eq!(layers.len(), 4);
        assert!(layers[..3].iter().all(|l| l.batchnorm.is_some()));
        assert!(layers[3].batchnorm.is_none());
        assert_eq!(raw.network.out_dim(), 1);
        assert!(raw.probabilities(&Matrix::zeros(2, 96)).is_err());
        let bad = ClassifierConfig {
            hidden_widths: vec![4, 4],
            ..cfg
        };
        assert!(build_classifier(&bad, InputMode::Embedding, 3, 0).is_err());
    }

    #[test]
    fn threshold_is_inclusive() {
        let mut model = build_classifier(&ClassifierConfig::default(), InputMode::Embedding, 1, 0).unwrap();
        // zero the output layer so every probability is exactly 0.5
        let last = model.network.layers().len() - 1;
        let layer = model.network.layer_mut(last);
        layer.weights.as_mut_slice().fill(0.0);
        layer.bias.fill(0.0);
        let (p, y) = model.predict(&Matrix::zeros(3, 1)).unwrap();
        assert_eq!(p, vec![0.5; 3]);
        assert_eq!(y, vec![1; 3]);
    }

    fn toy(n: usize, seed: u64) -> LabelledFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        while y.len() < n {
            let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if (a + b).abs() < 0.2 {
                continue;
            }
            x.extend([a, b]);
            y.push(u8::from(a + b > 0.0));
        }
        LabelledFeatures::new(Matrix::new(n, 2, x).unwrap(), y).unwrap()
    }

    #[test]
    fn separable_toy_is_learned() {
        let data = toy(200, 1);
        let cfg = ClassifierConfig {
            hidden_widths: vec![16, 8, 4],
            lr: 1e-2,
            epochs: 100,
            batch_size: 32,
            ..ClassifierConfig::default()
        };
        let mut model = build_classifier(&cfg, InputMode::Embedding, 2, 3).unwrap();
        let history = train_classifier(&mut model, &data, None).unwrap();
        assert_eq!(history.epochs.len(), 101);
        assert_eq!(model.evaluate(&data.x, &data.y).unwrap().accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy(64, 2);
        let val = toy(32, 3);
        let cfg = ClassifierConfig {
            epochs: 5,
            batch_size: 16,
            ..ClassifierConfig::default()
        };
        let run = || {
            let mut m = build_classifier(&cfg, InputMode::Embedding, 2, 4).unwrap();
            let h = train_classifier(&mut m, &data, Some(&val)).unwrap();
            (m, h)
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert!(h1.epochs[5].validation_balanced_accuracy.is_some());
    }

    #[test]
    fn single_class_training_fails() {
        let x = Matrix::zeros(4, 2);
        let data = LabelledFeatures::new(x, vec![1; 4]).unwrap();
        let mut m = build_classifier(&ClassifierConfig::default(), InputMode::Embedding, 2, 0).unwrap();
        assert!(train_classifier(&mut m, &data, None).is_err());
    }

    #[test]
    fn classifier_gradient_check() {
        let data = toy(12, 5);
        let cfg = ClassifierConfig {
            hidden_widths: vec![6, 5, 4],
            leaky_slope: 0.1,
            pos_weight: PosWeight::Value(2.5),
            ..ClassifierConfig::default()
        };
        let mut model = build_classifier(&cfg, InputMode::Embedding, 2, 6).unwrap();
        model.network.set_mode(Mode::Training);
        let fwd = model.network.forward(&data.x).unwrap();
        let (_, dout) = batch_loss(&fwd.output, &data.y, model.pos_weight);
        let grads = model.network.backward(&fwd, &dout).unwrap();
        let report = gradient_check(
            &model,
            &grads.tensors,
            |m: &ClassifierModel| Ok(batch_loss(&m.network.forward(&data.x)?.output, &data.y, m.pos_weight).0),
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
