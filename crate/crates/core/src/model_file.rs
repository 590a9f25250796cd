//! Versioned JSON model files.
//!
//! MIEO file:
//!
//! ```json
//! { "format": "mieo", "format_version": 1,
//!   "schema": {"columns": [{"name": "b00", "kind": "binary"}, ...]},
//!   "standardization": {"columns": [{"column": "c00", "index": 46, "mean": 20.1, "std": 1.0}, ...]},
//!   "config": { ...MieoConfig... },
//!   "heads": ["sigmoid", ..., "identity"],
//!   "encoder": {"layers": [...], "mode": "inference"},
//!   "decoder": {"layers": [...], "mode": "inference"} }
//! ```
//!
//! Each layer is `{"spec": {...}, "weights": {"rows", "cols", "data"}, "bias": [...],
//! "batchnorm": {"gamma", "beta", "running_mean", "running_var"} | null}` with
//! weights stored row-major as `out_dim × in_dim`.
//!
//! Classifier file: `"format": "classifier"`, plus `input_mode`, `config`,
//! `pos_weight` (resolved), `network`, `schema`, `standardization` (raw mode
//! only) and `encoder_sha256` (embedding mode: digest of the MIEO file it was
//! trained on). Floats are written with shortest round-trip formatting, so a
//! save/load cycle is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, ClassifierModel, FeatureMap, InputMode};
use crate::data::{FeatureKind, FeatureSchema, StandardizationStats};
use crate::error::{Error, Result};
use crate::mieo::{MieoConfig, MieoModel};
use crate::nn::{Mode, Network};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Sigmoid,
    Identity,
}

#[derive(Serialize, Deserialize)]
struct MieoFile {
    format: String,
    format_version: u32,
    schema: FeatureSchema,
    standardization: StandardizationStats,
    config: MieoConfig,
    heads: Vec<Head>,
    encoder: Network,
    decoder: Network,
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    format: String,
    format_version: u32,
    input_mode: InputMode,
    config: ClassifierConfig,
    pos_weight: f64,
    network: Network,
    schema: FeatureSchema,
    standardization: Option<StandardizationStats>,
    encoder_sha256: Option<String>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    format_version: u32,
}

fn check_header(text: &str, expected: &str) -> Result<()> {
    let Header { format, format_version: version } = serde_json::from_str(text)?;
    if format != expected {
        return Err(Error::ModelFormat(format!("expected a `{expected}` model, found `{format}`")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format_version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

fn heads(schema: &FeatureSchema) -> Vec<Head> {
    schema
        .kinds()
        .into_iter()
        .map(|k| match k {
            FeatureKind::Binary => Head::Sigmoid,
            FeatureKind::Continuous => Head::Identity,
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn mieo_to_json(model: &MieoModel) -> Result<String> {
    let mut encoder = model.encoder.clone();
    let mut decoder = model.decoder.clone();
    encoder.set_mode(Mode::Inference);
    decoder.set_mode(Mode::Inference);
    to_json(&MieoFile {
        format: "mieo".into(),
        format_version: FORMAT_VERSION,
        schema: model.schema.clone(),
        standardization: model.standardization.clone(),
        config: model.config.clone(),
        heads: heads(&model.schema),
        encoder,
        decoder,
    })
}

pub fn mieo_from_json(text: &str) -> Result<MieoModel> {
    check_header(text, "mieo")?;
    let f: MieoFile = serde_json::from_str(text)?;
    f.encoder.validate()?;
    f.decoder.validate()?;
    let n = f.schema.len();
    if f.heads != heads(&f.schema) {
        return Err(Error::ModelFormat("head map does not match the schema column kinds".into()));
    }
    if f.encoder.in_dim() != 2 * n || f.decoder.out_dim() != n || f.decoder.in_dim() != f.encoder.out_dim() {
        return Err(Error::ModelFormat(format!(
            "network dims {}→{}→{} do not fit {n} features",
            f.encoder.in_dim(),
            f.encoder.out_dim(),
            f.decoder.out_dim()
        )));
    }
    Ok(MieoModel {
        encoder: f.encoder,
        decoder: f.decoder,
        schema: f.schema,
        standardization: f.standardization,
        config: f.config,
    })
}

/// A classifier together with the feature map it was trained behind.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierArtifact {
    pub classifier: ClassifierModel,
    pub schema: FeatureSchema,
    pub standardization: Option<StandardizationStats>,
    pub encoder_sha256: Option<String>,
}

impl ClassifierArtifact {
    pub fn new(classifier: ClassifierModel, features: &FeatureMap, encoder_sha256: Option<String>) -> Self {
        let standardization = match features {
            FeatureMap::Raw { standardization, .. } => Some(standardization.clone()),
            FeatureMap::Mieo(_) => None,
        };
        ClassifierArtifact {
            classifier,
            schema: features.schema().clone(),
            standardization,
            encoder_sha256,
        }
    }

    /// The feature map; embedding mode needs the encoder it was trained on.
    pub fn feature_map(&self, mieo: Option<MieoModel>) -> Result<FeatureMap> {
        match (self.classifier.input_mode, mieo) {
            (InputMode::RawMasked, _) => Ok(FeatureMap::Raw {
                schema: self.schema.clone(),
                standardization: self
                    .standardization
                    .clone()
                    .ok_or_else(|| Error::ModelFormat("raw-mode classifier without standardization".into()))?,
            }),
            (InputMode::Embedding, Some(m)) => {
                if m.schema != self.schema || m.embedding_dim() != self.classifier.input_dim() {
                    return Err(Error::Schema("MIEO model does not match the classifier".into()));
                }
                Ok(FeatureMap::Mieo(Box::new(m)))
            }
            (InputMode::Embedding, None) => Err(Error::Validation("embedding-mode classifier needs a MIEO model".into())),
        }
    }
}

pub fn classifier_to_json(a: &ClassifierArtifact) -> Result<String> {
    let mut network = a.classifier.network.clone();
    network.set_mode(Mode::Inference);
    to_json(&ClassifierFile {
        format: "classifier".into(),
        format_version: FORMAT_VERSION,
        input_mode: a.classifier.input_mode,
        config: a.classifier.config.clone(),
        pos_weight: a.classifier.pos_weight,
        network,
        schema: a.schema.clone(),
        standardization: a.standardization.clone(),
        encoder_sha256: a.encoder_sha256.clone(),
    })
}

pub fn classifier_from_json(text: &str) -> Result<ClassifierArtifact> {
    check_header(text, "classifier")?;
    let f: ClassifierFile = serde_json::from_str(text)?;
    f.network.validate()?;
    if f.network.out_dim() != 1 {
        return Err(Error::ModelFormat("classifier network must have one output".into()));
    }
    let expected_in = match f.input_mode {
        InputMode::RawMasked => Some(2 * f.schema.len()),
        InputMode::Embedding => None,
    };
    if expected_in.is_some_and(|d| d != f.network.in_dim()) {
        return Err(Error::ModelFormat("raw-mode classifier input width is not 2F".into()));
    }
    Ok(ClassifierArtifact {
        classifier: ClassifierModel {
            network: f.network,
            input_mode: f.input_mode,
            config: f.config,
            pos_weight: f.pos_weight,
        },
        schema: f.schema,
        standardization: f.standardization,
        encoder_sha256: f.encoder_sha256,
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_mieo(model: &MieoModel, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &mieo_to_json(model)?)
}

pub fn load_mieo(path: impl AsRef<Path>) -> Result<MieoModel> {
    mieo_from_json(&read(path.as_ref())?)
}

pub fn save_classifier(a: &ClassifierArtifact, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &classifier_to_json(a)?)
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<ClassifierArtifact> {
    classifier_from_json(&read(path.as_ref())?)
}
