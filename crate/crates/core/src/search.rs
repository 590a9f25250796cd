//! Grid search with deferred selection: every MIEO candidate is judged by the
//! validation balanced accuracy of classifiers trained on its embeddings,
//! not by its own reconstruction loss.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{build_classifier, train_classifier, ClassifierConfig, ClassifierModel, FeatureMap, PosWeight};
use crate::data::{SelectionData, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::mieo::{fit_mieo, LossBreakdown, MieoConfig, MieoModel};

/// Index tuples of a cartesian product; the first axis varies slowest.
pub fn cartesian(axis_sizes: &[usize]) -> Result<Vec<Vec<usize>>> {
    if let Some(k) = axis_sizes.iter().position(|&n| n == 0) {
        return Err(Error::Validation(format!("grid axis {k} is empty")));
    }
    let mut out = vec![Vec::new()];
    for &n in axis_sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |i| {
                    let mut p = prefix.clone();
                    p.push(i);
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

fn axis_error(name: &str) -> Error {
    Error::Validation(format!("grid axis `{name}` is empty"))
}

/// Candidate values per MIEO hyperparameter. Expansion order is the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MieoGrid {
    pub embedding_dim: Vec<usize>,
    pub w_bin: Vec<f64>,
    pub w_cont: Vec<f64>,
    pub aug_mask_prob: Vec<f64>,
    pub lr: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub epochs: Vec<usize>,
    /// Fixed fields shared by every expanded config.
    pub base: MieoConfig,
}

impl Default for MieoGrid {
    fn default() -> Self {
        let b = MieoConfig::default();
        MieoGrid {
            embedding_dim: vec![b.embedding_dim],
            w_bin: vec![b.w_bin],
            w_cont: vec![b.w_cont],
            aug_mask_prob: vec![b.aug_mask_prob],
            lr: vec![b.lr],
            batch_size: vec![b.batch_size],
            epochs: vec![b.epochs],
            base: b,
        }
    }
}

impl MieoGrid {
    pub fn len(&self) -> usize {
        self.embedding_dim.len()
            * self.w_bin.len()
            * self.w_cont.len()
            * self.aug_mask_prob.len()
            * self.lr.len()
            * self.batch_size.len()
            * self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn expand(&self) -> Result<Vec<MieoConfig>> {
        let sizes = [
            ("embedding_dim", self.embedding_dim.len()),
            ("w_bin", self.w_bin.len()),
            ("w_cont", self.w_cont.len()),
            ("aug_mask_prob", self.aug_mask_prob.len()),
            ("lr", self.lr.len()),
            ("batch_size", self.batch_size.len()),
            ("epochs", self.epochs.len()),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, n)| *n == 0) {
            return Err(axis_error(name));
        }
        let sizes: Vec<usize> = sizes.iter().map(|(_, n)| *n).collect();
        Ok(cartesian(&sizes)?
            .into_iter()
            .map(|ix| MieoConfig {
                embedding_dim: self.embedding_dim[ix[0]],
                w_bin: self.w_bin[ix[1]],
                w_cont: self.w_cont[ix[2]],
                aug_mask_prob: self.aug_mask_prob[ix[3]],
                lr: self.lr[ix[4]],
                batch_size: self.batch_size[ix[5]],
                epochs: self.epochs[ix[6]],
                ..self.base.clone()
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClfGrid {
    pub hidden_widths: Vec<Vec<usize>>,
    pub lr: Vec<f64>,
    pub pos_weight: Vec<PosWeight>,
    pub batch_size: Vec<usize>,
    pub epochs: Vec<usize>,
    pub base: ClassifierConfig,
}

impl Default for ClfGrid {
    fn default() -> Self {
        let b = ClassifierConfig::default();
        ClfGrid {
            hidden_widths: vec![b.hidden_widths.clone()],
            lr: vec![b.lr],
            pos_weight: vec![b.pos_weight],
            batch_size: vec![b.batch_size],
            epochs: vec![b.epochs],
            base: b,
        }
    }
}

impl ClfGrid {
    pub fn len(&self) -> usize {
        self.hidden_widths.len() * self.lr.len() * self.pos_weight.len() * self.batch_size.len() * self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn expand(&self) -> Result<Vec<ClassifierConfig>> {
        let sizes = [
            ("hidden_widths", self.hidden_widths.len()),
            ("lr", self.lr.len()),
            ("pos_weight", self.pos_weight.len()),
            ("batch_size", self.batch_size.len()),
            ("epochs", self.epochs.len()),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, n)| *n == 0) {
            return Err(axis_error(name));
        }
        let sizes: Vec<usize> = sizes.iter().map(|(_, n)| *n).collect();
        Ok(cartesian(&sizes)?
            .into_iter()
            .map(|ix| ClassifierConfig {
                hidden_widths: self.hidden_widths[ix[0]].clone(),
                lr: self.lr[ix[1]],
                pos_weight: self.pos_weight[ix[2]],
                batch_size: self.batch_size[ix[3]],
                epochs: self.epochs[ix[4]],
                ..self.base.clone()
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Seed for every MIEO and classifier trained in the search.
    pub seed: u64,
    /// Evaluate only the first `max_trials` pairs in grid order.
    pub max_trials: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialOutcome {
    Completed {
        validation: Box<MetricsReport>,
        reconstruction: LossBreakdown,
    },
    Failed {
        error: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Position in grid order (MIEO-major).
    pub index: usize,
    pub mieo_index: usize,
    pub clf_index: usize,
    pub mieo_config: MieoConfig,
    pub clf_config: ClassifierConfig,
    pub seed: u64,
    pub outcome: TrialOutcome,
    /// Seconds spent on this trial, the MIEO's training time included.
    /// Kept out of the JSON table so replays compare byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl TrialRecord {
    pub fn validation(&self) -> Option<&MetricsReport> {
        match &self.outcome {
            TrialOutcome::Completed { validation, .. } => Some(validation),
            TrialOutcome::Failed { .. } => None,
        }
    }

    pub fn reconstruction(&self) -> Option<&LossBreakdown> {
        match &self.outcome {
            TrialOutcome::Completed { reconstruction, .. } => Some(reconstruction),
            TrialOutcome::Failed { .. } => None,
        }
    }

    pub fn is_completed(&self) -> bool {
        self.validation().is_some()
    }
}

/// Total order used for selection: better trials compare as `Less`.
///
/// Completed beats failed; then higher balanced accuracy, higher macro F1,
/// lower validation reconstruction total, earlier grid position.
pub fn rank_order(a: &TrialRecord, b: &TrialRecord) -> Ordering {
    match (&a.outcome, &b.outcome) {
        (TrialOutcome::Completed { validation: va, reconstruction: ra }, TrialOutcome::Completed { validation: vb, reconstruction: rb }) => vb
            .balanced_accuracy
            .total_cmp(&va.balanced_accuracy)
            .then(vb.macro_avg.f1.total_cmp(&va.macro_avg.f1))
            .then(ra.total.total_cmp(&rb.total))
            .then(a.index.cmp(&b.index)),
        (TrialOutcome::Completed { .. }, TrialOutcome::Failed { .. }) => Ordering::Less,
        (TrialOutcome::Failed { .. }, TrialOutcome::Completed { .. }) => Ordering::Greater,
        _ => a.index.cmp(&b.index),
    }
}

/// A trained encoder-plus-classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub features: FeatureMap,
    pub classifier: ClassifierModel,
}

impl Pipeline {
    pub fn mieo(&self) -> Option<&MieoModel> {
        match &self.features {
            FeatureMap::Mieo(m) => Some(m),
            FeatureMap::Raw { .. } => None,
        }
    }

    /// Report on the labelled rows of `ds`. Read-only.
    pub fn evaluate(&self, ds: &TabularDataset) -> Result<MetricsReport> {
        let data = self.features.labelled(ds)?;
        self.classifier.evaluate(&data.x, &data.y)
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub trials: Vec<TrialRecord>,
    /// Index into `trials` of the winner; `None` when every trial failed.
    pub best_index: Option<usize>,
    pub best: Option<Pipeline>,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> Option<&TrialRecord> {
        self.best_index.map(|k| &self.trials[k])
    }

    /// Trial indices from best to worst.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.trials.len()).collect();
        order.sort_by(|&a, &b| rank_order(&self.trials[a], &self.trials[b]));
        order
    }
}

struct MieoRun {
    trials: Vec<TrialRecord>,
    // best classifier for this encoder, with its position in `trials`
    best: Option<(usize, Pipeline)>,
}

fn run_mieo_config(
    mieo_index: usize,
    mieo_config: &MieoConfig,
    clf_configs: &[(usize, ClassifierConfig)],
    first_index: usize,
    data: &SelectionData<'_>,
    seed: u64,
) -> MieoRun {
    let start = Instant::now();
    let mieo_config = MieoConfig {
        seed,
        ..mieo_config.clone()
    };
    let fail = |clf_index: usize, clf_config: &ClassifierConfig, k: usize, error: String, secs: f64| TrialRecord {
        index: first_index + k,
        mieo_index,
        clf_index,
        mieo_config: mieo_config.clone(),
        clf_config: clf_config.clone(),
        seed,
        outcome: TrialOutcome::Failed { error },
        wall_time_secs: secs,
    };
    let prepared = fit_mieo(&mieo_config, data.train, data.unlabelled, Some(data.validation)).and_then(|(model, history)| {
        let reconstruction = history
            .last()
            .and_then(|e| e.validation)
            .ok_or_else(|| Error::Validation("no validation reconstruction recorded".into()))?;
        let features = FeatureMap::Mieo(Box::new(model));
        let train = features.labelled(data.train)?;
        let val = features.labelled(data.validation)?;
        Ok((features, reconstruction, train, val))
    });
    let mieo_secs = start.elapsed().as_secs_f64();
    let (features, reconstruction, train, val) = match prepared {
        Ok(p) => p,
        Err(e) => {
            let msg = format!("MIEO training failed: {e}");
            return MieoRun {
                trials: clf_configs
                    .iter()
                    .enumerate()
                    .map(|(k, (ci, c))| fail(*ci, c, k, msg.clone(), mieo_secs))
                    .collect(),
                best: None,
            };
        }
    };
    let mut trials = Vec::with_capacity(clf_configs.len());
    let mut best: Option<(usize, Pipeline)> = None;
    for (k, (clf_index, clf_config)) in clf_configs.iter().enumerate() {
        let t = Instant::now();
        let clf_config = ClassifierConfig {
            seed,
            ..clf_config.clone()
        };
        let result = build_classifier(&clf_config, features.input_mode(), features.output_dim(), seed).and_then(|mut clf| {
            train_classifier(&mut clf, &train, Some(&val))?;
            let report = clf.evaluate(&val.x, &val.y)?;
            Ok((clf, report))
        });
        let secs = t.elapsed().as_secs_f64() + if k == 0 { mieo_secs } else { 0.0 };
        match result {
            Ok((clf, report)) => {
                let record = TrialRecord {
                    index: first_index + k,
                    mieo_index,
                    clf_index: *clf_index,
                    mieo_config: mieo_config.clone(),
                    clf_config,
                    seed,
                    outcome: TrialOutcome::Completed {
                        validation: Box::new(report),
                        reconstruction,
                    },
                    wall_time_secs: secs,
                };
                let better = match &best {
                    None => true,
                    Some((b, _)) => rank_order(&record, &trials[*b]) == Ordering::Less,
                };
                if better {
                    best = Some((
                        trials.len(),
                        Pipeline {
                            features: features.clone(),
                            classifier: clf,
                        },
                    ));
                }
                trials.push(record);
            }
            Err(e) => trials.push(fail(*clf_index, &clf_config, k, e.to_string(), secs)),
        }
    }
    MieoRun { trials, best }
}

/// Trains every (MIEO, classifier) pair in grid order and selects the pair
/// with the best validation balanced accuracy. Encoders are trained in
/// parallel; results are merged in grid order, so the outcome does not
/// depend on scheduling. The test split is not reachable from `data`.
pub fn deferred_select(
    mieo_configs: &[MieoConfig],
    clf_configs: &[ClassifierConfig],
    data: SelectionData<'_>,
    options: SearchOptions,
) -> Result<SearchOutcome> {
    if mieo_configs.is_empty() || clf_configs.is_empty() {
        return Err(Error::Validation("search grids must be non-empty".into()));
    }
    let total = mieo_configs.len() * clf_configs.len();
    let budget = options.max_trials.unwrap_or(total).min(total);
    if budget == 0 {
        return Err(Error::Validation("max_trials must be at least 1".into()));
    }
    let jobs: Vec<(usize, Vec<(usize, ClassifierConfig)>)> = (0..mieo_configs.len())
        .filter_map(|m| {
            let first = m * clf_configs.len();
            let clfs: Vec<(usize, ClassifierConfig)> = clf_configs
                .iter()
                .cloned()
                .enumerate()
                .take(budget.saturating_sub(first))
                .collect();
            (!clfs.is_empty()).then_some((m, clfs))
        })
        .collect();
    let runs: Vec<MieoRun> = jobs
        .par_iter()
        .map(|(m, clfs)| run_mieo_config(*m, &mieo_configs[*m], clfs, m * clf_configs.len(), &data, options.seed))
        .collect();

    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(usize, Pipeline)> = None;
    for run in runs {
        let offset = trials.len();
        trials.extend(run.trials);
        if let Some((k, pipeline)) = run.best {
            let candidate = offset + k;
            let better = match &best {
                None => true,
                Some((b, _)) => rank_order(&trials[candidate], &trials[*b]) == Ordering::Less,
            };
            if better {
                best = Some((candidate, pipeline));
            }
        }
    }
    let (best_index, best) = match best {
        Some((k, p)) => (Some(k), Some(p)),
        None => (None, None),
    };
    Ok(SearchOutcome {
        trials,
        best_index,
        best,
    })
}

/// The only consumer of the test split.
pub fn final_evaluate(best: &Pipeline, test: &TabularDataset) -> Result<MetricsReport> {
    best.evaluate(test)
}
