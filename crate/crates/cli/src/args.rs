use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "mieo", version, about = "Masked-input autoencoder pipeline for tabular data with missing values")]
pub struct Cli {
    /// Worker threads for grid search (defaults to the number of cores).
    #[arg(long, global = true, env = "MIEO_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic dataset (masked copy, ground truth, spec, schema).
    SynthGen(SynthGenArgs),
    /// Stratified train/validation/test split of the labelled rows.
    Split(SplitArgs),
    /// Train a MIEO autoencoder on labelled-train plus unlabelled rows.
    TrainMieo(TrainMieoArgs),
    /// Train the downstream classifier on raw masked features or embeddings.
    TrainClf(TrainClfArgs),
    /// Write MIEO embeddings of every row.
    Encode(EncodeArgs),
    /// Fill missing cells with MIEO reconstructions.
    Impute(ImputeArgs),
    /// Classification report for a trained classifier.
    Evaluate(EvaluateArgs),
    /// Split, search MIEO x classifier grids by validation balanced accuracy, report on test.
    GridSearch(GridSearchArgs),
    /// Re-run the command recorded in a manifest and compare output digests.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaperLike,
}

#[derive(Clone, Debug, clap::Args, Serialize, Deserialize)]
pub struct SynthGenArgs {
    /// JSON spec; overrides --preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "paper-like")]
    pub preset: Preset,
    /// Row count (overrides the spec file).
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo draws for the Bayes reference (0 skips it).
    #[arg(long, default_value_t = 100_000)]
    pub bayes_mc: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, clap::Args, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Column schema (default: schema.json next to the data file).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Per-column outlier bounds applied before splitting, `{"col": [low, high]}`.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, clap::Args, Serialize, Deserialize)]
pub struct TrainMieoArgs {
    /// Labelled training rows; standardization is fitted here.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub unlabelled: Option<PathBuf>,
    /// Rows for the per-epoch validation loss.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// MieoConfig JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub aug_mask_prob: Option<f64>,
    #[arg(long)]
    pub w_bin: Option<f64>,
    #[arg(long)]
    pub w_cont: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClfMode {
    Raw,
    Embedding,
}

#[derive(Clone, Debug, clap::Args, Serialize, Deserialize)]
pub struct TrainClfArgs {
    #[arg(long, value_enum)]
    pub mode: ClfMode,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Encoder for `--mode embedding`.
    #[arg(long)]
    pub mieo_model: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// ClassifierConfig JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// A positive number or `auto`.
    #[arg(long)]
    pub pos_weight: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, clap::Args, Serialize, Deserialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, clap::Args, Serialize, Deserialize)]
pub struct ImputeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Write binary imputations as probabilities instead of 0/1.
    #[arg(long)]
    pub soft: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, clap::Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub clf: PathBuf,
    /// Rows reported in the "test" block.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional rows for a "validation" block above the test block.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub mieo_model: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Clone, Debug, clap::Args, Serialize, Deserialize)]
pub struct GridSearchArgs {
    /// Full dataset; labelled rows are split, unlabelled rows join the pool.
    #[arg(long)]
    pub data: PathBuf,
    /// Extra unlabelled rows.
    #[arg(long)]
    pub unlabelled: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub mieo_grid: PathBuf,
    #[arg(long)]
    pub clf_grid: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_trials: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, clap::Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where the replayed outputs go (default: `replay/` next to the manifest).
    #[arg(long)]
    pub into: Option<PathBuf>,
}

fn absolute(p: &mut PathBuf) {
    if let Ok(a) = std::path::absolute(&*p) {
        *p = a;
    }
}

fn absolute_opt(p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        absolute(p);
    }
}

fn file_name(p: &Path) -> PathBuf {
    p.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

impl Command {
    /// Makes every path absolute so the recorded command can run from anywhere.
    pub fn absolutize(&mut self) {
        match self {
            Command::SynthGen(a) => {
                absolute_opt(&mut a.spec);
                absolute(&mut a.out_dir);
            }
            Command::Split(a) => {
                absolute(&mut a.data);
                absolute_opt(&mut a.schema);
                absolute_opt(&mut a.bounds);
                absolute(&mut a.out_dir);
            }
            Command::TrainMieo(a) => {
                absolute(&mut a.data);
                absolute_opt(&mut a.unlabelled);
                absolute_opt(&mut a.validation);
                absolute_opt(&mut a.schema);
                absolute_opt(&mut a.config);
                absolute(&mut a.out);
            }
            Command::TrainClf(a) => {
                absolute(&mut a.data);
                absolute_opt(&mut a.validation);
                absolute_opt(&mut a.mieo_model);
                absolute_opt(&mut a.schema);
                absolute_opt(&mut a.config);
                absolute(&mut a.out);
            }
            Command::Encode(a) => {
                absolute(&mut a.model);
                absolute(&mut a.data);
                absolute(&mut a.out);
            }
            Command::Impute(a) => {
                absolute(&mut a.model);
                absolute(&mut a.data);
                absolute(&mut a.out);
            }
            Command::Evaluate(a) => {
                absolute(&mut a.clf);
                absolute(&mut a.data);
                absolute_opt(&mut a.validation);
                absolute_opt(&mut a.mieo_model);
                absolute(&mut a.report);
            }
            Command::GridSearch(a) => {
                absolute(&mut a.data);
                absolute_opt(&mut a.unlabelled);
                absolute_opt(&mut a.schema);
                absolute(&mut a.mieo_grid);
                absolute(&mut a.clf_grid);
                absolute(&mut a.out_dir);
            }
            Command::Replay(a) => {
                absolute(&mut a.manifest);
                absolute_opt(&mut a.into);
            }
        }
    }

    /// Points every output into `dir`, keeping file names.
    pub fn redirect(&mut self, dir: &Path) {
        let into = |p: &mut PathBuf| *p = dir.join(file_name(p));
        match self {
            Command::SynthGen(a) => a.out_dir = dir.to_path_buf(),
            Command::Split(a) => a.out_dir = dir.to_path_buf(),
            Command::GridSearch(a) => a.out_dir = dir.to_path_buf(),
            Command::TrainMieo(a) => into(&mut a.out),
            Command::TrainClf(a) => into(&mut a.out),
            Command::Encode(a) => into(&mut a.out),
            Command::Impute(a) => into(&mut a.out),
            Command::Evaluate(a) => into(&mut a.report),
            Command::Replay(_) => {}
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthGen(_) => "synth-gen",
            Command::Split(_) => "split",
            Command::TrainMieo(_) => "train-mieo",
            Command::TrainClf(_) => "train-clf",
            Command::Encode(_) => "encode",
            Command::Impute(_) => "impute",
            Command::Evaluate(_) => "evaluate",
            Command::GridSearch(_) => "grid-search",
            Command::Replay(_) => "replay",
        }
    }
}
