use std::path::{Path, PathBuf};

use mieo::classifier::{build_classifier, train_classifier, ClassifierConfig, FeatureMap, LabelledFeatures, PosWeight};
use mieo::data::{split, Column, FeatureSchema, Label, OutlierBounds, TabularDataset};
use mieo::metrics::{format_table, MetricsReport};
use mieo::mieo::{fit_mieo, MieoConfig};
use mieo::model_file::{self, ClassifierArtifact};
use mieo::search::{deferred_select, final_evaluate, ClfGrid, MieoGrid, SearchOptions};
use mieo::synth::{bayes_reference, generate, SynthSpec};
use serde::Serialize;

use crate::args::*;
use crate::manifest::sha256_hex;
use crate::{read_file, write_file, CliError};

/// What a command touched, for its manifest.
pub struct RunRecord {
    pub root: PathBuf,
    pub manifest_path: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub unstable_outputs: Vec<PathBuf>,
    pub resolved: serde_json::Value,
    pub seed: Option<u64>,
}

impl RunRecord {
    fn in_dir(dir: &Path) -> Self {
        RunRecord {
            root: dir.to_path_buf(),
            manifest_path: dir.join("manifest.json"),
            inputs: Vec::new(),
            outputs: Vec::new(),
            unstable_outputs: Vec::new(),
            resolved: serde_json::Value::Null,
            seed: None,
        }
    }

    fn for_file(out: &Path) -> Self {
        let root = out.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut manifest = out.as_os_str().to_owned();
        manifest.push(".manifest.json");
        RunRecord {
            manifest_path: PathBuf::from(manifest),
            ..RunRecord::in_dir(&root)
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(mieo::Error::from)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn write_json<T: Serialize>(path: &Path, value: &T, rec: &mut RunRecord) -> Result<(), CliError> {
    write_file(path, &to_json(value)?)?;
    rec.outputs.push(path.to_path_buf());
    Ok(())
}

fn write_csv(path: &Path, ds: &TabularDataset, rec: &mut RunRecord) -> Result<(), CliError> {
    ds.write_csv(path)?;
    rec.outputs.push(path.to_path_buf());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Core(mieo::Error::Validation(format!("{}: {e}", path.display()))))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `--schema`, or `schema.json` next to the data file.
fn schema_path(explicit: &Option<PathBuf>, data: &Path) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| data.parent().unwrap_or(Path::new(".")).join("schema.json"))
}

fn load_schema(explicit: &Option<PathBuf>, data: &Path, rec: &mut RunRecord) -> Result<FeatureSchema, CliError> {
    let path = schema_path(explicit, data);
    let schema = FeatureSchema::load_json(&path)?;
    rec.input(&path);
    Ok(schema)
}

fn load_data(path: &Path, schema: &FeatureSchema, rec: &mut RunRecord) -> Result<TabularDataset, CliError> {
    let ds = TabularDataset::load_csv(path, schema)?;
    rec.input(path);
    Ok(ds)
}

#[derive(Serialize)]
struct ReportBlock<'a> {
    dataset: &'a str,
    metrics: &'a MetricsReport,
}

#[derive(Serialize)]
struct Report<'a> {
    blocks: Vec<ReportBlock<'a>>,
    /// Three-decimal text rendering of the blocks.
    table: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected_trial: Option<usize>,
}

fn report<'a>(blocks: &[(&'a str, &'a MetricsReport)], selected_trial: Option<usize>) -> Report<'a> {
    let titled: Vec<(String, &MetricsReport)> = blocks
        .iter()
        .map(|(name, r)| (format!("{}{} dataset", name[..1].to_uppercase(), &name[1..]), *r))
        .collect();
    let refs: Vec<(&str, &MetricsReport)> = titled.iter().map(|(n, r)| (n.as_str(), *r)).collect();
    Report {
        blocks: blocks
            .iter()
            .map(|(dataset, metrics)| ReportBlock { dataset, metrics })
            .collect(),
        table: format_table(&refs),
        selected_trial,
    }
}

pub fn synth_gen(a: &SynthGenArgs) -> Result<RunRecord, CliError> {
    let mut rec = RunRecord::in_dir(&a.out_dir);
    let mut spec = match &a.spec {
        Some(path) => {
            rec.input(path);
            read_json::<SynthSpec>(path)?
        }
        None => match a.preset {
            Preset::PaperLike => SynthSpec::paper_like(a.rows.unwrap_or(8000)),
        },
    };
    if let Some(n) = a.rows {
        spec.n_rows = n;
    }
    spec.validate()?;
    let data = generate(&spec, a.seed)?;
    create_dir(&a.out_dir)?;
    write_csv(&a.out_dir.join("masked.csv"), &data.masked, &mut rec)?;
    write_csv(&a.out_dir.join("ground_truth.csv"), &data.ground_truth, &mut rec)?;
    write_json(&a.out_dir.join("spec.json"), &spec, &mut rec)?;
    write_json(&a.out_dir.join("schema.json"), &spec.schema(), &mut rec)?;
    if a.bayes_mc > 0 {
        let reference = bayes_reference(&spec, a.bayes_mc, a.seed)?;
        write_json(
            &a.out_dir.join("reference.json"),
            &serde_json::json!({ "bayes_balanced_accuracy": reference, "n_mc": a.bayes_mc, "seed": a.seed }),
            &mut rec,
        )?;
        println!("Bayes reference balanced accuracy: {reference:.4}");
    }
    println!(
        "{} rows ({} labelled), {:.2}% missing -> {}",
        data.masked.n_rows(),
        data.masked.n_labelled(),
        100.0 * data.masked.missing_fraction(),
        a.out_dir.display()
    );
    rec.resolved = serde_json::to_value(&spec).map_err(mieo::Error::from)?;
    rec.seed = Some(a.seed);
    Ok(rec)
}

pub fn split_cmd(a: &SplitArgs) -> Result<RunRecord, CliError> {
    let mut rec = RunRecord::in_dir(&a.out_dir);
    let schema = load_schema(&a.schema, &a.data, &mut rec)?;
    let mut ds = load_data(&a.data, &schema, &mut rec)?;
    if let Some(b) = &a.bounds {
        rec.input(b);
        ds = mieo::data::preprocess(&ds, &OutlierBounds::load_json(b)?)?;
    }
    let s = split(&ds, a.seed)?;
    create_dir(&a.out_dir)?;
    for (name, part) in [
        ("train.csv", &s.train),
        ("validation.csv", &s.validation),
        ("test.csv", &s.test),
        ("unlabelled.csv", &s.unlabelled),
    ] {
        write_csv(&a.out_dir.join(name), part, &mut rec)?;
    }
    write_json(&a.out_dir.join("schema.json"), &schema, &mut rec)?;
    println!(
        "train {} / validation {} / test {} labelled rows, {} unlabelled -> {}",
        s.train.n_rows(),
        s.validation.n_rows(),
        s.test.n_rows(),
        s.unlabelled.n_rows(),
        a.out_dir.display()
    );
    rec.resolved = serde_json::json!({ "seed": a.seed, "bounds": a.bounds.is_some() });
    rec.seed = Some(a.seed);
    Ok(rec)
}

pub fn train_mieo(a: &TrainMieoArgs) -> Result<RunRecord, CliError> {
    let mut rec = RunRecord::for_file(&a.out);
    let schema = load_schema(&a.schema, &a.data, &mut rec)?;
    let mut cfg: MieoConfig = match &a.config {
        Some(p) => {
            rec.input(p);
            read_json(p)?
        }
        None => MieoConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.embedding_dim {
        cfg.embedding_dim = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.aug_mask_prob {
        cfg.aug_mask_prob = v;
    }
    if let Some(v) = a.w_bin {
        cfg.w_bin = v;
    }
    if let Some(v) = a.w_cont {
        cfg.w_cont = v;
    }
    let train = load_data(&a.data, &schema, &mut rec)?.labelled_part();
    let unlabelled = match &a.unlabelled {
        Some(p) => load_data(p, &schema, &mut rec)?,
        None => TabularDataset::empty(schema.clone()),
    };
    let validation = a.validation.as_ref().map(|p| load_data(p, &schema, &mut rec)).transpose()?;
    let (model, history) = fit_mieo(&cfg, &train, &unlabelled, validation.as_ref())?;
    write_file(&a.out, model_file::mieo_to_json(&model)?.as_bytes())?;
    rec.outputs.push(a.out.clone());
    write_json(&sibling(&a.out, ".history.json"), &history, &mut rec)?;
    if let Some(last) = history.last() {
        println!(
            "epoch {}: train loss {:.4} (bce {:.4}, mse {:.4})",
            last.epoch, last.train.total, last.train.bce_part, last.train.mse_part
        );
    }
    rec.seed = Some(cfg.seed);
    rec.resolved = serde_json::to_value(&cfg).map_err(mieo::Error::from)?;
    Ok(rec)
}

fn parse_pos_weight(s: &str) -> Result<PosWeight, CliError> {
    if s == "auto" {
        return Ok(PosWeight::Auto);
    }
    s.parse::<f64>()
        .map(PosWeight::Value)
        .map_err(|_| CliError::Usage(format!("--pos-weight must be a number or `auto`, got `{s}`")))
}

fn load_mieo_checked(path: &Path, rec: &mut RunRecord) -> Result<(mieo::mieo::MieoModel, String), CliError> {
    let bytes = read_file(path)?;
    rec.input(path);
    let text = String::from_utf8(bytes).map_err(|_| mieo::Error::ModelFormat(format!("{} is not UTF-8", path.display())))?;
    Ok((model_file::mieo_from_json(&text)?, sha256_hex(text.as_bytes())))
}

pub fn train_clf(a: &TrainClfArgs) -> Result<RunRecord, CliError> {
    let mut rec = RunRecord::for_file(&a.out);
    let mut cfg: ClassifierConfig = match &a.config {
        Some(p) => {
            rec.input(p);
            read_json(p)?
        }
        None => ClassifierConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = &a.pos_weight {
        cfg.pos_weight = parse_pos_weight(v)?;
    }
    let (features, digest, train) = match (a.mode, &a.mieo_model) {
        (ClfMode::Embedding, None) => return Err(CliError::Usage("--mode embedding requires --mieo-model".into())),
        (ClfMode::Embedding, Some(path)) => {
            let (model, digest) = load_mieo_checked(path, &mut rec)?;
            let schema = model.schema.clone();
            let train = load_data(&a.data, &schema, &mut rec)?.labelled_part();
            (FeatureMap::Mieo(Box::new(model)), Some(digest), train)
        }
        (ClfMode::Raw, _) => {
            let schema = load_schema(&a.schema, &a.data, &mut rec)?;
            let train = load_data(&a.data, &schema, &mut rec)?.labelled_part();
            (FeatureMap::raw(&train), None, train)
        }
    };
    let train_x: LabelledFeatures = features.labelled(&train)?;
    let val_x = match &a.validation {
        Some(p) => Some(features.labelled(&load_data(p, features.schema(), &mut rec)?)?),
        None => None,
    };
    let mut clf = build_classifier(&cfg, features.input_mode(), features.output_dim(), cfg.seed)?;
    let history = train_classifier(&mut clf, &train_x, val_x.as_ref())?;
    let artifact = ClassifierArtifact::new(clf, &features, digest);
    write_file(&a.out, model_file::classifier_to_json(&artifact)?.as_bytes())?;
    rec.outputs.push(a.out.clone());
    write_json(&sibling(&a.out, ".history.json"), &history, &mut rec)?;
    if let Some(last) = history.epochs.last() {
        match last.validation_balanced_accuracy {
            Some(ba) => println!("epoch {}: train loss {:.4}, validation balanced accuracy {ba:.4}", last.epoch, last.train_loss),
            None => println!("epoch {}: train loss {:.4}", last.epoch, last.train_loss),
        }
    }
    rec.seed = Some(cfg.seed);
    rec.resolved = serde_json::json!({
        "config": cfg,
        "mode": a.mode,
        "pos_weight_used": artifact.classifier.pos_weight,
    });
    Ok(rec)
}

pub fn encode(a: &EncodeArgs) -> Result<RunRecord, CliError> {
    let mut rec = RunRecord::for_file(&a.out);
    let (model, _) = load_mieo_checked(&a.model, &mut rec)?;
    let ds = load_data(&a.data, &model.schema, &mut rec)?;
    let emb = model.encode_dataset(&ds)?;
    let width = emb.cols().to_string().len().max(2);
    let schema = FeatureSchema::new(
        (0..emb.cols())
            .map(|k| Column::continuous(format!("e{k:0width$}")))
            .collect(),
    )?;
    let values = emb.to_rows().into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
    let out = TabularDataset::new(schema, values, ds.labels().to_vec())?;
    write_csv(&a.out, &out, &mut rec)?;
    println!("{} rows x {} embedding dims -> {}", out.n_rows(), out.n_cols(), a.out.display());
    rec.resolved = serde_json::json!({ "embedding_dim": emb.cols() });
    Ok(rec)
}

pub fn impute(a: &ImputeArgs) -> Result<RunRecord, CliError> {
    let mut rec = RunRecord::for_file(&a.out);
    let (model, _) = load_mieo_checked(&a.model, &mut rec)?;
    let ds = load_data(&a.data, &model.schema, &mut rec)?;
    let imp = model.impute_dataset(&ds)?;
    let (schema, rows) = if a.soft {
        let cols = model.schema.columns().iter().map(|c| Column::continuous(c.name.clone())).collect();
        (FeatureSchema::new(cols)?, imp.soft)
    } else {
        (model.schema.clone(), imp.hard)
    };
    let values = rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
    let out = TabularDataset::new(schema, values, ds.labels().to_vec())?;
    write_csv(&a.out, &out, &mut rec)?;
    let filled = ds.rows().iter().flatten().filter(|c| c.is_none()).count();
    println!("filled {filled} cells -> {}", a.out.display());
    rec.resolved = serde_json::json!({ "soft": a.soft });
    Ok(rec)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<RunRecord, CliError> {
    let mut rec = RunRecord::for_file(&a.report);
    let text = String::from_utf8(read_file(&a.clf)?).map_err(|_| mieo::Error::ModelFormat("classifier file is not UTF-8".into()))?;
    rec.input(&a.clf);
    let artifact = model_file::classifier_from_json(&text)?;
    let mieo = match &a.mieo_model {
        Some(p) => {
            let (m, digest) = load_mieo_checked(p, &mut rec)?;
            if let Some(expected) = &artifact.encoder_sha256 {
                if *expected != digest {
                    return Err(mieo::Error::Validation(format!(
                        "{} is not the encoder this classifier was trained on",
                        p.display()
                    ))
                    .into());
                }
            }
            Some(m)
        }
        None => None,
    };
    let pipeline = mieo::search::Pipeline {
        features: artifact.feature_map(mieo)?,
        classifier: artifact.classifier.clone(),
    };
    let test = pipeline.evaluate(&load_data(&a.data, &artifact.schema, &mut rec)?)?;
    let validation = match &a.validation {
        Some(p) => Some(pipeline.evaluate(&load_data(p, &artifact.schema, &mut rec)?)?),
        None => None,
    };
    let mut blocks = Vec::new();
    if let Some(v) = &validation {
        blocks.push(("validation", v));
    }
    blocks.push(("test", &test));
    let r = report(&blocks, None);
    print!("{}", r.table);
    write_json(&a.report, &r, &mut rec)?;
    rec.resolved = serde_json::json!({ "input_mode": artifact.classifier.input_mode });
    Ok(rec)
}

#[derive(Serialize)]
struct Timing {
    index: usize,
    wall_time_secs: f64,
}

pub fn grid_search(a: &GridSearchArgs) -> Result<RunRecord, CliError> {
    let mut rec = RunRecord::in_dir(&a.out_dir);
    let schema = load_schema(&a.schema, &a.data, &mut rec)?;
    let ds = load_data(&a.data, &schema, &mut rec)?;
    let mut s = split(&ds, a.seed)?;
    if let Some(p) = &a.unlabelled {
        let extra = load_data(p, &schema, &mut rec)?;
        let stripped = extra.clone().with_labels(vec![Label::Unlabelled; extra.n_rows()])?;
        s.unlabelled = s.unlabelled.concat(&stripped)?;
    }
    rec.input(&a.mieo_grid);
    rec.input(&a.clf_grid);
    let mieo_grid: MieoGrid = read_json(&a.mieo_grid)?;
    let clf_grid: ClfGrid = read_json(&a.clf_grid)?;
    let mieo_configs = mieo_grid.expand()?;
    let clf_configs = clf_grid.expand()?;
    let options = SearchOptions {
        seed: a.seed,
        max_trials: a.max_trials,
    };
    let outcome = deferred_select(&mieo_configs, &clf_configs, s.selection(), options)?;
    create_dir(&a.out_dir)?;
    write_json(&a.out_dir.join("trials.json"), &outcome.trials, &mut rec)?;
    let timings: Vec<Timing> = outcome
        .trials
        .iter()
        .map(|t| Timing {
            index: t.index,
            wall_time_secs: t.wall_time_secs,
        })
        .collect();
    let timings_path = a.out_dir.join("timings.json");
    write_file(&timings_path, &to_json(&timings)?)?;
    rec.unstable_outputs.push(timings_path);
    rec.seed = Some(a.seed);
    rec.resolved = serde_json::json!({
        "mieo_grid": mieo_grid,
        "clf_grid": clf_grid,
        "options": options,
        "split": { "train": s.train.n_rows(), "validation": s.validation.n_rows(), "test": s.test.n_rows(), "unlabelled": s.unlabelled.n_rows() },
    });
    let (Some(best), Some(best_trial)) = (&outcome.best, outcome.best_trial()) else {
        return Err(CliError::Core(mieo::Error::NonFinite {
            epoch: 0,
            detail: format!("all {} trials failed", outcome.trials.len()),
        }));
    };
    let mieo_model = best.mieo().expect("searched pipelines use MIEO features");
    let mieo_text = model_file::mieo_to_json(mieo_model)?;
    let mieo_path = a.out_dir.join("best_mieo.model");
    write_file(&mieo_path, mieo_text.as_bytes())?;
    rec.outputs.push(mieo_path);
    let artifact = ClassifierArtifact::new(best.classifier.clone(), &best.features, Some(sha256_hex(mieo_text.as_bytes())));
    let clf_path = a.out_dir.join("best_clf.model");
    write_file(&clf_path, model_file::classifier_to_json(&artifact)?.as_bytes())?;
    rec.outputs.push(clf_path);
    let validation = best_trial.validation().expect("best trial completed").clone();
    let test = final_evaluate(best, &s.test)?;
    let r = report(&[("validation", &validation), ("test", &test)], Some(best_trial.index));
    print!("{}", r.table);
    write_json(&a.out_dir.join("report.json"), &r, &mut rec)?;
    let failed = outcome.trials.iter().filter(|t| !t.is_completed()).count();
    println!(
        "{} trials ({failed} failed); selected trial {} -> {}",
        outcome.trials.len(),
        best_trial.index,
        a.out_dir.display()
    );
    Ok(rec)
}
