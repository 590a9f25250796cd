//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and run natively too, so they are tested without a browser.

use mieo::classifier::weighted_bce;
use mieo::data::{FeatureKind, TabularDataset};
use mieo::metrics::{format_table, ConfusionCounts, MetricsReport};
use mieo::mieo::{fit_mieo, MieoConfig};
use mieo::synth::{generate, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub fn metrics_json(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Value, String> {
    let report = MetricsReport::from_counts(ConfusionCounts { tp, fp, tn, fn_ }).map_err(|e| e.to_string())?;
    Ok(json!({
        "table": format_table(&[("counts", &report)]),
        "report": report,
    }))
}

/// Weighted BCE of each class over a grid of predicted probabilities.
pub fn bce_curve_json(pos_weight: f64, points: usize) -> Result<Value, String> {
    if !(pos_weight.is_finite() && pos_weight > 0.0) {
        return Err(format!("pos_weight must be positive, got {pos_weight}"));
    }
    if !(2..=10_000).contains(&points) {
        return Err(format!("points must be in 2..=10000, got {points}"));
    }
    let p: Vec<f64> = (0..points).map(|i| (i as f64 + 0.5) / points as f64).collect();
    Ok(json!({
        "p": p,
        "positive": p.iter().map(|&q| weighted_bce(q, 1.0, pos_weight)).collect::<Vec<_>>(),
        "negative": p.iter().map(|&q| weighted_bce(q, 0.0, 1.0)).collect::<Vec<_>>(),
    }))
}

/// Trains a small MIEO on synthetic rows, hides `hide_rate` of the observed
/// cells, and scores its imputations against column means and majorities.
pub fn impute_demo_json(rows: usize, embedding_dim: usize, epochs: usize, hide_rate: f64, seed: u64) -> Result<Value, String> {
    if !(50..=5000).contains(&rows) {
        return Err(format!("rows must be in 50..=5000, got {rows}"));
    }
    if !(0.0..1.0).contains(&hide_rate) {
        return Err(format!("hide rate must be in [0, 1), got {hide_rate}"));
    }
    let err = |e: mieo::Error| e.to_string();
    let spec = SynthSpec::paper_like(rows);
    let data = generate(&spec, seed).map_err(err)?;
    let schema = spec.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut cells = data.masked.rows().to_vec();
    let mut held = Vec::new();
    for (i, row) in cells.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if cell.is_some() && rng.random::<f64>() < hide_rate {
                *cell = None;
                held.push((i, j));
            }
        }
    }
    let ds = TabularDataset::unlabelled(schema.clone(), cells).map_err(err)?;
    let cfg = MieoConfig {
        embedding_dim,
        epochs,
        seed,
        ..MieoConfig::default()
    };
    let (model, history) = fit_mieo(&cfg, &ds, &TabularDataset::empty(schema.clone()), None).map_err(err)?;
    let imp = model.impute_dataset(&ds).map_err(err)?;

    let f = schema.len();
    let mut mean = vec![0.0; f];
    let mut count = vec![0.0_f64; f];
    for row in ds.rows() {
        for (j, v) in row.iter().enumerate() {
            if let Some(v) = v {
                mean[j] += v;
                count[j] += 1.0;
            }
        }
    }
    for (m, c) in mean.iter_mut().zip(&count) {
        *m /= c.max(1.0);
    }
    let (mut se, mut se_mean, mut n_cont) = (0.0, 0.0, 0usize);
    let (mut hits, mut majority_hits, mut n_bin) = (0usize, 0usize, 0usize);
    for &(i, j) in &held {
        let truth = data.ground_truth.row(i)[j].unwrap_or(f64::NAN);
        match schema.kind(j) {
            FeatureKind::Continuous => {
                se += (imp.hard[i][j] - truth).powi(2);
                se_mean += (mean[j] - truth).powi(2);
                n_cont += 1;
            }
            FeatureKind::Binary => {
                let majority = if mean[j] >= 0.5 { 1.0 } else { 0.0 };
                hits += usize::from(imp.hard[i][j] == truth);
                majority_hits += usize::from(majority == truth);
                n_bin += 1;
            }
        }
    }
    let ratio = |a: f64, n: usize| if n == 0 { Value::Null } else { json!(a / n as f64) };
    let sample: Vec<Value> = (0..ds.n_rows().min(5))
        .map(|i| {
            json!({
                "observed": ds.row(i),
                "imputed": imp.hard[i],
                "truth": data.ground_truth.row(i),
            })
        })
        .collect();
    Ok(json!({
        "columns": schema.columns().iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "train_loss": history.epochs.iter().map(|e| e.train.total).collect::<Vec<_>>(),
        "held_out_cells": held.len(),
        "continuous_mse": ratio(se, n_cont),
        "mean_baseline_mse": ratio(se_mean, n_cont),
        "binary_accuracy": ratio(hits as f64, n_bin),
        "majority_baseline_accuracy": ratio(majority_hits as f64, n_bin),
        "sample": sample,
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn metrics(tp: u32, fp: u32, tn: u32, fn_: u32) -> Result<String, JsError> {
    to_js(metrics_json(tp as usize, fp as usize, tn as usize, fn_ as usize))
}

#[wasm_bindgen]
pub fn bce_curve(pos_weight: f64, points: u32) -> Result<String, JsError> {
    to_js(bce_curve_json(pos_weight, points as usize))
}

#[wasm_bindgen]
pub fn impute_demo(rows: u32, embedding_dim: u32, epochs: u32, hide_rate: f64, seed: u32) -> Result<String, JsError> {
    to_js(impute_demo_json(rows as usize, embedding_dim as usize, epochs as usize, hide_rate, u64::from(seed)))
}
