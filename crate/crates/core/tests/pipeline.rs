use mieo::classifier::{build_classifier, train_classifier, ClassifierConfig, FeatureMap, InputMode};
use mieo::data::split;
use mieo::mieo::{fit_mieo, MieoConfig};
use mieo::model_file::{classifier_from_json, classifier_to_json, mieo_from_json, mieo_to_json, ClassifierArtifact};
use mieo::synth::{generate, SynthSpec};

fn small() -> mieo::data::DataSplits {
    let data = generate(&SynthSpec::paper_like(1200), 11).unwrap();
    split(&data.masked, 2).unwrap()
}

fn quick() -> MieoConfig {
    MieoConfig {
        embedding_dim: 8,
        epochs: 3,
        seed: 5,
        ..MieoConfig::default()
    }
}

#[test]
fn mieo_training_is_deterministic() {
    let s = small();
    let (a, ha) = fit_mieo(&quick(), &s.train, &s.unlabelled, Some(&s.validation)).unwrap();
    let (b, hb) = fit_mieo(&quick(), &s.train, &s.unlabelled, Some(&s.validation)).unwrap();
    assert_eq!(mieo_to_json(&a).unwrap(), mieo_to_json(&b).unwrap());
    assert_eq!(ha, hb);
    assert_eq!(ha.epochs.len(), 4);
    let first = ha.epochs[0].validation.unwrap().total;
    let last = ha.last().unwrap().validation.unwrap().total;
    assert!(last < first, "validation loss went from {first} to {last}");
}

#[test]
fn continuous_weight_zero_ablation_trains() {
    let s = small();
    let cfg = MieoConfig { w_cont: 0.0, ..quick() };
    let (model, history) = fit_mieo(&cfg, &s.train, &s.unlabelled, Some(&s.validation)).unwrap();
    let last = history.last().unwrap().validation.unwrap();
    assert_eq!(last.total, last.bce_part);
    assert!(last.total.is_finite());
    let emb = model.encode_dataset(&s.test).unwrap();
    assert_eq!(emb.shape(), (s.test.n_rows(), 8));
    assert!(emb.as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn imputation_keeps_observed_cells() {
    let s = small();
    let (model, _) = fit_mieo(&quick(), &s.train, &s.unlabelled, None).unwrap();
    let imp = model.impute_dataset(&s.test).unwrap();
    for (row, filled) in s.test.rows().iter().zip(&imp.hard) {
        for (cell, &v) in row.iter().zip(filled) {
            if let Some(x) = cell {
                assert_eq!(*x, v);
            }
            assert!(v.is_finite());
        }
    }
}

#[test]
fn embedding_classifier_round_trips_through_json() {
    let s = small();
    let (model, _) = fit_mieo(&quick(), &s.train, &s.unlabelled, None).unwrap();
    let features = FeatureMap::Mieo(Box::new(model.clone()));
    let train = features.labelled(&s.train).unwrap();
    let cfg = ClassifierConfig { epochs: 3, hidden_widths: vec![16, 8, 4], ..ClassifierConfig::default() };
    let mut clf = build_classifier(&cfg, InputMode::Embedding, features.output_dim(), 1).unwrap();
    train_classifier(&mut clf, &train, None).unwrap();
    let test = features.labelled(&s.test).unwrap();
    let before = clf.evaluate(&test.x, &test.y).unwrap();

    let art = ClassifierArtifact::new(clf, &features, None);
    let text = classifier_to_json(&art).unwrap();
    let back = classifier_from_json(&text).unwrap();
    let restored = back.feature_map(Some(mieo_from_json(&mieo_to_json(&model).unwrap()).unwrap())).unwrap();
    let test2 = restored.labelled(&s.test).unwrap();
    assert_eq!(test.x, test2.x);
    assert_eq!(back.classifier.evaluate(&test2.x, &test2.y).unwrap(), before);
    assert_eq!(classifier_to_json(&back).unwrap(), text);
}
