//! Binary classification report in the usual precision/recall/F1/support layout.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with class 1 as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same matrix with class 0 treated as positive.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

fn check_binary(values: &[u8], what: &str) -> Result<()> {
    match values.iter().position(|&v| v > 1) {
        Some(i) => Err(Error::Validation(format!("{what}[{i}] = {} is not 0 or 1", values[i]))),
        None => Ok(()),
    }
}

pub fn confusion_matrix(predictions: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    check_binary(predictions, "predictions")?;
    check_binary(labels, "labels")?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(labels) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// Which metrics hit a zero denominator and were reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl UndefinedFlags {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub undefined: UndefinedFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionCounts,
    /// Index 0 and 1 are the two classes.
    pub classes: [ClassMetrics; 2],
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub balanced_accuracy: f64,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Metrics for the positive class of `c`.
fn class_metrics(c: &ConfusionCounts) -> ClassMetrics {
    let (precision, p_undef) = ratio(c.tp, c.tp + c.fp);
    let (recall, r_undef) = ratio(c.tp, c.tp + c.fn_);
    let (f1, f_undef) = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), false)
    } else {
        (0.0, true)
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support: c.tp + c.fn_,
        undefined: UndefinedFlags {
            precision: p_undef,
            recall: r_undef,
            f1: f_undef,
        },
    }
}

impl MetricsReport {
    pub fn from_counts(c: ConfusionCounts) -> Result<Self> {
        let n = c.total();
        if n == 0 {
            return Err(Error::Validation("cannot report on zero rows".into()));
        }
        let classes = [class_metrics(&c.swapped()), class_metrics(&c)];
        let avg = |f: fn(&ClassMetrics) -> f64| (f(&classes[0]) + f(&classes[1])) / 2.0;
        let wavg = |f: fn(&ClassMetrics) -> f64| {
            (f(&classes[0]) * classes[0].support as f64 + f(&classes[1]) * classes[1].support as f64) / n as f64
        };
        let macro_avg = Averages {
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
        };
        Ok(MetricsReport {
            confusion: c,
            classes,
            accuracy: (c.tp + c.tn) as f64 / n as f64,
            balanced_accuracy: macro_avg.recall,
            macro_avg,
            weighted_avg: Averages {
                precision: wavg(|m| m.precision),
                recall: wavg(|m| m.recall),
                f1: wavg(|m| m.f1),
            },
        })
    }

    pub fn support(&self) -> usize {
        self.confusion.total()
    }
}

pub fn classification_report(predictions: &[u8], labels: &[u8]) -> Result<MetricsReport> {
    MetricsReport::from_counts(confusion_matrix(predictions, labels)?)
}

/// A report as a text table, three decimals, one block per named dataset.
pub fn format_table(blocks: &[(&str, &MetricsReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22}{:>10}{:>10}{:>10}{:>10}", "", "precision", "recall", "f1-score", "support");
    for (name, r) in blocks {
        let _ = writeln!(out, "{name}");
        for (k, m) in r.classes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<22}{:>10.3}{:>10.3}{:>10.3}{:>10}",
                format!("  {k}"),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let n = r.support();
        let _ = writeln!(out, "{:<22}{:>10}{:>10}{:>10.3}{:>10}", "  accuracy", "", "", r.accuracy, n);
        for (label, a) in [("  macro avg", &r.macro_avg), ("  weighted avg", &r.weighted_avg)] {
            let _ = writeln!(out, "{label:<22}{:>10.3}{:>10.3}{:>10.3}{n:>10}", a.precision, a.recall, a.f1);
        }
        let _ = writeln!(out, "{:<22}{:>10}{:>10.3}{:>10}{n:>10}", "  balanced accuracy", "", r.balanced_accuracy, "");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_confusion_examples() {
        let c = confusion_matrix(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (2, 1, 0, 0));
        let c = confusion_matrix(&[0, 0, 0], &[1, 1, 0]).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (0, 1, 0, 2));
        assert!(confusion_matrix(&[0, 1], &[1]).is_err());
        assert!(confusion_matrix(&[2], &[1]).is_err());
    }

    #[test]
    fn perfect_predictions() {
        let r = classification_report(&[1, 0, 0, 1], &[1, 0, 0, 1]).unwrap();
        for m in &r.classes {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.balanced_accuracy, 1.0);
        assert_eq!(r.weighted_avg.f1, 1.0);
    }

    #[test]
    fn single_class_flags_undefined() {
        let r = classification_report(&[0, 0, 0], &[0, 0, 0]).unwrap();
        assert!(r.classes[1].undefined.precision && r.classes[1].undefined.recall);
        assert_eq!(r.classes[1].recall, 0.0);
        assert!(!r.classes[0].undefined.any());
        assert!(classification_report(&[], &[]).is_err());
    }

    #[test]
    fn table_has_both_blocks() {
        let r = classification_report(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
        let t = format_table(&[("Validation dataset", &r), ("Test dataset", &r)]);
        assert!(t.contains("Validation dataset") && t.contains("Test dataset"));
        assert!(t.contains("0.500"));
        assert_eq!(t.matches("weighted avg").count(), 2);
    }
}
