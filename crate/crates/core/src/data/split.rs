use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Label, TabularDataset};
use crate::error::{Error, Result};

/// Share of labelled rows held out for the final test.
pub const TEST_FRACTION: f64 = 0.2;
/// Share of the remaining development rows used for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Train / validation / test partition of the labelled rows, plus every
/// unlabelled row as a separate self-supervised pool.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSplits {
    pub train: TabularDataset,
    pub validation: TabularDataset,
    pub test: TabularDataset,
    pub unlabelled: TabularDataset,
}

/// Everything model selection may look at. The test split is not reachable from here.
#[derive(Clone, Copy, Debug)]
pub struct SelectionData<'a> {
    pub train: &'a TabularDataset,
    pub validation: &'a TabularDataset,
    pub unlabelled: &'a TabularDataset,
}

impl DataSplits {
    pub fn selection(&self) -> SelectionData<'_> {
        SelectionData {
            train: &self.train,
            validation: &self.validation,
            unlabelled: &self.unlabelled,
        }
    }
}

/// Largest-remainder allocation of `total` rows across strata of the given sizes.
fn allocate(total: usize, strata: &[usize]) -> Vec<usize> {
    let n: usize = strata.iter().sum();
    if n == 0 {
        return vec![0; strata.len()];
    }
    let mut out: Vec<usize> = strata.iter().map(|&s| total * s / n).collect();
    let mut order: Vec<usize> = (0..strata.len()).collect();
    // Larger remainder first; earlier stratum wins ties.
    order.sort_by_key(|&k| std::cmp::Reverse(total * strata[k] % n));
    let assigned: usize = out.iter().sum();
    for &k in order.iter().take(total - assigned) {
        out[k] += 1;
    }
    out
}

/// Stratified 64/16/20 split of labelled rows, deterministic in `seed`.
pub fn split(ds: &TabularDataset, seed: u64) -> Result<DataSplits> {
    let strata_labels = [Label::Negative, Label::Positive];
    let mut strata: Vec<Vec<usize>> = strata_labels
        .iter()
        .map(|&l| (0..ds.n_rows()).filter(|&i| ds.label(i) == l).collect())
        .collect();
    for (label, rows) in strata_labels.iter().zip(&strata) {
        if rows.is_empty() {
            return Err(Error::Stratification(format!(
                "no labelled rows of class {:?}",
                label.class().unwrap()
            )));
        }
    }
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let n: usize = sizes.iter().sum();
    let n_test = (n as f64 * TEST_FRACTION).round() as usize;
    let n_val = ((n - n_test) as f64 * VALIDATION_FRACTION).round() as usize;
    let test_alloc = allocate(n_test, &sizes);
    let val_alloc = allocate(n_val, &sizes);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (k, rows) in strata.iter_mut().enumerate() {
        rows.shuffle(&mut rng);
        let (t, rest) = rows.split_at(test_alloc[k]);
        let (v, tr) = rest.split_at(val_alloc[k].min(rest.len()));
        test.extend_from_slice(t);
        val.extend_from_slice(v);
        train.extend_from_slice(tr);
    }
    for part in [&mut train, &mut val, &mut test] {
        part.sort_unstable();
    }
    let unlabelled: Vec<usize> = (0..ds.n_rows()).filter(|&i| !ds.label(i).is_labelled()).collect();
    Ok(DataSplits {
        train: ds.subset(&train),
        validation: ds.subset(&val),
        test: ds.subset(&test),
        unlabelled: ds.subset(&unlabelled),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, FeatureSchema};
    use proptest::prelude::*;

    fn labelled(n_neg: usize, n_pos: usize, n_unl: usize) -> TabularDataset {
        let schema = FeatureSchema::new(vec![Column::continuous("id")]).unwrap();
        let total = n_neg + n_pos + n_unl;
        let values = (0..total).map(|i| vec![Some(i as f64)]).collect();
        let labels = (0..total)
            .map(|i| {
                if i < n_neg {
                    Label::Negative
                } else if i < n_neg + n_pos {
                    Label::Positive
                } else {
                    Label::Unlabelled
                }
            })
            .collect();
        TabularDataset::new(schema, values, labels).unwrap()
    }

    fn ids(ds: &TabularDataset) -> Vec<usize> {
        ds.rows().iter().map(|r| r[0].unwrap() as usize).collect()
    }

    #[test]
    fn ratio_arithmetic() {
        let s = split(&labelled(80, 20, 0), 1).unwrap();
        assert_eq!(s.test.count_label(Label::Negative), 16);
        assert_eq!(s.test.count_label(Label::Positive), 4);
        assert_eq!(s.validation.n_rows(), 16);
        assert_eq!(s.train.n_rows(), 64);
    }

    #[test]
    fn full_sized_split() {
        let s = split(&labelled(2900, 869, 4296), 3).unwrap();
        assert_eq!(s.test.n_rows(), 754);
        assert_eq!(s.validation.n_rows(), 603);
        assert_eq!(s.train.n_rows(), 3769 - 754 - 603);
        assert_eq!(s.unlabelled.n_rows(), 4296);
    }

    #[test]
    fn deterministic() {
        let ds = labelled(50, 30, 5);
        assert_eq!(split(&ds, 7).unwrap(), split(&ds, 7).unwrap());
        assert_ne!(ids(&split(&ds, 7).unwrap().test), ids(&split(&ds, 8).unwrap().test));
    }

    #[test]
    fn missing_class_is_an_error() {
        assert!(matches!(split(&labelled(10, 0, 3), 0), Err(Error::Stratification(_))));
    }

    proptest! {
        #[test]
        fn partition_is_exact_and_stratified(n_neg in 1usize..300, n_pos in 1usize..120, n_unl in 0usize..20, seed in 0u64..1000) {
            let ds = labelled(n_neg, n_pos, n_unl);
            let s = split(&ds, seed).unwrap();
            let mut all: Vec<usize> = [&s.train, &s.validation, &s.test].iter().flat_map(|p| ids(p)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n_neg + n_pos).collect::<Vec<_>>());
            prop_assert_eq!(ids(&s.unlabelled), (n_neg + n_pos..n_neg + n_pos + n_unl).collect::<Vec<_>>());
            let n = (n_neg + n_pos) as f64;
            for part in [&s.train, &s.validation, &s.test] {
                let share = part.n_rows() as f64 / n;
                for (label, size) in [(Label::Negative, n_neg), (Label::Positive, n_pos)] {
                    let got = part.count_label(label) as f64;
                    prop_assert!((got - share * size as f64).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
