use mieo::data::FeatureKind;
use mieo::mieo::{mieo_loss, MaskedRows};
use mieo::nn::Matrix;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    kinds: Vec<FeatureKind>,
    n: usize,
    out: Vec<f64>,
    target: Vec<f64>,
    observed: Vec<bool>,
    noise: Vec<f64>,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..10, 1usize..6).prop_flat_map(|(f, n)| {
        (
            prop::collection::vec(any::<bool>(), f),
            prop::collection::vec(0.001f64..0.999, n * f),
            prop::collection::vec(-3.0f64..3.0, n * f),
            prop::collection::vec(any::<bool>(), n * f),
            prop::collection::vec(-5.0f64..5.0, n * f),
        )
            .prop_map(move |(bin, out, t, observed, noise)| {
                let kinds: Vec<FeatureKind> = bin
                    .iter()
                    .map(|&b| if b { FeatureKind::Binary } else { FeatureKind::Continuous })
                    .collect();
                let target = t
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| match kinds[k % f] {
                        FeatureKind::Binary => f64::from(v > 0.0),
                        FeatureKind::Continuous => v,
                    })
                    .collect();
                Case { kinds, n, out, target, observed, noise }
            })
    })
}

fn rows(c: &Case, values: Vec<f64>) -> MaskedRows {
    MaskedRows {
        values: Matrix::new(c.n, c.kinds.len(), values).unwrap(),
        observed: c.observed.clone(),
    }
}

proptest! {
    #[test]
    fn unobserved_entries_do_not_matter(c in case()) {
        let out = Matrix::new(c.n, c.kinds.len(), c.out.clone()).unwrap();
        let base = mieo_loss(&out, &rows(&c, c.target.clone()), &c.kinds, 1.3, 0.7).unwrap();

        let mut out2 = c.out.clone();
        let mut target2 = c.target.clone();
        for k in 0..out2.len() {
            if !c.observed[k] {
                out2[k] = (c.noise[k].abs() / 5.0).clamp(0.01, 0.99);
                target2[k] = c.noise[k];
            }
        }
        let out2 = Matrix::new(c.n, c.kinds.len(), out2).unwrap();
        let moved = mieo_loss(&out2, &rows(&c, target2), &c.kinds, 1.3, 0.7).unwrap();
        prop_assert_eq!(base.breakdown.total, moved.breakdown.total);
        prop_assert_eq!(base.grad, moved.grad);
    }

    #[test]
    fn gradient_is_zero_off_the_mask(c in case()) {
        let out = Matrix::new(c.n, c.kinds.len(), c.out.clone()).unwrap();
        let l = mieo_loss(&out, &rows(&c, c.target.clone()), &c.kinds, 1.0, 1.0).unwrap();
        for (k, &g) in l.grad.as_slice().iter().enumerate() {
            if !c.observed[k] {
                prop_assert_eq!(g, 0.0);
            }
        }
    }

    #[test]
    fn total_is_linear_in_the_weights(c in case(), wb in 0.0f64..4.0, wc in 0.0f64..4.0) {
        let out = Matrix::new(c.n, c.kinds.len(), c.out.clone()).unwrap();
        let target = rows(&c, c.target.clone());
        let l = mieo_loss(&out, &target, &c.kinds, wb, wc).unwrap().breakdown;
        prop_assert_eq!(l.total, wb * l.bce_part + wc * l.mse_part);
        let unit = mieo_loss(&out, &target, &c.kinds, 1.0, 1.0).unwrap().breakdown;
        prop_assert_eq!(unit.bce_part, l.bce_part);
        prop_assert_eq!(unit.mse_part, l.mse_part);
    }

    #[test]
    fn parts_are_nonnegative(c in case()) {
        let out = Matrix::new(c.n, c.kinds.len(), c.out.clone()).unwrap();
        let l = mieo_loss(&out, &rows(&c, c.target.clone()), &c.kinds, 1.0, 1.0).unwrap().breakdown;
        prop_assert!(l.bce_part >= 0.0 && l.mse_part >= 0.0);
        let n_obs = c.observed.iter().filter(|&&o| o).count();
        prop_assert_eq!(l.n_bin_observed + l.n_cont_observed, n_obs);
    }
}

#[test]
fn fully_masked_batch_has_zero_loss() {
    let kinds = [FeatureKind::Binary, FeatureKind::Continuous];
    let out = Matrix::new(1, 2, vec![0.3, 1.5]).unwrap();
    let target = MaskedRows {
        values: Matrix::new(1, 2, vec![1.0, -2.0]).unwrap(),
        observed: vec![false, false],
    };
    let l = mieo_loss(&out, &target, &kinds, 1.0, 1.0).unwrap();
    assert_eq!(l.breakdown.total, 0.0);
    assert!(l.grad.as_slice().iter().all(|&g| g == 0.0));
}
