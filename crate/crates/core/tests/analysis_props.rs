use ntd_core::analysis::{assign_communities, score_recovery, task_importance};
use ntd_core::attribution::HiddenUnit;
use ntd_core::matrix::Mat;
use ntd_core::nmf::{Decomposition, NmfConfig};
use proptest::prelude::*;

fn dec_with(t: Mat, u: Mat) -> Decomposition {
    Decomposition {
        config: NmfConfig::with_rank(t.cols()),
        t,
        u,
        objective_trace: vec![],
        v_hash: String::new(),
    }
}

fn units(n: usize) -> Vec<HiddenUnit> {
    (0..n).map(|unit| HiddenUnit { layer: 1, unit }).collect()
}

fn one_hot(labels: &[usize], c0: usize) -> Mat {
    Mat::from_fn(labels.len(), c0, |k, c| f64::from(labels[k] == c))
}

fn nonneg(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(0.0f64..10.0, rows * cols)
        .prop_map(move |d| Mat::from_vec(rows, cols, d).unwrap())
}

/// A permutation of 0..n from a sortable key vector.
fn perm(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn purity_ignores_relabeling(
        labels in prop::collection::vec(0usize..3, 6..30),
        truth_seed in prop::collection::vec(0usize..3, 30),
        relabel in perm(3),
        retruth in perm(3),
    ) {
        let n = labels.len();
        let truth: Vec<Option<usize>> = truth_seed[..n].iter().map(|&b| Some(b)).collect();
        let u = Mat::filled(3, 3, 1.0);
        let cols = [0, 1, 2];
        let score = |labels: &[usize], truth: &[Option<usize>]| {
            let a = assign_communities(&dec_with(one_hot(labels, 3), u.clone()), &units(n)).unwrap();
            score_recovery(&a, truth, 3, &u, &cols).unwrap().purity
        };
        let base = score(&labels, &truth);
        let moved: Vec<usize> = labels.iter().map(|&l| relabel[l]).collect();
        let truth2: Vec<Option<usize>> = truth.iter().map(|b| b.map(|b| retruth[b])).collect();
        prop_assert_eq!(score(&moved, &truth), base);
        prop_assert_eq!(score(&labels, &truth2), base);
        prop_assert!((1.0 / 3.0..=1.0).contains(&base));
    }

    #[test]
    fn argmax_survives_uniform_row_scaling(t in nonneg(8, 4), scales in prop::collection::vec(1e-3f64..1e3, 8)) {
        let a = assign_communities(&dec_with(t.clone(), Mat::zeros(4, 2)), &units(8)).unwrap();
        let scaled = Mat::from_fn(8, 4, |k, c| t[(k, c)] * scales[k]);
        let b = assign_communities(&dec_with(scaled, Mat::zeros(4, 2)), &units(8)).unwrap();
        prop_assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn importance_matches_double_loop(t in nonneg(7, 3), u in nonneg(3, 9), input_width in 0usize..=9) {
        let imp = task_importance(&dec_with(t.clone(), u.clone()), input_width).unwrap();
        prop_assert_eq!(imp.len(), 3);
        for w in imp.windows(2) {
            prop_assert!(w[0].importance >= w[1].importance);
        }
        for ti in &imp {
            let mut acc = 0.0;
            for k in 0..7 {
                for l in input_width..9 {
                    acc += t[(k, ti.task)] * u[(ti.task, l)];
                }
            }
            prop_assert!((ti.importance - acc).abs() <= 1e-9 * acc.max(1.0));
        }
    }

    #[test]
    fn duplicating_a_task_column_doubles_importance(t in nonneg(5, 2), u in nonneg(2, 4)) {
        let base = task_importance(&dec_with(t.clone(), u.clone()), 2).unwrap();
        let doubled = Mat::from_fn(5, 2, |k, c| if c == 0 { 2.0 * t[(k, 0)] } else { t[(k, c)] });
        let after = task_importance(&dec_with(doubled, u), 2).unwrap();
        let of = |v: &[ntd_core::analysis::TaskImportance], c| v.iter().find(|x| x.task == c).unwrap().importance;
        prop_assert!((of(&after, 0) - 2.0 * of(&base, 0)).abs() <= 1e-12 * of(&base, 0).max(1.0));
        prop_assert_eq!(of(&after, 1), of(&base, 1));
    }

    #[test]
    fn concentrations_lie_in_unit_interval(t in nonneg(6, 3), u in nonneg(3, 6), truth in prop::collection::vec(0usize..3, 6)) {
        let a = assign_communities(&dec_with(t, u.clone()), &units(6)).unwrap();
        let truth: Vec<Option<usize>> = truth.into_iter().map(Some).collect();
        let s = score_recovery(&a, &truth, 3, &u, &[0, 1, 2, 0, 1, 2]).unwrap();
        prop_assert!(s.concentrations.iter().all(|c| (0.0..=1.0).contains(c)));
        prop_assert!((0.0..=1.0).contains(&s.purity));
    }
}
