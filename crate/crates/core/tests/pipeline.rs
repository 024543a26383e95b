use ntd_core::analysis::{
    assign_communities, connectivity_blocks, score_recovery, task_importance,
};
use ntd_core::attribution::{build_feature_matrix, FeatureMatrix};
use ntd_core::datasets::{gen_synthetic, SyntheticSpec};
use ntd_core::lnn::{init_params, train, TrainConfig, NEAR_ZERO_WEIGHT};
use ntd_core::nmf::{factorize, reconstruction_error, NmfConfig};

#[test]
fn default_training_lowers_error() {
    let spec = SyntheticSpec::default();
    let p = gen_synthetic(&spec).unwrap();
    let init = init_params(&spec.layer_sizes(), 100, 0.5, 0.5).unwrap();
    let (net, report) = train(&init, &p.train, &TrainConfig::default(), Some(&p.test)).unwrap();
    assert_eq!(report.epoch_errors.len(), 200);
    assert!(report.epoch_errors.iter().all(|e| e.is_finite()));
    assert!(*report.epoch_errors.last().unwrap() < report.initial_error);
    assert!(report.test_error.unwrap().is_finite());
    assert_eq!(
        report.near_zero_weights,
        net.near_zero_weights(NEAR_ZERO_WEIGHT)
    );
    assert!(
        report.near_zero_weights > 0,
        "L1 should drive some weights to zero"
    );
}

#[test]
fn small_pipeline_is_consistent() {
    let spec = SyntheticSpec {
        n_train: 400,
        n_test: 100,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let p = gen_synthetic(&spec).unwrap();
    let init = init_params(&spec.layer_sizes(), 5, 0.5, 0.5).unwrap();
    let config = TrainConfig {
        epochs: 40,
        seed: 3,
        ..TrainConfig::default()
    };
    let (net, _) = train(&init, &p.train, &config, None).unwrap();

    let fm = build_feature_matrix(&net, &p.train).unwrap();
    assert_eq!(fm.v.shape(), (90, 30));
    let round = FeatureMatrix::from_csv(&fm.to_csv().unwrap(), &fm.sidecar()).unwrap();
    assert_eq!(round, fm);

    let nmf = NmfConfig {
        a0: 300,
        seed: 3,
        ..NmfConfig::with_rank(3)
    };
    let dec = factorize(&fm.v, &nmf).unwrap();
    assert_eq!(dec.objective_trace.len(), 300);
    let err = reconstruction_error(&fm.v, &dec).unwrap();
    assert!(err < 1.0, "relative reconstruction error {err}");

    let assignment = assign_communities(&dec, &fm.unit_index).unwrap();
    let labels = connectivity_blocks(&net, &p.truth, NEAR_ZERO_WEIGHT).unwrap();
    let score = score_recovery(&assignment, &labels, 3, &dec.u, &p.truth.column_labels()).unwrap();
    assert!((0.0..=1.0).contains(&score.purity));
    assert_eq!(score.concentrations.len(), 3);
    assert_eq!(task_importance(&dec, fm.input_width).unwrap().len(), 3);
}

#[test]
fn one_task_gives_one_row() {
    let spec = SyntheticSpec {
        n_train: 50,
        n_test: 10,
        ..SyntheticSpec::default()
    };
    let p = gen_synthetic(&spec).unwrap();
    let fm = build_feature_matrix(&p.teacher, &p.train).unwrap();
    let dec = factorize(
        &fm.v,
        &NmfConfig {
            a0: 50,
            ..NmfConfig::with_rank(1)
        },
    )
    .unwrap();
    assert_eq!(dec.u.rows(), 1);
    assert_eq!(dec.t.shape(), (90, 1));
}

#[test]
fn trained_units_carry_most_mass_on_their_block() {
    let spec = SyntheticSpec {
        seed: 1,
        ..SyntheticSpec::default()
    };
    let p = gen_synthetic(&spec).unwrap();
    let init = init_params(&spec.layer_sizes(), 101, 0.5, 0.5).unwrap();
    let config = TrainConfig {
        seed: 1,
        ..TrainConfig::default()
    };
    let (net, _) = train(&init, &p.train, &config, None).unwrap();
    let fm = build_feature_matrix(&net, &p.train).unwrap();
    let labels = connectivity_blocks(&net, &p.truth, NEAR_ZERO_WEIGHT).unwrap();
    let columns = p.truth.column_labels();
    let mut checked = 0;
    for (k, label) in labels.iter().enumerate() {
        let Some(b) = *label else { continue };
        let mut mass = vec![0.0; p.truth.blocks];
        for (l, &col_block) in columns.iter().enumerate() {
            mass[col_block] += fm.v[(k, l)];
        }
        for (other, &m) in mass.iter().enumerate() {
            if other != b {
                assert!(mass[b] > m, "unit {k} of block {b}: masses {mass:?}");
            }
        }
        checked += 1;
    }
    assert!(checked >= 30, "only {checked} units serve a block");
}
