use ndarray::array;
use proptest::prelude::*;
use trussgsm_core::experiments::{
    assert_disjoint, attach_deltas, emit_report, mae, median, parse_trial_spec, read_report_csv, run_trial,
    validation_size, write_report_csv, ModelKind, ReportRow, TargetSets, TrialId, TrialSpec,
};
use trussgsm_core::experiments::Profile;

fn tiny(trial: TrialId) -> TrialSpec {
    let mut spec = TrialSpec::preset(trial, Profile::Desk);
    spec.architecture = "L8/C8/L2".into();
    spec.heads = 2;
    spec.epochs = 2;
    spec.pretrain_epochs = 2;
    spec.source_size = 20;
    spec.target_sizes = vec![5, 8];
    spec.test_size = 10;
    spec.seeds = vec![0, 1];
    spec
}

#[test]
fn mae_against_hand_value() {
    let truth = array![[0.0, 0.01], [-0.02, 0.0]];
    let pred = array![[0.01, 0.01], [0.0, 0.0]];
    assert!((mae(&pred, &truth).unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(median(&[5.0, 1.0, 3.0, 2.0]), Some(2.5));
}

#[test]
fn deltas_recomputed_from_rows() {
    let mut rows = vec![
        ReportRow::new(TrialId::D, "dm7", 20, 0, ModelKind::Scratch, 2.0, 3.0),
        ReportRow::new(TrialId::D, "dm7", 20, 0, ModelKind::Transfer, 1.5, 3.0),
        ReportRow::new(TrialId::D, "dm7", 20, 1, ModelKind::Transfer, 1.0, 3.0),
    ];
    attach_deltas(&mut rows);
    assert_eq!(rows[0].delta_mae_pct, None);
    assert!((rows[1].delta_mae_pct.unwrap() + 25.0).abs() < 1e-12);
    assert_eq!(rows[2].delta_mae_pct, None);
    assert!(rows[1].beats_baseline);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn report_csv_round_trip(values in proptest::collection::vec((0.0..1e3f64, 0.0..1e3f64, 0usize..2000), 0..12)) {
        let mut rows: Vec<ReportRow> = values
            .iter()
            .enumerate()
            .flat_map(|(i, &(a, b, n))| {
                [
                    ReportRow::new(TrialId::E, "dm7_endloads", n, i as u64, ModelKind::Scratch, a, b),
                    ReportRow::new(TrialId::E, "dm7_endloads", n, i as u64, ModelKind::Transfer, b, a),
                ]
            })
            .collect();
        attach_deltas(&mut rows);
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &rows).unwrap();
        prop_assert_eq!(read_report_csv(buf.as_slice()).unwrap(), rows);
    }
}

#[test]
fn validation_keeps_the_split_ratio() {
    let spec = tiny(TrialId::D);
    assert_eq!(validation_size(&spec, 68), 12);
    assert_eq!(validation_size(&spec, 20), 4);
    assert_eq!(validation_size(&spec, 1000), 177);
}

#[test]
fn target_pool_is_disjoint_from_test() {
    let spec = tiny(TrialId::F);
    let sets = TargetSets::generate(&spec, "tower").unwrap();
    assert_eq!(sets.test.len(), 9);
    let needed = 8 + validation_size(&spec, 8);
    assert!(sets.pool.len() >= needed);
    assert_disjoint(&[&sets.pool], &sets.test).unwrap();
    assert!(assert_disjoint(&[&sets.test[..2]], &sets.test).is_err());
}

#[test]
fn tiny_transfer_trial_is_deterministic_and_complete() {
    let spec = tiny(TrialId::D);
    let spec = TrialSpec {
        targets: vec!["dm6".into()],
        sources: vec!["dm5".into(), "dm6".into()],
        ..spec
    };
    let a = run_trial(&spec).unwrap();
    let b = run_trial(&spec).unwrap();
    assert_eq!(a, b);
    for model in [ModelKind::Transfer, ModelKind::Scratch, ModelKind::Pointwise, ModelKind::Baseline] {
        assert_eq!(a.select("dm6", model).count(), 4, "{model:?}");
    }
    assert!(a.select("dm6", ModelKind::Transfer).all(|r| r.delta_mae_pct.is_some()));
    assert!(a.rows.iter().all(|r| r.mae_cm.is_finite() && r.mae_cm >= 0.0));

    let dir = tempfile::tempdir().unwrap();
    emit_report(&[a.clone()], dir.path()).unwrap();
    let back = read_report_csv(std::fs::File::open(dir.path().join("report.csv")).unwrap()).unwrap();
    assert_eq!(back, a.rows);
    let history = std::fs::read_to_string(dir.path().join("loss_history.csv")).unwrap();
    assert!(history.lines().next().unwrap().starts_with("trial,"));
}

#[test]
fn tiny_generalization_trial_runs() {
    let spec = TrialSpec {
        targets: vec!["dm5".into()],
        ..tiny(TrialId::A)
    };
    let report = run_trial(&spec).unwrap();
    assert_eq!(report.select("dm5", ModelKind::Gsm).count(), 2);
    assert_eq!(report.select("dm5", ModelKind::Baseline).count(), 2);
}

#[test]
fn spec_files_parse_with_overrides() {
    let spec = parse_trial_spec("trial = \"D\"\nprofile = \"desk\"\nseeds = [4]\nepochs = 3\n").unwrap();
    assert_eq!(spec.trial, TrialId::D);
    assert_eq!(spec.seeds, vec![4]);
    assert_eq!(spec.epochs, 3);
    assert!(parse_trial_spec("profile = \"desk\"\n").is_err());
    assert!(parse_trial_spec("trial = \"Q\"\n").is_err());
    assert!(parse_trial_spec("trial = \"A\"\nbogus = 1\n").is_err());
}
