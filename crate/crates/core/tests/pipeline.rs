//! Runner-level integration checks: attack-set construction, the query
//! budget law, artifact round trips, and resume determinism.

use std::path::Path;

use tabadv_core::learners::Classifier;
use tabadv_core::metrics::AttackKind;
use tabadv_core::runner::{
    build_attack_set, load_ledgers, load_models, report_to_json, save_ledgers, save_models, synth,
    ExperimentConfig, Pipeline,
};
use tabadv_core::schema::{load_csv, Schema};

fn bundled_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    ExperimentConfig::from_file(&path).expect("bundled config parses")
}

fn small_config() -> ExperimentConfig {
    let mut cfg = bundled_config();
    cfg.attack_set.per_class = 6;
    cfg.models.truncate(1);
    cfg
}

#[test]
fn bundled_data_files_match_generator() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let schema = Schema::from_toml_file(&root.join("data/synthetic.schema.toml")).unwrap();
    let committed = load_csv(&root.join("data/synthetic.csv"), &schema).unwrap();
    let generated = synth::generate(42, 1200);
    assert_eq!(
        committed, generated,
        "committed dataset drifted from the generator"
    );
}

#[test]
fn attack_set_respects_filter_and_balance() {
    let ds = synth::generate(5, 600);
    let model = tabadv_core::learners::fit_gradient_boosting(&ds, 30, 3, 0.2, 0).unwrap();
    let info = build_attack_set(&ds, &model, None, 12, 9).unwrap();
    assert_eq!(info.per_class_taken, vec![12, 12]);
    assert_eq!(info.data.n_rows(), 24);
    assert!(info.filter_retention > 0.5 && info.filter_retention <= 1.0);
    for (row, &label) in info.data.rows.iter().zip(&info.data.labels) {
        assert_eq!(model.predict(row), label);
    }
    // Same seed, same draw.
    let again = build_attack_set(&ds, &model, None, 12, 9).unwrap();
    assert_eq!(info.data, again.data);
}

#[test]
fn attack_set_reports_shortfall() {
    let ds = synth::generate(5, 120);
    let model = tabadv_core::learners::fit_gradient_boosting(&ds, 30, 3, 0.2, 0).unwrap();
    let info = build_attack_set(&ds, &model, None, 500, 9).unwrap();
    assert!(!info.shortfalls.is_empty());
    for shortfall in &info.shortfalls {
        assert_eq!(shortfall.requested, 500);
        assert!(shortfall.available < 500);
    }
}

#[test]
fn attack_set_names_hopeless_class() {
    struct AlwaysZero;
    impl Classifier for AlwaysZero {
        fn n_features(&self) -> usize {
            10
        }
        fn predict_proba(&self, _sample: &[f64]) -> f64 {
            0.0
        }
    }
    let ds = synth::generate(5, 200);
    let err = build_attack_set(&ds, &AlwaysZero, None, 5, 1).unwrap_err();
    assert!(err.to_string().contains("class 1"), "{err}");
}

#[test]
fn query_budget_law_holds() {
    let cfg = small_config();
    let mut pipeline = Pipeline::load(cfg).unwrap();
    pipeline.train().unwrap();
    pipeline.attack().unwrap();
    for cell in pipeline.ledgers.as_ref().unwrap() {
        for entry in &cell.ledger.entries {
            match cell.kind {
                AttackKind::Transfer => {
                    assert!(
                        entry.queries <= 1,
                        "{}: {} queries",
                        cell.attack,
                        entry.queries
                    );
                    // Queried exactly once iff the surrogate flipped.
                    assert_eq!(
                        entry.queries == 1,
                        entry.surrogate_success == Some(true),
                        "{}: budget mismatch",
                        cell.attack
                    );
                }
                AttackKind::Query => {
                    if entry.target_success {
                        assert!(entry.queries >= 1);
                    }
                }
            }
        }
    }
}

#[test]
fn artifacts_round_trip_and_resume_matches() {
    let dir = std::env::temp_dir().join("tabadv_pipeline_test");
    std::fs::create_dir_all(&dir).unwrap();

    let cfg = small_config();
    let mut full = Pipeline::load(cfg.clone()).unwrap();
    full.train().unwrap();
    full.attack().unwrap();
    full.evaluate().unwrap();
    full.stats().unwrap();

    let archive = full.archive().unwrap();
    save_models(&archive, &dir.join("models.json")).unwrap();
    save_ledgers(full.ledgers.as_ref().unwrap(), &dir.join("ledgers.json")).unwrap();

    // Resume from the saved archive: the attack stage must reproduce the
    // ledgers bit for bit (modulo wall times), and evaluate + stats must
    // reproduce the report modulo its timestamp.
    let mut resumed = Pipeline::load(cfg).unwrap();
    resumed.use_models(load_models(&dir.join("models.json")).unwrap());
    resumed.attack().unwrap();
    let saved = load_ledgers(&dir.join("ledgers.json")).unwrap();
    let rerun = resumed.ledgers.as_ref().unwrap();
    assert_eq!(saved.len(), rerun.len());
    for (a, b) in saved.iter().zip(rerun) {
        assert_eq!(a.attack, b.attack);
        assert_eq!(a.surrogate_evals, b.surrogate_evals);
        for (ea, eb) in a.ledger.entries.iter().zip(&b.ledger.entries) {
            assert_eq!(ea.x_adv, eb.x_adv);
            assert_eq!(ea.queries, eb.queries);
            assert_eq!(ea.target_success, eb.target_success);
            assert_eq!(ea.l2_trace, eb.l2_trace);
        }
    }

    resumed.evaluate().unwrap();
    resumed.stats().unwrap();
    let mut report_a = full.report.clone().unwrap();
    let mut report_b = resumed.report.clone().unwrap();
    report_a.environment.created_at = String::new();
    report_b.environment.created_at = String::new();
    assert_eq!(
        report_to_json(&report_a).unwrap(),
        report_to_json(&report_b).unwrap()
    );
}

#[test]
fn disabled_blocks_stay_absent_but_report_reloads() {
    let mut cfg = small_config();
    cfg.stats.enabled = false;
    cfg.detectors.enabled = false;
    cfg.shap.enabled = false;
    let mut pipeline = Pipeline::load(cfg).unwrap();
    pipeline.train().unwrap();
    pipeline.attack().unwrap();
    pipeline.evaluate().unwrap();
    pipeline.stats().unwrap();
    let report = pipeline.report.as_ref().unwrap();
    assert!(report.stats.is_none());
    assert!(report.detectors.is_none());
    for cell in &report.cells {
        assert!(cell.feature_space_detection.is_none());
        assert!(cell.importance_anomaly.is_none());
    }
    // Still a valid, reloadable document.
    let json = report_to_json(report).unwrap();
    let back = tabadv_core::runner::report_from_json(&json).unwrap();
    assert_eq!(&back, report);
}

#[test]
fn validation_rejects_missing_dependent_feature() {
    let mut cfg = small_config();
    cfg.dependencies.features = vec!["no_such_feature".into()];
    match Pipeline::load(cfg) {
        Err(e) => assert!(e.to_string().contains("no_such_feature"), "{e}"),
        Ok(_) => panic!("expected a config error"),
    }
}
