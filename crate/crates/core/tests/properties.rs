//! Property tests for the cross-cutting invariants: constraint projection,
//! preprocessing conservation laws, rate identities, the Holm adjustment,
//! and the class-partitioned cost model.

use proptest::prelude::*;

use tabadv_core::coherence::{tabular_modify, ConstraintSet, DependencyRegistry};
use tabadv_core::csad::{csad_cost_ratio, ComplexityModel};
use tabadv_core::metrics::{success_rates, AttackKind, LedgerEntry, RunLedger};
use tabadv_core::schema::{
    dataset_to_csv, load_csv_str, oversample_minority, pearson, train_test_split, Dataset,
    FeatureKind, FeatureSpec, Schema,
};
use tabadv_core::stats::holm_adjust;

fn arb_feature(idx: usize) -> impl Strategy<Value = FeatureSpec> {
    (0..4u8, any::<bool>()).prop_map(move |(kind, mutable)| {
        let name = format!("f{idx}");
        let spec = match kind {
            0 => FeatureSpec::continuous(&name, -50.0, 50.0),
            1 => FeatureSpec::integer(&name, -20.0, 20.0),
            2 => FeatureSpec::categorical(&name, 5),
            _ => FeatureSpec::binary(&name),
        };
        if mutable {
            spec
        } else {
            spec.immutable()
        }
    })
}

fn arb_schema() -> impl Strategy<Value = Schema> {
    proptest::collection::vec(any::<u8>(), 2..6).prop_flat_map(|kinds| {
        let features: Vec<_> = kinds
            .iter()
            .enumerate()
            .map(|(i, _)| arb_feature(i))
            .collect();
        features.prop_map(|mut features| {
            // Guarantee at least one mutable feature.
            features[0].mutable = true;
            Schema::new(features, "label", 2).expect("generated schema is valid")
        })
    })
}

fn value_in(spec: &FeatureSpec, raw: f64) -> f64 {
    let v = spec.min + (spec.max - spec.min) * raw.clamp(0.0, 1.0);
    match spec.kind {
        FeatureKind::Continuous => v,
        _ => v.round().clamp(spec.min, spec.max),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tabular_modify_total_and_idempotent(
        schema in arb_schema(),
        x_raw in proptest::collection::vec(0.0f64..1.0, 6),
        z in proptest::collection::vec(-1e6f64..1e6, 6),
    ) {
        let d = schema.n_features();
        let x: Vec<f64> = schema.features.iter().zip(&x_raw).map(|(s, &r)| value_in(s, r)).collect();
        let c = ConstraintSet::from_schema(&schema);
        let reg = DependencyRegistry::empty(d);
        let once = tabular_modify(&x, &z[..d], &c, &reg);
        let twice = tabular_modify(&x, &once, &c, &reg);
        prop_assert_eq!(&once, &twice);
        prop_assert!(c.satisfied(&once));
        for &i in &c.immutable {
            prop_assert_eq!(once[i], x[i]);
        }
    }

    #[test]
    fn oversampling_only_copies_rows(
        labels in proptest::collection::vec(0usize..2, 3..40),
        values in proptest::collection::vec(-5.0f64..5.0, 3..40),
    ) {
        let n = labels.len().min(values.len());
        let labels = &labels[..n];
        let values = &values[..n];
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let schema = Schema::new(
            vec![FeatureSpec::continuous("a", -5.0, 5.0)],
            "label",
            2,
        ).unwrap();
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let ds = Dataset::new(schema, rows.clone(), labels.to_vec()).unwrap();
        let minority = if labels.iter().filter(|&&l| l == 0).count()
            <= labels.iter().filter(|&&l| l == 1).count() { 0 } else { 1 };
        let out = oversample_minority(&ds, minority).unwrap();
        let counts = out.class_counts();
        prop_assert_eq!(counts[0], counts[1]);
        for row in &out.rows {
            prop_assert!(rows.contains(row));
        }
    }

    #[test]
    fn split_partitions_exactly(
        n in 4usize..200,
        fraction in 0.1f64..0.9,
        seed in any::<u64>(),
    ) {
        let schema = Schema::new(
            vec![FeatureSpec::continuous("a", 0.0, 1e6)],
            "label",
            2,
        ).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(schema, rows, vec![0; n]).unwrap();
        let (train, test) = train_test_split(&ds, fraction, seed).unwrap();
        prop_assert_eq!(train.n_rows() + test.n_rows(), n);
        let mut seen: Vec<f64> = train.rows.iter().chain(&test.rows).map(|r| r[0]).collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(seen, (0..n).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn csv_round_trip_preserves_values(
        values in proptest::collection::vec((-1e9f64..1e9, 0u8..4), 1..30),
    ) {
        let schema = Schema::new(
            vec![
                FeatureSpec::continuous("a", -1e9, 1e9),
                FeatureSpec::integer("b", 0.0, 3.0),
            ],
            "label",
            2,
        ).unwrap();
        let rows: Vec<Vec<f64>> = values.iter().map(|&(v, k)| vec![v, f64::from(k)]).collect();
        let ds = Dataset::new(schema.clone(), rows, vec![0; values.len()]).unwrap();
        let back = load_csv_str(&dataset_to_csv(&ds), &schema).unwrap();
        // Continuous values survive bit-exactly (shortest round-trip
        // formatting), discrete values exactly by construction.
        prop_assert_eq!(ds.rows, back.rows);
    }

    #[test]
    fn pearson_bounded(
        pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Ok(r) = pearson(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn transfer_rate_identity(
        flags in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200),
    ) {
        let entries: Vec<LedgerEntry> = flags
            .iter()
            .map(|&(surrogate, target)| LedgerEntry {
                sample_index: 0,
                x: vec![0.0],
                x_adv: vec![0.0],
                surrogate_success: Some(surrogate),
                target_success: surrogate && target,
                queries: u64::from(surrogate),
                wall_time_ms: 0.0,
                l2_trace: vec![],
            })
            .collect();
        let rates = success_rates(&RunLedger { entries }, AttackKind::Transfer).unwrap();
        if let (Some(s), Some(t), Some(o)) =
            (rates.surrogate_sr, rates.transfer_sr, rates.overall_sr)
        {
            prop_assert!((o - s * t).abs() <= 1e-12);
        }
    }

    #[test]
    fn holm_adjustment_laws(
        p_values in proptest::collection::vec(0.0f64..=1.0, 1..20),
    ) {
        let adjusted = holm_adjust(&p_values).unwrap();
        for (raw, adj) in p_values.iter().zip(&adjusted) {
            prop_assert!(adj >= raw);
            prop_assert!((0.0..=1.0).contains(adj));
        }
        // Order preservation in the sorted sense.
        let mut order: Vec<usize> = (0..p_values.len()).collect();
        order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
        for pair in order.windows(2) {
            prop_assert!(adjusted[pair[0]] <= adjusted[pair[1]] + 1e-15);
        }
    }

    #[test]
    fn balanced_cost_ratio_is_power_law(
        k in 2u64..12,
        per in 1u64..50_000,
        alpha in 0.2f64..3.0,
    ) {
        let model = ComplexityModel { class_counts: vec![per; k as usize], alpha };
        let ratio = csad_cost_ratio(&model).unwrap();
        let expected = (k as f64).powf(1.0 - alpha);
        prop_assert!((ratio - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    #[test]
    fn unbalanced_cost_never_beats_balanced(
        splits in proptest::collection::vec(1u64..1000, 2..8),
        alpha in 1.0f64..3.0,
    ) {
        let k = splits.len() as u64;
        let n: u64 = splits.iter().sum();
        prop_assume!(n.is_multiple_of(k));
        let balanced = csad_cost_ratio(&ComplexityModel {
            class_counts: vec![n / k; k as usize],
            alpha,
        })
        .unwrap();
        let unbalanced =
            csad_cost_ratio(&ComplexityModel { class_counts: splits, alpha }).unwrap();
        prop_assert!(balanced <= unbalanced + 1e-12);
    }
}
