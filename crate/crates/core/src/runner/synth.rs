//! Bundled synthetic tabular task: two classes, ten mixed-kind features,
//! two immutable, one dependent. The label is a noisy monotone score of the
//! editable features, so tree ensembles and the surrogate can learn it and
//! attacks have room to work.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::schema::{Dataset, FeatureSpec, Schema};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    crate::attacks::standard_normal(rng)
}

pub fn schema() -> Schema {
    Schema::new(
        vec![
            FeatureSpec::integer("age", 18.0, 90.0).immutable(),
            FeatureSpec::categorical("region", 4).immutable(),
            FeatureSpec::continuous("balance", -4.0, 4.0),
            FeatureSpec::continuous("income", -4.0, 4.0),
            FeatureSpec::continuous("debt", -4.0, 4.0),
            FeatureSpec::continuous("tenure", -4.0, 4.0),
            FeatureSpec::integer("accounts", 0.0, 10.0),
            FeatureSpec::binary("overdraft"),
            FeatureSpec::continuous("volatility", -4.0, 4.0),
            FeatureSpec::continuous("liquidity", -6.0, 6.0).dependent(),
        ],
        "label",
        2,
    )
    .expect("synthetic schema is valid")
}

/// The functional dependency behind the `liquidity` feature, before noise.
pub fn dependent_value(balance: f64, income: f64, debt: f64) -> f64 {
    0.6 * balance + 0.4 * income - 0.3 * debt
}

/// Deterministic draw of `n` rows under `seed`.
pub fn generate(seed: u64, n: usize) -> Dataset {
    let schema = schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let age = rng.gen_range(18..=90) as f64;
        let region = rng.gen_range(0..4) as f64;
        let balance = (gaussian(&mut rng)).clamp(-4.0, 4.0);
        let income = (gaussian(&mut rng)).clamp(-4.0, 4.0);
        let debt = (gaussian(&mut rng)).clamp(-4.0, 4.0);
        let tenure = (gaussian(&mut rng)).clamp(-4.0, 4.0);
        let accounts = rng.gen_range(0..=10) as f64;
        let overdraft = f64::from(rng.gen_bool(0.5));
        let volatility = (gaussian(&mut rng)).clamp(-4.0, 4.0);
        let liquidity =
            (dependent_value(balance, income, debt) + 0.05 * gaussian(&mut rng)).clamp(-6.0, 6.0);

        let score = 1.2 * balance + 1.0 * income - 0.8 * debt
            + 0.6 * tenure
            + 0.15 * (accounts - 5.0)
            + 0.5 * (2.0 * overdraft - 1.0)
            + 0.01 * (age - 54.0) / 36.0;
        let label = usize::from(score + 0.3 * gaussian(&mut rng) > 0.7);

        rows.push(vec![
            age, region, balance, income, debt, tenure, accounts, overdraft, volatility, liquidity,
        ]);
        labels.push(label);
    }
    Dataset::new(schema, rows, labels).expect("generated rows satisfy the schema")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_shape_and_balance() {
        let ds = generate(42, 1200);
        assert_eq!(ds.n_rows(), 1200);
        assert_eq!(ds.n_features(), 10);
        let counts = ds.class_counts();
        let minority = counts.iter().min().unwrap();
        // Imbalanced but both classes well populated.
        assert!(*minority > 200, "minority has {minority}");
        assert!(*minority < 600);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(7, 100), generate(7, 100));
        assert_ne!(generate(7, 100), generate(8, 100));
    }

    #[test]
    fn schema_annotations() {
        let s = schema();
        assert_eq!(s.dependent_indices(), vec![9]);
        let immutables: Vec<usize> = s
            .features
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.mutable)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(immutables, vec![0, 1]);
    }

    #[test]
    fn learnable_by_gradient_boosting() {
        let ds = generate(42, 800);
        let model = crate::learners::fit_gradient_boosting(&ds, 40, 3, 0.2, 0).unwrap();
        use crate::learners::Classifier;
        let correct = ds
            .rows
            .iter()
            .zip(&ds.labels)
            .filter(|(r, &l)| model.predict(r) == l)
            .count();
        let acc = correct as f64 / ds.n_rows() as f64;
        assert!(acc >= 0.85, "training accuracy {acc}");
    }
}
