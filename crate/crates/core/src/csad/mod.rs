//! Class-Specific Anomaly Detection: one detector per class, each trained
//! only on benign rows of that class, with samples routed to the detector of
//! their predicted class. The pooled single-detector variant ("standard") is
//! kept as the comparison baseline. Includes the class-partitioned training
//! cost model.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub mod iforest;

pub use iforest::{average_path_length, fit_isolation_forest, IfNode, IsolationForest};

use crate::learners::{fit_autoencoder, reconstruction_error, AeNet, LearnError, TrainConfig};
use crate::schema::Dataset;

/// Whether detectors are per-class (CSAD) or pooled over all classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    Csad,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    IsolationForest,
    Autoencoder,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CsadError {
    BadSubsample(usize),
    TooFewRows(usize),
    BadConfig(String),
    UnderPopulatedClass {
        class: usize,
        rows: usize,
        min: usize,
    },
    BadFpr(f64),
    EmptyValidation,
    EmptyInput,
    BadClass(usize),
    ZeroTotal,
    Learn(LearnError),
}

impl fmt::Display for CsadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsadError::BadSubsample(psi) => write!(f, "subsample size {psi} must be >= 2"),
            CsadError::TooFewRows(n) => write!(f, "need at least 2 rows, got {n}"),
            CsadError::BadConfig(msg) => write!(f, "bad configuration: {msg}"),
            CsadError::UnderPopulatedClass { class, rows, min } => {
                write!(
                    f,
                    "class {class} has {rows} benign rows, below the minimum {min}"
                )
            }
            CsadError::BadFpr(v) => write!(f, "target FPR {v} not in [0, 1)"),
            CsadError::EmptyValidation => write!(f, "empty validation set"),
            CsadError::EmptyInput => write!(f, "empty sample set"),
            CsadError::BadClass(c) => write!(f, "class {c} out of range"),
            CsadError::ZeroTotal => write!(f, "total sample count is zero"),
            CsadError::Learn(e) => write!(f, "detector training failed: {e}"),
        }
    }
}

impl std::error::Error for CsadError {}

/// Reconstruction-error threshold: mean + 2 * std of the validation errors
/// (population standard deviation; the multiplier k = 2 is fixed).
pub fn ae_threshold(validation_errors: &[f64]) -> Result<f64, CsadError> {
    if validation_errors.len() < 2 {
        return Err(CsadError::TooFewRows(validation_errors.len()));
    }
    let n = validation_errors.len() as f64;
    let mean = validation_errors.iter().sum::<f64>() / n;
    let var = validation_errors
        .iter()
        .map(|&e| (e - mean) * (e - mean))
        .sum::<f64>()
        / n;
    Ok(mean + 2.0 * var.sqrt())
}

/// Score threshold at the (1 - target_fpr) empirical quantile of benign
/// scores; flagging is strictly-above, so a zero target puts the threshold
/// above the benign maximum and nothing benign flags.
pub fn calibrate_if_threshold(
    forest: &IsolationForest,
    benign_validation: &[Vec<f64>],
    target_fpr: f64,
) -> Result<f64, CsadError> {
    if !(0.0..1.0).contains(&target_fpr) {
        return Err(CsadError::BadFpr(target_fpr));
    }
    if benign_validation.is_empty() {
        return Err(CsadError::EmptyValidation);
    }
    let mut scores: Vec<f64> = benign_validation.iter().map(|r| forest.score(r)).collect();
    scores.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let k = (target_fpr * scores.len() as f64 + 1e-9).floor() as usize;
    if k == 0 {
        Ok(scores[0] + 1e-12)
    } else {
        Ok(scores[k])
    }
}

/// One fitted detector with its calibrated threshold and the benign
/// validation FPR it achieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClassDetector {
    IsolationForest {
        forest: IsolationForest,
        threshold: f64,
        fpr: f64,
    },
    Autoencoder {
        net: AeNet,
        threshold: f64,
        /// Stored so the threshold can be recomputed and checked exactly.
        validation_errors: Vec<f64>,
        fpr: f64,
    },
}

impl ClassDetector {
    pub fn is_anomalous(&self, sample: &[f64]) -> bool {
        match self {
            ClassDetector::IsolationForest {
                forest, threshold, ..
            } => forest.score(sample) > *threshold,
            ClassDetector::Autoencoder { net, threshold, .. } => {
                reconstruction_error(net, sample) > *threshold
            }
        }
    }

    pub fn fpr(&self) -> f64 {
        match self {
            ClassDetector::IsolationForest { fpr, .. } => *fpr,
            ClassDetector::Autoencoder { fpr, .. } => *fpr,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            ClassDetector::IsolationForest { threshold, .. } => *threshold,
            ClassDetector::Autoencoder { threshold, .. } => *threshold,
        }
    }
}

/// Per-class (CSAD) or pooled (standard) detectors of one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBank {
    pub mode: DetectionMode,
    pub kind: DetectorKind,
    pub n_classes: usize,
    /// `n_classes` entries in CSAD mode, one pooled entry in standard mode.
    pub detectors: Vec<ClassDetector>,
}

impl DetectorBank {
    pub fn detector_for(&self, predicted_class: usize) -> Result<&ClassDetector, CsadError> {
        if predicted_class >= self.n_classes {
            return Err(CsadError::BadClass(predicted_class));
        }
        Ok(match self.mode {
            DetectionMode::Csad => &self.detectors[predicted_class],
            DetectionMode::Standard => &self.detectors[0],
        })
    }
}

/// Routes the sample to the detector of its predicted class (CSAD) or to the
/// pooled detector (standard).
pub fn is_anomalous(
    bank: &DetectorBank,
    sample: &[f64],
    predicted_class: usize,
) -> Result<bool, CsadError> {
    Ok(bank.detector_for(predicted_class)?.is_anomalous(sample))
}

/// Fraction of samples flagged as anomalous.
pub fn detection_rate(
    bank: &DetectorBank,
    samples: &[Vec<f64>],
    predicted_classes: &[usize],
) -> Result<f64, CsadError> {
    let flags = anomaly_flags(bank, samples, predicted_classes)?;
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

/// Per-sample anomaly flags, for paired statistics.
pub fn anomaly_flags(
    bank: &DetectorBank,
    samples: &[Vec<f64>],
    predicted_classes: &[usize],
) -> Result<Vec<bool>, CsadError> {
    if samples.is_empty() {
        return Err(CsadError::EmptyInput);
    }
    if samples.len() != predicted_classes.len() {
        return Err(CsadError::BadConfig(format!(
            "{} samples vs {} predicted classes",
            samples.len(),
            predicted_classes.len()
        )));
    }
    samples
        .iter()
        .zip(predicted_classes)
        .map(|(s, &c)| is_anomalous(bank, s, c))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub mode: DetectionMode,
    /// Minimum benign rows a class must have in CSAD mode.
    pub min_class_samples: usize,
    /// Fraction of each class's benign rows held out for threshold
    /// calibration.
    pub validation_fraction: f64,
    pub seed: u64,
    pub if_trees: usize,
    pub if_psi: usize,
    /// Target FPR for an isolation-forest bank fitted on its own; matched
    /// banks override this with the autoencoder's per-class FPR.
    pub if_target_fpr: f64,
    pub ae_train: TrainConfig,
}

impl BankConfig {
    pub fn new(mode: DetectionMode, seed: u64) -> Self {
        BankConfig {
            mode,
            min_class_samples: 20,
            validation_fraction: 0.2,
            seed,
            if_trees: 100,
            if_psi: 256,
            if_target_fpr: 0.05,
            ae_train: TrainConfig {
                epochs: 10,
                learning_rate: 1e-3,
                weight_decay: 1e-8,
                patience: 0,
                seed,
                batch_size: 32,
            },
        }
    }
}

struct GroupSplit {
    fit: Vec<Vec<f64>>,
    validation: Vec<Vec<f64>>,
}

/// Group benign rows (per class or pooled) and split each group into fit and
/// validation parts with a seeded shuffle.
fn group_splits(train: &Dataset, cfg: &BankConfig) -> Result<Vec<GroupSplit>, CsadError> {
    let groups: Vec<Vec<Vec<f64>>> = match cfg.mode {
        DetectionMode::Csad => (0..train.schema.n_classes)
            .map(|c| {
                train
                    .rows_of_class(c)
                    .into_iter()
                    .map(|r| r.to_vec())
                    .collect()
            })
            .collect(),
        DetectionMode::Standard => vec![train.rows.clone()],
    };
    let mut out = Vec::with_capacity(groups.len());
    for (class, mut rows) in groups.into_iter().enumerate() {
        if rows.len() < cfg.min_class_samples {
            return Err(CsadError::UnderPopulatedClass {
                class,
                rows: rows.len(),
                min: cfg.min_class_samples,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeding::item_seed(cfg.seed, class as u64));
        rows.shuffle(&mut rng);
        let val_n = ((rows.len() as f64 * cfg.validation_fraction).round() as usize)
            .clamp(2, rows.len() - 2);
        let validation = rows.split_off(rows.len() - val_n);
        out.push(GroupSplit {
            fit: rows,
            validation,
        });
    }
    Ok(out)
}

/// Fit a single-kind bank. Isolation-forest banks calibrate to
/// `cfg.if_target_fpr`; autoencoder banks take mean + 2 std of the
/// validation reconstruction errors as their threshold.
pub fn fit_bank(
    train: &Dataset,
    kind: DetectorKind,
    cfg: &BankConfig,
) -> Result<DetectorBank, CsadError> {
    let splits = group_splits(train, cfg)?;
    let mut detectors = Vec::with_capacity(splits.len());
    for (class, split) in splits.iter().enumerate() {
        let detector = match kind {
            DetectorKind::Autoencoder => fit_ae_detector(split, cfg, class)?,
            DetectorKind::IsolationForest => fit_if_detector(split, cfg, class, cfg.if_target_fpr)?,
        };
        detectors.push(detector);
    }
    Ok(DetectorBank {
        mode: cfg.mode,
        kind,
        n_classes: train.schema.n_classes,
        detectors,
    })
}

/// Fit the autoencoder bank and an isolation-forest bank whose per-class
/// thresholds are calibrated, on the same benign validation split, to the
/// autoencoder's false positive rates.
pub fn fit_matched_banks(
    train: &Dataset,
    cfg: &BankConfig,
) -> Result<(DetectorBank, DetectorBank), CsadError> {
    let splits = group_splits(train, cfg)?;
    let mut ae_detectors = Vec::with_capacity(splits.len());
    let mut if_detectors = Vec::with_capacity(splits.len());
    for (class, split) in splits.iter().enumerate() {
        let ae = fit_ae_detector(split, cfg, class)?;
        let target = ae.fpr();
        ae_detectors.push(ae);
        if_detectors.push(fit_if_detector(split, cfg, class, target)?);
    }
    let ae_bank = DetectorBank {
        mode: cfg.mode,
        kind: DetectorKind::Autoencoder,
        n_classes: train.schema.n_classes,
        detectors: ae_detectors,
    };
    let if_bank = DetectorBank {
        mode: cfg.mode,
        kind: DetectorKind::IsolationForest,
        n_classes: train.schema.n_classes,
        detectors: if_detectors,
    };
    Ok((ae_bank, if_bank))
}

fn fit_ae_detector(
    split: &GroupSplit,
    cfg: &BankConfig,
    class: usize,
) -> Result<ClassDetector, CsadError> {
    let mut ae_cfg = cfg.ae_train.clone();
    ae_cfg.seed = crate::seeding::item_seed(cfg.seed ^ 0xAE, class as u64);
    let net = fit_autoencoder(&split.fit, &ae_cfg).map_err(CsadError::Learn)?;
    let validation_errors: Vec<f64> = split
        .validation
        .iter()
        .map(|r| reconstruction_error(&net, r))
        .collect();
    let threshold = ae_threshold(&validation_errors)?;
    let fpr = validation_errors.iter().filter(|&&e| e > threshold).count() as f64
        / validation_errors.len() as f64;
    Ok(ClassDetector::Autoencoder {
        net,
        threshold,
        validation_errors,
        fpr,
    })
}

fn fit_if_detector(
    split: &GroupSplit,
    cfg: &BankConfig,
    class: usize,
    target_fpr: f64,
) -> Result<ClassDetector, CsadError> {
    let forest = fit_isolation_forest(
        &split.fit,
        cfg.if_trees,
        cfg.if_psi,
        crate::seeding::item_seed(cfg.seed ^ 0x1F, class as u64),
    )?;
    let threshold = calibrate_if_threshold(&forest, &split.validation, target_fpr)?;
    let fpr = split
        .validation
        .iter()
        .filter(|r| forest.score(r) > threshold)
        .count() as f64
        / split.validation.len() as f64;
    Ok(ClassDetector::IsolationForest {
        forest,
        threshold,
        fpr,
    })
}

/// Training-cost model for class-partitioned detectors: class counts plus
/// the training algorithm's complexity exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityModel {
    pub class_counts: Vec<u64>,
    pub alpha: f64,
}

/// Cost of training one detector per class relative to one pooled detector:
/// sum(n_i^alpha) / n^alpha. Exactly balanced counts give k^(1-alpha).
pub fn csad_cost_ratio(model: &ComplexityModel) -> Result<f64, CsadError> {
    if model.alpha <= 0.0 {
        return Err(CsadError::BadConfig(format!(
            "complexity exponent must be positive, got {}",
            model.alpha
        )));
    }
    let n: u64 = model.class_counts.iter().sum();
    if n == 0 {
        return Err(CsadError::ZeroTotal);
    }
    if model.alpha == 1.0 {
        return Ok(1.0);
    }
    let total = n as f64;
    let sum: f64 = model
        .class_counts
        .iter()
        .map(|&c| (c as f64).powf(model.alpha))
        .sum();
    Ok(sum / total.powf(model.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Dataset, FeatureSpec, Schema};
    use rand::Rng;

    #[test]
    fn ae_threshold_cases() {
        assert!((ae_threshold(&[0.1, 0.1, 0.1]).unwrap() - 0.1).abs() < 1e-15);
        assert!((ae_threshold(&[0.0, 2.0]).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(ae_threshold(&[0.5]).unwrap_err(), CsadError::TooFewRows(1));
    }

    fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, center: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| center + (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn if_calibration_flags_expected_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = gaussian_rows(&mut rng, 300, 3, 0.0);
        let forest = fit_isolation_forest(&rows, 60, 128, 5).unwrap();
        let validation = gaussian_rows(&mut rng, 100, 3, 0.0);
        let threshold = calibrate_if_threshold(&forest, &validation, 0.05).unwrap();
        // Sort-and-count oracle: exactly 5 of the 100 validation scores above.
        let flagged = validation
            .iter()
            .filter(|r| forest.score(r) > threshold)
            .count();
        assert_eq!(flagged, 5);
    }

    #[test]
    fn if_calibration_zero_fpr_flags_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = gaussian_rows(&mut rng, 100, 2, 0.0);
        let forest = fit_isolation_forest(&rows, 40, 64, 5).unwrap();
        let validation = gaussian_rows(&mut rng, 60, 2, 0.0);
        let threshold = calibrate_if_threshold(&forest, &validation, 0.0).unwrap();
        let max = validation
            .iter()
            .map(|r| forest.score(r))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(threshold > max);
        assert_eq!(
            validation
                .iter()
                .filter(|r| forest.score(r) > threshold)
                .count(),
            0
        );
    }

    #[test]
    fn if_calibration_rejects_fpr_one() {
        let forest = IsolationForest {
            trees: vec![IfNode::External { size: 4 }],
            psi: 4,
        };
        assert_eq!(
            calibrate_if_threshold(&forest, &[vec![0.0]], 1.0).unwrap_err(),
            CsadError::BadFpr(1.0)
        );
    }

    fn two_class_dataset(seed: u64, per_class: usize, shift: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        let features = (0..d)
            .map(|i| FeatureSpec::continuous(&format!("f{i}"), -1e3, 1e3))
            .collect();
        let schema = Schema::new(features, "label", 2).unwrap();
        let mut rows = gaussian_rows(&mut rng, per_class, d, 0.0);
        rows.extend(gaussian_rows(&mut rng, per_class, d, shift));
        let labels: Vec<usize> = (0..2 * per_class)
            .map(|i| usize::from(i >= per_class))
            .collect();
        Dataset::new(schema, rows, labels).unwrap()
    }

    #[test]
    fn bank_shape_per_mode() {
        let ds = two_class_dataset(1, 60, 5.0);
        let csad = fit_bank(
            &ds,
            DetectorKind::IsolationForest,
            &BankConfig::new(DetectionMode::Csad, 7),
        )
        .unwrap();
        assert_eq!(csad.detectors.len(), 2);
        let std = fit_bank(
            &ds,
            DetectorKind::IsolationForest,
            &BankConfig::new(DetectionMode::Standard, 7),
        )
        .unwrap();
        assert_eq!(std.detectors.len(), 1);
    }

    #[test]
    fn under_populated_class_named() {
        let ds = two_class_dataset(1, 60, 5.0);
        // Rebuild with only 3 rows of class 1.
        let mut rows = ds
            .rows_of_class(0)
            .into_iter()
            .map(|r| r.to_vec())
            .collect::<Vec<_>>();
        let mut labels = vec![0usize; rows.len()];
        rows.extend(ds.rows_of_class(1).into_iter().take(3).map(|r| r.to_vec()));
        labels.extend([1, 1, 1]);
        let small = Dataset::new(ds.schema.clone(), rows, labels).unwrap();
        match fit_bank(
            &small,
            DetectorKind::IsolationForest,
            &BankConfig::new(DetectionMode::Csad, 7),
        ) {
            Err(CsadError::UnderPopulatedClass {
                class: 1,
                rows: 3,
                min: 20,
            }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn cross_class_point_flagged_only_by_other_class_detector() {
        // Classes N(0, I) and N(5*1, I); a class-0-typical point evaluated
        // under class 1's detector is anomalous, under class 0's it is not.
        let ds = two_class_dataset(5, 150, 5.0);
        let bank = fit_bank(
            &ds,
            DetectorKind::IsolationForest,
            &BankConfig::new(DetectionMode::Csad, 3),
        )
        .unwrap();
        let typical_zero = vec![0.1, -0.2, 0.05, 0.3];
        assert!(is_anomalous(&bank, &typical_zero, 1).unwrap());
        assert!(!is_anomalous(&bank, &typical_zero, 0).unwrap());
    }

    #[test]
    fn benign_flag_rate_near_calibrated_fpr() {
        let ds = two_class_dataset(9, 500, 5.0);
        let (ae_bank, if_bank) =
            fit_matched_banks(&ds, &BankConfig::new(DetectionMode::Csad, 9)).unwrap();
        for class in 0..2 {
            let rows: Vec<Vec<f64>> = ds
                .rows_of_class(class)
                .into_iter()
                .map(|r| r.to_vec())
                .collect();
            let classes = vec![class; rows.len()];
            for bank in [&ae_bank, &if_bank] {
                let rate = detection_rate(bank, &rows, &classes).unwrap();
                let fpr = bank.detectors[class].fpr();
                assert!(
                    rate <= fpr + 0.02,
                    "class {class}: flagged {rate} vs calibrated fpr {fpr}"
                );
            }
        }
    }

    #[test]
    fn matched_banks_have_matching_fprs() {
        let ds = two_class_dataset(13, 120, 5.0);
        let (ae_bank, if_bank) =
            fit_matched_banks(&ds, &BankConfig::new(DetectionMode::Csad, 2)).unwrap();
        for class in 0..2 {
            let ae_fpr = ae_bank.detectors[class].fpr();
            let if_fpr = if_bank.detectors[class].fpr();
            // Shared validation split of ~24 rows: parity within one sample.
            assert!((ae_fpr - if_fpr).abs() <= 1.0 / 24.0 + 1e-12);
        }
    }

    #[test]
    fn detection_rate_rejects_empty() {
        let ds = two_class_dataset(1, 60, 5.0);
        let bank = fit_bank(
            &ds,
            DetectorKind::IsolationForest,
            &BankConfig::new(DetectionMode::Standard, 7),
        )
        .unwrap();
        assert_eq!(
            detection_rate(&bank, &[], &[]).unwrap_err(),
            CsadError::EmptyInput
        );
    }

    #[test]
    fn three_class_bank_routes_by_predicted_class() {
        // The per-class design is not tied to binary tasks.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let d = 3;
        let features = (0..d)
            .map(|i| FeatureSpec::continuous(&format!("f{i}"), -1e3, 1e3))
            .collect();
        let schema = Schema::new(features, "label", 3).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..3usize {
            let center = 8.0 * class as f64;
            for row in gaussian_rows(&mut rng, 120, d, center) {
                rows.push(row);
                labels.push(class);
            }
        }
        let ds = Dataset::new(schema, rows, labels).unwrap();
        let bank = fit_bank(
            &ds,
            DetectorKind::IsolationForest,
            &BankConfig::new(DetectionMode::Csad, 6),
        )
        .unwrap();
        assert_eq!(bank.detectors.len(), 3);
        // A class-0-typical point is anomalous under the other two classes'
        // detectors but not its own.
        let typical = vec![0.2, -0.1, 0.4];
        assert!(!is_anomalous(&bank, &typical, 0).unwrap());
        assert!(is_anomalous(&bank, &typical, 1).unwrap());
        assert!(is_anomalous(&bank, &typical, 2).unwrap());
        assert!(matches!(
            is_anomalous(&bank, &typical, 3).unwrap_err(),
            CsadError::BadClass(3)
        ));
    }

    #[test]
    fn cost_ratio_reference_points() {
        let balanced = ComplexityModel {
            class_counts: vec![25_000; 4],
            alpha: 2.0,
        };
        assert!((csad_cost_ratio(&balanced).unwrap() - 0.25).abs() < 1e-12);
        let linear = ComplexityModel {
            class_counts: vec![10, 99, 3],
            alpha: 1.0,
        };
        assert_eq!(csad_cost_ratio(&linear).unwrap(), 1.0);
        let skewed = ComplexityModel {
            class_counts: vec![97_000, 1_000, 1_000, 1_000],
            alpha: 2.0,
        };
        assert!((csad_cost_ratio(&skewed).unwrap() - 0.9412).abs() < 1e-4);
        assert_eq!(
            csad_cost_ratio(&ComplexityModel {
                class_counts: vec![0, 0],
                alpha: 2.0
            })
            .unwrap_err(),
            CsadError::ZeroTotal
        );
    }

    #[test]
    fn cost_ratio_balanced_equals_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let k = rng.gen_range(2..10u64);
            let per = rng.gen_range(10..10_000u64);
            let alpha: f64 = rng.gen_range(0.2..3.0);
            let model = ComplexityModel {
                class_counts: vec![per; k as usize],
                alpha,
            };
            let ratio = csad_cost_ratio(&model).unwrap();
            let expected = (k as f64).powf(1.0 - alpha);
            assert!(
                (ratio - expected).abs() <= 1e-12 * expected.max(1.0),
                "k={k} per={per} alpha={alpha}: {ratio} vs {expected}"
            );
        }
    }

    #[test]
    fn cost_ratio_jensen_bound() {
        // For alpha > 1 and fixed (n, k), the balanced split minimizes cost.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let k = rng.gen_range(2..8usize);
            let alpha: f64 = rng.gen_range(1.0..3.0);
            let per = rng.gen_range(50..2_000u64);
            let n = per * k as u64;
            // Random unbalanced split of n into k nonnegative parts.
            let mut cuts: Vec<u64> = (0..k - 1).map(|_| rng.gen_range(0..=n)).collect();
            cuts.sort_unstable();
            let mut counts = Vec::with_capacity(k);
            let mut prev = 0;
            for &c in &cuts {
                counts.push(c - prev);
                prev = c;
            }
            counts.push(n - prev);
            let balanced = csad_cost_ratio(&ComplexityModel {
                class_counts: vec![per; k],
                alpha,
            })
            .unwrap();
            let unbalanced = csad_cost_ratio(&ComplexityModel {
                class_counts: counts,
                alpha,
            })
            .unwrap();
            assert!(balanced <= unbalanced + 1e-12, "alpha={alpha} k={k}");
        }
    }
}
