//! Black-box adversarial attacks on tabular classifiers, with coherence
//! constraints for dependent features, class-specific anomaly detection
//! (feature-space and SHAP-based), attacker risk/effort metrics, and a
//! nonparametric statistical comparison suite.
//!
//! The crate is organized around the experiment pipeline:
//!
//! * [`schema`] — typed feature descriptions, dataset ingestion, splits,
//!   correlation pruning, oversampling.
//! * [`learners`] — CART trees, random forests, gradient-boosted ensembles,
//!   the embedding+classifier surrogate network, and the reconstruction
//!   autoencoder, all self-contained and deterministic per seed.
//! * [`coherence`] — constraint projection (clip, round, restore immutables)
//!   and regression-based correction of dependent features.
//! * [`attacks`] — decision-based query attacks (boundary, HopSkipJump) and
//!   the surrogate-gradient transfer attack, all with query accounting.
//! * [`csad`] — per-class and pooled anomaly detector banks (isolation
//!   forest, autoencoder) with FPR-matched calibration, plus the
//!   class-partitioned training cost model.
//! * [`shap`] — exact Tree-SHAP attributions, benign per-class range tables,
//!   and importance-based anomaly metrics.
//! * [`metrics`] — success-rate decomposition, perturbation norms, query
//!   statistics, and attack time models.
//! * [`stats`] — Mann-Whitney, proportions z, exact McNemar, Wilcoxon
//!   signed-rank, Holm correction, effect sizes.
//! * [`runner`] — config-driven orchestration, report and plot-data output.
//!
//! Batch loops use rayon when the `parallel` feature (default) is enabled;
//! per-sample seeds are derived by stable hashing so results are identical
//! with the feature disabled.

pub mod attacks;
pub mod coherence;
pub mod csad;
pub mod learners;
pub mod metrics;
pub mod parallel;
pub mod runner;
pub mod schema;
pub mod seeding;
pub mod shap;
pub mod stats;
