//! Experiment orchestration: preprocess, train, attack, evaluate, and test,
//! driven by one configuration document and one master seed. Per-sample
//! attack seeds derive from stable hashes, so the parallel attack stage
//! produces the same ledgers as a sequential run.
//!
//! The configuration format, the schema document keys, and every emitted
//! artifact are documented in `docs/config_reference.md`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub mod archive;
pub mod config;
pub mod report;
pub mod synth;

pub use archive::{load_models, save_models, ModelArchive, ARCHIVE_VERSION};
pub use config::{
    AttackConfig, AttackSetConfig, ConfigError, DatasetConfig, DependencyConfig, DetectorConfig,
    EffortConfig, ExperimentConfig, ModelKind, PreprocessConfig, SelectorConfig, ShapConfig,
    StatsConfig, SurrogateConfig, TargetModelConfig,
};
pub use report::{
    emit_plot_data, emit_report, report_from_json, report_to_json, AttackSetSummary, Cell,
    ClassShortfall, DatasetSummary, DetectorSummary, Distribution, Environment,
    FeatureSpaceDetection, ImportanceBlock, LabeledResult, ModelStats, ModelSummary,
    PairedComparison, Report, ReportError, StatsBlock, SurrogateSummary,
};

use crate::attacks::{
    boundary_attack, correlation_table, hopskipjump_attack, transfer_attack, AttackError,
    BlackBoxHandle, BoundaryConfig, FeatureSelector, HsjConfig, TransferConfig,
};
use crate::coherence::{fit_dependency_models, ConstraintSet, DependencyRegistry};
use crate::csad::{anomaly_flags, fit_matched_banks, BankConfig, DetectionMode, DetectorBank};
use crate::learners::{
    fit_gradient_boosting, fit_random_forest, train_surrogate, Classifier, SurrogateModel,
    TreeEnsemble,
};
use crate::metrics::{
    l0, l2, query_stats, success_rates, time_query_attack, time_transfer_attack, AttackKind,
    EffortModel, LedgerEntry, RunLedger,
};
use crate::parallel::maybe_par_map_indexed;
use crate::schema::{
    drop_correlated, load_csv, oversample_minority, train_test_split, Dataset, Schema,
};
use crate::seeding::{item_seed, stage_seed};
use crate::shap::{build_range_table, importance_anomaly, tree_shap_batch, ShapRangeTable};
use crate::stats::{
    holm_adjust_results, mann_whitney_u, mcnemar_exact, proportions_ztest, wilcoxon_signed_rank,
    StatResult,
};

/// Stage-tagged pipeline errors. The CLI maps the kinds onto exit codes:
/// config errors 2, data errors 3, runtime failures 4.
#[derive(Debug)]
pub enum RunnerError {
    Config(String),
    Data(String),
    Runtime { stage: &'static str, detail: String },
}

impl fmt::Display for RunnerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunnerError::Config(msg) => write!(f, "config error: {msg}"),
            RunnerError::Data(msg) => write!(f, "data error: {msg}"),
            RunnerError::Runtime { stage, detail } => {
                write!(f, "runtime failure in stage {stage}: {detail}")
            }
        }
    }
}

impl std::error::Error for RunnerError {}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            RunnerError::Data(_) => 3,
            RunnerError::Runtime { .. } => 4,
        }
    }

    fn runtime(stage: &'static str, detail: impl fmt::Display) -> Self {
        RunnerError::Runtime {
            stage,
            detail: detail.to_string(),
        }
    }
}

/// Data after preprocessing. `train` is the pre-oversampling split used as
/// the benign reference; the oversampled split feeds model training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub dropped: Vec<String>,
    pub train: Dataset,
    pub test: Dataset,
    pub target_train: Dataset,
    pub surrogate_train: Dataset,
}

#[derive(Debug, Clone)]
pub struct ModelSet {
    pub targets: Vec<(String, TreeEnsemble)>,
    pub surrogate: SurrogateModel,
    pub importance_sources: BTreeMap<String, TreeEnsemble>,
    pub registry: DependencyRegistry,
}

/// Attack set for one target model: correctly-classified, class-balanced
/// test rows plus the retention bookkeeping the report carries.
#[derive(Debug, Clone)]
pub struct AttackSetInfo {
    pub data: Dataset,
    pub filter_retention: f64,
    pub per_class_taken: Vec<usize>,
    pub shortfalls: Vec<ClassShortfall>,
}

/// Retain test rows correctly classified by the target (and the surrogate,
/// when given), then draw a balanced per-class subset. Shortfalls are
/// reported, not padded.
pub fn build_attack_set(
    test: &Dataset,
    target: &dyn Classifier,
    surrogate: Option<&dyn Classifier>,
    per_class_count: usize,
    seed: u64,
) -> Result<AttackSetInfo, RunnerError> {
    if test.n_rows() == 0 {
        return Err(RunnerError::Data("attack set: empty test set".into()));
    }
    let n_classes = test.schema.n_classes;
    let mut eligible: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    let mut kept = 0usize;
    for (i, (row, &label)) in test.rows.iter().zip(&test.labels).enumerate() {
        let ok = target.predict(row) == label && surrogate.is_none_or(|s| s.predict(row) == label);
        if ok {
            eligible[label].push(i);
            kept += 1;
        }
    }
    for (class, rows) in eligible.iter().enumerate() {
        if rows.is_empty() {
            return Err(RunnerError::Data(format!(
                "attack set: class {class} has zero correctly-classified rows"
            )));
        }
    }
    let mut indices = Vec::new();
    let mut per_class_taken = Vec::with_capacity(n_classes);
    let mut shortfalls = Vec::new();
    for (class, rows) in eligible.iter().enumerate() {
        let mut rows = rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(item_seed(seed, class as u64));
        use rand::seq::SliceRandom;
        rows.shuffle(&mut rng);
        let take = per_class_count.min(rows.len());
        if take < per_class_count {
            shortfalls.push(ClassShortfall {
                class,
                requested: per_class_count,
                available: rows.len(),
            });
        }
        per_class_taken.push(take);
        indices.extend(rows.into_iter().take(take));
    }
    let data = Dataset::new(
        test.schema.clone(),
        indices.iter().map(|&i| test.rows[i].clone()).collect(),
        indices.iter().map(|&i| test.labels[i]).collect(),
    )
    .map_err(|e| RunnerError::Data(e.to_string()))?;
    Ok(AttackSetInfo {
        data,
        filter_retention: kept as f64 / test.n_rows() as f64,
        per_class_taken,
        shortfalls,
    })
}

/// One (attack, model) ledger plus the transfer-only extras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLedger {
    pub attack: String,
    pub model: String,
    pub kind: AttackKind,
    pub ledger: RunLedger,
    /// Surrogate forward evaluations per sample (transfer attacks only).
    pub surrogate_evals: Vec<u64>,
    pub embed_distances: Vec<f64>,
}

/// Per-cell raw values the stats stage pairs and compares.
#[derive(Debug, Clone, Default)]
pub struct CellExtras {
    pub l0_values: Vec<f64>,
    pub l2_values: Vec<f64>,
    pub csad_counts: Vec<usize>,
    pub standard_counts: Vec<usize>,
    pub csad_flags: Vec<bool>,
    pub standard_flags: Vec<bool>,
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub schema: Schema,
    pub data: PreparedData,
    pub models: Option<ModelSet>,
    pub attack_sets: Option<BTreeMap<String, AttackSetInfo>>,
    pub ledgers: Option<Vec<CellLedger>>,
    pub banks: Option<DetectorBanks>,
    pub report: Option<Report>,
    extras: BTreeMap<(String, String), CellExtras>,
}

impl Pipeline {
    /// Load the dataset, validate the config against its schema, and run
    /// preprocessing.
    pub fn load(cfg: ExperimentConfig) -> Result<Self, RunnerError> {
        let schema = Schema::from_toml_file(&cfg.dataset.schema)
            .map_err(|e| RunnerError::Data(e.to_string()))?;
        cfg.validate(&schema)
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        let dataset =
            load_csv(&cfg.dataset.data, &schema).map_err(|e| RunnerError::Data(e.to_string()))?;

        let master = cfg.master_seed;
        let (dataset, dropped) = match cfg.preprocess.correlation_threshold {
            Some(threshold) => {
                let out = drop_correlated(&dataset, threshold, stage_seed(master, "correlation"))
                    .map_err(|e| RunnerError::Data(e.to_string()))?;
                (out.dataset, out.dropped)
            }
            None => (dataset, Vec::new()),
        };
        // Dependent features must survive correlation pruning.
        for name in &cfg.dependencies.features {
            if dataset.schema.feature_index(name).is_none() {
                return Err(RunnerError::Data(format!(
                    "dependent feature {name} was dropped by correlation pruning"
                )));
            }
        }

        let (train, test) = train_test_split(
            &dataset,
            cfg.preprocess.train_fraction,
            stage_seed(master, "split"),
        )
        .map_err(|e| RunnerError::Data(e.to_string()))?;
        let for_models = if cfg.preprocess.oversample {
            let counts = train.class_counts();
            let minority = counts
                .iter()
                .enumerate()
                .min_by_key(|(_, &c)| c)
                .map(|(c, _)| c)
                .expect("non-empty class counts");
            oversample_minority(&train, minority).map_err(|e| RunnerError::Data(e.to_string()))?
        } else {
            train.clone()
        };
        let (target_train, surrogate_train) = train_test_split(
            &for_models,
            cfg.preprocess.target_share,
            stage_seed(master, "attacker_split"),
        )
        .map_err(|e| RunnerError::Data(e.to_string()))?;

        let schema = dataset.schema.clone();
        Ok(Pipeline {
            cfg,
            schema,
            data: PreparedData {
                dataset,
                dropped,
                train,
                test,
                target_train,
                surrogate_train,
            },
            models: None,
            attack_sets: None,
            ledgers: None,
            banks: None,
            report: None,
            extras: BTreeMap::new(),
        })
    }

    /// Fit targets, the surrogate, the importance sources, and the
    /// dependency regressors.
    pub fn train(&mut self) -> Result<(), RunnerError> {
        let master = self.cfg.master_seed;
        let train_seed = stage_seed(master, "train");
        let mut targets = Vec::new();
        for (idx, spec) in self.cfg.models.iter().enumerate() {
            let seed = item_seed(train_seed, idx as u64) ^ spec.seed_offset;
            let model = match spec.kind {
                ModelKind::GradientBoosting => fit_gradient_boosting(
                    &self.data.target_train,
                    spec.n_estimators,
                    spec.max_depth,
                    spec.learning_rate,
                    seed,
                ),
                ModelKind::RandomForest => fit_random_forest(
                    &self.data.target_train,
                    spec.n_estimators,
                    spec.max_depth,
                    seed,
                ),
            }
            .map_err(|e| RunnerError::runtime("train", format!("model {}: {e}", spec.name)))?;
            targets.push((spec.name.clone(), model));
        }

        let arch = self
            .cfg
            .surrogate
            .arch()
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        let surrogate = train_surrogate(
            &self.data.surrogate_train,
            &arch,
            &self
                .cfg
                .surrogate
                .train_config(stage_seed(master, "surrogate")),
        )
        .map_err(|e| RunnerError::runtime("train", format!("surrogate: {e}")))?;

        let mut importance_sources = BTreeMap::new();
        for (idx, attack) in self.cfg.attacks.iter().enumerate() {
            if let AttackConfig::Transfer {
                name,
                selector:
                    SelectorConfig::Importance {
                        kind,
                        n_estimators,
                        max_depth,
                        learning_rate,
                        seed_offset,
                    },
                ..
            } = attack
            {
                let seed = item_seed(stage_seed(master, "importance"), idx as u64) ^ seed_offset;
                let model = match kind {
                    ModelKind::GradientBoosting => fit_gradient_boosting(
                        &self.data.surrogate_train,
                        *n_estimators,
                        *max_depth,
                        *learning_rate,
                        seed,
                    ),
                    ModelKind::RandomForest => fit_random_forest(
                        &self.data.surrogate_train,
                        *n_estimators,
                        *max_depth,
                        seed,
                    ),
                }
                .map_err(|e| {
                    RunnerError::runtime("train", format!("importance source {name}: {e}"))
                })?;
                importance_sources.insert(name.clone(), model);
            }
        }

        let dependents: Vec<usize> = self
            .cfg
            .dependencies
            .features
            .iter()
            .map(|name| {
                self.schema
                    .feature_index(name)
                    .expect("validated feature name")
            })
            .collect();
        let registry = fit_dependency_models(
            &self.data.surrogate_train,
            &dependents,
            self.cfg.dependencies.n_estimators,
            self.cfg.dependencies.max_depth,
            self.cfg.dependencies.learning_rate,
        )
        .map_err(|e| RunnerError::runtime("train", format!("dependency regressors: {e}")))?;

        self.models = Some(ModelSet {
            targets,
            surrogate,
            importance_sources,
            registry,
        });
        Ok(())
    }

    pub fn use_models(&mut self, archive: ModelArchive) {
        self.banks = archive.detector_banks;
        self.models = Some(ModelSet {
            targets: archive.targets,
            surrogate: archive.surrogate,
            importance_sources: archive.importance_sources,
            registry: archive.registry,
        });
    }

    pub fn archive(&self) -> Option<ModelArchive> {
        self.models.as_ref().map(|m| ModelArchive {
            archive_version: ARCHIVE_VERSION,
            targets: m.targets.clone(),
            surrogate: m.surrogate.clone(),
            importance_sources: m.importance_sources.clone(),
            registry: m.registry.clone(),
            detector_banks: self.banks.clone(),
        })
    }

    fn models(&self) -> Result<&ModelSet, RunnerError> {
        self.models
            .as_ref()
            .ok_or_else(|| RunnerError::runtime("attack", "models not trained or loaded"))
    }

    /// Build per-target attack sets from the test split.
    pub fn build_attack_sets(&mut self) -> Result<(), RunnerError> {
        let models = self.models()?;
        let needs_surrogate = self.cfg.attacks.iter().any(AttackConfig::is_transfer);
        let seed = stage_seed(self.cfg.master_seed, "attack_set");
        let mut sets = BTreeMap::new();
        for (name, model) in &models.targets {
            let surrogate: Option<&dyn Classifier> = if needs_surrogate {
                Some(&models.surrogate)
            } else {
                None
            };
            let info = build_attack_set(
                &self.data.test,
                model,
                surrogate,
                self.cfg.attack_set.per_class,
                seed,
            )?;
            sets.insert(name.clone(), info);
        }
        self.attack_sets = Some(sets);
        Ok(())
    }

    /// Run every configured attack against every target model, in parallel
    /// over samples with per-sample derived seeds.
    pub fn attack(&mut self) -> Result<(), RunnerError> {
        if self.attack_sets.is_none() {
            self.build_attack_sets()?;
        }
        let models = self.models()?;
        let sets = self.attack_sets.as_ref().expect("attack sets built");
        let constraints = ConstraintSet::from_schema(&self.schema);
        let registry = &models.registry;

        // Init statistics and the correlation table come from the
        // attacker's benign data.
        let (init_mean, init_std) = column_stats(&self.data.surrogate_train);
        let mutable = self.schema.mutable_indices();
        let corr = correlation_table(&self.data.surrogate_train.rows, &mutable);
        let editable_count = mutable.len();

        let attack_stage = stage_seed(self.cfg.master_seed, "attack");
        let mut ledgers = Vec::new();
        for (model_idx, (model_name, model)) in models.targets.iter().enumerate() {
            let set = &sets[model_name];
            for (attack_idx, attack_cfg) in self.cfg.attacks.iter().enumerate() {
                let cell_seed =
                    item_seed(item_seed(attack_stage, model_idx as u64), attack_idx as u64);
                let selector = match attack_cfg {
                    AttackConfig::Transfer {
                        name,
                        selector,
                        k,
                        n_corr,
                        ..
                    } => Some(match selector {
                        SelectorConfig::Random => {
                            FeatureSelector::random(*k, *n_corr, corr.clone())
                        }
                        SelectorConfig::Importance { .. } => {
                            let source = models.importance_sources.get(name).ok_or_else(|| {
                                RunnerError::runtime(
                                    "attack",
                                    format!("missing importance source for attack {name}"),
                                )
                            })?;
                            FeatureSelector::importance(
                                source,
                                &self.data.surrogate_train.rows,
                                *k,
                                *n_corr,
                                corr.clone(),
                            )
                            .map_err(|e| RunnerError::runtime("attack", e))?
                        }
                    }),
                    _ => None,
                };

                let rows = &set.data.rows;
                let labels = &set.data.labels;
                let runs: Vec<Result<RunRecord, AttackError>> =
                    maybe_par_map_indexed(rows, |i, row| {
                        run_single_attack(SingleAttack {
                            attack: attack_cfg,
                            model,
                            surrogate: &models.surrogate,
                            selector: selector.as_ref(),
                            constraints: &constraints,
                            registry,
                            init_mean: &init_mean,
                            init_std: &init_std,
                            editable_count,
                            x: row,
                            y: labels[i],
                            sample_index: i,
                            seed: item_seed(cell_seed, i as u64),
                        })
                    });

                let mut ledger = RunLedger::default();
                let mut surrogate_evals = Vec::new();
                let mut embed_distances = Vec::new();
                for run in runs {
                    let record = run.map_err(|e| {
                        RunnerError::runtime(
                            "attack",
                            format!("{} vs {model_name}: {e}", attack_cfg.name()),
                        )
                    })?;
                    ledger.entries.push(record.entry);
                    if let Some(evals) = record.surrogate_evals {
                        surrogate_evals.push(evals);
                    }
                    if let Some(dist) = record.embed_distance {
                        embed_distances.push(dist);
                    }
                }
                ledgers.push(CellLedger {
                    attack: attack_cfg.name().to_string(),
                    model: model_name.clone(),
                    kind: if attack_cfg.is_transfer() {
                        AttackKind::Transfer
                    } else {
                        AttackKind::Query
                    },
                    ledger,
                    surrogate_evals,
                    embed_distances,
                });
            }
        }
        self.ledgers = Some(ledgers);
        Ok(())
    }

    /// Fit detector banks, compute every metric family, and assemble the
    /// report (stats block left empty).
    pub fn evaluate(&mut self) -> Result<(), RunnerError> {
        if self.attack_sets.is_none() {
            self.build_attack_sets()?;
        }
        // Detector banks on the benign reference (all pre-oversampling
        // training rows, regardless of classification correctness); banks
        // loaded from an archive are reused as-is.
        let banks = if self.cfg.detectors.enabled {
            match self.banks.take() {
                Some(banks) => Some(banks),
                None => Some(self.fit_banks(&self.data.train)?),
            }
        } else {
            None
        };

        let models = self.models()?;
        let ledgers = self
            .ledgers
            .as_ref()
            .ok_or_else(|| RunnerError::runtime("evaluate", "no ledgers: run the attack stage"))?;
        let sets = self.attack_sets.as_ref().expect("attack sets built");
        let benign = &self.data.train;

        // Per-model SHAP range tables over the benign reference.
        let mut range_tables: BTreeMap<String, (ShapRangeTable, ShapRangeTable)> = BTreeMap::new();
        if self.cfg.shap.enabled {
            for (name, model) in &models.targets {
                let csad = build_range_table(model, benign, DetectionMode::Csad)
                    .map_err(|e| RunnerError::runtime("evaluate", e))?;
                let standard = build_range_table(model, benign, DetectionMode::Standard)
                    .map_err(|e| RunnerError::runtime("evaluate", e))?;
                range_tables.insert(name.clone(), (csad, standard));
            }
        }

        let mut cells = Vec::new();
        let mut extras_map = BTreeMap::new();
        for cell_ledger in ledgers {
            let model = &models
                .targets
                .iter()
                .find(|(n, _)| n == &cell_ledger.model)
                .ok_or_else(|| {
                    RunnerError::runtime(
                        "evaluate",
                        format!("ledger references unknown model {}", cell_ledger.model),
                    )
                })?
                .1;
            let (cell, extras) =
                evaluate_cell(&self.cfg, cell_ledger, model, banks.as_ref(), &range_tables)?;
            extras_map.insert(
                (cell_ledger.attack.clone(), cell_ledger.model.clone()),
                extras,
            );
            cells.push(cell);
        }

        let report = Report {
            schema_version: 1,
            environment: Environment {
                master_seed: self.cfg.master_seed,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                created_at: now_epoch_string(),
            },
            dataset: DatasetSummary {
                rows: self.data.dataset.n_rows(),
                features: self.data.dataset.n_features(),
                class_counts: self.data.dataset.class_counts(),
                dropped_correlated: self.data.dropped.clone(),
                train_rows: self.data.train.n_rows(),
                test_rows: self.data.test.n_rows(),
            },
            models: models
                .targets
                .iter()
                .map(|(name, model)| ModelSummary {
                    name: name.clone(),
                    kind: match self.cfg.models.iter().find(|m| &m.name == name) {
                        Some(spec) => format!("{:?}", spec.kind),
                        None => "unknown".into(),
                    },
                    train_accuracy: accuracy(model, &self.data.target_train),
                    test_accuracy: accuracy(model, &self.data.test),
                })
                .collect(),
            surrogate: SurrogateSummary {
                test_accuracy: accuracy(&models.surrogate, &self.data.test),
            },
            attack_sets: sets
                .iter()
                .map(|(name, info)| {
                    (
                        name.clone(),
                        AttackSetSummary {
                            size: info.data.n_rows(),
                            per_class_requested: self.cfg.attack_set.per_class,
                            per_class_taken: info.per_class_taken.clone(),
                            filter_retention: info.filter_retention,
                            shortfalls: info.shortfalls.clone(),
                        },
                    )
                })
                .collect(),
            detectors: banks.as_ref().map(|b| DetectorSummary {
                csad_ae_fpr: b.csad_ae.detectors.iter().map(|d| d.fpr()).collect(),
                csad_if_fpr: b.csad_if.detectors.iter().map(|d| d.fpr()).collect(),
                standard_ae_fpr: b.standard_ae.detectors[0].fpr(),
                standard_if_fpr: b.standard_if.detectors[0].fpr(),
            }),
            cells,
            stats: None,
        };
        self.extras = extras_map;
        self.banks = banks;
        self.report = Some(report);
        Ok(())
    }

    fn fit_banks(&self, benign: &Dataset) -> Result<DetectorBanks, RunnerError> {
        let d = &self.cfg.detectors;
        let make_cfg = |mode: DetectionMode| -> BankConfig {
            let mut cfg = BankConfig::new(mode, stage_seed(self.cfg.master_seed, "detectors"));
            cfg.min_class_samples = d.min_class_samples;
            cfg.validation_fraction = d.validation_fraction;
            cfg.if_trees = d.if_trees;
            cfg.if_psi = d.if_psi;
            cfg.ae_train.epochs = d.ae_epochs;
            cfg.ae_train.learning_rate = d.ae_learning_rate;
            cfg.ae_train.weight_decay = d.ae_weight_decay;
            cfg.ae_train.batch_size = d.ae_batch_size;
            cfg
        };
        let (csad_ae, csad_if) = fit_matched_banks(benign, &make_cfg(DetectionMode::Csad))
            .map_err(|e| RunnerError::runtime("evaluate", e))?;
        let (standard_ae, standard_if) =
            fit_matched_banks(benign, &make_cfg(DetectionMode::Standard))
                .map_err(|e| RunnerError::runtime("evaluate", e))?;
        Ok(DetectorBanks {
            csad_ae,
            csad_if,
            standard_ae,
            standard_if,
        })
    }

    pub fn extras(&self) -> &BTreeMap<(String, String), CellExtras> {
        &self.extras
    }

    /// Write per-sample attributions of successful adversarials to
    /// `dir/plots/attributions.csv` (attack, model, sample, feature,
    /// attribution).
    pub fn emit_attributions(&self, dir: &Path) -> Result<(), RunnerError> {
        if !self.cfg.shap.enabled {
            return Ok(());
        }
        let models = self.models()?;
        let ledgers = self
            .ledgers
            .as_ref()
            .ok_or_else(|| RunnerError::runtime("evaluate", "no ledgers"))?;
        let plots = dir.join("plots");
        std::fs::create_dir_all(&plots).map_err(|e| RunnerError::runtime("evaluate", e))?;
        let mut out = String::from("attack,model,sample,feature,attribution\n");
        for cell in ledgers {
            let model = &models
                .targets
                .iter()
                .find(|(n, _)| n == &cell.model)
                .ok_or_else(|| {
                    RunnerError::runtime("evaluate", format!("unknown model {}", cell.model))
                })?
                .1;
            let successes: Vec<&LedgerEntry> = cell
                .ledger
                .entries
                .iter()
                .filter(|e| e.target_success)
                .collect();
            if successes.is_empty() {
                continue;
            }
            let rows: Vec<Vec<f64>> = successes.iter().map(|e| e.x_adv.clone()).collect();
            let ids: Vec<usize> = successes.iter().map(|e| e.sample_index).collect();
            let explanations =
                tree_shap_batch(model, &rows).map_err(|e| RunnerError::runtime("evaluate", e))?;
            let block = crate::shap::explanations_to_csv(&ids, &explanations);
            for line in block.lines().skip(1) {
                out.push_str(&format!("{},{},{line}\n", cell.attack, cell.model));
            }
        }
        std::fs::write(plots.join("attributions.csv"), out)
            .map_err(|e| RunnerError::runtime("evaluate", e))
    }
}

fn evaluate_cell(
    cfg: &ExperimentConfig,
    cell_ledger: &CellLedger,
    model: &TreeEnsemble,
    banks: Option<&DetectorBanks>,
    range_tables: &BTreeMap<String, (ShapRangeTable, ShapRangeTable)>,
) -> Result<(Cell, CellExtras), RunnerError> {
    let entries = &cell_ledger.ledger.entries;
    let success_entries: Vec<&LedgerEntry> = entries.iter().filter(|e| e.target_success).collect();
    let rates = success_rates(&cell_ledger.ledger, cell_ledger.kind)
        .map_err(|e| RunnerError::runtime("evaluate", e))?;

    let mut extras = CellExtras::default();
    let mut l0_values = Vec::new();
    let mut l2_values = Vec::new();
    let mut queries = Vec::new();
    for entry in &success_entries {
        l0_values.push(
            l0(&entry.x, &entry.x_adv).map_err(|e| RunnerError::runtime("evaluate", e))? as f64,
        );
        l2_values
            .push(l2(&entry.x, &entry.x_adv).map_err(|e| RunnerError::runtime("evaluate", e))?);
        queries.push(entry.queries);
    }
    extras.l0_values = l0_values.clone();
    extras.l2_values = l2_values.clone();

    let adv_rows: Vec<Vec<f64>> = success_entries.iter().map(|e| e.x_adv.clone()).collect();
    let predicted: Vec<usize> = adv_rows.iter().map(|r| model.predict(r)).collect();

    let feature_space_detection = match (banks, adv_rows.is_empty()) {
        (Some(banks), false) => {
            let rate = |bank: &DetectorBank| -> Result<f64, RunnerError> {
                let flags = anomaly_flags(bank, &adv_rows, &predicted)
                    .map_err(|e| RunnerError::runtime("evaluate", e))?;
                Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
            };
            Some(FeatureSpaceDetection {
                if_csad: rate(&banks.csad_if)?,
                if_standard: rate(&banks.standard_if)?,
                ae_csad: rate(&banks.csad_ae)?,
                ae_standard: rate(&banks.standard_ae)?,
            })
        }
        _ => None,
    };

    let importance_block = match (range_tables.get(&cell_ledger.model), adv_rows.is_empty()) {
        (Some((csad_table, standard_table)), false) => {
            let explanations = tree_shap_batch(model, &adv_rows)
                .map_err(|e| RunnerError::runtime("evaluate", e))?;
            let csad = importance_anomaly(csad_table, &explanations, &predicted)
                .map_err(|e| RunnerError::runtime("evaluate", e))?;
            let standard = importance_anomaly(standard_table, &explanations, &predicted)
                .map_err(|e| RunnerError::runtime("evaluate", e))?;
            extras.csad_flags = csad.counts.iter().map(|&c| c > 0).collect();
            extras.standard_flags = standard.counts.iter().map(|&c| c > 0).collect();
            extras.csad_counts = csad.counts.clone();
            extras.standard_counts = standard.counts.clone();
            Some(ImportanceBlock {
                csad_rate: csad.rate,
                csad_avg_count: csad.avg_count,
                standard_rate: standard.rate,
                standard_avg_count: standard.avg_count,
            })
        }
        _ => None,
    };

    let effort_seconds = if success_entries.is_empty() {
        None
    } else {
        let effort_cfg = &cfg.effort;
        Some(match cell_ledger.kind {
            AttackKind::Query => {
                let mean_queries = queries.iter().sum::<u64>() as f64 / queries.len() as f64;
                time_query_attack(&EffortModel {
                    queries: mean_queries,
                    t: effort_cfg.t,
                    alpha_q: effort_cfg.alpha_q,
                    beta: effort_cfg.beta,
                    t_surrogate: 0.0,
                })
            }
            AttackKind::Transfer => {
                let evals = &cell_ledger.surrogate_evals;
                let mean_evals = if evals.is_empty() {
                    0.0
                } else {
                    evals.iter().sum::<u64>() as f64 / evals.len() as f64
                };
                time_transfer_attack(&EffortModel {
                    queries: mean_evals,
                    t: effort_cfg.t,
                    alpha_q: effort_cfg.alpha_q,
                    beta: effort_cfg.beta,
                    t_surrogate: effort_cfg.t_surrogate,
                })
            }
        })
    };

    let mean_embed_distance = if cell_ledger.embed_distances.is_empty() {
        None
    } else {
        Some(
            cell_ledger.embed_distances.iter().sum::<f64>()
                / cell_ledger.embed_distances.len() as f64,
        )
    };

    let cell = Cell {
        attack: cell_ledger.attack.clone(),
        model: cell_ledger.model.clone(),
        attack_kind: match cell_ledger.kind {
            AttackKind::Query => "query".into(),
            AttackKind::Transfer => "transfer".into(),
        },
        success: rates,
        n_attacked: entries.len(),
        n_success: success_entries.len(),
        l0: Distribution::from_values(l0_values),
        l2: Distribution::from_values(l2_values),
        queries: if queries.is_empty() {
            None
        } else {
            Some(query_stats(&queries).map_err(|e| RunnerError::runtime("evaluate", e))?)
        },
        feature_space_detection,
        importance_anomaly: importance_block,
        effort_seconds,
        mean_embed_distance,
    };
    Ok((cell, extras))
}

impl Pipeline {
    /// Fill the report's statistics block from the evaluated cells.
    pub fn stats(&mut self) -> Result<(), RunnerError> {
        if !self.cfg.stats.enabled {
            return Ok(());
        }
        let ledgers = self
            .ledgers
            .as_ref()
            .ok_or_else(|| RunnerError::runtime("stats", "no ledgers"))?;
        let report = self
            .report
            .as_mut()
            .ok_or_else(|| RunnerError::runtime("stats", "no report: run evaluate first"))?;

        let attack_names: Vec<String> = self
            .cfg
            .attacks
            .iter()
            .map(|a| a.name().to_string())
            .collect();
        let transfer_names: Vec<String> = self
            .cfg
            .attacks
            .iter()
            .filter(|a| a.is_transfer())
            .map(|a| a.name().to_string())
            .collect();

        let mut per_model = BTreeMap::new();
        for spec in &self.cfg.models {
            let model_name = &spec.name;
            let mut families: BTreeMap<&str, Vec<LabeledResult>> = BTreeMap::new();
            let mut heterogeneity = BTreeMap::new();

            // Pairwise comparisons over attacks within this model.
            for (ai, a) in attack_names.iter().enumerate() {
                for b in attack_names.iter().skip(ai + 1) {
                    let ea = self.extras.get(&(a.clone(), model_name.clone()));
                    let eb = self.extras.get(&(b.clone(), model_name.clone()));
                    let (Some(ea), Some(eb)) = (ea, eb) else {
                        continue;
                    };

                    for (family, left, right) in [
                        ("l0", &ea.l0_values, &eb.l0_values),
                        ("l2", &ea.l2_values, &eb.l2_values),
                        (
                            "anomalous_count",
                            &ea.csad_counts
                                .iter()
                                .map(|&c| c as f64)
                                .collect::<Vec<f64>>(),
                            &eb.csad_counts
                                .iter()
                                .map(|&c| c as f64)
                                .collect::<Vec<f64>>(),
                        ),
                    ] {
                        if left.is_empty() || right.is_empty() {
                            continue;
                        }
                        if let Ok(result) = mann_whitney_u(left, right) {
                            families.entry(family).or_default().push(LabeledResult {
                                left: a.clone(),
                                right: b.clone(),
                                result,
                            });
                        }
                    }

                    // Proportion families from the cell ledgers.
                    let la = ledgers
                        .iter()
                        .find(|l| &l.attack == a && &l.model == model_name);
                    let lb = ledgers
                        .iter()
                        .find(|l| &l.attack == b && &l.model == model_name);
                    let (Some(la), Some(lb)) = (la, lb) else {
                        continue;
                    };
                    let (ka, na) = (
                        la.ledger
                            .entries
                            .iter()
                            .filter(|e| e.target_success)
                            .count() as u64,
                        la.ledger.entries.len() as u64,
                    );
                    let (kb, nb) = (
                        lb.ledger
                            .entries
                            .iter()
                            .filter(|e| e.target_success)
                            .count() as u64,
                        lb.ledger.entries.len() as u64,
                    );
                    if na > 0 && nb > 0 {
                        if let Ok(result) = proportions_ztest(ka, na, kb, nb) {
                            families
                                .entry("overall_sr")
                                .or_default()
                                .push(LabeledResult {
                                    left: a.clone(),
                                    right: b.clone(),
                                    result,
                                });
                        }
                    }
                    let fa = ea.csad_flags.iter().filter(|&&f| f).count() as u64;
                    let fb = eb.csad_flags.iter().filter(|&&f| f).count() as u64;
                    if !ea.csad_flags.is_empty() && !eb.csad_flags.is_empty() {
                        if let Ok(result) = proportions_ztest(
                            fa,
                            ea.csad_flags.len() as u64,
                            fb,
                            eb.csad_flags.len() as u64,
                        ) {
                            families
                                .entry("importance_rate")
                                .or_default()
                                .push(LabeledResult {
                                    left: a.clone(),
                                    right: b.clone(),
                                    result,
                                });
                        }
                    }
                }
            }

            // Holm within each family, then the transfer-group indicator.
            for (family, results) in families.iter_mut() {
                let mut stat_results: Vec<StatResult> =
                    results.iter().map(|r| r.result.clone()).collect();
                holm_adjust_results(&mut stat_results)
                    .map_err(|e| RunnerError::runtime("stats", e))?;
                for (labeled, adjusted) in results.iter_mut().zip(stat_results) {
                    labeled.result = adjusted;
                }
                let hetero = results.iter().any(|r| {
                    r.result.significant
                        && transfer_names.contains(&r.left)
                        && transfer_names.contains(&r.right)
                });
                heterogeneity.insert((*family).to_string(), hetero);
            }

            per_model.insert(
                model_name.clone(),
                ModelStats {
                    l0: families.remove("l0").unwrap_or_default(),
                    l2: families.remove("l2").unwrap_or_default(),
                    overall_sr: families.remove("overall_sr").unwrap_or_default(),
                    importance_rate: families.remove("importance_rate").unwrap_or_default(),
                    anomalous_count: families.remove("anomalous_count").unwrap_or_default(),
                    transfer_heterogeneity: heterogeneity,
                },
            );
        }

        // Paired CSAD vs standard comparisons per cell.
        let mut mcnemars = Vec::new();
        let mut wilcoxons = Vec::new();
        let mut paired_keys = Vec::new();
        for ((attack, model), extras) in &self.extras {
            if extras.csad_flags.is_empty() {
                continue;
            }
            let b = extras
                .csad_flags
                .iter()
                .zip(&extras.standard_flags)
                .filter(|(&c, &s)| c && !s)
                .count() as u64;
            let c = extras
                .csad_flags
                .iter()
                .zip(&extras.standard_flags)
                .filter(|(&cf, &s)| !cf && s)
                .count() as u64;
            let mcnemar = if b + c > 0 {
                mcnemar_exact(b, c).ok()
            } else {
                None
            };
            let diffs: Vec<f64> = extras
                .csad_counts
                .iter()
                .zip(&extras.standard_counts)
                .map(|(&a, &b)| a as f64 - b as f64)
                .collect();
            let wilcoxon = wilcoxon_signed_rank(&diffs).ok();
            paired_keys.push((attack.clone(), model.clone()));
            mcnemars.push(mcnemar);
            wilcoxons.push(wilcoxon);
        }
        holm_over_options(&mut mcnemars).map_err(|e| RunnerError::runtime("stats", e))?;
        holm_over_options(&mut wilcoxons).map_err(|e| RunnerError::runtime("stats", e))?;
        let csad_vs_standard = paired_keys
            .into_iter()
            .zip(mcnemars.into_iter().zip(wilcoxons))
            .map(|((attack, model), (mcnemar, wilcoxon))| PairedComparison {
                attack,
                model,
                mcnemar,
                wilcoxon,
            })
            .collect();

        report.stats = Some(StatsBlock {
            per_model,
            csad_vs_standard,
        });
        Ok(())
    }
}

/// The four detector banks the evaluation stage uses: both kinds, both
/// modes, with the isolation-forest thresholds FPR-matched to the
/// autoencoders on shared validation splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBanks {
    pub csad_ae: DetectorBank,
    pub csad_if: DetectorBank,
    pub standard_ae: DetectorBank,
    pub standard_if: DetectorBank,
}

fn holm_over_options(results: &mut [Option<StatResult>]) -> Result<(), crate::stats::StatsError> {
    let mut present: Vec<StatResult> = results.iter().flatten().cloned().collect();
    holm_adjust_results(&mut present)?;
    let mut iter = present.into_iter();
    for slot in results.iter_mut() {
        if slot.is_some() {
            *slot = iter.next();
        }
    }
    Ok(())
}

fn accuracy(model: &dyn Classifier, data: &Dataset) -> f64 {
    if data.n_rows() == 0 {
        return 0.0;
    }
    data.rows
        .iter()
        .zip(&data.labels)
        .filter(|(row, &label)| model.predict(row) == label)
        .count() as f64
        / data.n_rows() as f64
}

fn column_stats(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let d = data.n_features();
    let n = data.n_rows() as f64;
    let mut mean = vec![0.0; d];
    for row in &data.rows {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0; d];
    for row in &data.rows {
        for ((s, &m), &v) in std.iter_mut().zip(&mean).zip(row) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n).sqrt().max(1e-9));
    (mean, std)
}

fn now_epoch_string() -> String {
    use std::time::{SystemTime, UNIX_EPOCH};
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    format!("{}.{:09}", now.as_secs(), now.subsec_nanos())
}

struct SingleAttack<'a> {
    attack: &'a AttackConfig,
    model: &'a TreeEnsemble,
    surrogate: &'a SurrogateModel,
    selector: Option<&'a FeatureSelector>,
    constraints: &'a ConstraintSet,
    registry: &'a DependencyRegistry,
    init_mean: &'a [f64],
    init_std: &'a [f64],
    editable_count: usize,
    x: &'a [f64],
    y: usize,
    sample_index: usize,
    seed: u64,
}

struct RunRecord {
    entry: LedgerEntry,
    surrogate_evals: Option<u64>,
    embed_distance: Option<f64>,
}

fn run_single_attack(ctx: SingleAttack<'_>) -> Result<RunRecord, AttackError> {
    let started = Instant::now();
    let handle = BlackBoxHandle::new(ctx.model);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    match ctx.attack {
        AttackConfig::Boundary {
            max_iter,
            epsilon,
            delta,
            num_trials,
            step_adaptation,
            max_init_steps,
            ..
        } => {
            let mut cfg = BoundaryConfig::new(ctx.init_mean.to_vec(), ctx.init_std.to_vec());
            cfg.max_iter = *max_iter;
            cfg.epsilon = *epsilon;
            cfg.delta = *delta;
            cfg.num_trials = *num_trials;
            cfg.step_adaptation = *step_adaptation;
            cfg.max_init_steps = *max_init_steps;
            let outcome = boundary_attack(
                &handle,
                ctx.x,
                ctx.y,
                &cfg,
                ctx.constraints,
                ctx.registry,
                &mut rng,
            );
            finish_query_run(ctx, outcome, &handle, started)
        }
        AttackConfig::Hopskipjump {
            max_iter,
            max_eval,
            init_eval,
            init_size,
            ..
        } => {
            let mut cfg = HsjConfig::new(ctx.init_mean.to_vec(), ctx.init_std.to_vec());
            cfg.max_iter = *max_iter;
            cfg.max_eval = *max_eval;
            cfg.init_eval = *init_eval;
            cfg.init_size = *init_size;
            let outcome = hopskipjump_attack(
                &handle,
                ctx.x,
                ctx.y,
                &cfg,
                ctx.constraints,
                ctx.registry,
                &mut rng,
            );
            finish_query_run(ctx, outcome, &handle, started)
        }
        AttackConfig::Transfer {
            alpha_reg,
            learning_rate,
            inner_steps,
            lambda_max_l0,
            ..
        } => {
            let mut cfg = TransferConfig::new(lambda_max_l0.unwrap_or(ctx.editable_count).max(1));
            cfg.alpha_reg = *alpha_reg;
            cfg.learning_rate = *learning_rate;
            cfg.inner_steps = *inner_steps;
            let selector = ctx.selector.expect("transfer attack carries a selector");
            let result = transfer_attack(
                ctx.surrogate,
                &handle,
                ctx.x,
                ctx.y,
                &cfg,
                selector,
                ctx.constraints,
                ctx.registry,
                &mut rng,
            )?;
            Ok(RunRecord {
                entry: LedgerEntry {
                    sample_index: ctx.sample_index,
                    x: ctx.x.to_vec(),
                    x_adv: result.outcome.x_adv.clone(),
                    surrogate_success: Some(result.surrogate_success),
                    target_success: result.outcome.success,
                    queries: result.outcome.queries,
                    wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
                    l2_trace: result.outcome.l2_trace.clone(),
                },
                surrogate_evals: Some(result.surrogate_evals),
                embed_distance: Some(result.embed_distance),
            })
        }
    }
}

fn finish_query_run(
    ctx: SingleAttack<'_>,
    outcome: Result<crate::attacks::AttackOutcome, AttackError>,
    handle: &BlackBoxHandle<'_>,
    started: Instant,
) -> Result<RunRecord, AttackError> {
    let entry = match outcome {
        Ok(outcome) => LedgerEntry {
            sample_index: ctx.sample_index,
            x: ctx.x.to_vec(),
            x_adv: outcome.x_adv,
            surrogate_success: None,
            target_success: outcome.success,
            queries: outcome.queries,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            l2_trace: outcome.l2_trace,
        },
        // An exhausted init budget is a failed attack, not a pipeline error.
        Err(AttackError::InitFailed) => LedgerEntry {
            sample_index: ctx.sample_index,
            x: ctx.x.to_vec(),
            x_adv: ctx.x.to_vec(),
            surrogate_success: None,
            target_success: false,
            queries: handle.queries(),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            l2_trace: vec![],
        },
        Err(e) => return Err(e),
    };
    Ok(RunRecord {
        entry,
        surrogate_evals: None,
        embed_distance: None,
    })
}

/// Run the full pipeline: preprocess, train, attack, evaluate, stats.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<Report, RunnerError> {
    let mut pipeline = Pipeline::load(cfg)?;
    pipeline.train()?;
    pipeline.attack()?;
    pipeline.evaluate()?;
    pipeline.stats()?;
    Ok(pipeline.report.expect("evaluate populated the report"))
}

/// Persist ledgers alongside the report so `attack` / `evaluate` / `stats`
/// can resume.
pub fn save_ledgers(ledgers: &[CellLedger], path: &Path) -> Result<(), RunnerError> {
    let text = serde_json::to_string(ledgers).map_err(|e| RunnerError::runtime("attack", e))?;
    std::fs::write(path, text).map_err(|e| RunnerError::runtime("attack", e))
}

pub fn load_ledgers(path: &Path) -> Result<Vec<CellLedger>, RunnerError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunnerError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| RunnerError::Data(e.to_string()))
}
