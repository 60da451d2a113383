//! Report assembly and emission: one structured JSON document per
//! experiment plus tidy CSVs for plotting (per-sample L0/L2 rows and
//! detection-rate bars).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{QueryStats, SuccessRates};
use crate::stats::StatResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub environment: Environment,
    pub dataset: DatasetSummary,
    pub models: Vec<ModelSummary>,
    pub surrogate: SurrogateSummary,
    pub attack_sets: BTreeMap<String, AttackSetSummary>,
    pub detectors: Option<DetectorSummary>,
    pub cells: Vec<Cell>,
    /// Absent when the stats stage is disabled or has not run.
    pub stats: Option<StatsBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub master_seed: u64,
    pub crate_version: String,
    /// Wall-clock stamp; the only non-deterministic field in the report.
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub features: usize,
    pub class_counts: Vec<usize>,
    pub dropped_correlated: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub kind: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSummary {
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSetSummary {
    pub size: usize,
    pub per_class_requested: usize,
    pub per_class_taken: Vec<usize>,
    /// Share of test rows that survived the correctly-classified filter.
    pub filter_retention: f64,
    pub shortfalls: Vec<ClassShortfall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShortfall {
    pub class: usize,
    pub requested: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    /// Per class: calibrated autoencoder / isolation-forest validation FPRs.
    pub csad_ae_fpr: Vec<f64>,
    pub csad_if_fpr: Vec<f64>,
    pub standard_ae_fpr: f64,
    pub standard_if_fpr: f64,
}

/// One (attack, target model) result block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub attack: String,
    pub model: String,
    pub attack_kind: String,
    pub success: SuccessRates,
    pub n_attacked: usize,
    pub n_success: usize,
    /// Perturbation and quality blocks cover successful adversarials only.
    pub l0: Option<Distribution>,
    pub l2: Option<Distribution>,
    pub queries: Option<QueryStats>,
    pub feature_space_detection: Option<FeatureSpaceDetection>,
    pub importance_anomaly: Option<ImportanceBlock>,
    pub effort_seconds: Option<f64>,
    pub mean_embed_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub values: Vec<f64>,
    pub quartiles: [f64; 3],
}

impl Distribution {
    pub fn from_values(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
        let q = |f: f64| -> f64 {
            let pos = f * (values.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            if lo == hi {
                values[lo]
            } else {
                values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
            }
        };
        Some(Distribution {
            quartiles: [q(0.25), q(0.5), q(0.75)],
            values,
        })
    }

    pub fn median(&self) -> f64 {
        self.quartiles[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpaceDetection {
    pub if_csad: f64,
    pub if_standard: f64,
    pub ae_csad: f64,
    pub ae_standard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceBlock {
    pub csad_rate: f64,
    pub csad_avg_count: f64,
    pub standard_rate: f64,
    pub standard_avg_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBlock {
    /// Per target model: pairwise attack comparisons per metric family,
    /// Holm-adjusted within each family.
    pub per_model: BTreeMap<String, ModelStats>,
    /// Paired CSAD-vs-standard tests on the importance-anomaly metrics.
    pub csad_vs_standard: Vec<PairedComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub l0: Vec<LabeledResult>,
    pub l2: Vec<LabeledResult>,
    pub overall_sr: Vec<LabeledResult>,
    pub importance_rate: Vec<LabeledResult>,
    pub anomalous_count: Vec<LabeledResult>,
    /// Whether any Holm-significant difference exists inside the
    /// transferability group, per family.
    pub transfer_heterogeneity: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledResult {
    pub left: String,
    pub right: String,
    #[serde(flatten)]
    pub result: StatResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub attack: String,
    pub model: String,
    pub mcnemar: Option<StatResult>,
    pub wilcoxon: Option<StatResult>,
}

#[derive(Debug)]
pub enum ReportError {
    Io(String),
    Serialize(String),
}

impl fmt::Display for ReportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportError::Io(msg) => write!(f, "report io error: {msg}"),
            ReportError::Serialize(msg) => write!(f, "report serialization error: {msg}"),
        }
    }
}

impl std::error::Error for ReportError {}

pub fn report_to_json(report: &Report) -> Result<String, ReportError> {
    serde_json::to_string_pretty(report).map_err(|e| ReportError::Serialize(e.to_string()))
}

pub fn report_from_json(text: &str) -> Result<Report, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Serialize(e.to_string()))
}

/// Write `report.json` into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|e| ReportError::Io(e.to_string()))?;
    let path = dir.join("report.json");
    std::fs::write(&path, report_to_json(report)?)
        .map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))
}

/// Write tidy plot CSVs into `dir/plots`: one row per successful sample per
/// perturbation metric, and one row per detection-rate bar.
pub fn emit_plot_data(report: &Report, dir: &Path) -> Result<(), ReportError> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| ReportError::Io(e.to_string()))?;

    let mut norms = String::from("attack,model,metric,sample,value\n");
    for cell in &report.cells {
        for (metric, dist) in [("l0", &cell.l0), ("l2", &cell.l2)] {
            if let Some(dist) = dist {
                for (i, v) in dist.values.iter().enumerate() {
                    norms.push_str(&format!(
                        "{},{},{},{},{}\n",
                        cell.attack, cell.model, metric, i, v
                    ));
                }
            }
        }
    }
    std::fs::write(plots.join("perturbation_norms.csv"), norms)
        .map_err(|e| ReportError::Io(e.to_string()))?;

    let mut rates = String::from("attack,model,detector,mode,rate\n");
    for cell in &report.cells {
        if let Some(fsd) = &cell.feature_space_detection {
            for (detector, mode, rate) in [
                ("if", "csad", fsd.if_csad),
                ("if", "standard", fsd.if_standard),
                ("ae", "csad", fsd.ae_csad),
                ("ae", "standard", fsd.ae_standard),
            ] {
                rates.push_str(&format!(
                    "{},{},{},{},{}\n",
                    cell.attack, cell.model, detector, mode, rate
                ));
            }
        }
        if let Some(imp) = &cell.importance_anomaly {
            for (mode, rate) in [("csad", imp.csad_rate), ("standard", imp.standard_rate)] {
                rates.push_str(&format!(
                    "{},{},shap,{},{}\n",
                    cell.attack, cell.model, mode, rate
                ));
            }
        }
    }
    std::fs::write(plots.join("detection_rates.csv"), rates)
        .map_err(|e| ReportError::Io(e.to_string()))
}
