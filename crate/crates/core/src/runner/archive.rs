//! Versioned textual model archive: every fitted model the pipeline needs
//! to resume from (targets, surrogate, importance sources, dependency
//! regressors), serialized at full precision.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coherence::DependencyRegistry;
use crate::learners::{SurrogateModel, TreeEnsemble};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub archive_version: u32,
    /// (name, model) in configuration order.
    pub targets: Vec<(String, TreeEnsemble)>,
    pub surrogate: SurrogateModel,
    /// Importance-source ensembles keyed by the attack that uses them.
    pub importance_sources: BTreeMap<String, TreeEnsemble>,
    pub registry: DependencyRegistry,
    /// Calibrated detector banks; present once the evaluate stage has run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_banks: Option<crate::runner::DetectorBanks>,
}

#[derive(Debug)]
pub enum ArchiveError {
    Io(String),
    Format(String),
    VersionMismatch { expected: u32, got: u32 },
}

impl fmt::Display for ArchiveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchiveError::Io(msg) => write!(f, "archive io error: {msg}"),
            ArchiveError::Format(msg) => write!(f, "archive format error: {msg}"),
            ArchiveError::VersionMismatch { expected, got } => {
                write!(f, "archive version {got}, expected {expected}")
            }
        }
    }
}

impl std::error::Error for ArchiveError {}

pub fn save_models(archive: &ModelArchive, path: &Path) -> Result<(), ArchiveError> {
    let text = serde_json::to_string(archive).map_err(|e| ArchiveError::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| ArchiveError::Io(format!("{}: {e}", path.display())))
}

pub fn load_models(path: &Path) -> Result<ModelArchive, ArchiveError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ArchiveError::Io(format!("{}: {e}", path.display())))?;
    let archive: ModelArchive =
        serde_json::from_str(&text).map_err(|e| ArchiveError::Format(e.to_string()))?;
    if archive.archive_version != ARCHIVE_VERSION {
        return Err(ArchiveError::VersionMismatch {
            expected: ARCHIVE_VERSION,
            got: archive.archive_version,
        });
    }
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{EnsembleKind, SurrogateArch, TreeNode};

    #[test]
    fn archive_round_trips_exactly() {
        let ensemble = TreeEnsemble {
            kind: EnsembleKind::GradientBoosting,
            trees: vec![TreeNode::Internal {
                feature: 0,
                threshold: 0.123_456_789_012_345_67,
                left: Box::new(TreeNode::Leaf {
                    value: -1.5e-17,
                    weight: 3.0,
                }),
                right: Box::new(TreeNode::Leaf {
                    value: 2.0 / 3.0,
                    weight: 4.0,
                }),
                weight: 7.0,
            }],
            base_score: (0.3f64).ln(),
            learning_rate: 0.1,
            n_features: 2,
        };
        let archive = ModelArchive {
            archive_version: ARCHIVE_VERSION,
            targets: vec![("gb".into(), ensemble.clone())],
            surrogate: SurrogateModel::new(2, &SurrogateArch::default(), 3).unwrap(),
            importance_sources: BTreeMap::from([("imp".into(), ensemble)]),
            registry: DependencyRegistry::empty(2),
            detector_banks: None,
        };
        let dir = std::env::temp_dir().join("tabadv_archive_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("models.json");
        save_models(&archive, &path).unwrap();
        let back = load_models(&path).unwrap();
        assert_eq!(archive, back);
    }
}
