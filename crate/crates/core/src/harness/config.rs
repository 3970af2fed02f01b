use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{Label, DEFAULT_K};
use crate::fitting::DEFAULT_K_T;
use crate::imageio::CompressionQuality;

use super::HarnessError;

/// One directory of images sharing a label and generator tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub root: PathBuf,
    pub label: Label,
    pub source_tag: String,
    pub train_count: usize,
    pub test_count: usize,
    /// Replicate both splits round-robin up to this many samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_to: Option<usize>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.train_count == 0 || self.test_count == 0 {
            return Err(HarnessError::Config(format!(
                "dataset {}: train_count and test_count must be at least 1",
                self.name
            )));
        }
        if let Some(d) = self.duplicate_to {
            if d < self.train_count.max(self.test_count) {
                return Err(HarnessError::Config(format!(
                    "dataset {}: duplicate_to {d} is smaller than a split",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn default_quality() -> CompressionQuality {
    CompressionQuality::MAX
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_k_t() -> f64 {
    DEFAULT_K_T
}

/// Everything that determines one row of the experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub datasets: Vec<DatasetSpec>,
    /// Native side length every input image must have.
    pub resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_to: Option<usize>,
    #[serde(default = "default_quality")]
    pub quality: CompressionQuality,
    #[serde(default = "default_k_t")]
    pub k_t: f64,
    /// Radial bins; defaults to half the analyzed side length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Shuffle each dataset's file list with `seed` before splitting.
    #[serde(default)]
    pub shuffle: bool,
    /// Evaluate with the model trained by the named earlier experiment
    /// instead of training a fresh one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_from: Option<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if let Some(c) = self.crop_to {
            if c > self.resolution {
                return Err(HarnessError::Config(format!(
                    "crop_to {c} exceeds resolution {}",
                    self.resolution
                )));
            }
        }
        if !(self.k_t > 0.0 && self.k_t < 1.0) {
            return Err(HarnessError::Config(format!("k_t {} outside (0, 1)", self.k_t)));
        }
        for d in &self.datasets {
            d.validate()?;
        }
        let has = |l: Label| self.datasets.iter().any(|d| d.label == l);
        if !has(Label::Real) || !has(Label::Fake) {
            return Err(HarnessError::Config(
                "need at least one real and one fake dataset".into(),
            ));
        }
        Ok(())
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            crop_to: self.crop_to,
            quality: self.quality,
            k_t: self.k_t,
            n_bins: self.n_bins,
        }
    }
}

/// Per-image pipeline settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub crop_to: Option<usize>,
    pub quality: CompressionQuality,
    pub k_t: f64,
    pub n_bins: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            crop_to: None,
            quality: CompressionQuality::MAX,
            k_t: DEFAULT_K_T,
            n_bins: None,
        }
    }
}

/// Overrides applied to the shared suite settings for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub name: String,
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub crop_to: Option<usize>,
    #[serde(default)]
    pub quality: Option<CompressionQuality>,
    #[serde(default)]
    pub k_t: Option<f64>,
    #[serde(default)]
    pub model_from: Option<String>,
}

/// A config document: shared settings plus a list of runs. Without `runs`
/// the shared settings describe a single experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    #[serde(flatten)]
    pub base: ExperimentConfig,
    #[serde(default)]
    pub runs: Vec<RunSpec>,
}

impl SuiteConfig {
    /// Parses TOML (or JSON for `.json` files); dataset roots are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: SuiteConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        };
        let base_dir = path.parent().unwrap_or(Path::new("."));
        for d in &mut cfg.base.datasets {
            if d.root.is_relative() {
                d.root = base_dir.join(&d.root);
            }
        }
        Ok(cfg)
    }

    pub fn experiments(&self) -> Vec<ExperimentConfig> {
        if self.runs.is_empty() {
            let mut only = self.base.clone();
            if only.name.is_empty() {
                only.name = "experiment".into();
            }
            return vec![only];
        }
        self.runs
            .iter()
            .map(|r| {
                let mut e = self.base.clone();
                e.name = r.name.clone();
                if let Some(v) = r.resolution {
                    e.resolution = v;
                }
                if r.crop_to.is_some() {
                    e.crop_to = r.crop_to;
                }
                if let Some(q) = r.quality {
                    e.quality = q;
                }
                if let Some(k) = r.k_t {
                    e.k_t = k;
                }
                if r.model_from.is_some() {
                    e.model_from = r.model_from.clone();
                }
                e
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
resolution = 64
k = 3
seed = 9

[[datasets]]
name = "real"
root = "real"
label = "real"
source_tag = "real"
train_count = 4
test_count = 6

[[datasets]]
name = "gan"
root = "/abs/gan"
label = "fake"
source_tag = "gan"
train_count = 2
test_count = 3
duplicate_to = 6

[[runs]]
name = "A"

[[runs]]
name = "B"
quality = 85
crop_to = 48
"#;

    #[test]
    fn parses_suite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, DOC).unwrap();
        let suite = SuiteConfig::load(&path).unwrap();
        assert_eq!(suite.base.datasets[0].root, dir.path().join("real"));
        assert_eq!(suite.base.datasets[1].root, PathBuf::from("/abs/gan"));
        let ex = suite.experiments();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].quality.get(), 100);
        assert_eq!(ex[0].k_t, 0.75);
        assert_eq!(ex[1].quality.get(), 85);
        assert_eq!(ex[1].crop_to, Some(48));
        assert_eq!(ex[1].k, 3);
        for e in &ex {
            e.validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut suite: SuiteConfig = toml::from_str(DOC).unwrap();
        suite.base.crop_to = Some(65);
        assert!(suite.base.validate().is_err());
        suite.base.crop_to = None;
        suite.base.datasets[1].duplicate_to = Some(2);
        assert!(suite.base.validate().is_err());
        suite.base.datasets[1].duplicate_to = None;
        suite.base.datasets.truncate(1);
        assert!(suite.base.validate().is_err());
        assert!(toml::from_str::<SuiteConfig>("resolution = 8\ndatasets = []\nquality = 0").is_err());
    }
}
