//! Dataset ingestion, experiment execution and result export.

mod config;
mod export;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{DatasetSpec, ExperimentConfig, FeatureConfig, RunSpec, SuiteConfig};
pub use export::{
    export_results, read_feature_csv, write_feature_csv, write_json, write_predictions_csv,
    write_summary_csv, ExportFormat,
};

use crate::classifier::{
    knn_train, score, ClassifierError, Confusion, Features, KnnModel, Label, LabeledSample,
};
use crate::fitting::{fit_decay, DecayParams, FitError};
use crate::imageio::{center_crop, load_image, recompress_jpeg, to_grayscale, ImageError, ImageTensor};
use crate::spectral::{default_bin_count, dft2, reduced_spectrum, Normalization, SpectralError};

/// Fraction of images in a dataset allowed to fail before the run aborts.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset {name}: found {found} images, need {needed}")]
    InsufficientImages {
        name: String,
        found: usize,
        needed: usize,
    },
    #[error("dataset {name}: {failed} of {total} images failed (first: {first})")]
    TooManyFailures {
        name: String,
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("image {width}x{height} does not match resolution {resolution}")]
    UnexpectedResolution {
        width: usize,
        height: usize,
        resolution: usize,
    },
    #[error("experiment {0:?} referenced by model_from has not run yet")]
    UnknownModel(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grayscale -> DFT -> reduced spectrum -> tail fit, after the optional crop
/// and JPEG round trip.
pub fn extract_features(
    img: &ImageTensor<f64>,
    cfg: &FeatureConfig,
) -> Result<DecayParams<f64>, HarnessError> {
    let mut img = match cfg.crop_to {
        Some(size) => center_crop(img, size)?,
        None => img.clone(),
    };
    if cfg.quality.get() < 100 {
        img = recompress_jpeg(&img, cfg.quality)?;
    }
    let gray = to_grayscale(&img)?;
    let spec = dft2(&gray)?;
    let bins = cfg
        .n_bins
        .unwrap_or_else(|| default_bin_count(gray.width(), gray.height()));
    let rs = reduced_spectrum(&spec, bins, Normalization::DcGain)?;
    Ok(fit_decay(&rs, cfg.k_t)?)
}

/// One image's fitted features, as written to feature CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub image_id: String,
    pub b1: f64,
    pub b2: f64,
    pub k_t: f64,
    pub n_points: usize,
    pub rss: f64,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub source_tag: Option<String>,
}

impl FeatureRow {
    pub fn new(image_id: String, p: &DecayParams<f64>) -> Self {
        Self {
            image_id,
            b1: p.b1,
            b2: p.b2,
            k_t: p.k_t,
            n_points: p.n_points,
            rss: p.rss,
            label: None,
            source_tag: None,
        }
    }

    pub fn labeled(mut self, label: Label, tag: &str) -> Self {
        self.label = Some(label);
        self.source_tag = Some(tag.to_string());
        self
    }

    pub fn features(&self) -> Features<f64> {
        Features::new(self.b1, self.b2)
    }

    /// `None` for unlabeled rows.
    pub fn sample(&self) -> Option<LabeledSample<f64>> {
        Some(LabeledSample {
            image_id: self.image_id.clone(),
            features: self.features(),
            label: self.label?,
            source_tag: self.source_tag.clone().unwrap_or_default(),
        })
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// PNG/JPEG files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Runs [`extract_features`] over files in parallel, preserving order. Each
/// entry is the image id paired with its outcome.
pub fn extract_many(
    files: &[PathBuf],
    id_prefix: &str,
    resolution: Option<usize>,
    cfg: &FeatureConfig,
) -> Vec<(String, Result<DecayParams<f64>, HarnessError>)> {
    files
        .par_iter()
        .map(|path| {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let id = if id_prefix.is_empty() {
                name
            } else {
                format!("{id_prefix}/{name}")
            };
            let result = load_image::<f64>(path)
                .map_err(HarnessError::from)
                .and_then(|img| {
                    if let Some(r) = resolution {
                        if img.width() != r || img.height() != r {
                            return Err(HarnessError::UnexpectedResolution {
                                width: img.width(),
                                height: img.height(),
                                resolution: r,
                            });
                        }
                    }
                    extract_features(&img, cfg)
                });
            (id, result)
        })
        .collect()
}

/// Splits of one dataset after feature extraction.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub train: Vec<LabeledSample<f64>>,
    pub test: Vec<LabeledSample<f64>>,
    pub train_rows: Vec<FeatureRow>,
    pub test_rows: Vec<FeatureRow>,
    /// `(image_id, error)` for images that were skipped.
    pub skipped: Vec<(String, String)>,
}

fn duplicate<T: Clone>(items: Vec<T>, target: Option<usize>) -> Vec<T> {
    match target {
        Some(n) if !items.is_empty() && n > items.len() => {
            items.iter().cycle().take(n).cloned().collect()
        }
        _ => items,
    }
}

/// Loads a dataset, extracts features and splits it: the first
/// `train_count` files (in name order, or seeded shuffle order) train, the
/// next `test_count` test. Failed images are skipped unless more than
/// [`MAX_FAILURE_RATE`] of them fail.
pub fn ingest(spec: &DatasetSpec, cfg: &ExperimentConfig) -> Result<Ingested, HarnessError> {
    spec.validate()?;
    let mut files = list_images(&spec.root).map_err(|e| match e {
        HarnessError::Io(_) => HarnessError::InsufficientImages {
            name: spec.name.clone(),
            found: 0,
            needed: spec.train_count + spec.test_count,
        },
        other => other,
    })?;
    let needed = spec.train_count + spec.test_count;
    if files.len() < needed {
        return Err(HarnessError::InsufficientImages {
            name: spec.name.clone(),
            found: files.len(),
            needed,
        });
    }
    if cfg.shuffle {
        files.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    }
    files.truncate(needed);

    let outcomes = extract_many(&files, &spec.name, Some(cfg.resolution), &cfg.features());
    let failures: Vec<(String, String)> = outcomes
        .iter()
        .filter_map(|(id, r)| r.as_ref().err().map(|e| (id.clone(), e.to_string())))
        .collect();
    if failures.len() as f64 > MAX_FAILURE_RATE * needed as f64 {
        return Err(HarnessError::TooManyFailures {
            name: spec.name.clone(),
            failed: failures.len(),
            total: needed,
            first: format!("{}: {}", failures[0].0, failures[0].1),
        });
    }
    for (id, err) in &failures {
        log::warn!("skipping {id}: {err}");
    }

    let mut out = Ingested {
        skipped: failures,
        ..Default::default()
    };
    for (pos, (id, result)) in outcomes.into_iter().enumerate() {
        let Ok(params) = result else { continue };
        let row = FeatureRow::new(id, &params).labeled(spec.label, &spec.source_tag);
        let sample = row.sample().expect("row is labeled");
        if pos < spec.train_count {
            out.train.push(sample);
            out.train_rows.push(row);
        } else {
            out.test.push(sample);
            out.test_rows.push(row);
        }
    }
    out.train = duplicate(out.train, spec.duplicate_to);
    out.test = duplicate(out.test, spec.duplicate_to);
    out.train_rows = duplicate(out.train_rows, spec.duplicate_to);
    out.test_rows = duplicate(out.test_rows, spec.duplicate_to);
    Ok(out)
}

/// A test image's features with its true and predicted label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub image_id: String,
    pub source_tag: String,
    pub b1: f64,
    pub b2: f64,
    pub predicted: Label,
    pub actual: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub overall_accuracy: f64,
    pub per_tag_accuracy: BTreeMap<String, f64>,
    pub confusion: Confusion,
    pub n_train: usize,
    pub n_test: usize,
    pub predictions: Vec<PredictionRow>,
    pub train_features: Vec<FeatureRow>,
    pub skipped: Vec<(String, String)>,
    /// Analysis choices that are not part of the config.
    pub metadata: BTreeMap<String, String>,
}

/// Fixed analysis choices recorded alongside results.
pub fn analysis_metadata() -> BTreeMap<String, String> {
    let w = crate::imageio::GRAYSCALE_WEIGHTS;
    [
        ("grayscale", format!("BT.601 {}/{}/{}, rounded half-up", w[0], w[1], w[2])),
        ("bin_statistic", "mean of |F| / DC gain, bins (lo, hi] on k_r".to_string()),
        ("bin_count", "n_bins if set, else floor(max(m, n) / 2) and at least 8".to_string()),
        ("fit", "OLS of ln c on ln(k_r/k_T), unweighted".to_string()),
        ("knn_metric", "euclidean on z-scored (log10 b1, b2)".to_string()),
        ("jpeg", "IJG tables; 4:2:0 below quality 95, 4:4:4 at 95 and above".to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Ingests every dataset named in `cfg`.
pub fn ingest_all(cfg: &ExperimentConfig) -> Result<Vec<Ingested>, HarnessError> {
    cfg.datasets.iter().map(|d| ingest(d, cfg)).collect()
}

/// Scores `model` on the union of the test splits.
pub fn evaluate_ingested(
    cfg: &ExperimentConfig,
    model: &KnnModel<f64>,
    data: &[Ingested],
) -> Result<ExperimentResult, HarnessError> {
    let test: Vec<LabeledSample<f64>> = data.iter().flat_map(|d| d.test.clone()).collect();
    if test.is_empty() {
        return Err(ClassifierError::EmptyTestSet.into());
    }
    let predicted = test
        .iter()
        .map(|s| model.predict(s.features))
        .collect::<Result<Vec<_>, _>>()?;
    let report = score(&test, &predicted);
    let predictions = test
        .iter()
        .zip(&predicted)
        .map(|(s, &p)| PredictionRow {
            image_id: s.image_id.clone(),
            source_tag: s.source_tag.clone(),
            b1: s.features.b1,
            b2: s.features.b2,
            predicted: p,
            actual: s.label,
        })
        .collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        overall_accuracy: report.overall,
        per_tag_accuracy: report.per_tag,
        confusion: report.confusion,
        n_train: model.training.len(),
        n_test: test.len(),
        predictions,
        train_features: data.iter().flat_map(|d| d.train_rows.clone()).collect(),
        skipped: data.iter().flat_map(|d| d.skipped.clone()).collect(),
        metadata: analysis_metadata(),
    })
}

/// Trains on the union of train splits and evaluates on the union of test
/// splits. Returns the trained model alongside the result.
pub fn run_experiment(
    cfg: &ExperimentConfig,
) -> Result<(ExperimentResult, KnnModel<f64>), HarnessError> {
    cfg.validate()?;
    let data = ingest_all(cfg)?;
    let train: Vec<LabeledSample<f64>> = data.iter().flat_map(|d| d.train.clone()).collect();
    let model = knn_train(&train, cfg.k)?;
    let result = evaluate_ingested(cfg, &model, &data)?;
    Ok((result, model))
}

/// Evaluates a previously trained model on this config's test splits.
pub fn run_with_model(
    cfg: &ExperimentConfig,
    model: &KnnModel<f64>,
) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let data = ingest_all(cfg)?;
    evaluate_ingested(cfg, model, &data)
}

/// Runs every experiment of a suite in order, honoring `model_from`.
pub fn run_suite(suite: &SuiteConfig) -> Result<Vec<ExperimentResult>, HarnessError> {
    let mut models: BTreeMap<String, KnnModel<f64>> = BTreeMap::new();
    let mut results = Vec::new();
    for cfg in suite.experiments() {
        let result = match &cfg.model_from {
            Some(name) => {
                let model = models
                    .get(name)
                    .ok_or_else(|| HarnessError::UnknownModel(name.clone()))?;
                run_with_model(&cfg, model)?
            }
            None => {
                let (result, model) = run_experiment(&cfg)?;
                models.insert(cfg.name.clone(), model);
                result
            }
        };
        log::info!(
            "{}: overall accuracy {:.4} on {} test images",
            cfg.name,
            result.overall_accuracy,
            result.n_test
        );
        results.push(result);
    }
    Ok(results)
}
