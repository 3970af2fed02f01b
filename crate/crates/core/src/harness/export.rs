use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentResult, FeatureRow, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per experiment: settings, counts, overall accuracy, then one
/// column per generator tag (union over all results, sorted).
pub fn write_summary_csv<W: Write>(
    results: &[ExperimentResult],
    out: W,
) -> Result<(), HarnessError> {
    let tags: BTreeSet<&str> = results
        .iter()
        .flat_map(|r| r.per_tag_accuracy.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "experiment".to_string(),
        "resolution".into(),
        "crop_to".into(),
        "quality".into(),
        "k_t".into(),
        "k".into(),
        "n_train".into(),
        "n_test".into(),
        "overall".into(),
    ];
    header.extend(tags.iter().map(|t| format!("acc_{t}")));
    w.write_record(&header)?;
    for r in results {
        let c = &r.config;
        let mut row = vec![
            c.name.clone(),
            c.resolution.to_string(),
            opt(c.crop_to),
            c.quality.get().to_string(),
            c.k_t.to_string(),
            c.k.to_string(),
            r.n_train.to_string(),
            r.n_test.to_string(),
            r.overall_accuracy.to_string(),
        ];
        row.extend(tags.iter().map(|t| opt(r.per_tag_accuracy.get(*t))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-test-image rows: `image_id,source_tag,b1,b2,predicted,actual`.
pub fn write_predictions_csv<W: Write>(
    result: &ExperimentResult,
    out: W,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for row in &result.predictions {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Feature rows: `image_id,b1,b2,k_t,n_points,rss,label,source_tag`.
pub fn write_feature_csv<W: Write>(rows: &[FeatureRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(input: R) -> Result<Vec<FeatureRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<FeatureRow>, _>>()?)
}

/// Full results, including the config echo, as pretty JSON.
pub fn write_json<W: Write>(results: &[ExperimentResult], out: W) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(out, results)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes results into `dir` and returns the created paths.
///
/// CSV produces `summary.csv` plus `<name>_predictions.csv` and
/// `<name>_train_features.csv` per experiment; JSON produces `results.json`.
pub fn export_results(
    results: &[ExperimentResult],
    dir: &Path,
    format: ExportFormat,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        ExportFormat::Csv => {
            let summary = dir.join("summary.csv");
            write_summary_csv(results, create(&summary)?)?;
            written.push(summary);
            for r in results {
                let p = dir.join(format!("{}_predictions.csv", r.config.name));
                write_predictions_csv(r, create(&p)?)?;
                written.push(p);
                let p = dir.join(format!("{}_train_features.csv", r.config.name));
                write_feature_csv(&r.train_features, create(&p)?)?;
                written.push(p);
            }
        }
        ExportFormat::Json => {
            let p = dir.join("results.json");
            let mut w = create(&p)?;
            write_json(results, &mut w)?;
            w.flush()?;
            written.push(p);
        }
    }
    Ok(written)
}
