//! Real/fake k-nearest-neighbor classification over `(b1, b2)` decay features.
//!
//! Features are mapped to `(log10 b1, b2)` and z-scored per dimension with
//! the training mean and standard deviation; distances are Euclidean in that
//! space.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains only {0} samples")]
    SingleClassTrainingSet(Label),
    #[error("k = {k} exceeds the {n} training samples")]
    KTooLarge { k: usize, n: usize },
    #[error("k = {0} must be odd and positive")]
    EvenK(usize),
    #[error("invalid feature: b1 = {b1} must be positive and both values finite")]
    InvalidFeature { b1: f64, b2: f64 },
    #[error("test set is empty")]
    EmptyTestSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(format!("unknown label {other:?}, expected real or fake")),
        }
    }
}

/// Raw decay features of one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features<T> {
    pub b1: T,
    pub b2: T,
}

impl<T: Scalar> Features<T> {
    pub fn new(b1: T, b2: T) -> Self {
        Self { b1, b2 }
    }

    fn validate(self) -> Result<Self, ClassifierError> {
        if self.b1 > T::zero() && self.b1.is_finite() && self.b2.is_finite() {
            Ok(self)
        } else {
            Err(ClassifierError::InvalidFeature {
                b1: self.b1.as_f64(),
                b2: self.b2.as_f64(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample<T> {
    pub image_id: String,
    pub features: Features<T>,
    pub label: Label,
    /// Generator name for fakes; free-form for reals.
    pub source_tag: String,
}

/// Per-dimension `(value - shift) / scale` applied after the log transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransform<T> {
    pub shift: [T; 2],
    pub scale: [T; 2],
}

impl<T: Scalar> FeatureTransform<T> {
    fn raw(f: Features<T>) -> [T; 2] {
        [f.b1.log10(), f.b2]
    }

    pub fn apply(&self, f: Features<T>) -> [T; 2] {
        let r = Self::raw(f);
        [
            (r[0] - self.shift[0]) / self.scale[0],
            (r[1] - self.shift[1]) / self.scale[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint<T> {
    pub image_id: String,
    pub source_tag: String,
    pub label: Label,
    pub features: Features<T>,
    /// Position in the transformed space.
    pub position: [T; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel<T> {
    pub k: usize,
    /// Human-readable description of the feature map, kept in model files.
    pub feature_map: String,
    pub transform: FeatureTransform<T>,
    pub training: Vec<TrainingPoint<T>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

const FEATURE_MAP: &str = "z-score of (log10 b1, b2); euclidean distance";

/// Fits the feature transform and stores the transformed training set.
///
/// A dimension with zero variance gets scale 1 and a recorded warning.
pub fn knn_train<T: Scalar>(
    samples: &[LabeledSample<T>],
    k: usize,
) -> Result<KnnModel<T>, ClassifierError> {
    if samples.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if k == 0 || k.is_multiple_of(2) {
        return Err(ClassifierError::EvenK(k));
    }
    if k > samples.len() {
        return Err(ClassifierError::KTooLarge {
            k,
            n: samples.len(),
        });
    }
    let first = samples[0].label;
    if samples.iter().all(|s| s.label == first) {
        return Err(ClassifierError::SingleClassTrainingSet(first));
    }
    for s in samples {
        s.features.validate()?;
    }

    let raw: Vec<[T; 2]> = samples
        .iter()
        .map(|s| FeatureTransform::raw(s.features))
        .collect();
    let n = T::from_count(raw.len());
    let mut shift = [T::zero(); 2];
    let mut scale = [T::one(); 2];
    let mut warnings = Vec::new();
    for d in 0..2 {
        let mean = raw.iter().fold(T::zero(), |a, r| a + r[d]) / n;
        let var = raw
            .iter()
            .fold(T::zero(), |a, r| a + (r[d] - mean) * (r[d] - mean))
            / n;
        shift[d] = mean;
        let std = var.sqrt();
        if std > T::zero() && std.is_finite() {
            scale[d] = std;
        } else {
            let name = ["log10 b1", "b2"][d];
            log::warn!("zero variance in {name}; using unit scale");
            warnings.push(format!("zero variance in {name}; scale set to 1"));
        }
    }
    let transform = FeatureTransform { shift, scale };
    let training = samples
        .iter()
        .map(|s| TrainingPoint {
            image_id: s.image_id.clone(),
            source_tag: s.source_tag.clone(),
            label: s.label,
            features: s.features,
            position: transform.apply(s.features),
        })
        .collect();
    Ok(KnnModel {
        k,
        feature_map: FEATURE_MAP.to_string(),
        transform,
        training,
        warnings,
    })
}

impl<T: Scalar> KnnModel<T> {
    /// Majority vote of the `k` nearest training points. Equal distances are
    /// resolved in favor of the earlier training point.
    pub fn predict(&self, features: Features<T>) -> Result<Label, ClassifierError> {
        let q = self.transform.apply(features.validate()?);
        let mut dist: Vec<(T, usize)> = self
            .training
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let dx = p.position[0] - q[0];
                let dy = p.position[1] - q[1];
                (dx * dx + dy * dy, i)
            })
            .collect();
        // Stable sort keeps index order among ties.
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let real_votes = dist
            .iter()
            .take(self.k)
            .filter(|(_, i)| self.training[*i].label == Label::Real)
            .count();
        Ok(if 2 * real_votes > self.k {
            Label::Real
        } else {
            Label::Fake
        })
    }
}

pub fn knn_predict<T: Scalar>(
    model: &KnnModel<T>,
    features: Features<T>,
) -> Result<Label, ClassifierError> {
    model.predict(features)
}

/// Counts with "positive" meaning Real.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub real_as_real: usize,
    pub real_as_fake: usize,
    pub fake_as_real: usize,
    pub fake_as_fake: usize,
}

impl Confusion {
    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Real, Label::Real) => self.real_as_real += 1,
            (Label::Real, Label::Fake) => self.real_as_fake += 1,
            (Label::Fake, Label::Real) => self.fake_as_real += 1,
            (Label::Fake, Label::Fake) => self.fake_as_fake += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.real_as_real + self.real_as_fake + self.fake_as_real + self.fake_as_fake
    }

    pub fn correct(&self) -> usize {
        self.real_as_real + self.fake_as_fake
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.correct() as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: f64,
    /// Accuracy over all reals plus the fakes carrying each tag.
    pub per_tag: BTreeMap<String, f64>,
    pub confusion: Confusion,
    pub predictions: Vec<Label>,
}

/// Scores the model on a labeled test set.
pub fn evaluate<T: Scalar>(
    model: &KnnModel<T>,
    test: &[LabeledSample<T>],
) -> Result<AccuracyReport, ClassifierError> {
    if test.is_empty() {
        return Err(ClassifierError::EmptyTestSet);
    }
    let predictions = test
        .iter()
        .map(|s| model.predict(s.features))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(score(test, &predictions))
}

/// Accuracy bookkeeping for precomputed predictions.
pub fn score<T>(test: &[LabeledSample<T>], predictions: &[Label]) -> AccuracyReport {
    let mut overall = Confusion::default();
    let mut reals = Confusion::default();
    let mut per_fake_tag: BTreeMap<&str, Confusion> = BTreeMap::new();
    for (s, &p) in test.iter().zip(predictions) {
        overall.record(s.label, p);
        match s.label {
            Label::Real => reals.record(s.label, p),
            Label::Fake => per_fake_tag
                .entry(s.source_tag.as_str())
                .or_default()
                .record(s.label, p),
        }
    }
    let per_tag = per_fake_tag
        .into_iter()
        .map(|(tag, fakes)| {
            let correct = reals.correct() + fakes.correct();
            let total = reals.total() + fakes.total();
            (tag.to_string(), correct as f64 / total as f64)
        })
        .collect();
    AccuracyReport {
        overall: overall.accuracy(),
        per_tag,
        confusion: overall,
        predictions: predictions.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, b1: f64, b2: f64, label: Label, tag: &str) -> LabeledSample<f64> {
        LabeledSample {
            image_id: id.into(),
            features: Features::new(b1, b2),
            label,
            source_tag: tag.into(),
        }
    }

    fn clusters() -> Vec<LabeledSample<f64>> {
        let mut v = Vec::new();
        for i in 0..8 {
            let jitter = (i as f64 - 3.5) * 0.025;
            v.push(sample(&format!("r{i}"), 10f64.powf(jitter), -4.0 - jitter, Label::Real, "ffhq"));
            v.push(sample(&format!("f{i}"), 10f64.powf(-jitter), -0.5 + jitter, Label::Fake, "gan"));
        }
        v
    }

    #[test]
    fn trains_on_eight_per_class() {
        let m = knn_train(&clusters(), 5).unwrap();
        assert_eq!(m.training.len(), 16);
        assert!(m.transform.scale.iter().all(|&s| s > 0.0));
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn training_guards() {
        let reals: Vec<_> = clusters().into_iter().filter(|s| s.label == Label::Real).collect();
        assert_eq!(
            knn_train(&reals, 1),
            Err(ClassifierError::SingleClassTrainingSet(Label::Real))
        );
        assert_eq!(knn_train(&clusters(), 17), Err(ClassifierError::KTooLarge { k: 17, n: 16 }));
        assert_eq!(knn_train(&clusters(), 4), Err(ClassifierError::EvenK(4)));
        assert_eq!(knn_train::<f64>(&[], 1), Err(ClassifierError::EmptyTrainingSet));
        let mut bad = clusters();
        bad[0].features.b1 = 0.0;
        assert!(matches!(knn_train(&bad, 1), Err(ClassifierError::InvalidFeature { .. })));
    }

    #[test]
    fn one_sample_per_class() {
        let train = vec![
            sample("r", 1.0, -4.0, Label::Real, "real"),
            sample("f", 1.0, -0.5, Label::Fake, "gan"),
        ];
        let m = knn_train(&train, 1).unwrap();
        // log10 b1 has zero variance here.
        assert_eq!(m.warnings.len(), 1);
        assert_eq!(m.transform.scale[0], 1.0);
        assert_eq!(m.predict(Features::new(1.0, -3.0)).unwrap(), Label::Real);
        assert_eq!(m.predict(Features::new(5.0, -1.0)).unwrap(), Label::Fake);
    }

    #[test]
    fn query_on_training_point() {
        let train = clusters();
        let m = knn_train(&train, 1).unwrap();
        for s in &train {
            assert_eq!(m.predict(s.features).unwrap(), s.label);
        }
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let train = vec![
            sample("f", 1.0, -1.0, Label::Fake, "gan"),
            sample("r", 1.0, -3.0, Label::Real, "real"),
        ];
        let m = knn_train(&train, 1).unwrap();
        assert_eq!(m.predict(Features::new(1.0, -2.0)).unwrap(), Label::Fake);
        let swapped = vec![train[1].clone(), train[0].clone()];
        let m = knn_train(&swapped, 1).unwrap();
        assert_eq!(m.predict(Features::new(1.0, -2.0)).unwrap(), Label::Real);
    }

    #[test]
    fn cluster_query_matches_exhaustive_distance() {
        let train = clusters();
        let m = knn_train(&train, 5).unwrap();
        let q = Features::new(1.0, -3.8);
        // Independent check: brute-force the same z-scored distances.
        let raw: Vec<[f64; 2]> = train.iter().map(|s| [s.features.b1.log10(), s.features.b2]).collect();
        let mean = |d: usize| raw.iter().map(|r| r[d]).sum::<f64>() / raw.len() as f64;
        let std = |d: usize| {
            let mu = mean(d);
            (raw.iter().map(|r| (r[d] - mu).powi(2)).sum::<f64>() / raw.len() as f64).sqrt()
        };
        let z = |v: [f64; 2]| [(v[0] - mean(0)) / std(0), (v[1] - mean(1)) / std(1)];
        let qz = z([0.0, -3.8]);
        let mut d: Vec<(f64, Label)> = raw
            .iter()
            .zip(&train)
            .map(|(r, s)| {
                let p = z(*r);
                ((p[0] - qz[0]).hypot(p[1] - qz[1]), s.label)
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!(d[..5].iter().all(|(_, l)| *l == Label::Real));
        assert_eq!(m.predict(q).unwrap(), Label::Real);
    }

    #[test]
    fn invalid_query() {
        let m = knn_train(&clusters(), 3).unwrap();
        assert!(matches!(
            m.predict(Features::new(-1.0, 0.0)),
            Err(ClassifierError::InvalidFeature { .. })
        ));
    }

    #[test]
    fn all_real_predictor_on_half_real_set() {
        let train = vec![
            sample("r", 1.0, -4.0, Label::Real, "real"),
            sample("f", 1e6, 5.0, Label::Fake, "gan"),
        ];
        let m = knn_train(&train, 1).unwrap();
        let test = vec![
            sample("a", 1.0, -4.0, Label::Real, "real"),
            sample("b", 1.0, -4.0, Label::Fake, "gan"),
        ];
        let rep = evaluate(&m, &test).unwrap();
        assert_eq!(rep.overall, 0.5);
        assert_eq!(rep.confusion.fake_as_real, 1);
        assert_eq!(rep.per_tag["gan"], 0.5);
        assert_eq!(evaluate(&m, &[]), Err(ClassifierError::EmptyTestSet));
    }

    #[test]
    fn per_tag_subsets() {
        let test = vec![
            sample("r1", 1.0, -4.0, Label::Real, "real"),
            sample("r2", 1.0, -4.0, Label::Real, "real"),
            sample("a1", 1.0, 0.0, Label::Fake, "a"),
            sample("b1", 1.0, 0.0, Label::Fake, "b"),
            sample("b2", 1.0, 0.0, Label::Fake, "b"),
        ];
        let preds = [Label::Real, Label::Fake, Label::Fake, Label::Real, Label::Fake];
        let rep = score(&test, &preds);
        assert_eq!(rep.overall, 3.0 / 5.0);
        assert_eq!(rep.per_tag["a"], 2.0 / 3.0);
        assert_eq!(rep.per_tag["b"], 2.0 / 4.0);
        assert_eq!(rep.confusion.total(), 5);
    }

    #[test]
    fn model_json_round_trip() {
        let m = knn_train(&clusters(), 5).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: KnnModel<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(json.contains("\"label\":\"real\""));
    }

    #[test]
    fn label_parsing() {
        assert_eq!("Real".parse::<Label>().unwrap(), Label::Real);
        assert_eq!("fake".parse::<Label>().unwrap(), Label::Fake);
        assert!("maybe".parse::<Label>().is_err());
    }
}
