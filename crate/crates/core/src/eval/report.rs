//! Score matrices and per-run AUC reports.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::auc::roc_auc;
use crate::labels::{DiseaseLabel, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    ZeroShotPrompts,
    HeadLogits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    scores: Array2<f64>,
    labels: Array2<u8>,
    source: ScoreSource,
}

impl ScoreMatrix {
    pub fn new(scores: Array2<f64>, labels: Array2<u8>, source: ScoreSource) -> Result<Self> {
        if scores.dim() != labels.dim() {
            return Err(Error::Shape {
                expected: format!("labels {:?}", scores.dim()),
                actual: format!("{:?}", labels.dim()),
            });
        }
        if scores.ncols() != NUM_CLASSES {
            return Err(Error::Shape {
                expected: format!("{NUM_CLASSES} columns"),
                actual: format!("{}", scores.ncols()),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("score matrix holds a non-finite value".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidInput("score matrix labels must be 0 or 1".into()));
        }
        Ok(Self { scores, labels, source })
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn source(&self) -> ScoreSource {
        self.source
    }

    pub fn n_images(&self) -> usize {
        self.scores.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAuc {
    pub disease: String,
    /// `None` (JSON `null`) when the class has no positives or no negatives.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_auc: Vec<ClassAuc>,
    pub mean_auc: f64,
    pub n_shots: usize,
    pub seed: u64,
    pub source: ScoreSource,
    pub timestamp: String,
    pub config_digest: String,
    #[serde(default)]
    pub undefined_classes: Vec<String>,
    #[serde(default)]
    pub n_images: usize,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

pub const NORMALIZED_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

/// Per-class and macro-mean AUC. Undefined classes are left out of the mean
/// and listed in `undefined_classes`.
pub fn evaluate(matrix: &ScoreMatrix) -> Result<EvalReport> {
    let aucs: Vec<Option<f64>> = (0..NUM_CLASSES)
        .into_par_iter()
        .map(|c| {
            let scores: Vec<f64> = matrix.scores.column(c).to_vec();
            let labels: Vec<u8> = matrix.labels.column(c).to_vec();
            roc_auc(&scores, &labels)
        })
        .collect::<Result<_>>()?;
    report_from_aucs(&aucs, matrix.source, matrix.n_images())
}

pub fn report_from_aucs(aucs: &[Option<f64>], source: ScoreSource, n_images: usize) -> Result<EvalReport> {
    if aucs.len() != NUM_CLASSES {
        return Err(Error::Shape {
            expected: format!("{NUM_CLASSES} class AUCs"),
            actual: format!("{}", aucs.len()),
        });
    }
    let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Evaluation("AUC is undefined for every class".into()));
    }
    let per_class_auc: Vec<ClassAuc> = DiseaseLabel::all()
        .zip(aucs)
        .map(|(d, a)| ClassAuc {
            disease: d.name().to_string(),
            auc: *a,
        })
        .collect();
    let undefined_classes = per_class_auc
        .iter()
        .filter(|c| c.auc.is_none())
        .map(|c| c.disease.clone())
        .collect();
    Ok(EvalReport {
        per_class_auc,
        mean_auc: defined.iter().sum::<f64>() / defined.len() as f64,
        n_shots: 0,
        seed: 0,
        source,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        config_digest: String::new(),
        undefined_classes,
        n_images,
        metadata: BTreeMap::new(),
    })
}

impl EvalReport {
    pub fn with_run(mut self, n_shots: usize, seed: u64, config_digest: &str) -> Self {
        self.n_shots = n_shots;
        self.seed = seed;
        self.config_digest = config_digest.to_string();
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl Serialize) -> Self {
        self.metadata
            .insert(key.to_string(), serde_json::to_value(value).expect("metadata serializes"));
        self
    }

    pub fn auc_of(&self, disease: DiseaseLabel) -> Option<f64> {
        self.per_class_auc[disease.index()].auc
    }

    /// Per-class values in canonical class order.
    pub fn aucs(&self) -> Vec<Option<f64>> {
        self.per_class_auc.iter().map(|c| c.auc).collect()
    }

    /// Copy with the timestamp replaced by a fixed value.
    pub fn normalized(&self) -> Self {
        Self {
            timestamp: NORMALIZED_TIMESTAMP.to_string(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        let expected: Vec<&str> = DiseaseLabel::all().map(|d| d.name()).collect();
        let got: Vec<&str> = report.per_class_auc.iter().map(|c| c.disease.as_str()).collect();
        if got != expected {
            return Err(Error::Evaluation(format!(
                "per_class_auc must list the {NUM_CLASSES} classes in canonical order"
            )));
        }
        if report.per_class_auc.iter().flat_map(|c| c.auc).any(|a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::Evaluation("per-class AUC outside [0, 1]".into()));
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::file(path, e),
        })?;
        Self::from_json(&text).map_err(|e| Error::file(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    fn random_matrix(n: usize, seed: u64) -> ScoreMatrix {
        let mut rng = rng_for(seed, "matrix");
        let scores = Array2::from_shape_fn((n, NUM_CLASSES), |_| rng.gen::<f64>());
        let labels = Array2::from_shape_fn((n, NUM_CLASSES), |_| rng.gen_range(0..2u8));
        ScoreMatrix::new(scores, labels, ScoreSource::HeadLogits).unwrap()
    }

    #[test]
    fn mean_is_mean_of_defined_classes() {
        let m = random_matrix(50, 1);
        let r = evaluate(&m).unwrap();
        let defined: Vec<f64> = r.aucs().into_iter().flatten().collect();
        assert_eq!(defined.len(), 14);
        assert!((r.mean_auc - defined.iter().sum::<f64>() / 14.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_class_is_flagged_and_skipped() {
        let m = random_matrix(40, 2);
        let mut labels = m.labels().clone();
        labels.column_mut(13).fill(1);
        let m = ScoreMatrix::new(m.scores().clone(), labels, ScoreSource::HeadLogits).unwrap();
        let r = evaluate(&m).unwrap();
        assert_eq!(r.undefined_classes, vec!["Hernia".to_string()]);
        assert_eq!(r.per_class_auc[13].auc, None);
        let defined: Vec<f64> = r.aucs().into_iter().flatten().collect();
        assert_eq!(defined.len(), 13);
        assert!((r.mean_auc - defined.iter().sum::<f64>() / 13.0).abs() < 1e-12);
        let json = r.to_json().unwrap();
        assert!(json.contains("\"auc\": null"));
    }

    #[test]
    fn rank_transform_gives_identical_report() {
        let m = random_matrix(30, 3);
        let mut ranks = m.scores().clone();
        for mut col in ranks.columns_mut() {
            let mut idx: Vec<usize> = (0..col.len()).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut r = vec![0.0; col.len()];
            for (rank, &i) in idx.iter().enumerate() {
                r[i] = rank as f64;
            }
            col.assign(&ndarray::Array1::from(r));
        }
        let a = evaluate(&m).unwrap().normalized();
        let b = evaluate(&ScoreMatrix::new(ranks, m.labels().clone(), m.source()).unwrap())
            .unwrap()
            .normalized();
        assert_eq!(a, b);
    }

    #[test]
    fn all_undefined_is_an_error() {
        let scores = Array2::zeros((3, NUM_CLASSES));
        let labels = Array2::zeros((3, NUM_CLASSES));
        let m = ScoreMatrix::new(scores, labels, ScoreSource::ZeroShotPrompts).unwrap();
        assert!(matches!(evaluate(&m), Err(Error::Evaluation(_))));
    }

    #[test]
    fn matrix_validation() {
        assert!(ScoreMatrix::new(Array2::zeros((2, 13)), Array2::zeros((2, 13)), ScoreSource::HeadLogits).is_err());
        let mut s = Array2::zeros((2, 14));
        s[[0, 0]] = f64::INFINITY;
        assert!(ScoreMatrix::new(s, Array2::zeros((2, 14)), ScoreSource::HeadLogits).is_err());
    }

    #[test]
    fn json_round_trip_with_fixed_field_names() {
        let r = evaluate(&random_matrix(20, 4)).unwrap().with_run(4, 7, "abc").with_meta("adapted", true);
        let json = r.to_json().unwrap();
        for key in ["per_class_auc", "mean_auc", "n_shots", "seed", "source", "timestamp", "config_digest"] {
            assert!(json.contains(&format!("\"{key}\"")), "{key}");
        }
        assert!(json.contains("\"head_logits\""));
        assert_eq!(EvalReport::from_json(&json).unwrap(), r);
        assert!(EvalReport::from_json("{}").is_err());
    }
}
