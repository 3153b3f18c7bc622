//! NIH-style `Data_Entry` manifests.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{DiseaseLabel, LabelVector, NO_FINDING, NUM_CLASSES};

pub const COL_IMAGE: &str = "Image Index";
pub const COL_LABELS: &str = "Finding Labels";
pub const COL_PATIENT: &str = "Patient ID";
pub const COL_VIEW: &str = "View Position";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub image_id: String,
    pub patient_id: String,
    pub labels: LabelVector,
    pub view: String,
    pub split: Split,
}

impl StudyRecord {
    pub fn is_positive(&self, label: DiseaseLabel) -> bool {
        self.labels[label.index()] == 1
    }

    /// The pipe-separated finding string for this record.
    pub fn finding_labels(&self) -> String {
        let names: Vec<&str> = DiseaseLabel::all()
            .filter(|l| self.is_positive(*l))
            .map(DiseaseLabel::name)
            .collect();
        if names.is_empty() {
            NO_FINDING.to_string()
        } else {
            names.join("|")
        }
    }
}

/// Ordered records plus per-class positive counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    records: Vec<StudyRecord>,
    class_counts: [usize; NUM_CLASSES],
}

impl DatasetManifest {
    pub fn new(records: Vec<StudyRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::Manifest {
                    row: i + 1,
                    message: format!("duplicate image id {:?}", r.image_id),
                });
            }
            if let Some(bad) = r.labels.iter().find(|v| **v > 1) {
                return Err(Error::Manifest {
                    row: i + 1,
                    message: format!("label entry {bad} is not 0/1"),
                });
            }
        }
        let class_counts = count_classes(&records);
        Ok(Self {
            records,
            class_counts,
        })
    }

    pub fn records(&self) -> &[StudyRecord] {
        &self.records
    }

    pub fn class_counts(&self) -> &[usize; NUM_CLASSES] {
        &self.class_counts
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&StudyRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    /// Records in the given split, as a new manifest.
    pub fn restrict(&self, split: Split) -> DatasetManifest {
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.split == split)
            .cloned()
            .collect();
        let class_counts = count_classes(&records);
        DatasetManifest {
            records,
            class_counts,
        }
    }

    pub(crate) fn records_mut(&mut self) -> &mut [StudyRecord] {
        &mut self.records
    }

    /// Serializes back to the CSV layout accepted by [`parse_manifest`].
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([COL_IMAGE, COL_LABELS, COL_PATIENT, COL_VIEW])?;
        for r in &self.records {
            w.write_record([
                r.image_id.as_str(),
                r.finding_labels().as_str(),
                r.patient_id.as_str(),
                r.view.as_str(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }
}

fn count_classes(records: &[StudyRecord]) -> [usize; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for r in records {
        for (c, v) in r.labels.iter().enumerate() {
            counts[c] += *v as usize;
        }
    }
    counts
}

/// Parses a finding string such as `"Effusion|Mass"` or `"No Finding"`.
pub fn parse_findings(
    field: &str,
    label_set: &[DiseaseLabel],
    row: usize,
) -> Result<LabelVector> {
    let mut labels = [0u8; NUM_CLASSES];
    if field.trim() == NO_FINDING {
        return Ok(labels);
    }
    for token in field.split('|').map(str::trim) {
        let label = label_set
            .iter()
            .copied()
            .find(|l| l.name() == token)
            .ok_or_else(|| Error::Manifest {
                row,
                message: format!("unknown finding {token:?}"),
            })?;
        labels[label.index()] = 1;
    }
    Ok(labels)
}

/// Parses a manifest CSV. `row` numbers in errors count data rows from 1.
pub fn parse_manifest<R: Read>(csv_text: R, label_set: &[DiseaseLabel]) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(csv_text);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing: Vec<&str> = [COL_IMAGE, COL_LABELS, COL_PATIENT]
        .into_iter()
        .filter(|c| column(c).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Manifest {
            row: 0,
            message: format!("missing required columns: {}", missing.join(", ")),
        });
    }
    let image_col = column(COL_IMAGE).unwrap();
    let label_col = column(COL_LABELS).unwrap();
    let patient_col = column(COL_PATIENT).unwrap();
    let view_col = column(COL_VIEW);

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Manifest {
            row: row_no,
            message: e.to_string(),
        })?;
        let image_id = row[image_col].trim().to_string();
        if image_id.is_empty() {
            return Err(Error::Manifest {
                row: row_no,
                message: "empty image id".into(),
            });
        }
        if !seen.insert(image_id.clone()) {
            return Err(Error::Manifest {
                row: row_no,
                message: format!("duplicate image id {image_id:?}"),
            });
        }
        let labels = parse_findings(&row[label_col], label_set, row_no)?;
        records.push(StudyRecord {
            image_id,
            patient_id: row[patient_col].trim().to_string(),
            labels,
            view: view_col.map(|c| row[c].trim().to_string()).unwrap_or_default(),
            split: Split::Unassigned,
        });
    }
    DatasetManifest::new(records)
}
