//! Seeded synthetic chest-film stand-ins with label-correlated geometry.
//!
//! Each finding owns one cell of a 4x4 grid; a positive image carries a
//! bright square in that cell over a dim, noisy background. The layout on
//! disk mirrors the real dataset (manifest CSV, split lists, `images/`).

use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;

use crate::data::image::{InMemorySource, RawImage};
use crate::data::manifest::{DatasetManifest, Split, StudyRecord};
use crate::data::splits::format_id_list;
use crate::error::Result;
use crate::labels::{LabelVector, NUM_CLASSES};
use crate::seed::rng_for;

pub const MANIFEST_FILE: &str = "Data_Entry_2017.csv";
pub const TRAIN_VAL_LIST: &str = "train_val_list.txt";
pub const TEST_LIST: &str = "test_list.txt";

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub n_images: usize,
    pub images_per_patient: usize,
    pub n_test: usize,
    pub side: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_images: 64,
            images_per_patient: 2,
            n_test: 16,
            side: 256,
            seed: 7,
        }
    }
}

pub struct Fixture {
    pub manifest: DatasetManifest,
    pub train_val_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub images: Vec<(String, RawImage)>,
}

impl Fixture {
    pub fn source(&self) -> Arc<InMemorySource> {
        let mut src = InMemorySource::new();
        for (id, img) in &self.images {
            src.insert(id.clone(), img.clone());
        }
        Arc::new(src)
    }

    /// Writes the manifest, split lists and PNGs under `root`.
    pub fn write_to(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root.join("images"))?;
        std::fs::write(root.join(MANIFEST_FILE), self.manifest.to_csv()?)?;
        std::fs::write(root.join(TRAIN_VAL_LIST), format_id_list(&self.train_val_ids))?;
        std::fs::write(root.join(TEST_LIST), format_id_list(&self.test_ids))?;
        for (id, img) in &self.images {
            img.save_png(&root.join("images").join(id))?;
        }
        Ok(())
    }
}

/// Grid cell `(row, col)` of a class.
pub fn class_cell(class: usize) -> (usize, usize) {
    (class / 4, class % 4)
}

pub fn render(labels: &LabelVector, side: usize, seed: u64, key: &str) -> RawImage {
    let mut rng = rng_for(seed, &format!("fixture-pixels/{key}"));
    let cell = side as f64 / 4.0;
    let half = cell * 0.36;
    let mut data = Vec::with_capacity(side * side);
    for y in 0..side {
        for _ in 0..side {
            let base = 0.12 + 0.08 * (y as f64 / side as f64);
            data.push((base + rng.gen_range(-0.04..0.04)) as f32);
        }
    }
    for (class, _) in labels.iter().enumerate().filter(|(_, v)| **v == 1) {
        let (row, col) = class_cell(class);
        let (cx, cy) = ((col as f64 + 0.5) * cell, (row as f64 + 0.5) * cell);
        let (x0, x1) = ((cx - half).max(0.0) as usize, ((cx + half) as usize).min(side));
        let (y0, y1) = ((cy - half).max(0.0) as usize, ((cy + half) as usize).min(side));
        for y in y0..y1 {
            for x in x0..x1 {
                data[y * side + x] = 0.85 + rng.gen_range(-0.05f32..0.05);
            }
        }
    }
    RawImage::gray(side, side, data).expect("dimensions match")
}

/// Every image is positive for class `i mod 14`, plus one extra class with
/// probability 0.3, so all classes are populated.
pub fn generate(spec: &FixtureSpec) -> Fixture {
    let mut rng = rng_for(spec.seed, "fixture-labels");
    let mut records = Vec::with_capacity(spec.n_images);
    let mut images = Vec::with_capacity(spec.n_images);
    for i in 0..spec.n_images {
        let mut labels = [0u8; NUM_CLASSES];
        labels[i % NUM_CLASSES] = 1;
        if rng.gen_bool(0.3) {
            labels[rng.gen_range(0..NUM_CLASSES)] = 1;
        }
        let patient = i / spec.images_per_patient.max(1) + 1;
        let image_id = format!("{patient:08}_{:03}.png", i % spec.images_per_patient.max(1));
        images.push((image_id.clone(), render(&labels, spec.side, spec.seed, &image_id)));
        records.push(StudyRecord {
            image_id,
            patient_id: patient.to_string(),
            labels,
            view: "PA".into(),
            split: Split::Unassigned,
        });
    }
    let n_train_val = spec.n_images - spec.n_test.min(spec.n_images);
    let ids: Vec<String> = records.iter().map(|r| r.image_id.clone()).collect();
    Fixture {
        manifest: DatasetManifest::new(records).expect("fixture ids are unique"),
        train_val_ids: ids[..n_train_val].to_vec(),
        test_ids: ids[n_train_val..].to_vec(),
        images,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_deterministic_and_populated() {
        let a = generate(&FixtureSpec::default());
        let b = generate(&FixtureSpec::default());
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.images[5].1, b.images[5].1);
        assert_eq!(a.manifest.len(), 64);
        assert_eq!(a.test_ids.len(), 16);
        assert!(a.manifest.class_counts().iter().all(|&c| c >= 4));
    }

    #[test]
    fn written_fixture_parses_back() {
        let dir = tempfile::tempdir().unwrap();
        let f = generate(&FixtureSpec {
            n_images: 8,
            n_test: 2,
            side: 32,
            ..FixtureSpec::default()
        });
        f.write_to(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let labels: Vec<_> = crate::labels::DiseaseLabel::all().collect();
        let parsed = crate::data::manifest::parse_manifest(text.as_bytes(), &labels).unwrap();
        assert_eq!(parsed, f.manifest);
        assert!(dir.path().join("images").join(&f.test_ids[0]).exists());
    }
}
