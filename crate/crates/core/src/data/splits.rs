//! Train/val/test assignment from the dataset's official split lists.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

/// Reads a one-id-per-line split list. Blank lines are skipped.
pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::file(path, e),
    })?;
    Ok(parse_id_list(&text))
}

pub fn parse_id_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn format_id_list<S: AsRef<str>>(ids: &[S]) -> String {
    let mut out = String::new();
    for id in ids {
        out.push_str(id.as_ref());
        out.push('\n');
    }
    out
}

/// Marks test records, then partitions the train/val list by patient so no
/// patient has images on both sides. About `val_fraction` of the patients
/// (rounded, at least one when the fraction is positive and there are two or
/// more patients) go to validation.
pub fn assign_splits(
    manifest: DatasetManifest,
    train_val_ids: &[String],
    test_ids: &[String],
    val_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Split(format!(
            "val_fraction {val_fraction} outside [0, 1)"
        )));
    }
    let test: HashSet<&str> = test_ids.iter().map(String::as_str).collect();
    let train_val: HashSet<&str> = train_val_ids.iter().map(String::as_str).collect();
    let mut overlap: Vec<&str> = train_val.intersection(&test).copied().collect();
    if !overlap.is_empty() {
        overlap.sort_unstable();
        return Err(Error::Split(format!(
            "{} id(s) in both train_val and test lists, e.g. {}",
            overlap.len(),
            overlap[0]
        )));
    }
    let known: HashSet<&str> = manifest
        .records()
        .iter()
        .map(|r| r.image_id.as_str())
        .collect();
    if let Some(unknown) = train_val_ids
        .iter()
        .chain(test_ids)
        .find(|id| !known.contains(id.as_str()))
    {
        return Err(Error::Split(format!("unknown image id {unknown:?}")));
    }

    // BTreeMap keeps the patient order independent of hashing.
    let mut patients: BTreeMap<String, ()> = BTreeMap::new();
    for r in manifest.records() {
        if train_val.contains(r.image_id.as_str()) {
            patients.insert(r.patient_id.clone(), ());
        }
    }
    let mut patients: Vec<String> = patients.into_keys().collect();
    patients.shuffle(&mut rng_for(seed, "val-split"));
    let mut n_val = (val_fraction * patients.len() as f64).round() as usize;
    if val_fraction > 0.0 && n_val == 0 && patients.len() >= 2 {
        n_val = 1;
    }
    let val_patients: HashSet<&str> = patients[..n_val].iter().map(String::as_str).collect();

    let mut manifest = manifest;
    for r in manifest.records_mut() {
        r.split = if test.contains(r.image_id.as_str()) {
            Split::Test
        } else if train_val.contains(r.image_id.as_str()) {
            if val_patients.contains(r.patient_id.as_str()) {
                Split::Val
            } else {
                Split::Train
            }
        } else {
            Split::Unassigned
        };
    }
    Ok(manifest)
}

/// Number of records per split.
pub fn split_sizes(manifest: &DatasetManifest) -> HashMap<Split, usize> {
    let mut sizes = HashMap::new();
    for r in manifest.records() {
        *sizes.entry(r.split).or_insert(0) += 1;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::StudyRecord;
    use crate::labels::NUM_CLASSES;
    use proptest::prelude::*;

    fn manifest(patients: &[&str]) -> DatasetManifest {
        let records = patients
            .iter()
            .enumerate()
            .map(|(i, p)| StudyRecord {
                image_id: format!("img{i}.png"),
                patient_id: p.to_string(),
                labels: [0; NUM_CLASSES],
                view: "PA".into(),
                split: Split::Unassigned,
            })
            .collect();
        DatasetManifest::new(records).unwrap()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn test_list_marks_test() {
        let m = manifest(&["p1", "p2", "p3"]);
        let out = assign_splits(m, &ids(&["img0.png", "img1.png"]), &ids(&["img2.png"]), 0.0, 7)
            .unwrap();
        assert_eq!(out.get("img2.png").unwrap().split, Split::Test);
        assert_eq!(out.get("img0.png").unwrap().split, Split::Train);
    }

    #[test]
    fn overlapping_lists_fail() {
        let m = manifest(&["p1", "p2"]);
        let err = assign_splits(m, &ids(&["img0.png"]), &ids(&["img0.png"]), 0.1, 7);
        assert!(matches!(err, Err(Error::Split(_))));
    }

    #[test]
    fn unknown_ids_fail() {
        let m = manifest(&["p1"]);
        let err = assign_splits(m, &ids(&["nope.png"]), &[], 0.1, 7);
        assert!(matches!(err, Err(Error::Split(_))));
    }

    #[test]
    fn unlisted_ids_are_unassigned() {
        let m = manifest(&["p1", "p2"]);
        let out = assign_splits(m, &ids(&["img0.png"]), &[], 0.0, 7).unwrap();
        assert_eq!(out.get("img1.png").unwrap().split, Split::Unassigned);
    }

    #[test]
    fn patient_images_stay_together() {
        // two images for each of two patients, half the patients to val
        let m = manifest(&["a", "a", "b", "b"]);
        let all = ids(&["img0.png", "img1.png", "img2.png", "img3.png"]);
        let out = assign_splits(m, &all, &[], 0.5, 7).unwrap();
        let r = out.records();
        assert_eq!(r[0].split, r[1].split);
        assert_eq!(r[2].split, r[3].split);
        assert_ne!(r[0].split, r[2].split);
    }

    #[test]
    fn id_list_round_trip() {
        let list = ids(&["a.png", "b.png"]);
        let text = format_id_list(&list);
        assert!(text.ends_with('\n'));
        assert_eq!(parse_id_list(&text), list);
    }

    proptest! {
        #[test]
        fn no_patient_straddles_train_and_val(
            patient_of in proptest::collection::vec(0u8..12, 1..60),
            frac in 0.0f64..0.9,
            seed in any::<u64>(),
        ) {
            let names: Vec<String> = patient_of.iter().map(|p| format!("p{p}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let m = manifest(&refs);
            let all: Vec<String> = m.records().iter().map(|r| r.image_id.clone()).collect();
            let out = assign_splits(m, &all, &[], frac, seed).unwrap();
            let mut side: HashMap<&str, Split> = HashMap::new();
            for r in out.records() {
                let prev = side.entry(r.patient_id.as_str()).or_insert(r.split);
                prop_assert_eq!(*prev, r.split);
            }
        }
    }
}
