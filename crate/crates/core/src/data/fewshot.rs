//! Balanced N-shot subset construction.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::manifest::DatasetManifest;
use crate::data::splits::format_id_list;
use crate::error::{Error, Result};
use crate::labels::{DiseaseLabel, NUM_CLASSES};
use crate::seed::rng_for;

pub const STANDARD_SHOTS: [usize; 5] = [1, 2, 4, 8, 16];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSubset {
    pub n_shots: usize,
    pub seed: u64,
    /// Selected image ids, in pool order.
    pub record_ids: Vec<String>,
    /// Positives per class within the subset.
    pub per_class_counts: [usize; NUM_CLASSES],
    pub warnings: Vec<String>,
}

impl FewShotSubset {
    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    /// Writes `<stem>.txt` (one id per line) and `<stem>.json` (metadata).
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.txt")), format_id_list(&self.record_ids))?;
        let sidecar = SubsetSidecar {
            n_shots: self.n_shots,
            seed: self.seed,
            per_class_counts: DiseaseLabel::all()
                .map(|l| (l.name().to_string(), self.per_class_counts[l.index()]))
                .collect(),
            warnings: self.warnings.clone(),
        };
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SubsetSidecar {
    n_shots: usize,
    seed: u64,
    per_class_counts: Vec<(String, usize)>,
    warnings: Vec<String>,
}

/// For every class, draws `min(n_shots, positives)` positive records
/// uniformly without replacement and returns the union. A record positive
/// for several classes counts toward each, so per-class totals can exceed
/// `n_shots`.
pub fn sample_few_shot(pool: &DatasetManifest, n_shots: usize, seed: u64) -> Result<FewShotSubset> {
    if n_shots == 0 {
        return Err(Error::InvalidInput("n_shots must be at least 1".into()));
    }
    if pool.is_empty() {
        return Err(Error::InvalidInput("few-shot pool is empty".into()));
    }
    let records = pool.records();
    let mut chosen = BTreeSet::new();
    let mut warnings = Vec::new();
    for label in DiseaseLabel::all() {
        let positives: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_positive(label))
            .map(|(i, _)| i)
            .collect();
        if positives.is_empty() {
            warnings.push(format!("class {label} has no positives in the pool; skipped"));
            continue;
        }
        let take = n_shots.min(positives.len());
        let mut rng = rng_for(seed, &format!("few-shot/{n_shots}/{}", label.name()));
        for k in sample(&mut rng, positives.len(), take) {
            chosen.insert(positives[k]);
        }
    }
    let mut per_class_counts = [0usize; NUM_CLASSES];
    for &i in &chosen {
        for (c, v) in records[i].labels.iter().enumerate() {
            per_class_counts[c] += *v as usize;
        }
    }
    Ok(FewShotSubset {
        n_shots,
        seed,
        record_ids: chosen.into_iter().map(|i| records[i].image_id.clone()).collect(),
        per_class_counts,
        warnings,
    })
}
