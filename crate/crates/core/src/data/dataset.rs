//! Labeled image collections feeding training and evaluation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::data::augment::{augment, sample_rng, AugmentationSpec};
use crate::data::image::{normalize, resize_to_input, ImageSource, ImageTensor, PreprocessSpec};
use crate::data::manifest::{DatasetManifest, Split};
use crate::error::Result;
use crate::labels::LabelVector;

/// Datasets at most this large keep resized images in memory.
pub const CACHE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledId {
    pub image_id: String,
    pub labels: LabelVector,
}

pub struct ImageDataset {
    items: Vec<LabeledId>,
    source: Arc<dyn ImageSource>,
    preprocess: PreprocessSpec,
    cache: Option<Mutex<HashMap<String, Arc<ImageTensor>>>>,
}

impl std::fmt::Debug for ImageDataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageDataset")
            .field("len", &self.items.len())
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl ImageDataset {
    pub fn new(items: Vec<LabeledId>, source: Arc<dyn ImageSource>) -> Self {
        let cache = (items.len() <= CACHE_LIMIT).then(|| Mutex::new(HashMap::new()));
        Self {
            items,
            source,
            preprocess: PreprocessSpec::default(),
            cache,
        }
    }

    pub fn from_split(manifest: &DatasetManifest, split: Split, source: Arc<dyn ImageSource>) -> Self {
        Self::from_ids(
            manifest
                .records()
                .iter()
                .filter(|r| r.split == split)
                .map(|r| (r.image_id.clone(), r.labels)),
            source,
        )
    }

    pub fn from_ids(ids: impl IntoIterator<Item = (String, LabelVector)>, source: Arc<dyn ImageSource>) -> Self {
        Self::new(
            ids.into_iter()
                .map(|(image_id, labels)| LabeledId { image_id, labels })
                .collect(),
            source,
        )
    }

    /// Subset by image id, keeping this dataset's order.
    pub fn select(&self, ids: &[String]) -> Self {
        let wanted: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        let items = self
            .items
            .iter()
            .filter(|it| wanted.contains(it.image_id.as_str()))
            .cloned()
            .collect();
        Self::new(items, Arc::clone(&self.source))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[LabeledId] {
        &self.items
    }

    pub fn labels(&self) -> Vec<LabelVector> {
        self.items.iter().map(|it| it.labels).collect()
    }

    fn resized(&self, image_id: &str) -> Result<Arc<ImageTensor>> {
        if let Some(cache) = &self.cache {
            if let Some(t) = cache.lock().unwrap().get(image_id) {
                return Ok(Arc::clone(t));
            }
        }
        let t = Arc::new(resize_to_input(&self.source.load(image_id)?)?);
        if let Some(cache) = &self.cache {
            cache
                .lock()
                .unwrap()
                .insert(image_id.to_string(), Arc::clone(&t));
        }
        Ok(t)
    }

    /// Normalized input tensors for the given item indices. With an
    /// augmentation spec, each sample draws from its own
    /// `(seed, epoch, image_id)` stream, so parallel loading is reproducible.
    pub fn load_batch(
        &self,
        indices: &[usize],
        augmentation: Option<(&AugmentationSpec, u64, usize)>,
    ) -> Result<Vec<ImageTensor>> {
        indices
            .par_iter()
            .map(|&i| {
                let item = &self.items[i];
                let base = self.resized(&item.image_id)?;
                let mut t = match augmentation {
                    Some((spec, seed, epoch)) => {
                        augment(&base, spec, &mut sample_rng(seed, epoch, &item.image_id))
                    }
                    None => (*base).clone(),
                };
                normalize(&mut t, &self.preprocess);
                Ok(t)
            })
            .collect()
    }
}
