//! Manifests, splits, image preprocessing/augmentation and few-shot sampling.

pub mod augment;
pub mod dataset;
pub mod fewshot;
pub mod image;
pub mod manifest;
pub mod splits;
pub mod synthetic;

pub use augment::{augment, hflip, AugmentationSpec};
pub use dataset::{ImageDataset, LabeledId};
pub use fewshot::{sample_few_shot, FewShotSubset, STANDARD_SHOTS};
pub use image::{
    preprocess, DirectorySource, ImageSource, ImageTensor, InMemorySource, PreprocessSpec, RawImage,
};
pub use manifest::{parse_manifest, DatasetManifest, Split, StudyRecord};
pub use splits::{assign_splits, read_id_list};
