//! The fixed set of fourteen thoracic findings.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 14;

/// Canonical finding names, in label-vector order.
pub const DISEASE_NAMES: [&str; NUM_CLASSES] = [
    "Atelectasis",
    "Consolidation",
    "Infiltration",
    "Pneumothorax",
    "Edema",
    "Emphysema",
    "Fibrosis",
    "Effusion",
    "Pneumonia",
    "Pleural_Thickening",
    "Cardiomegaly",
    "Nodule",
    "Mass",
    "Hernia",
];

/// Source label for an image with none of the fourteen findings.
pub const NO_FINDING: &str = "No Finding";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DiseaseLabel(u8);

impl DiseaseLabel {
    pub fn all() -> impl Iterator<Item = DiseaseLabel> {
        (0..NUM_CLASSES as u8).map(DiseaseLabel)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < NUM_CLASSES).then_some(DiseaseLabel(index as u8))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        DISEASE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| DiseaseLabel(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        DISEASE_NAMES[self.index()]
    }

    /// Name with underscores replaced, as used in natural-language prompts.
    pub fn display_name(self) -> String {
        self.name().replace('_', " ")
    }
}

impl fmt::Display for DiseaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for DiseaseLabel {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        DiseaseLabel::from_name(&value).ok_or_else(|| format!("unknown finding {value:?}"))
    }
}

impl From<DiseaseLabel> for String {
    fn from(label: DiseaseLabel) -> Self {
        label.name().to_string()
    }
}

/// Multi-hot label vector over the fourteen findings.
pub type LabelVector = [u8; NUM_CLASSES];

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn labels_are_a_bijection_onto_indices() {
        let names: HashSet<_> = DISEASE_NAMES.iter().collect();
        assert_eq!(names.len(), NUM_CLASSES);
        for (i, label) in DiseaseLabel::all().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(DiseaseLabel::from_name(label.name()), Some(label));
        }
        assert!(DiseaseLabel::from_index(NUM_CLASSES).is_none());
    }

    #[test]
    fn display_name_drops_underscore() {
        assert_eq!(
            DiseaseLabel::from_name("Pleural_Thickening").unwrap().display_name(),
            "Pleural Thickening"
        );
    }
}
