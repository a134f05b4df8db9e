//! Dataset ingestion, class mappings, augmentation, and the synthetic
//! generator.

pub mod augment;
pub mod class_map;
pub mod manifest;
pub mod sample;
pub mod synth;

pub use augment::{augment, AugmentParams};
pub use class_map::{
    carla_class_map, cityscapes_class_map, cityscapes_to_carla_map, ClassMap,
};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use sample::{load_sample, save_sample, Sample};
pub use synth::{gen_synthetic, SynthParams, SynthReport};

use std::path::Path;

use crate::error::{Error, Result};

/// An eagerly loaded dataset split.
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub names: Vec<String>,
}

impl Dataset {
    /// Load every manifest entry carrying the given split tag.
    pub fn load_split(manifest_path: &Path, split: &str, map: &ClassMap) -> Result<Dataset> {
        let entries = read_manifest(manifest_path)?;
        let mut samples = Vec::new();
        let mut names = Vec::new();
        for e in entries.iter().filter(|e| e.split == split) {
            samples.push(load_sample(&e.rgb, &e.depth, &e.labels, map)?);
            names.push(
                e.rgb
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("sample{}", names.len())),
            );
        }
        if samples.is_empty() {
            return Err(Error::Data(format!(
                "manifest {} has no entries for split '{split}'",
                manifest_path.display()
            )));
        }
        Ok(Dataset { samples, names })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
