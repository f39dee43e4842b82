//! COCO-format object-detection annotations and a validated index over them.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    #[serde(default)]
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// Class remap applied while indexing: `Some(new_id)` relabels a category,
/// `None` drops its annotations entirely.
pub type RemapTable = BTreeMap<u64, Option<u64>>;

/// Validated view over a [`CocoDataset`] with the reverse maps the split
/// builder needs. Construction fails on duplicate or dangling references.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationIndex {
    dataset: CocoDataset,
    class_to_images: BTreeMap<u64, BTreeSet<u64>>,
    image_to_classes: BTreeMap<u64, BTreeSet<u64>>,
    /// image -> class -> instance count
    image_class_instances: BTreeMap<u64, BTreeMap<u64, u64>>,
    class_instances: BTreeMap<u64, u64>,
}

impl AnnotationIndex {
    pub fn new(mut dataset: CocoDataset, remap: &RemapTable) -> Result<Self> {
        // apply the remap before validating against the category list
        dataset.annotations = dataset
            .annotations
            .drain(..)
            .filter_map(|mut ann| match remap.get(&ann.category_id) {
                Some(Some(new_id)) => {
                    ann.category_id = *new_id;
                    Some(ann)
                }
                Some(None) => None,
                None => Some(ann),
            })
            .collect();
        dataset
            .categories
            .retain(|c| !remap.get(&c.id).is_some());
        // remap targets must still be listed once
        let mut cat_ids: BTreeSet<u64> = BTreeSet::new();
        for cat in &dataset.categories {
            if !cat_ids.insert(cat.id) {
                bail!("duplicate category id {}", cat.id);
            }
        }
        let mut image_to_classes: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
        for img in &dataset.images {
            if image_to_classes.insert(img.id, BTreeSet::new()).is_some() {
                bail!("duplicate image id {}", img.id);
            }
        }
        let mut class_to_images: BTreeMap<u64, BTreeSet<u64>> =
            cat_ids.iter().map(|&c| (c, BTreeSet::new())).collect();
        let mut image_class_instances: BTreeMap<u64, BTreeMap<u64, u64>> = BTreeMap::new();
        let mut class_instances: BTreeMap<u64, u64> =
            cat_ids.iter().map(|&c| (c, 0)).collect();
        for ann in &dataset.annotations {
            let classes = image_to_classes.get_mut(&ann.image_id).with_context(|| {
                format!("annotation {} references missing image {}", ann.id, ann.image_id)
            })?;
            if !cat_ids.contains(&ann.category_id) {
                bail!(
                    "annotation {} references missing category {}",
                    ann.id,
                    ann.category_id
                );
            }
            classes.insert(ann.category_id);
            class_to_images
                .get_mut(&ann.category_id)
                .expect("category validated above")
                .insert(ann.image_id);
            *image_class_instances
                .entry(ann.image_id)
                .or_default()
                .entry(ann.category_id)
                .or_insert(0) += 1;
            *class_instances.get_mut(&ann.category_id).unwrap() += 1;
        }
        // canonical order for deterministic downstream sampling
        dataset.images.sort_by_key(|i| i.id);
        dataset.annotations.sort_by_key(|a| a.id);
        dataset.categories.sort_by_key(|c| c.id);
        Ok(Self {
            dataset,
            class_to_images,
            image_to_classes,
            image_class_instances,
            class_instances,
        })
    }

    pub fn load(path: &Path, remap: &RemapTable) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading annotations {}", path.display()))?;
        let dataset: CocoDataset = serde_json::from_str(&text)
            .with_context(|| format!("parsing annotations {}", path.display()))?;
        Self::new(dataset, remap)
    }

    pub fn dataset(&self) -> &CocoDataset {
        &self.dataset
    }

    pub fn n_images(&self) -> usize {
        self.dataset.images.len()
    }

    pub fn n_annotations(&self) -> usize {
        self.dataset.annotations.len()
    }

    /// Sorted image ids.
    pub fn image_ids(&self) -> Vec<u64> {
        self.dataset.images.iter().map(|i| i.id).collect()
    }

    pub fn category_ids(&self) -> Vec<u64> {
        self.dataset.categories.iter().map(|c| c.id).collect()
    }

    pub fn category_name(&self, class: u64) -> Option<&str> {
        self.dataset
            .categories
            .iter()
            .find(|c| c.id == class)
            .map(|c| c.name.as_str())
    }

    /// Images containing at least one instance of `class`, sorted.
    pub fn images_of_class(&self, class: u64) -> &BTreeSet<u64> {
        static EMPTY: BTreeSet<u64> = BTreeSet::new();
        self.class_to_images.get(&class).unwrap_or(&EMPTY)
    }

    pub fn classes_of_image(&self, image: u64) -> &BTreeSet<u64> {
        static EMPTY: BTreeSet<u64> = BTreeSet::new();
        self.image_to_classes.get(&image).unwrap_or(&EMPTY)
    }

    /// Instances of `class` within one image.
    pub fn instances_in_image(&self, image: u64, class: u64) -> u64 {
        self.image_class_instances
            .get(&image)
            .and_then(|m| m.get(&class))
            .copied()
            .unwrap_or(0)
    }

    /// Corpus-wide instance count of `class`.
    pub fn class_instances(&self, class: u64) -> u64 {
        self.class_instances.get(&class).copied().unwrap_or(0)
    }

    /// Restriction of the dataset to `images`: their records and annotations,
    /// all categories, in canonical id order.
    pub fn restrict(&self, images: &BTreeSet<u64>) -> CocoDataset {
        CocoDataset {
            images: self
                .dataset
                .images
                .iter()
                .filter(|i| images.contains(&i.id))
                .cloned()
                .collect(),
            annotations: self
                .dataset
                .annotations
                .iter()
                .filter(|a| images.contains(&a.image_id))
                .cloned()
                .collect(),
            categories: self.dataset.categories.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(id: u64) -> CocoImage {
        CocoImage {
            id,
            file_name: format!("{id:06}.jpg"),
        }
    }

    fn ann(id: u64, image_id: u64, category_id: u64) -> CocoAnnotation {
        CocoAnnotation {
            id,
            image_id,
            category_id,
            bbox: [0.0, 0.0, 10.0, 10.0],
        }
    }

    fn cat(id: u64, name: &str) -> CocoCategory {
        CocoCategory {
            id,
            name: name.into(),
        }
    }

    fn fixture() -> CocoDataset {
        CocoDataset {
            images: vec![img(1), img(2), img(3)],
            annotations: vec![
                ann(10, 1, 100),
                ann(11, 1, 100),
                ann(12, 1, 200),
                ann(13, 2, 200),
                ann(14, 3, 100),
            ],
            categories: vec![cat(100, "cat"), cat(200, "dog")],
        }
    }

    #[test]
    fn empty_dataset_indexes_to_zero_counts() {
        let idx = AnnotationIndex::new(CocoDataset::default(), &RemapTable::new()).unwrap();
        assert_eq!(idx.n_images(), 0);
        assert_eq!(idx.n_annotations(), 0);
    }

    #[test]
    fn fixture_counts_match_hand_totals() {
        let idx = AnnotationIndex::new(fixture(), &RemapTable::new()).unwrap();
        assert_eq!(idx.n_images(), 3);
        assert_eq!(idx.n_annotations(), 5);
        assert_eq!(idx.class_instances(100), 3);
        assert_eq!(idx.class_instances(200), 2);
        assert_eq!(
            idx.images_of_class(100).iter().copied().collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert_eq!(idx.instances_in_image(1, 100), 2);
        assert_eq!(
            idx.classes_of_image(1).iter().copied().collect::<Vec<_>>(),
            vec![100, 200]
        );
    }

    #[test]
    fn dangling_references_rejected() {
        let mut bad = fixture();
        bad.annotations.push(ann(99, 42, 100));
        assert!(AnnotationIndex::new(bad, &RemapTable::new()).is_err());
        let mut bad = fixture();
        bad.annotations.push(ann(99, 1, 300));
        assert!(AnnotationIndex::new(bad, &RemapTable::new()).is_err());
        let mut bad = fixture();
        bad.images.push(img(1));
        assert!(AnnotationIndex::new(bad, &RemapTable::new()).is_err());
    }

    #[test]
    fn remap_relabels_and_drops() {
        let mut remap = RemapTable::new();
        remap.insert(100, Some(200)); // merge "cat" into "dog"
        let idx = AnnotationIndex::new(fixture(), &remap).unwrap();
        assert_eq!(idx.class_instances(200), 5);
        assert_eq!(idx.class_instances(100), 0);
        assert_eq!(idx.category_ids(), vec![200]);

        let mut remap = RemapTable::new();
        remap.insert(200, None); // drop "dog"
        let idx = AnnotationIndex::new(fixture(), &remap).unwrap();
        assert_eq!(idx.n_annotations(), 3);
        assert_eq!(idx.category_ids(), vec![100]);
    }
}
