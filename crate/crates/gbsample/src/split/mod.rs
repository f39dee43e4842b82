//! Benchmark split construction from COCO-format annotation files.

pub mod builder;
pub mod coco;

pub use builder::{
    assemble_splits, build_majority_split, build_minority_split, build_splits, load_labeled,
    lvis_split, random_class_partition, write_splits, SplitConfig, Splits, UnlabeledEntry,
};
pub use coco::{AnnotationIndex, CocoAnnotation, CocoCategory, CocoDataset, CocoImage, RemapTable};
