//! Benchmark split construction: a seeded fraction of majority-class images,
//! minority images added until each rare class reaches its instance floor,
//! and the remainder stripped of annotations as the unlabeled pool.

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use crate::rng::substream;

use super::coco::{AnnotationIndex, RemapTable};

pub const STREAM_MAJORITY: &str = "split/majority";
pub const STREAM_MINORITY: &str = "split/minority";
pub const STREAM_LVIS: &str = "split/lvis";
pub const STREAM_CLASS_PARTITION: &str = "split/class-partition";

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub majority: BTreeSet<u64>,
    pub minority: BTreeSet<u64>,
    /// Fraction of majority-containing images sampled into the labeled set.
    pub fraction: f64,
    /// Minimum labeled instances per minority class.
    pub min_instances: u64,
    pub seed: u64,
    pub remap: RemapTable,
}

impl SplitConfig {
    pub fn new(majority: BTreeSet<u64>, minority: BTreeSet<u64>, seed: u64) -> Self {
        Self {
            majority,
            minority,
            fraction: 0.10,
            min_instances: 10,
            seed,
            remap: RemapTable::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.fraction && self.fraction <= 1.0) {
            bail!("fraction must be in (0, 1], got {}", self.fraction);
        }
        if let Some(c) = self.majority.intersection(&self.minority).next() {
            bail!("class {c} listed as both majority and minority");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub labeled: BTreeSet<u64>,
    pub unlabeled: BTreeSet<u64>,
}

/// Seeded uniform sample of `ceil(fraction * |pool|)` images from the pool of
/// images containing any majority class.
pub fn build_majority_split(index: &AnnotationIndex, cfg: &SplitConfig) -> Result<BTreeSet<u64>> {
    cfg.validate()?;
    let pool: Vec<u64> = index
        .image_ids()
        .into_iter()
        .filter(|&img| {
            index
                .classes_of_image(img)
                .iter()
                .any(|c| cfg.majority.contains(c))
        })
        .collect();
    if pool.is_empty() {
        bail!("no image contains any majority class");
    }
    let count = (cfg.fraction * pool.len() as f64).ceil() as usize;
    let mut rng = substream(cfg.seed, STREAM_MAJORITY);
    Ok(pool
        .choose_multiple(&mut rng, count)
        .copied()
        .collect())
}

/// Adds minority-class images until every minority class has at least
/// `min_instances` instances across all selected images (those given in
/// `already_selected` plus the ones chosen here). Classes are visited in a
/// seeded random order; co-occurrence overshoot is allowed.
pub fn build_minority_split(
    index: &AnnotationIndex,
    cfg: &SplitConfig,
    already_selected: &BTreeSet<u64>,
) -> Result<BTreeSet<u64>> {
    cfg.validate()?;
    let k = cfg.min_instances;
    if k == 0 {
        return Ok(BTreeSet::new());
    }
    for &c in &cfg.minority {
        let total = index.class_instances(c);
        if total < k {
            bail!("minority class {c} has only {total} instances in the corpus, need {k}");
        }
    }
    let mut rng = substream(cfg.seed, STREAM_MINORITY);
    let mut order: Vec<u64> = cfg.minority.iter().copied().collect();
    order.shuffle(&mut rng);

    let mut selected = BTreeSet::new();
    let count_for = |c: u64, selected: &BTreeSet<u64>| -> u64 {
        already_selected
            .iter()
            .chain(selected.iter())
            .map(|&img| index.instances_in_image(img, c))
            .sum()
    };
    for &c in &order {
        while count_for(c, &selected) < k {
            let candidates: Vec<u64> = index
                .images_of_class(c)
                .iter()
                .copied()
                .filter(|img| !already_selected.contains(img) && !selected.contains(img))
                .collect();
            if candidates.is_empty() {
                bail!("minority class {c} cannot reach {k} instances");
            }
            let pick = candidates[rng.gen_range(0..candidates.len())];
            selected.insert(pick);
        }
    }
    Ok(selected)
}

/// Union of the two labeled selections plus the complement as the unlabeled
/// pool: a partition of the corpus.
pub fn assemble_splits(index: &AnnotationIndex, d_m: &BTreeSet<u64>, d_s: &BTreeSet<u64>) -> Splits {
    let labeled: BTreeSet<u64> = d_m.union(d_s).copied().collect();
    let unlabeled = index
        .image_ids()
        .into_iter()
        .filter(|img| !labeled.contains(img))
        .collect();
    Splits { labeled, unlabeled }
}

/// Convenience: majority + minority + assembly in one call.
pub fn build_splits(index: &AnnotationIndex, cfg: &SplitConfig) -> Result<Splits> {
    let d_m = build_majority_split(index, cfg)?;
    let d_s = build_minority_split(index, cfg, &d_m)?;
    Ok(assemble_splits(index, &d_m, &d_s))
}

/// Long-tail variant: seeded random `fraction` of all images, then one image
/// greedily added per still-uncovered class (most uncovered classes first,
/// lowest id on ties) until every class has at least one labeled instance.
pub fn lvis_split(index: &AnnotationIndex, cfg: &SplitConfig) -> Result<Splits> {
    cfg.validate()?;
    let all = index.image_ids();
    if all.is_empty() {
        bail!("empty corpus");
    }
    let count = (cfg.fraction * all.len() as f64).ceil() as usize;
    let mut rng = substream(cfg.seed, STREAM_LVIS);
    let mut labeled: BTreeSet<u64> = all.choose_multiple(&mut rng, count).copied().collect();

    let mut uncovered: BTreeSet<u64> = index.category_ids().into_iter().collect();
    for &img in &labeled {
        for c in index.classes_of_image(img) {
            uncovered.remove(c);
        }
    }
    while let Some(&c) = uncovered.iter().next() {
        let pick = index
            .images_of_class(c)
            .iter()
            .copied()
            .filter(|img| !labeled.contains(img))
            .max_by_key(|&img| {
                let gain = index
                    .classes_of_image(img)
                    .intersection(&uncovered)
                    .count();
                (gain, std::cmp::Reverse(img))
            })
            .with_context(|| format!("class {c} has no remaining image to cover it"))?;
        labeled.insert(pick);
        for covered in index.classes_of_image(pick) {
            uncovered.remove(covered);
        }
    }
    let unlabeled = all.into_iter().filter(|img| !labeled.contains(img)).collect();
    Ok(Splits { labeled, unlabeled })
}

/// Seeded random partition of a class list into a majority/minority pair
/// (for benchmarks defined by a random class split).
pub fn random_class_partition(
    classes: &[u64],
    n_minority: usize,
    seed: u64,
) -> Result<(BTreeSet<u64>, BTreeSet<u64>)> {
    if n_minority > classes.len() {
        bail!(
            "cannot take {n_minority} minority classes from {}",
            classes.len()
        );
    }
    let mut order = classes.to_vec();
    order.sort_unstable();
    order.dedup();
    if order.len() != classes.len() {
        bail!("class list contains duplicates");
    }
    let mut rng = substream(seed, STREAM_CLASS_PARTITION);
    order.shuffle(&mut rng);
    let minority: BTreeSet<u64> = order[..n_minority].iter().copied().collect();
    let majority = order[n_minority..].iter().copied().collect();
    Ok((majority, minority))
}

/// Unlabeled-pool record: image identity only, no annotations.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnlabeledEntry {
    pub id: u64,
    pub file_name: String,
}

/// Writes `labeled.json` (COCO annotations of the labeled images),
/// `unlabeled.json` (image ids and file names only) and `audit.csv`
/// (one row per class) into `out_dir`. Output is canonically ordered, so
/// identical splits produce byte-identical files.
pub fn write_splits(index: &AnnotationIndex, splits: &Splits, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let labeled_set = index.restrict(&splits.labeled);
    write_json(&out_dir.join("labeled.json"), &labeled_set)?;

    let unlabeled: Vec<UnlabeledEntry> = index
        .dataset()
        .images
        .iter()
        .filter(|i| splits.unlabeled.contains(&i.id))
        .map(|i| UnlabeledEntry {
            id: i.id,
            file_name: i.file_name.clone(),
        })
        .collect();
    write_json(&out_dir.join("unlabeled.json"), &unlabeled)?;

    let audit_path = out_dir.join("audit.csv");
    let file = std::fs::File::create(&audit_path)
        .with_context(|| format!("creating {}", audit_path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "class_id",
        "class_name",
        "labeled_images",
        "labeled_instances",
        "unlabeled_images",
        "corpus_instances",
    ])?;
    for c in index.category_ids() {
        let labeled_images = index
            .images_of_class(c)
            .iter()
            .filter(|img| splits.labeled.contains(img))
            .count();
        let labeled_instances: u64 = splits
            .labeled
            .iter()
            .map(|&img| index.instances_in_image(img, c))
            .sum();
        let unlabeled_images = index.images_of_class(c).len() - labeled_images;
        w.write_record([
            c.to_string(),
            index.category_name(c).unwrap_or("").to_string(),
            labeled_images.to_string(),
            labeled_instances.to_string(),
            unlabeled_images.to_string(),
            index.class_instances(c).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a `labeled.json` back into an index (round-trip check helper).
pub fn load_labeled(path: &Path) -> Result<AnnotationIndex> {
    AnnotationIndex::load(path, &RemapTable::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::coco::{CocoAnnotation, CocoCategory, CocoDataset, CocoImage};

    /// Corpus where majority class 0 appears in images 0..n_maj, and each
    /// minority class c in 1..=n_min appears alone in its own block of
    /// images, one instance per image.
    fn corpus(n_maj: usize, n_min: usize, per_min: usize) -> AnnotationIndex {
        let mut images = Vec::new();
        let mut annotations = Vec::new();
        let mut next_ann = 0u64;
        let mut next_img = 0u64;
        for _ in 0..n_maj {
            images.push(CocoImage {
                id: next_img,
                file_name: format!("{next_img:06}.jpg"),
            });
            annotations.push(CocoAnnotation {
                id: next_ann,
                image_id: next_img,
                category_id: 0,
                bbox: [0.0; 4],
            });
            next_img += 1;
            next_ann += 1;
        }
        for c in 1..=n_min as u64 {
            for _ in 0..per_min {
                images.push(CocoImage {
                    id: next_img,
                    file_name: format!("{next_img:06}.jpg"),
                });
                annotations.push(CocoAnnotation {
                    id: next_ann,
                    image_id: next_img,
                    category_id: c,
                    bbox: [0.0; 4],
                });
                next_img += 1;
                next_ann += 1;
            }
        }
        let categories = (0..=n_min as u64)
            .map(|id| CocoCategory {
                id,
                name: format!("class-{id}"),
            })
            .collect();
        AnnotationIndex::new(
            CocoDataset {
                images,
                annotations,
                categories,
            },
            &RemapTable::new(),
        )
        .unwrap()
    }

    fn cfg(seed: u64) -> SplitConfig {
        SplitConfig::new(BTreeSet::from([0]), BTreeSet::from([1, 2]), seed)
    }

    #[test]
    fn majority_sample_size_is_ceil_fraction() {
        let index = corpus(100, 2, 12);
        let d_m = build_majority_split(&index, &cfg(7)).unwrap();
        assert_eq!(d_m.len(), 10);
        // all sampled images actually contain the majority class
        assert!(d_m.iter().all(|&img| index.classes_of_image(img).contains(&0)));
        // fraction 1.0 takes the whole pool
        let mut full = cfg(7);
        full.fraction = 1.0;
        assert_eq!(build_majority_split(&index, &full).unwrap().len(), 100);
    }

    #[test]
    fn majority_sample_is_deterministic() {
        let index = corpus(100, 2, 12);
        let a = build_majority_split(&index, &cfg(7)).unwrap();
        let b = build_majority_split(&index, &cfg(7)).unwrap();
        assert_eq!(a, b);
        let c = build_majority_split(&index, &cfg(8)).unwrap();
        assert_ne!(a, c); // overwhelmingly likely for 10-of-100
    }

    #[test]
    fn isolated_minority_classes_need_exactly_k_images() {
        let index = corpus(20, 3, 15);
        let mut config = cfg(3);
        config.minority = BTreeSet::from([1, 2, 3]);
        let d_s = build_minority_split(&index, &config, &BTreeSet::new()).unwrap();
        // one instance per image, no co-occurrence: exactly k images per class
        assert_eq!(d_s.len(), 3 * 10);
        for c in [1u64, 2, 3] {
            let n: u64 = d_s.iter().map(|&img| index.instances_in_image(img, c)).sum();
            assert_eq!(n, 10);
        }
    }

    #[test]
    fn cooccurring_classes_satisfy_each_other() {
        // both minority classes appear together, k instances across k images
        let images: Vec<CocoImage> = (0..12)
            .map(|id| CocoImage {
                id,
                file_name: format!("{id}.jpg"),
            })
            .collect();
        let mut annotations = Vec::new();
        for img in 0..12u64 {
            for c in [1u64, 2] {
                annotations.push(CocoAnnotation {
                    id: img * 2 + c,
                    image_id: img,
                    category_id: c,
                    bbox: [0.0; 4],
                });
            }
        }
        let index = AnnotationIndex::new(
            CocoDataset {
                images,
                annotations,
                categories: vec![
                    CocoCategory { id: 1, name: "a".into() },
                    CocoCategory { id: 2, name: "b".into() },
                ],
            },
            &RemapTable::new(),
        )
        .unwrap();
        let mut config = SplitConfig::new(BTreeSet::new(), BTreeSet::from([1, 2]), 5);
        config.min_instances = 10;
        let d_s = build_minority_split(&index, &config, &BTreeSet::new()).unwrap();
        // selecting for one class covers the other: 10 images, not 20
        assert_eq!(d_s.len(), 10);
    }

    #[test]
    fn zero_min_instances_gives_empty_selection() {
        let index = corpus(10, 2, 12);
        let mut config = cfg(1);
        config.min_instances = 0;
        assert!(build_minority_split(&index, &config, &BTreeSet::new())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn scarce_minority_class_is_named_in_error() {
        let index = corpus(10, 2, 5); // only 5 instances, need 10
        let err = build_minority_split(&index, &cfg(1), &BTreeSet::new()).unwrap_err();
        assert!(err.to_string().contains("class 1") || err.to_string().contains("class 2"));
    }

    #[test]
    fn splits_partition_the_corpus() {
        let index = corpus(50, 2, 12);
        let splits = build_splits(&index, &cfg(11)).unwrap();
        assert!(splits.labeled.is_disjoint(&splits.unlabeled));
        let mut all: Vec<u64> = splits
            .labeled
            .union(&splits.unlabeled)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, index.image_ids());
        // empty selections: everything unlabeled
        let empty = assemble_splits(&index, &BTreeSet::new(), &BTreeSet::new());
        assert_eq!(empty.unlabeled.len(), index.n_images());
    }

    #[test]
    fn lvis_split_covers_every_class() {
        let index = corpus(1000, 5, 1); // classes 1..=5 live in exactly one image each
        let mut config = cfg(9);
        config.majority = BTreeSet::new();
        config.minority = BTreeSet::new();
        let splits = lvis_split(&index, &config).unwrap();
        for c in index.category_ids() {
            assert!(
                index
                    .images_of_class(c)
                    .iter()
                    .any(|img| splits.labeled.contains(img)),
                "class {c} uncovered"
            );
        }
        // 10% of 1005 images plus at most one image per class
        let base = (0.10 * index.n_images() as f64).ceil() as usize;
        assert!(splits.labeled.len() >= base);
        assert!(splits.labeled.len() <= base + index.category_ids().len());
    }

    #[test]
    fn class_partition_is_seeded_and_complete() {
        let classes: Vec<u64> = (0..40).collect();
        let (maj_a, min_a) = random_class_partition(&classes, 10, 3).unwrap();
        let (maj_b, min_b) = random_class_partition(&classes, 10, 3).unwrap();
        assert_eq!((maj_a.clone(), min_a.clone()), (maj_b, min_b));
        assert_eq!(min_a.len(), 10);
        assert_eq!(maj_a.len(), 30);
        assert!(maj_a.is_disjoint(&min_a));
        assert!(random_class_partition(&classes, 41, 3).is_err());
        assert!(random_class_partition(&[1, 1], 1, 3).is_err());
    }

    #[test]
    fn written_splits_round_trip_and_leak_nothing() {
        let index = corpus(50, 2, 12);
        let splits = build_splits(&index, &cfg(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_splits(&index, &splits, dir.path()).unwrap();

        let back = load_labeled(&dir.path().join("labeled.json")).unwrap();
        assert_eq!(
            back.image_ids(),
            splits.labeled.iter().copied().collect::<Vec<_>>()
        );
        assert_eq!(back.dataset(), &index.restrict(&splits.labeled));

        let unlabeled_text =
            std::fs::read_to_string(dir.path().join("unlabeled.json")).unwrap();
        let unlabeled: Vec<UnlabeledEntry> = serde_json::from_str(&unlabeled_text).unwrap();
        assert_eq!(unlabeled.len(), splits.unlabeled.len());
        assert!(!unlabeled_text.contains("category_id"));
        assert!(!unlabeled_text.contains("bbox"));

        let audit = std::fs::read_to_string(dir.path().join("audit.csv")).unwrap();
        assert_eq!(audit.lines().count(), 1 + index.category_ids().len());
    }

    #[test]
    fn written_files_are_byte_identical_across_runs() {
        let index = corpus(50, 2, 12);
        let splits = build_splits(&index, &cfg(2)).unwrap();
        let read_all = |dir: &Path| {
            ["labeled.json", "unlabeled.json", "audit.csv"]
                .map(|f| std::fs::read(dir.join(f)).unwrap())
        };
        let a = tempfile::tempdir().unwrap();
        write_splits(&index, &splits, a.path()).unwrap();
        let b = tempfile::tempdir().unwrap();
        let splits_b = build_splits(&index, &cfg(2)).unwrap();
        write_splits(&index, &splits_b, b.path()).unwrap();
        assert_eq!(read_all(a.path()), read_all(b.path()));
    }
}
