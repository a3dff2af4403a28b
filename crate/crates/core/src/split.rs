//! Open-set train/validation/test split over individuals.
//!
//! Individuals are partitioned into a *known* set, which contributes images
//! to every split, and an *unknown* set, whose images go wholly to either
//! validation or test and never to train.
//!
//! The procedure, with one [`Rng`] seeded from `config.seed` consumed in this
//! order:
//!
//! 1. Group rows by `individual_id` in order of first appearance.
//! 2. Individuals with exactly one image are known and their image goes to
//!    train.
//! 3. Shuffle the remaining individuals. The first
//!    `round(known_fraction * total) - singletons` of them are known. Of the
//!    rest, the first `round(unknown_val_fraction * total)` are unknown
//!    validation individuals and the remainder unknown test individuals.
//! 4. For each known individual in shuffled order, split its `m` images into
//!    `(train, val, test)` counts by largest remainder over
//!    `m * image_fractions` (equal remainders ordered by three fresh random
//!    keys), move one image from the larger of val/test into train if train
//!    got none, then shuffle its images and deal them out in that order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::metrics::GroundTruth;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    /// Fraction of all individuals that are known.
    pub known_fraction: f64,
    /// Fraction of all individuals that are unknown and routed to validation.
    /// The remaining unknown individuals go to test.
    pub unknown_val_fraction: f64,
    /// `(train, val, test)` image fractions for each known individual.
    pub image_fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            known_fraction: 0.6,
            unknown_val_fraction: 0.2,
            image_fractions: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::out_of_range(name, v, "(0, 1]"))
            }
        };
        unit("known_fraction", self.known_fraction)?;
        unit("unknown_val_fraction", self.unknown_val_fraction)?;
        for f in self.image_fractions {
            unit("image_fraction", f)?;
        }
        let sum: f64 = self.image_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::out_of_range("sum(image_fractions)", sum, "1 within 1e-9"));
        }
        let both = self.known_fraction + self.unknown_val_fraction;
        if both > 1.0 + 1e-9 {
            return Err(Error::out_of_range(
                "known_fraction + unknown_val_fraction",
                both,
                "<= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAssignment {
    pub image_id: String,
    pub individual_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    /// One entry per dataset row, in dataset order.
    pub images: Vec<ImageAssignment>,
    pub known: BTreeSet<String>,
    pub unknown: BTreeSet<String>,
}

impl SplitAssignment {
    /// Rebuilds an assignment from stored rows, e.g. a split CSV. The known
    /// and unknown sets must be disjoint and cover every row's individual.
    pub fn from_parts(
        images: Vec<ImageAssignment>,
        known: BTreeSet<String>,
        unknown: BTreeSet<String>,
    ) -> Result<Self> {
        let a = Self { images, known, unknown };
        a.check()?;
        Ok(a)
    }

    fn check(&self) -> Result<()> {
        if let Some(c) = self.known.intersection(&self.unknown).next() {
            return Err(Error::InvalidDataset(format!(
                "individual {c:?} is both known and unknown"
            )));
        }
        let mut in_train = BTreeSet::new();
        for (row, img) in self.images.iter().enumerate() {
            let known = self.known.contains(&img.individual_id);
            if !known && !self.unknown.contains(&img.individual_id) {
                return Err(Error::InvalidRow {
                    row,
                    reason: format!("individual {:?} is neither known nor unknown", img.individual_id),
                });
            }
            if img.split == Split::Train {
                if !known {
                    return Err(Error::InvalidRow {
                        row,
                        reason: format!("unknown individual {:?} in train", img.individual_id),
                    });
                }
                in_train.insert(img.individual_id.as_str());
            }
        }
        if let Some(c) = self.known.iter().find(|c| !in_train.contains(c.as_str())) {
            return Err(Error::InvalidDataset(format!(
                "known individual {c:?} has no train image"
            )));
        }
        Ok(())
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        self.images
            .iter()
            .enumerate()
            .filter(|(_, a)| a.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_of(&self, image_id: &str) -> Option<Split> {
        self.images.iter().find(|a| a.image_id == image_id).map(|a| a.split)
    }

    pub fn is_known(&self, individual: &str) -> bool {
        self.known.contains(individual)
    }

    pub fn count(&self, split: Split) -> usize {
        self.images.iter().filter(|a| a.split == split).count()
    }

    /// Individuals with at least one image in `split`.
    pub fn individuals_in(&self, split: Split) -> BTreeSet<&str> {
        self.images
            .iter()
            .filter(|a| a.split == split)
            .map(|a| a.individual_id.as_str())
            .collect()
    }
}

pub fn stratified_open_set_split(dataset: &EmbeddingDataset, config: &SplitConfig) -> Result<SplitAssignment> {
    config.validate()?;
    let missing = dataset.unlabeled_rows();
    if !missing.is_empty() {
        return Err(Error::MissingIndividual { rows: missing });
    }

    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
    for (row, r) in dataset.records().iter().enumerate() {
        let id = r.individual_id.as_deref().unwrap_or_default();
        let g = *slot.entry(id).or_insert_with(|| {
            groups.push((id, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(row);
    }
    let total = groups.len();
    if total < 3 {
        return Err(Error::TooFewIndividuals {
            needed: 3,
            found: total,
        });
    }

    let mut rng = Rng::new(config.seed);
    let mut splits = alloc::vec![Split::Train; dataset.len()];
    let mut known = BTreeSet::new();
    let mut unknown = BTreeSet::new();

    let (singletons, mut others): (Vec<usize>, Vec<usize>) = (0..total).partition(|&g| groups[g].1.len() == 1);
    for &g in &singletons {
        known.insert(String::from(groups[g].0));
    }
    rng.shuffle(&mut others);

    let known_target = (libm::round(config.known_fraction * total as f64) as usize).max(1);
    let known_slots = known_target.saturating_sub(singletons.len()).min(others.len());
    let (known_others, unknown_others) = others.split_at(known_slots);
    let val_unknown = (libm::round(config.unknown_val_fraction * total as f64) as usize).min(unknown_others.len());

    for (i, &g) in unknown_others.iter().enumerate() {
        let split = if i < val_unknown { Split::Val } else { Split::Test };
        for &row in &groups[g].1 {
            splits[row] = split;
        }
        unknown.insert(String::from(groups[g].0));
    }

    for &g in known_others {
        let mut rows = groups[g].1.clone();
        let counts = allocate_images(rows.len(), &config.image_fractions, &mut rng);
        rng.shuffle(&mut rows);
        let mut it = rows.into_iter();
        for (split, n) in [Split::Train, Split::Val, Split::Test].into_iter().zip(counts) {
            for row in it.by_ref().take(n) {
                splits[row] = split;
            }
        }
        known.insert(String::from(groups[g].0));
    }

    let images = dataset
        .records()
        .iter()
        .zip(splits)
        .map(|(r, split)| ImageAssignment {
            image_id: r.image_id.clone(),
            individual_id: r.individual_id.clone().unwrap_or_default(),
            split,
        })
        .collect();
    let assignment = SplitAssignment { images, known, unknown };
    debug_assert!(assignment.check().is_ok());
    Ok(assignment)
}

/// Largest-remainder allocation of `m` images over `(train, val, test)`,
/// with at least one train image.
fn allocate_images(m: usize, fractions: &[f64; 3], rng: &mut Rng) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut rems = [0.0f64; 3];
    for i in 0..3 {
        let q = m as f64 * fractions[i];
        let f = libm::floor(q);
        counts[i] = f as usize;
        rems[i] = q - f;
    }
    let keys = [rng.next_u64(), rng.next_u64(), rng.next_u64()];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| rems[b].total_cmp(&rems[a]).then(keys[a].cmp(&keys[b])));
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(m.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    if counts[0] == 0 && m > 0 {
        let donor = if counts[1] >= counts[2] { 1 } else { 2 };
        counts[donor] -= 1;
        counts[0] += 1;
    }
    counts
}

/// Ground truth for `which`, with the known/unknown sets restricted to the
/// individuals that appear there.
pub fn evaluation_view(assignment: &SplitAssignment, which: Split) -> Result<GroundTruth> {
    let items: Vec<(String, String)> = assignment
        .images
        .iter()
        .filter(|a| a.split == which)
        .map(|a| (a.image_id.clone(), a.individual_id.clone()))
        .collect();
    if items.is_empty() {
        return Err(Error::EmptySplit(which.as_str()));
    }
    let present: BTreeSet<&str> = items.iter().map(|(_, c)| c.as_str()).collect();
    let pick = |set: &BTreeSet<String>| -> BTreeSet<String> {
        set.iter().filter(|c| present.contains(c.as_str())).cloned().collect()
    };
    Ok(GroundTruth {
        known: pick(&assignment.known),
        unknown: pick(&assignment.unknown),
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MetadataRecord;
    use crate::matrix::Matrix;
    use alloc::vec;

    fn dataset(sizes: &[usize]) -> EmbeddingDataset {
        let mut recs = Vec::new();
        for (i, &n) in sizes.iter().enumerate() {
            for j in 0..n {
                let ind = format!("ind{i}");
                recs.push(MetadataRecord::new(format!("img{i}_{j}"), Some(&ind), "lynx"));
            }
        }
        let n = recs.len();
        EmbeddingDataset::new(recs, Matrix::zeros(n, 2)).unwrap()
    }

    #[test]
    fn ten_by_five_has_six_known_four_unknown() {
        let ds = dataset(&[5; 10]);
        let a = stratified_open_set_split(&ds, &SplitConfig::default()).unwrap();
        assert_eq!(a.known.len(), 6);
        assert_eq!(a.unknown.len(), 4);
        for img in &a.images {
            if a.unknown.contains(&img.individual_id) {
                assert_ne!(img.split, Split::Train);
            }
        }
        // 5 images at (0.6, 0.2, 0.2) is exactly (3, 1, 1).
        assert_eq!(a.count(Split::Train), 18);
        assert_eq!(a.individuals_in(Split::Val).len(), 6 + 2);
        assert_eq!(a.individuals_in(Split::Test).len(), 6 + 2);
    }

    #[test]
    fn singleton_lands_in_train_as_known() {
        let ds = dataset(&[1, 4, 4, 4, 4]);
        for seed in 0..20 {
            let cfg = SplitConfig {
                seed,
                ..Default::default()
            };
            let a = stratified_open_set_split(&ds, &cfg).unwrap();
            assert_eq!(a.split_of("img0_0"), Some(Split::Train));
            assert!(a.is_known("ind0"));
        }
    }

    #[test]
    fn two_image_individuals_split_train_plus_one() {
        let ds = dataset(&[2; 12]);
        let cfg = SplitConfig {
            seed: 3,
            ..Default::default()
        };
        let a = stratified_open_set_split(&ds, &cfg).unwrap();
        let mut saw_val = false;
        let mut saw_test = false;
        for c in &a.known {
            let splits: Vec<Split> = a
                .images
                .iter()
                .filter(|i| &i.individual_id == c)
                .map(|i| i.split)
                .collect();
            assert_eq!(splits.iter().filter(|s| **s == Split::Train).count(), 1);
            saw_val |= splits.contains(&Split::Val);
            saw_test |= splits.contains(&Split::Test);
        }
        assert!(saw_val && saw_test, "seeded choice should use both sides");
    }

    #[test]
    fn table_one_shape() {
        let ds = dataset(&[5; 674]);
        let cfg = SplitConfig {
            known_fraction: 404.0 / 674.0,
            unknown_val_fraction: 54.0 / 674.0,
            ..Default::default()
        };
        let a = stratified_open_set_split(&ds, &cfg).unwrap();
        assert_eq!(a.known.len(), 404);
        let val = evaluation_view(&a, Split::Val).unwrap();
        let test = evaluation_view(&a, Split::Test).unwrap();
        assert_eq!((val.known.len(), val.unknown.len()), (404, 54));
        assert_eq!((test.known.len(), test.unknown.len()), (404, 216));
        assert_eq!(a.individuals_in(Split::Train).len(), 404);
    }

    #[test]
    fn errors() {
        let ds = dataset(&[3, 3]);
        assert_eq!(
            stratified_open_set_split(&ds, &SplitConfig::default()),
            Err(Error::TooFewIndividuals { needed: 3, found: 2 })
        );
        let mut recs = dataset(&[3, 3, 3]).into_parts().0;
        recs[4].individual_id = None;
        let ds = EmbeddingDataset::new(recs, Matrix::zeros(9, 2)).unwrap();
        assert_eq!(
            stratified_open_set_split(&ds, &SplitConfig::default()),
            Err(Error::MissingIndividual { rows: vec![4] })
        );
        let bad = SplitConfig {
            image_fractions: [0.5, 0.2, 0.2],
            ..Default::default()
        };
        assert!(stratified_open_set_split(&dataset(&[3; 5]), &bad).is_err());
    }

    #[test]
    fn val_view_filters_and_tags() {
        let ds = dataset(&[5; 10]);
        let a = stratified_open_set_split(&ds, &SplitConfig::default()).unwrap();
        let v = evaluation_view(&a, Split::Val).unwrap();
        for (id, _) in &v.items {
            assert_eq!(a.split_of(id), Some(Split::Val));
        }
        assert!(v.known.is_subset(&a.known));
        assert!(v.unknown.is_subset(&a.unknown));
    }

    #[test]
    fn all_known_view_has_empty_unknown_set() {
        let ds = dataset(&[5; 5]);
        let cfg = SplitConfig {
            known_fraction: 0.999,
            unknown_val_fraction: 1e-3,
            ..Default::default()
        };
        let a = stratified_open_set_split(&ds, &cfg).unwrap();
        let v = evaluation_view(&a, Split::Val).unwrap();
        assert!(v.unknown.is_empty());
    }

    #[test]
    fn seeds_change_assignment() {
        let ds = dataset(&[5; 10]);
        let a = stratified_open_set_split(
            &ds,
            &SplitConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = stratified_open_set_split(
            &ds,
            &SplitConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let c = stratified_open_set_split(
            &ds,
            &SplitConfig {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn allocation_always_has_train() {
        let mut rng = Rng::new(0);
        for m in 1..40 {
            for fr in [[0.6, 0.2, 0.2], [0.1, 0.45, 0.45], [0.34, 0.33, 0.33]] {
                let c = allocate_images(m, &fr, &mut rng);
                assert_eq!(c.iter().sum::<usize>(), m);
                assert!(c[0] >= 1);
            }
        }
    }

    #[test]
    fn from_parts_rejects_unknown_in_train() {
        let imgs = vec![ImageAssignment {
            image_id: "x".into(),
            individual_id: "u".into(),
            split: Split::Train,
        }];
        let unknown: BTreeSet<String> = ["u".into()].into_iter().collect();
        assert!(SplitAssignment::from_parts(imgs, BTreeSet::new(), unknown).is_err());
    }
}
