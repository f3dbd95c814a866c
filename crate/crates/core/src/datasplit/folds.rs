//! Stratified k-fold assignment over gold rows.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Provenance};
use crate::domain::RiskLevel;
use crate::error::DataError;

/// Fold index for every gold post. Pseudo-labelled rows are never held out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, post_id: &str) -> Option<usize> {
        self.assignment.get(post_id).copied()
    }

    /// Post ids per fold, sorted.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut folds = vec![Vec::new(); self.k];
        for (id, &fold) in &self.assignment {
            folds[fold].push(id.clone());
        }
        folds
    }

    /// (training ids, validation ids) for `fold`: training holds the other
    /// gold folds plus every pseudo-labelled row of `dataset`.
    pub fn split(&self, dataset: &Dataset, fold: usize) -> (Vec<String>, Vec<String>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for row in dataset.rows() {
            let id = &row.post.post_id;
            match (row.provenance, self.fold_of(id)) {
                (Provenance::Pseudo, _) => train.push(id.clone()),
                (Provenance::Gold, Some(f)) if f == fold => val.push(id.clone()),
                (Provenance::Gold, Some(_)) => train.push(id.clone()),
                (Provenance::Gold, None) => {}
            }
        }
        (train, val)
    }
}

/// Shuffle each class's gold rows with `seed` and deal them round-robin over
/// `k` folds. The dealing position carries over from one class to the next,
/// so total fold sizes stay balanced too.
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    if k < 2 {
        return Err(DataError::InvalidK(k));
    }
    let mut by_class: BTreeMap<RiskLevel, Vec<&str>> =
        RiskLevel::ALL.iter().map(|&l| (l, Vec::new())).collect();
    for row in dataset.gold() {
        let label = row
            .post
            .gold_label
            .ok_or_else(|| DataError::UnlabeledGold(row.post.post_id.clone()))?;
        by_class.entry(label).or_default().push(&row.post.post_id);
    }
    for (&class, ids) in &by_class {
        if ids.len() < k {
            return Err(DataError::InsufficientClass {
                class,
                found: ids.len(),
                k,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut next = 0usize;
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            assignment.insert((*id).to_string(), next);
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, seed, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasplit::dataset::DatasetRow;
    use crate::domain::Post;
    use proptest::prelude::*;

    pub(crate) fn dataset_with_counts(counts: [usize; 4]) -> Dataset {
        let mut rows = Vec::new();
        for (class, &n) in RiskLevel::ALL.iter().zip(counts.iter()) {
            for i in 0..n {
                rows.push(DatasetRow {
                    post: Post::labeled(format!("{class}-{i}"), "text", *class).unwrap(),
                    provenance: Provenance::Gold,
                });
            }
        }
        Dataset::new(rows).unwrap()
    }

    fn per_class_fold_sizes(d: &Dataset, f: &FoldAssignment) -> BTreeMap<RiskLevel, Vec<usize>> {
        let mut sizes: BTreeMap<RiskLevel, Vec<usize>> =
            RiskLevel::ALL.iter().map(|&l| (l, vec![0; f.k])).collect();
        for row in d.gold() {
            let fold = f.fold_of(&row.post.post_id).unwrap();
            sizes.get_mut(&row.post.gold_label.unwrap()).unwrap()[fold] += 1;
        }
        sizes
    }

    #[test]
    fn attempt_class_splits_8_8_8_8_9() {
        let d = dataset_with_counts([129, 190, 140, 41]);
        let f = stratified_folds(&d, 5, 7).unwrap();
        let mut attempt = per_class_fold_sizes(&d, &f)[&RiskLevel::Attempt].clone();
        attempt.sort_unstable();
        assert_eq!(attempt, vec![8, 8, 8, 8, 9]);
        assert_eq!(f.assignment.len(), 500);
    }

    #[test]
    fn exact_division_gives_one_per_fold() {
        let d = dataset_with_counts([5, 5, 5, 5]);
        let f = stratified_folds(&d, 5, 1).unwrap();
        for sizes in per_class_fold_sizes(&d, &f).values() {
            assert_eq!(sizes, &vec![1; 5]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let d = dataset_with_counts([20, 30, 25, 10]);
        assert_eq!(stratified_folds(&d, 5, 3).unwrap(), stratified_folds(&d, 5, 3).unwrap());
        assert_ne!(stratified_folds(&d, 5, 3).unwrap(), stratified_folds(&d, 5, 4).unwrap());
    }

    #[test]
    fn small_class_is_named() {
        let d = dataset_with_counts([10, 10, 10, 3]);
        match stratified_folds(&d, 5, 0) {
            Err(DataError::InsufficientClass { class, found, k }) => {
                assert_eq!((class, found, k), (RiskLevel::Attempt, 3, 5));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_k_and_unlabeled_gold() {
        let d = dataset_with_counts([5, 5, 5, 5]);
        assert!(matches!(stratified_folds(&d, 1, 0), Err(DataError::InvalidK(1))));
        let mut d2 = d.clone();
        d2.push(DatasetRow {
            post: Post::new("nolabel", "t").unwrap(),
            provenance: Provenance::Gold,
        })
        .unwrap();
        assert!(matches!(stratified_folds(&d2, 2, 0), Err(DataError::UnlabeledGold(_))));
    }

    #[test]
    fn pseudo_rows_stay_in_training() {
        let mut d = dataset_with_counts([4, 4, 4, 4]);
        d.push(DatasetRow {
            post: Post::labeled("p", "t", RiskLevel::Ideation).unwrap(),
            provenance: Provenance::Pseudo,
        })
        .unwrap();
        let f = stratified_folds(&d, 2, 0).unwrap();
        assert_eq!(f.fold_of("p"), None);
        for fold in 0..2 {
            let (train, val) = f.split(&d, fold);
            assert!(train.contains(&"p".to_string()));
            assert_eq!(train.len() + val.len(), 17);
            assert_eq!(val.len(), 8);
        }
    }

    proptest! {
        #[test]
        fn folds_partition_gold_and_balance_classes(
            counts in prop::array::uniform4(6usize..40),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            let d = dataset_with_counts(counts);
            let f = stratified_folds(&d, k, seed).unwrap();
            let folds = f.folds();
            let total: usize = folds.iter().map(Vec::len).sum();
            prop_assert_eq!(total, d.len());
            let mut all: Vec<&String> = folds.iter().flatten().collect();
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), d.len());
            for sizes in per_class_fold_sizes(&d, &f).values() {
                let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
                prop_assert!(spread <= 1);
            }
            let totals: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(totals.iter().max().unwrap() - totals.iter().min().unwrap() <= 1);
        }
    }
}
