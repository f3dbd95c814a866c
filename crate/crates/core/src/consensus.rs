//! Unanimity filtering of annotator labels and assembly of the training set.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::annotator::AnnotationRecord;
use crate::datasplit::{Dataset, DatasetRow, Provenance};
use crate::domain::{Post, RiskLevel};
use crate::error::ConsensusError;

/// Outcome counts of a unanimity pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub total_posts: usize,
    pub agreed_posts: usize,
    pub coverage: f64,
    pub per_class_counts: BTreeMap<RiskLevel, usize>,
}

impl ConsensusReport {
    fn from_kept(total_posts: usize, kept: &[(String, RiskLevel)]) -> Self {
        let mut per_class_counts: BTreeMap<RiskLevel, usize> =
            RiskLevel::ALL.iter().map(|&l| (l, 0)).collect();
        for (_, label) in kept {
            *per_class_counts.entry(*label).or_default() += 1;
        }
        let coverage = if total_posts == 0 {
            0.0
        } else {
            kept.len() as f64 / total_posts as f64
        };
        ConsensusReport {
            total_posts,
            agreed_posts: kept.len(),
            coverage,
            per_class_counts,
        }
    }
}

/// Keep posts on which every required annotator produced the same label.
///
/// The denominator of coverage is the number of distinct post ids among
/// `records`. A post with a missing or failed record from any required
/// annotator is dropped. Records from annotators outside `required` are
/// ignored. Output is sorted by post id.
pub fn unanimous_filter(
    records: &[AnnotationRecord],
    required: &BTreeSet<String>,
) -> Result<(Vec<(String, RiskLevel)>, ConsensusReport), ConsensusError> {
    if required.is_empty() {
        return Err(ConsensusError::NoAnnotators);
    }
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut by_post: BTreeMap<&str, HashMap<&str, Option<RiskLevel>>> = BTreeMap::new();
    for record in records {
        let key = (record.post_id.as_str(), record.annotator_id.as_str());
        if !seen.insert(key) {
            return Err(ConsensusError::DuplicateAnnotation {
                post_id: record.post_id.clone(),
                annotator_id: record.annotator_id.clone(),
            });
        }
        let labels = by_post.entry(&record.post_id).or_default();
        if required.contains(&record.annotator_id) {
            let label = if record.error.is_some() { None } else { record.label };
            labels.insert(&record.annotator_id, label);
        }
    }

    let mut kept = Vec::new();
    for (post_id, labels) in &by_post {
        let mut agreed: Option<RiskLevel> = None;
        let unanimous = required.iter().all(|id| match labels.get(id.as_str()) {
            Some(Some(label)) => *agreed.get_or_insert(*label) == *label,
            _ => false,
        });
        if unanimous {
            if let Some(label) = agreed {
                kept.push((post_id.to_string(), label));
            }
        }
    }
    let report = ConsensusReport::from_kept(by_post.len(), &kept);
    Ok((kept, report))
}

/// Join gold posts with pseudo-labels whose text is looked up in `store`.
pub fn assemble_training_set(
    gold: &[Post],
    pseudo: &[(String, RiskLevel)],
    store: &Dataset,
) -> Result<Dataset, ConsensusError> {
    let gold_ids: HashSet<&str> = gold.iter().map(|p| p.post_id.as_str()).collect();
    let mut dataset = Dataset::default();
    for post in gold {
        if post.gold_label.is_none() {
            return Err(ConsensusError::UnlabeledGold(post.post_id.clone()));
        }
        dataset.push(DatasetRow {
            post: post.clone(),
            provenance: Provenance::Gold,
        })?;
    }
    for (post_id, label) in pseudo {
        if gold_ids.contains(post_id.as_str()) {
            return Err(ConsensusError::Overlap(post_id.clone()));
        }
        let row = store
            .get(post_id)
            .ok_or_else(|| ConsensusError::UnknownPost(post_id.clone()))?;
        let mut post = row.post.clone();
        post.gold_label = Some(*label);
        dataset.push(DatasetRow {
            post,
            provenance: Provenance::Pseudo,
        })?;
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use RiskLevel::*;

    fn rec(post: &str, annotator: &str, label: Option<RiskLevel>) -> AnnotationRecord {
        AnnotationRecord {
            post_id: post.into(),
            annotator_id: annotator.into(),
            label,
            triple: None,
            refined: false,
            error: label.is_none().then(|| "unparseable".to_string()),
        }
    }

    fn fleet(n: usize) -> BTreeSet<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn unanimous_post_is_kept() {
        let records: Vec<_> = (0..3).map(|i| rec("x", &format!("m{i}"), Some(Ideation))).collect();
        let (kept, report) = unanimous_filter(&records, &fleet(3)).unwrap();
        assert_eq!(kept, vec![("x".to_string(), Ideation)]);
        assert_eq!(report.coverage, 1.0);
    }

    #[test]
    fn disagreement_discards() {
        let records = vec![
            rec("x", "m0", Some(Ideation)),
            rec("x", "m1", Some(Ideation)),
            rec("x", "m2", Some(Behaviour)),
        ];
        let (kept, report) = unanimous_filter(&records, &fleet(3)).unwrap();
        assert!(kept.is_empty());
        assert_eq!((report.total_posts, report.agreed_posts), (1, 0));
    }

    #[test]
    fn six_of_ten_gives_point_six() {
        let mut records = Vec::new();
        for p in 0..10 {
            let id = format!("p{p}");
            for m in 0..3 {
                let label = if p >= 6 && m == 2 { Attempt } else { Indicator };
                records.push(rec(&id, &format!("m{m}"), Some(label)));
            }
        }
        let (kept, report) = unanimous_filter(&records, &fleet(3)).unwrap();
        assert_eq!(kept.len(), 6);
        assert_eq!(report.coverage, 0.6);
        assert_eq!(report.per_class_counts[&Indicator], 6);
        assert_eq!(report.per_class_counts.values().sum::<usize>(), 6);
    }

    #[test]
    fn missing_or_failed_annotation_vetoes() {
        let records = vec![
            rec("a", "m0", Some(Ideation)),
            rec("a", "m1", Some(Ideation)),
            rec("b", "m0", Some(Ideation)),
            rec("b", "m1", Some(Ideation)),
            rec("b", "m2", None),
            rec("c", "m0", Some(Ideation)),
            rec("c", "m1", Some(Ideation)),
            rec("c", "m2", Some(Ideation)),
        ];
        let (kept, report) = unanimous_filter(&records, &fleet(3)).unwrap();
        assert_eq!(kept, vec![("c".to_string(), Ideation)]);
        assert_eq!(report.total_posts, 3);
    }

    #[test]
    fn extra_annotators_are_ignored() {
        let records = vec![
            rec("a", "m0", Some(Ideation)),
            rec("a", "other", Some(Attempt)),
        ];
        let (kept, _) = unanimous_filter(&records, &fleet(1)).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn duplicate_pair_is_an_error() {
        let records = vec![rec("a", "m0", Some(Ideation)), rec("a", "m0", Some(Attempt))];
        assert!(matches!(
            unanimous_filter(&records, &fleet(1)),
            Err(ConsensusError::DuplicateAnnotation { .. })
        ));
        assert!(matches!(
            unanimous_filter(&records[..1], &BTreeSet::new()),
            Err(ConsensusError::NoAnnotators)
        ));
    }

    fn gold_posts(counts: [usize; 4]) -> Vec<Post> {
        let mut posts = Vec::new();
        for (class, &n) in RiskLevel::ALL.iter().zip(&counts) {
            for i in 0..n {
                posts.push(Post::labeled(format!("g-{class}-{i}"), "gold text", *class).unwrap());
            }
        }
        posts
    }

    #[test]
    fn assembles_gold_plus_pseudo() {
        let gold = gold_posts([129, 190, 140, 41]);
        let store = Dataset::from_posts((0..1000).map(|i| Post::new(format!("u{i}"), "text").unwrap())).unwrap();
        let pseudo: Vec<_> = (0..902).map(|i| (format!("u{i}"), RiskLevel::ALL[i % 4])).collect();
        let d = assemble_training_set(&gold, &pseudo, &store).unwrap();
        assert_eq!(d.len(), 1402);
        assert_eq!(d.class_counts_for(Provenance::Gold)[&Attempt], 41);
        assert_eq!(d.class_counts_for(Provenance::Pseudo).values().sum::<usize>(), 902);
        assert_eq!(d.get("u5").unwrap().post.gold_label, Some(Ideation));
    }

    #[test]
    fn assemble_edge_cases() {
        let gold = gold_posts([1, 1, 1, 1]);
        let store = Dataset::from_posts(vec![Post::new("u", "t").unwrap()]).unwrap();
        let d = assemble_training_set(&gold, &[], &store).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.rows().iter().all(|r| r.provenance == Provenance::Gold));

        let clash = vec![(gold[0].post_id.clone(), Ideation)];
        assert!(matches!(
            assemble_training_set(&gold, &clash, &store),
            Err(ConsensusError::Overlap(_))
        ));
        let unknown = vec![("nope".to_string(), Ideation)];
        assert!(matches!(
            assemble_training_set(&gold, &unknown, &store),
            Err(ConsensusError::UnknownPost(_))
        ));
        let unlabeled = vec![Post::new("g", "t").unwrap()];
        assert!(matches!(
            assemble_training_set(&unlabeled, &[], &store),
            Err(ConsensusError::UnlabeledGold(_))
        ));
    }

    fn records_strategy() -> impl Strategy<Value = Vec<AnnotationRecord>> {
        prop::collection::vec(prop::collection::vec(prop::option::weighted(0.9, 0usize..4), 4), 1..30)
            .prop_map(|posts| {
                let mut out = Vec::new();
                for (p, labels) in posts.iter().enumerate() {
                    for (m, label) in labels.iter().enumerate() {
                        let label = label.map(|i| RiskLevel::ALL[i % 2]);
                        out.push(rec(&format!("p{p}"), &format!("m{m}"), label));
                    }
                }
                out
            })
    }

    proptest! {
        #[test]
        fn order_does_not_matter(records in records_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = unanimous_filter(&records, &fleet(4)).unwrap();
            let b = unanimous_filter(&shuffled, &fleet(4)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn more_annotators_keep_fewer(records in records_strategy()) {
            let mut prev = usize::MAX;
            for n in 1..=4 {
                let (kept, report) = unanimous_filter(&records, &fleet(n)).unwrap();
                prop_assert!(kept.len() <= prev);
                prop_assert_eq!(report.per_class_counts.values().sum::<usize>(), report.agreed_posts);
                prop_assert!((report.coverage - kept.len() as f64 / report.total_posts as f64).abs() < 1e-15);
                prev = kept.len();
            }
        }
    }
}
