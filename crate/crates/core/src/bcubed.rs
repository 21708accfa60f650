//! B-cubed evaluation of a candidate cognate partition against a gold one.
//!
//! Every item is scored in place: its precision is the fraction of items in
//! its candidate cluster that are truly cognate with it, its recall the
//! fraction of its gold cluster that the candidate cluster recovers. Item
//! scores are averaged per concept, concept scores are averaged into the
//! global figures (use [`Averaging::ItemMean`] to weight concepts by their
//! item counts instead), and the F-score is the harmonic mean of the global
//! precision and recall.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::cogcluster::CognatePartition;
use crate::error::{Error, Result};

/// How per-concept scores are combined into the global figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Unweighted mean over concepts (the default).
    #[default]
    ConceptMean,
    /// Mean over all items, weighting concepts by their size.
    ItemMean,
}

/// Global B-cubed scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcubedScores {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

/// Per-item precision/recall pairs of one concept, plus the concept means.
struct ConceptScores {
    items: usize,
    precision_sum: f64,
    recall_sum: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Compares a candidate partition to a gold partition over the same items.
///
/// Fails with a mismatch error when the two partitions cover different item
/// sets or disagree about an item's concept, and with an argument error when
/// the partitions are empty.
pub fn bcubed(
    candidate: &CognatePartition,
    gold: &CognatePartition,
    averaging: Averaging,
) -> Result<BcubedScores> {
    if candidate.is_empty() || gold.is_empty() {
        return Err(Error::Argument("cannot evaluate empty partitions".into()));
    }
    let cand_ids: BTreeSet<&String> = candidate.iter().map(|(id, _)| id).collect();
    let gold_ids: BTreeSet<&String> = gold.iter().map(|(id, _)| id).collect();
    if cand_ids != gold_ids {
        let only_cand: Vec<&str> =
            cand_ids.difference(&gold_ids).take(5).map(|s| s.as_str()).collect();
        let only_gold: Vec<&str> =
            gold_ids.difference(&cand_ids).take(5).map(|s| s.as_str()).collect();
        return Err(Error::Mismatch(format!(
            "partitions cover different items (candidate only: [{}], gold only: [{}])",
            only_cand.join(", "),
            only_gold.join(", ")
        )));
    }

    // Group items by concept, carrying both cluster indices.
    let mut by_concept: BTreeMap<&str, Vec<(&str, usize, usize)>> = BTreeMap::new();
    for (id, cand_label) in candidate.iter() {
        let gold_label = gold.label_of(id).expect("id sets match");
        if cand_label.concept != gold_label.concept {
            return Err(Error::Mismatch(format!(
                "item '{id}' filed under concept '{}' by the candidate but '{}' by the gold \
                 partition",
                cand_label.concept, gold_label.concept
            )));
        }
        by_concept
            .entry(cand_label.concept.as_str())
            .or_default()
            .push((id, cand_label.index, gold_label.index));
    }

    let mut concept_scores = Vec::with_capacity(by_concept.len());
    for items in by_concept.values() {
        // joint[(c, g)] = number of concept items in candidate cluster c and
        // gold cluster g; the diagonal lookup gives both per-item ratios.
        let mut cand_size: BTreeMap<usize, f64> = BTreeMap::new();
        let mut gold_size: BTreeMap<usize, f64> = BTreeMap::new();
        let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(_, c, g) in items {
            *cand_size.entry(c).or_insert(0.0) += 1.0;
            *gold_size.entry(g).or_insert(0.0) += 1.0;
            *joint.entry((c, g)).or_insert(0.0) += 1.0;
        }
        let mut precision_sum = 0.0;
        let mut recall_sum = 0.0;
        for &(_, c, g) in items {
            let overlap = joint[&(c, g)];
            precision_sum += overlap / cand_size[&c];
            recall_sum += overlap / gold_size[&g];
        }
        concept_scores.push(ConceptScores { items: items.len(), precision_sum, recall_sum });
    }

    let (precision, recall) = match averaging {
        Averaging::ConceptMean => {
            let n = concept_scores.len() as f64;
            (
                concept_scores.iter().map(|c| c.precision_sum / c.items as f64).sum::<f64>() / n,
                concept_scores.iter().map(|c| c.recall_sum / c.items as f64).sum::<f64>() / n,
            )
        }
        Averaging::ItemMean => {
            let n = concept_scores.iter().map(|c| c.items).sum::<usize>() as f64;
            (
                concept_scores.iter().map(|c| c.precision_sum).sum::<f64>() / n,
                concept_scores.iter().map(|c| c.recall_sum).sum::<f64>() / n,
            )
        }
    };
    Ok(BcubedScores { precision, recall, fscore: harmonic(precision, recall) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cogcluster::ClusterLabel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Builds a partition from (id, concept, cluster) triples.
    fn partition(items: &[(&str, &str, usize)]) -> CognatePartition {
        let assignments = items
            .iter()
            .map(|&(id, concept, index)| {
                (id.to_owned(), ClusterLabel { concept: concept.to_owned(), index })
            })
            .collect();
        CognatePartition::new(assignments)
    }

    #[test]
    fn identical_partitions_score_one() {
        let p = partition(&[("1", "c", 0), ("2", "c", 0), ("3", "c", 1), ("4", "d", 0)]);
        let s = bcubed(&p, &p, Averaging::ConceptMean).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.fscore, 1.0);
    }

    #[test]
    fn merging_two_gold_singletons_halves_precision() {
        let cand = partition(&[("1", "c", 0), ("2", "c", 0)]);
        let gold = partition(&[("1", "c", 0), ("2", "c", 1)]);
        let s = bcubed(&cand, &gold, Averaging::ConceptMean).unwrap();
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 1.0);
        assert!((s.fscore - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn splitting_one_gold_cluster_into_singletons_halves_recall() {
        let cand = partition(&[("1", "c", 0), ("2", "c", 1), ("3", "c", 2), ("4", "c", 3)]);
        let gold = partition(&[("1", "c", 0), ("2", "c", 0), ("3", "c", 0), ("4", "c", 0)]);
        let s = bcubed(&cand, &gold, Averaging::ConceptMean).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.25);
        assert!((s.fscore - 0.4).abs() < 1e-15);
    }

    #[test]
    fn precision_of_a_against_b_is_recall_of_b_against_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let concepts = rng.gen_range(1..=4);
            let mut a_items = Vec::new();
            let mut b_items = Vec::new();
            for c in 0..concepts {
                let n = rng.gen_range(1..=8);
                for i in 0..n {
                    let id = format!("{c}-{i}");
                    a_items.push((id.clone(), format!("c{c}"), rng.gen_range(0..4usize)));
                    b_items.push((id, format!("c{c}"), rng.gen_range(0..4usize)));
                }
            }
            let build = |items: &[(String, String, usize)]| {
                CognatePartition::new(
                    items
                        .iter()
                        .map(|(id, concept, index)| {
                            (
                                id.clone(),
                                ClusterLabel { concept: concept.clone(), index: *index },
                            )
                        })
                        .collect(),
                )
            };
            let a = build(&a_items);
            let b = build(&b_items);
            for avg in [Averaging::ConceptMean, Averaging::ItemMean] {
                let ab = bcubed(&a, &b, avg).unwrap();
                let ba = bcubed(&b, &a, avg).unwrap();
                assert!((ab.precision - ba.recall).abs() < 1e-12);
                assert!((ab.recall - ba.precision).abs() < 1e-12);
                assert!((ab.fscore - ba.fscore).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concept_mean_weights_small_concepts_equally() {
        // Concept "big" (4 items, candidate merges two gold pairs -> P=0.5,
        // R=1); concept "tiny" (1 item, perfect -> P=R=1).
        let cand = partition(&[
            ("b1", "big", 0),
            ("b2", "big", 0),
            ("b3", "big", 0),
            ("b4", "big", 0),
            ("t1", "tiny", 0),
        ]);
        let gold = partition(&[
            ("b1", "big", 0),
            ("b2", "big", 0),
            ("b3", "big", 1),
            ("b4", "big", 1),
            ("t1", "tiny", 0),
        ]);
        let by_concept = bcubed(&cand, &gold, Averaging::ConceptMean).unwrap();
        assert!((by_concept.precision - 0.75).abs() < 1e-15); // (0.5 + 1)/2
        let by_item = bcubed(&cand, &gold, Averaging::ItemMean).unwrap();
        assert!((by_item.precision - 0.6).abs() < 1e-15); // (4*0.5 + 1)/5
        assert_eq!(by_concept.recall, 1.0);
        assert_eq!(by_item.recall, 1.0);
    }

    #[test]
    fn item_set_mismatch_is_reported_with_ids() {
        let cand = partition(&[("1", "c", 0), ("2", "c", 0)]);
        let gold = partition(&[("1", "c", 0), ("3", "c", 0)]);
        match bcubed(&cand, &gold, Averaging::ConceptMean) {
            Err(Error::Mismatch(msg)) => {
                assert!(msg.contains('2') && msg.contains('3'), "got: {msg}");
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn concept_disagreement_is_a_mismatch() {
        let cand = partition(&[("1", "c", 0)]);
        let gold = partition(&[("1", "d", 0)]);
        assert!(matches!(
            bcubed(&cand, &gold, Averaging::ConceptMean),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn empty_partitions_are_rejected() {
        let empty = partition(&[]);
        assert!(matches!(
            bcubed(&empty, &empty, Averaging::ConceptMean),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn matches_per_item_counting_oracle() {
        // Oracle: score each item by scanning every other item of its
        // concept, without any precomputed tables.
        fn oracle(cand: &CognatePartition, gold: &CognatePartition, avg: Averaging) -> BcubedScores {
            let items: Vec<(&String, &ClusterLabel, &ClusterLabel)> = cand
                .iter()
                .map(|(id, cl)| (id, cl, gold.label_of(id).unwrap()))
                .collect();
            let mut concept_p: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            let mut concept_r: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for &(_, cl, gl) in &items {
                let mut same_cand = 0.0;
                let mut same_gold = 0.0;
                let mut same_both = 0.0;
                for &(_, ocl, ogl) in &items {
                    if ocl.concept != cl.concept {
                        continue;
                    }
                    let cand_match = ocl.index == cl.index;
                    let gold_match = ogl.index == gl.index;
                    if cand_match {
                        same_cand += 1.0;
                    }
                    if gold_match {
                        same_gold += 1.0;
                    }
                    if cand_match && gold_match {
                        same_both += 1.0;
                    }
                }
                concept_p.entry(&cl.concept).or_default().push(same_both / same_cand);
                concept_r.entry(&cl.concept).or_default().push(same_both / same_gold);
            }
            let (p, r) = match avg {
                Averaging::ConceptMean => {
                    let p = concept_p
                        .values()
                        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                        .sum::<f64>()
                        / concept_p.len() as f64;
                    let r = concept_r
                        .values()
                        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                        .sum::<f64>()
                        / concept_r.len() as f64;
                    (p, r)
                }
                Averaging::ItemMean => {
                    let n: usize = concept_p.values().map(Vec::len).sum();
                    let p = concept_p.values().flatten().sum::<f64>() / n as f64;
                    let r = concept_r.values().flatten().sum::<f64>() / n as f64;
                    (p, r)
                }
            };
            BcubedScores { precision: p, recall: r, fscore: harmonic(p, r) }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..200 {
            let concepts = rng.gen_range(1..=4);
            let mut cand_items = Vec::new();
            let mut gold_items = Vec::new();
            for c in 0..concepts {
                let n = rng.gen_range(1..=8);
                for i in 0..n {
                    let id = format!("{c}-{i}");
                    cand_items.push((id.clone(), format!("c{c}"), rng.gen_range(0..3usize)));
                    gold_items.push((id, format!("c{c}"), rng.gen_range(0..3usize)));
                }
            }
            let build = |items: &[(String, String, usize)]| {
                CognatePartition::new(
                    items
                        .iter()
                        .map(|(id, concept, index)| {
                            (
                                id.clone(),
                                ClusterLabel { concept: concept.clone(), index: *index },
                            )
                        })
                        .collect(),
                )
            };
            let cand = build(&cand_items);
            let gold = build(&gold_items);
            for avg in [Averaging::ConceptMean, Averaging::ItemMean] {
                let got = bcubed(&cand, &gold, avg).unwrap();
                let want = oracle(&cand, &gold, avg);
                assert!(
                    (got.precision - want.precision).abs() < 1e-12
                        && (got.recall - want.recall).abs() < 1e-12
                        && (got.fscore - want.fscore).abs() < 1e-12,
                    "case {case}: got {got:?}, want {want:?}"
                );
            }
        }
    }
}
