//! Precision / Recall / F1 / IoU between predicted and annotated clip sets,
//! corpus averaging of per-sample maxima over the four annotations, and the
//! annotation consistency measure.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::consistency_of;
use crate::tensor::TensorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub sample_count: usize,
}

fn intersection(p: &[usize], a: &[usize]) -> usize {
    p.iter().filter(|x| a.contains(x)).count()
}

/// Scores of one prediction against one annotation. An empty prediction
/// scores zero on every metric; an empty annotation is rejected.
pub fn pair_metrics(p: &[usize], a: &[usize]) -> Result<PairScores, TensorError> {
    if a.is_empty() {
        return Err(TensorError::ShapeMismatch(String::from("annotation set must be nonempty")));
    }
    if p.is_empty() {
        return Ok(PairScores { precision: 0.0, recall: 0.0, f1: 0.0, iou: 0.0 });
    }
    let inter = intersection(p, a) as f64;
    let precision = inter / p.len() as f64;
    let recall = inter / a.len() as f64;
    let union = (p.len() + a.len()) as f64 - inter;
    let iou = inter / union;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PairScores { precision, recall, f1, iou })
}

/// Corpus report: for each sample take the per-metric maximum over its four
/// annotations (each metric maximized independently), then average over
/// samples.
pub fn corpus_metrics(
    predictions: &[Vec<usize>],
    annotations: &[[Vec<usize>; 4]],
) -> Result<MetricReport, TensorError> {
    if predictions.len() != annotations.len() {
        return Err(TensorError::ShapeMismatch(format!(
            "{} predictions vs {} annotation groups",
            predictions.len(),
            annotations.len()
        )));
    }
    let m = predictions.len();
    let mut sums = [0.0; 4];
    for (p, anns) in predictions.iter().zip(annotations) {
        let mut best = [0.0f64; 4];
        for a in anns {
            let s = pair_metrics(p, a)?;
            best[0] = best[0].max(s.precision);
            best[1] = best[1].max(s.recall);
            best[2] = best[2].max(s.f1);
            best[3] = best[3].max(s.iou);
        }
        for (sum, b) in sums.iter_mut().zip(best) {
            *sum += b;
        }
    }
    let inv = if m == 0 { 0.0 } else { 1.0 / m as f64 };
    Ok(MetricReport {
        precision: sums[0] * inv,
        recall: sums[1] * inv,
        f1: sums[2] * inv,
        iou: sums[3] * inv,
        sample_count: m,
    })
}

/// Per-annotator consistency against the other three, plus the mean.
pub fn annotation_consistency(annotations: &[Vec<usize>; 4]) -> ([f64; 4], f64) {
    let mut per = [0.0; 4];
    for (i, slot) in per.iter_mut().enumerate() {
        *slot = consistency_of(annotations, i);
    }
    let mean = per.iter().sum::<f64>() / 4.0;
    (per, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_match_is_perfect() {
        let s = pair_metrics(&[2, 3], &[2, 3]).unwrap();
        assert_eq!(s, PairScores { precision: 1.0, recall: 1.0, f1: 1.0, iou: 1.0 });
    }

    #[test]
    fn worked_example() {
        let s = pair_metrics(&[1, 2, 3], &[2, 3, 4, 5]).unwrap();
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.recall - 0.5).abs() < 1e-12);
        assert!((s.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert!((s.iou - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let s = pair_metrics(&[], &[1]).unwrap();
        assert_eq!(s, PairScores { precision: 0.0, recall: 0.0, f1: 0.0, iou: 0.0 });
    }

    #[test]
    fn empty_annotation_rejected() {
        assert!(pair_metrics(&[1], &[]).is_err());
    }

    #[test]
    fn max_picks_the_matching_annotation() {
        let preds = vec![vec![1, 2]];
        let anns = vec![[vec![1, 2], vec![5], vec![6], vec![7]]];
        let r = corpus_metrics(&preds, &anns).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.iou, 1.0);
    }

    #[test]
    fn all_empty_predictions_score_zero() {
        let preds = vec![vec![], vec![]];
        let anns = vec![
            [vec![1], vec![2], vec![3], vec![4]],
            [vec![1], vec![2], vec![3], vec![4]],
        ];
        let r = corpus_metrics(&preds, &anns).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.sample_count, 2);
    }

    #[test]
    fn two_sample_hand_corpus() {
        // sample 1: P={0,1} best against {0,1,2}; sample 2: P={3} best {3}
        let preds = vec![vec![0, 1], vec![3]];
        let anns = vec![
            [vec![0, 1, 2], vec![5], vec![6], vec![7]],
            [vec![3], vec![0], vec![1], vec![2]],
        ];
        let r = corpus_metrics(&preds, &anns).unwrap();
        assert!((r.precision - 1.0).abs() < 1e-12);
        assert!((r.recall - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
        assert!((r.f1 - (0.8 + 1.0) / 2.0).abs() < 1e-12);
        assert!((r.iou - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn count_mismatch_rejected() {
        assert!(corpus_metrics(&[vec![1]], &[]).is_err());
    }

    #[test]
    fn consistency_fixture() {
        let anns = [vec![1, 2], vec![1, 2], vec![1, 2], vec![5]];
        let (per, mean) = annotation_consistency(&anns);
        for v in &per[..3] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(per[3], 0.0);
        assert!((mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint_consistency() {
        let same = [vec![1], vec![1], vec![1], vec![1]];
        let (per, mean) = annotation_consistency(&same);
        assert_eq!(per, [1.0; 4]);
        assert_eq!(mean, 1.0);
        let disjoint = [vec![1], vec![2], vec![3], vec![4]];
        let (per, mean) = annotation_consistency(&disjoint);
        assert_eq!(per, [0.0; 4]);
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn score_ordering_invariants_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let draw = |rng: &mut ChaCha8Rng| {
                let len = rng.gen_range(1..6usize);
                let mut v: Vec<usize> = (0..len).map(|_| rng.gen_range(0..12usize)).collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            let p = draw(&mut rng);
            let a = draw(&mut rng);
            let s = pair_metrics(&p, &a).unwrap();
            for v in [s.precision, s.recall, s.f1, s.iou] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(s.iou <= s.f1 + 1e-12);
            assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            assert!(s.iou <= s.precision.min(s.recall) + 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn swapping_sides_transposes_precision_and_recall(
            p in proptest::collection::btree_set(0..12usize, 1..6),
            a in proptest::collection::btree_set(0..12usize, 1..6),
        ) {
            let p: Vec<usize> = p.into_iter().collect();
            let a: Vec<usize> = a.into_iter().collect();
            let fwd = pair_metrics(&p, &a).unwrap();
            let rev = pair_metrics(&a, &p).unwrap();
            proptest::prop_assert_eq!(fwd.precision, rev.recall);
            proptest::prop_assert_eq!(fwd.recall, rev.precision);
            proptest::prop_assert!((fwd.iou - rev.iou).abs() < 1e-12);
            proptest::prop_assert!((fwd.f1 - rev.f1).abs() < 1e-12);
        }
    }
}
