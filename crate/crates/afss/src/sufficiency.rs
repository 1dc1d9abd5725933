//! Per-image learning sufficiency: precision/recall aggregation, the
//! sufficiency score, and the three-way difficulty stratification.

use crate::error::{Error, Result};

/// Matched detection counts for a single image, as produced by an external
/// evaluator after box matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Which scalar summary of (precision, recall) drives stratification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SufficiencyMetricKind {
    /// min(P, R): an image counts as learned only when both classification
    /// and localization hold up.
    #[default]
    MinPrecisionRecall,
    /// Harmonic mean 2PR/(P+R).
    F1,
}

impl SufficiencyMetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SufficiencyMetricKind::MinPrecisionRecall => "min_pr",
            SufficiencyMetricKind::F1 => "f1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min_pr" => Ok(SufficiencyMetricKind::MinPrecisionRecall),
            "f1" => Ok(SufficiencyMetricKind::F1),
            other => Err(Error::InvalidConfig(format!(
                "unknown metric kind '{other}' (expected min_pr or f1)"
            ))),
        }
    }
}

/// Difficulty tier of an image. Ordered by sufficiency: `Hard < Moderate < Easy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DifficultyLevel {
    Hard,
    Moderate,
    Easy,
}

/// Score cut points for the three tiers. Scores strictly above `easy_above`
/// are Easy, strictly below `hard_below` are Hard, and everything on or
/// between the two boundaries is Moderate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratifyThresholds {
    pub easy_above: f64,
    pub hard_below: f64,
}

impl StratifyThresholds {
    pub const DEFAULT_EASY_ABOVE: f64 = 0.85;
    pub const DEFAULT_HARD_BELOW: f64 = 0.55;

    pub fn new(easy_above: f64, hard_below: f64) -> Result<Self> {
        if !(easy_above > 0.0 && easy_above <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "easy_above must be in (0, 1], got {easy_above}"
            )));
        }
        if !(0.0..1.0).contains(&hard_below) {
            return Err(Error::InvalidConfig(format!(
                "hard_below must be in [0, 1), got {hard_below}"
            )));
        }
        if hard_below >= easy_above {
            return Err(Error::InvalidConfig(format!(
                "hard_below ({hard_below}) must be strictly less than easy_above ({easy_above})"
            )));
        }
        Ok(Self {
            easy_above,
            hard_below,
        })
    }
}

impl Default for StratifyThresholds {
    fn default() -> Self {
        Self {
            easy_above: Self::DEFAULT_EASY_ABOVE,
            hard_below: Self::DEFAULT_HARD_BELOW,
        }
    }
}

/// Precision and recall from matched counts.
///
/// Degenerate denominators resolve to 1: an image with no predictions has
/// precision 1, an image with no ground-truth objects has recall 1, so a
/// zero-object image with zero predictions scores as fully learned rather
/// than being pinned Hard forever.
pub fn precision_recall_from_counts(counts: DetectionCounts) -> (f64, f64) {
    let tp = counts.true_positives as f64;
    let predicted = counts.true_positives + counts.false_positives;
    let actual = counts.true_positives + counts.false_negatives;
    let precision = if predicted == 0 {
        1.0
    } else {
        tp / predicted as f64
    };
    let recall = if actual == 0 { 1.0 } else { tp / actual as f64 };
    (precision, recall)
}

/// Scalar learning-sufficiency score in [0, 1].
pub fn learning_sufficiency(precision: f64, recall: f64, kind: SufficiencyMetricKind) -> f64 {
    debug_assert!((0.0..=1.0).contains(&precision));
    debug_assert!((0.0..=1.0).contains(&recall));
    match kind {
        SufficiencyMetricKind::MinPrecisionRecall => precision.min(recall),
        SufficiencyMetricKind::F1 => {
            let denom = precision + recall;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / denom
            }
        }
    }
}

/// Assign a difficulty tier to a sufficiency score. Both boundaries are
/// inclusive to Moderate.
pub fn stratify(score: f64, thresholds: &StratifyThresholds) -> DifficultyLevel {
    if score > thresholds.easy_above {
        DifficultyLevel::Easy
    } else if score < thresholds.hard_below {
        DifficultyLevel::Hard
    } else {
        DifficultyLevel::Moderate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(tp: u64, fp: u64, fn_: u64) -> DetectionCounts {
        DetectionCounts {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }

    #[test]
    fn precision_recall_basic() {
        assert_eq!(precision_recall_from_counts(counts(8, 2, 0)), (0.8, 1.0));
    }

    #[test]
    fn precision_recall_degenerate_zero_object_image() {
        assert_eq!(precision_recall_from_counts(counts(0, 0, 0)), (1.0, 1.0));
    }

    #[test]
    fn precision_recall_no_predictions() {
        assert_eq!(precision_recall_from_counts(counts(0, 0, 3)), (1.0, 0.0));
    }

    #[test]
    fn min_pr_takes_weaker_dimension() {
        let s = learning_sufficiency(0.9, 0.7, SufficiencyMetricKind::MinPrecisionRecall);
        assert_eq!(s, 0.7);
    }

    #[test]
    fn min_pr_one_sided_failure_dominates() {
        let s = learning_sufficiency(1.0, 0.0, SufficiencyMetricKind::MinPrecisionRecall);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn f1_symmetric_equals_common_value() {
        let s = learning_sufficiency(0.5, 0.5, SufficiencyMetricKind::F1);
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f1_zero_when_either_side_zero() {
        assert_eq!(
            learning_sufficiency(0.0, 0.9, SufficiencyMetricKind::F1),
            0.0
        );
        assert_eq!(
            learning_sufficiency(0.0, 0.0, SufficiencyMetricKind::F1),
            0.0
        );
    }

    #[test]
    fn stratify_default_thresholds() {
        let t = StratifyThresholds::default();
        assert_eq!(stratify(0.90, &t), DifficultyLevel::Easy);
        assert_eq!(stratify(0.85, &t), DifficultyLevel::Moderate);
        assert_eq!(stratify(0.55, &t), DifficultyLevel::Moderate);
        assert_eq!(stratify(0.0, &t), DifficultyLevel::Hard);
    }

    #[test]
    fn difficulty_order_is_hard_moderate_easy() {
        assert!(DifficultyLevel::Hard < DifficultyLevel::Moderate);
        assert!(DifficultyLevel::Moderate < DifficultyLevel::Easy);
    }

    #[test]
    fn thresholds_reject_inverted_cutpoints() {
        assert!(StratifyThresholds::new(0.5, 0.6).is_err());
        assert!(StratifyThresholds::new(0.5, 0.5).is_err());
        assert!(StratifyThresholds::new(0.0, 0.0).is_err());
        assert!(StratifyThresholds::new(0.9, 0.1).is_ok());
    }

    proptest! {
        #[test]
        fn precision_recall_always_in_unit_interval(
            tp in 0u64..10_000,
            fp in 0u64..10_000,
            fn_ in 0u64..10_000,
        ) {
            let (p, r) = precision_recall_from_counts(counts(tp, fp, fn_));
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn stratify_is_total_and_monotone(
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
            easy in 0.05f64..1.0,
            gap in 0.01f64..0.9,
        ) {
            let hard = (easy - gap).max(0.0);
            prop_assume!(hard < easy);
            let t = StratifyThresholds::new(easy, hard).unwrap();
            let la = stratify(a, &t);
            let lb = stratify(b, &t);
            if a >= b {
                prop_assert!(la >= lb);
            } else {
                prop_assert!(la <= lb);
            }
        }

        #[test]
        fn min_pr_bounded_by_both_sides(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
            let s = learning_sufficiency(p, r, SufficiencyMetricKind::MinPrecisionRecall);
            prop_assert!(s <= p && s <= r);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn f1_in_unit_interval_zero_iff_product_zero(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
            let s = learning_sufficiency(p, r, SufficiencyMetricKind::F1);
            prop_assert!((0.0..=1.0).contains(&s));
            if p * r == 0.0 {
                prop_assert_eq!(s, 0.0);
            } else {
                prop_assert!(s > 0.0);
            }
        }
    }
}
