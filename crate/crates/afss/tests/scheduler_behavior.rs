//! Multi-epoch scheduler behavior: revisit-gap guarantees for both tiers and
//! the statistical properties of uniform-random forced review.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use afss::scheduler::{compose_plan, ForcedReviewPolicy, SchedulerConfig};
use afss::state::{Epoch, ImageId, ImageRecord, StateTable};
use afss::sufficiency::SufficiencyMetricKind;

fn id(i: u64) -> ImageId {
    ImageId::new(format!("img{i:04}")).unwrap()
}

/// Static table whose records never change tier (metrics are never
/// refreshed), for isolating the selection dynamics.
fn fixed_score_table(n: u64, score: f64) -> StateTable {
    let records: Vec<ImageRecord> = (0..n)
        .map(|i| ImageRecord {
            image_id: id(i),
            precision: score,
            recall: score,
            last_used_epoch: 0,
        })
        .collect();
    StateTable::from_records(records, 0, 1).unwrap()
}

/// Any image that stays Moderate is re-selected within coverage_staleness + 1
/// epochs of its last use.
#[test]
fn moderate_revisit_gap_is_bounded() {
    let cfg = SchedulerConfig {
        warmup_epochs: 1,
        ..SchedulerConfig::default()
    };
    // Score 0.7: everything sits in the moderate tier forever.
    let mut table = fixed_score_table(200, 0.7);
    let mut last_used: BTreeMap<ImageId, Epoch> = table.ids().map(|i| (i.clone(), 0)).collect();
    for t in 1..=120 {
        let plan = compose_plan(&table, &cfg, t).unwrap();
        for (image, used) in &last_used {
            let gap_if_skipped = t - used;
            if gap_if_skipped > cfg.coverage_staleness + 1 {
                panic!("image {image} unused for {gap_if_skipped} epochs at t={t}");
            }
            let _ = image;
        }
        for image in plan.omega() {
            last_used.insert(image.clone(), t);
        }
        table.apply_usage(&plan, t).unwrap();
    }
    // Selection volume stays at the moderate target.
    let plan = compose_plan(&table, &cfg, 121).unwrap();
    assert!(plan.len() >= (0.4 * 200.0) as usize);
}

/// Under staleness-priority review with enough forced capacity, no easy
/// image's staleness exceeds review_staleness + ceil(|D1| / E1).
#[test]
fn staleness_priority_bounds_easy_gaps() {
    let cfg = SchedulerConfig {
        warmup_epochs: 1,
        easy_budget_fraction: 0.2,
        forced_review_cap_fraction: 0.5,
        review_staleness: 10,
        forced_review_policy: ForcedReviewPolicy::StalenessPriority,
        seed: 13,
        ..SchedulerConfig::default()
    };
    let n = 100u64;
    let mut table = fixed_score_table(n, 0.95);
    let budget = (cfg.easy_budget_fraction * n as f64).floor() as usize;
    let capacity = (cfg.forced_review_cap_fraction * budget as f64).floor() as usize;
    let bound = cfg.review_staleness + (n as f64 / capacity as f64).ceil() as u64;
    let mut max_staleness = 0u64;
    for t in 1..=300 {
        // Verify the capacity precondition actually held this epoch.
        let stale_count = table
            .records()
            .filter(|r| r.staleness(t) >= cfg.review_staleness)
            .count();
        assert!(
            stale_count <= capacity,
            "precondition broke at t={t}: {stale_count} stale > capacity {capacity}"
        );
        for r in table.records() {
            max_staleness = max_staleness.max(r.staleness(t));
        }
        let plan = compose_plan(&table, &cfg, t).unwrap();
        table.apply_usage(&plan, t).unwrap();
    }
    assert!(
        max_staleness <= bound,
        "staleness reached {max_staleness}, bound {bound}"
    );
}

/// Uniform-random review: across 1000 seeded one-epoch draws from a fixed
/// state, every stale image is selected at least once.
#[test]
fn uniform_review_gives_every_stale_image_a_chance() {
    let n = 60u64;
    let records: Vec<ImageRecord> = (0..n)
        .map(|i| ImageRecord {
            image_id: id(i),
            precision: 0.95,
            recall: 0.95,
            // Half the images are long-stale, half fresh.
            last_used_epoch: if i % 2 == 0 { 0 } else { 39 },
        })
        .collect();
    let table = StateTable::from_records(records, 39, 1).unwrap();
    let t = 40;
    let base = SchedulerConfig {
        warmup_epochs: 1,
        ..SchedulerConfig::default()
    };
    let stale: BTreeSet<ImageId> = table
        .records()
        .filter(|r| r.staleness(t) >= base.review_staleness)
        .map(|r| r.image_id.clone())
        .collect();
    assert_eq!(stale.len(), 30);

    let mut ever_selected: BTreeSet<ImageId> = BTreeSet::new();
    for trial in 0..1000u64 {
        let cfg = SchedulerConfig {
            seed: trial,
            ..base.clone()
        };
        let plan = compose_plan(&table, &cfg, t).unwrap();
        for image in plan.forced_review.iter().chain(&plan.random_easy) {
            if stale.contains(image) {
                ever_selected.insert(image.clone());
            }
        }
    }
    assert_eq!(
        ever_selected, stale,
        "some stale image was never reachable by uniform review"
    );
}

/// Long-run mean staleness stays bounded under uniform-random review.
#[test]
fn uniform_review_keeps_mean_staleness_bounded() {
    let cfg = SchedulerConfig {
        warmup_epochs: 1,
        seed: 21,
        ..SchedulerConfig::default()
    };
    let n = 60u64;
    let mut table = fixed_score_table(n, 0.95);
    // Budget is max(1, floor(0.02 * 60)) = 1 image per epoch; the mean
    // renewal age of uniform selection at rate 1/n is about n, so 3n is a
    // comfortable ceiling for the long-run mean.
    let ceiling = 3.0 * n as f64;
    let mut worst_mean = 0.0f64;
    for t in 1..=600 {
        if t > 300 {
            let mean = table.records().map(|r| r.staleness(t) as f64).sum::<f64>() / n as f64;
            worst_mean = worst_mean.max(mean);
        }
        let plan = compose_plan(&table, &cfg, t).unwrap();
        table.apply_usage(&plan, t).unwrap();
    }
    assert!(
        worst_mean < ceiling,
        "mean staleness {worst_mean} exceeded ceiling {ceiling}"
    );
}

proptest! {
    /// Hard completeness, budget accounting, disjointness, and determinism
    /// over arbitrary tables and knobs.
    #[test]
    fn plan_invariants_hold_for_arbitrary_states(
        table_seed in 0u64..1_000_000,
        cfg_seed in 0u64..1_000_000,
        size in 5usize..200,
        epoch0 in 0u64..50,
        budget_fraction in 0.01f64..0.5,
        moderate_fraction in 0.05f64..0.9,
        review_staleness in 1u64..25,
        coverage_staleness in 1u64..10,
    ) {
        let mut rng = StdRng::seed_from_u64(table_seed);
        let records: Vec<ImageRecord> = (0..size as u64)
            .map(|i| ImageRecord {
                image_id: id(i),
                precision: rng.random_range(0.0..=1.0),
                recall: rng.random_range(0.0..=1.0),
                last_used_epoch: rng.random_range(0..=epoch0),
            })
            .collect();
        let table = StateTable::from_records(records, epoch0, 5).unwrap();
        let cfg = SchedulerConfig {
            seed: cfg_seed,
            easy_budget_fraction: budget_fraction,
            moderate_fraction,
            review_staleness,
            coverage_staleness,
            ..SchedulerConfig::default()
        };
        let t = epoch0 + 1;
        let plan = compose_plan(&table, &cfg, t).unwrap();
        let again = compose_plan(&table, &cfg, t).unwrap();
        prop_assert_eq!(&plan, &again);

        let part = table.partition(&cfg.thresholds, cfg.metric_kind);
        let omega: BTreeSet<&ImageId> = plan.omega().iter().collect();
        for r in &part.hard {
            prop_assert!(omega.contains(&r.image_id));
        }
        prop_assert!(plan.len() <= table.len());
        let pieces = plan.forced_review.len()
            + plan.random_easy.len()
            + plan.forced_coverage.len()
            + plan.random_moderate.len()
            + plan.hard.len();
        prop_assert_eq!(pieces, plan.omega().len());
        if !part.easy.is_empty() {
            let budget = ((budget_fraction * part.easy.len() as f64).floor() as usize).max(1);
            prop_assert_eq!(plan.forced_review.len() + plan.random_easy.len(), budget);
        }
    }

    /// The F1 metric option changes stratification without breaking any
    /// structural invariant.
    #[test]
    fn f1_metric_preserves_structure(seed in 0u64..100_000, size in 5usize..100) {
        let mut rng = StdRng::seed_from_u64(seed);
        let records: Vec<ImageRecord> = (0..size as u64)
            .map(|i| ImageRecord {
                image_id: id(i),
                precision: rng.random_range(0.0..=1.0),
                recall: rng.random_range(0.0..=1.0),
                last_used_epoch: 0,
            })
            .collect();
        let table = StateTable::from_records(records, 0, 5).unwrap();
        let cfg = SchedulerConfig {
            metric_kind: SufficiencyMetricKind::F1,
            seed,
            ..SchedulerConfig::default()
        };
        let plan = compose_plan(&table, &cfg, 1).unwrap();
        let part = table.partition(&cfg.thresholds, SufficiencyMetricKind::F1);
        prop_assert_eq!(plan.hard.len(), part.hard.len());
        prop_assert_eq!(
            part.easy.len() + part.moderate.len() + part.hard.len(),
            table.len()
        );
    }
}
