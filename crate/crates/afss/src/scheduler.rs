//! Epoch-plan composition: continuous review of easy images, short-term
//! coverage of moderate images, and full inclusion of hard images.
//!
//! Determinism contract (mirrored by any independent reimplementation):
//! every candidate pool is sorted by ascending image id before any draw;
//! sampling without replacement is a partial Fisher-Yates walk consuming one
//! `random_range(i..len)` draw per selected element; within an epoch the
//! selection order is forced-review, then random-easy, then random-moderate,
//! all on one generator seeded with `seed.wrapping_add(t)`. Staleness-priority
//! forced review is fully deterministic and consumes no draws.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::state::{Epoch, ImageId, ImageRecord, StateTable};
use crate::sufficiency::{StratifyThresholds, SufficiencyMetricKind};

/// How the forced-review subset is drawn from the stale-easy pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForcedReviewPolicy {
    /// Uniform sample without replacement.
    #[default]
    UniformRandom,
    /// Largest staleness first, ties broken by ascending image id.
    StalenessPriority,
}

impl ForcedReviewPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ForcedReviewPolicy::UniformRandom => "uniform_random",
            ForcedReviewPolicy::StalenessPriority => "staleness_priority",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform_random" => Ok(ForcedReviewPolicy::UniformRandom),
            "staleness_priority" => Ok(ForcedReviewPolicy::StalenessPriority),
            other => Err(Error::InvalidConfig(format!(
                "unknown forced review policy '{other}' (expected uniform_random or staleness_priority)"
            ))),
        }
    }
}

/// All scheduling knobs. Staleness values of `u64::MAX` mean "never"
/// (written as `inf` in config files).
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    /// Fraction of the easy tier admitted per epoch (E1 + E2 combined).
    pub easy_budget_fraction: f64,
    /// Share of the easy budget that forced review may consume.
    pub forced_review_cap_fraction: f64,
    /// Easy images unused for at least this many epochs become review
    /// candidates.
    pub review_staleness: u64,
    /// Target fraction of the moderate tier trained per epoch.
    pub moderate_fraction: f64,
    /// Moderate images unused for at least this many epochs are forced in.
    pub coverage_staleness: u64,
    /// Epochs between metric refreshes after warm-up.
    pub refresh_interval: u64,
    /// Warm-up length τ; full coverage until the first refresh at t = τ.
    pub warmup_epochs: u64,
    pub thresholds: StratifyThresholds,
    pub metric_kind: SufficiencyMetricKind,
    pub forced_review_policy: ForcedReviewPolicy,
    pub seed: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            easy_budget_fraction: 0.02,
            forced_review_cap_fraction: 0.5,
            review_staleness: 10,
            moderate_fraction: 0.4,
            coverage_staleness: 3,
            refresh_interval: 5,
            warmup_epochs: 5,
            thresholds: StratifyThresholds::default(),
            metric_kind: SufficiencyMetricKind::default(),
            forced_review_policy: ForcedReviewPolicy::default(),
            seed: 0,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("easy_budget_fraction", self.easy_budget_fraction),
            (
                "forced_review_cap_fraction",
                self.forced_review_cap_fraction,
            ),
            ("moderate_fraction", self.moderate_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in (0, 1], got {v}"
                )));
            }
        }
        for (name, v) in [
            ("review_staleness", self.review_staleness),
            ("coverage_staleness", self.coverage_staleness),
            ("refresh_interval", self.refresh_interval),
            ("warmup_epochs", self.warmup_epochs),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        // Thresholds were range-checked at construction; re-check the pair
        // ordering in case of manual field edits.
        StratifyThresholds::new(self.thresholds.easy_above, self.thresholds.hard_below)?;
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Generator used for all of epoch `t`'s selection draws.
    pub fn epoch_rng(&self, t: Epoch) -> StdRng {
        StdRng::seed_from_u64(self.seed.wrapping_add(t))
    }
}

/// The training set Ω for one epoch, partitioned by origin.
///
/// The five origin sets are pairwise disjoint and each is stored sorted by
/// ascending image id; `omega` is their sorted union.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    pub epoch: Epoch,
    pub forced_review: Vec<ImageId>,
    pub random_easy: Vec<ImageId>,
    pub forced_coverage: Vec<ImageId>,
    pub random_moderate: Vec<ImageId>,
    pub hard: Vec<ImageId>,
    omega: Vec<ImageId>,
}

impl EpochPlan {
    /// Assemble a plan from its five origin sets, canonicalizing each to
    /// ascending id order and rejecting overlap between or within sets.
    pub fn from_parts(
        epoch: Epoch,
        mut forced_review: Vec<ImageId>,
        mut random_easy: Vec<ImageId>,
        mut forced_coverage: Vec<ImageId>,
        mut random_moderate: Vec<ImageId>,
        mut hard: Vec<ImageId>,
    ) -> Result<Self> {
        for set in [
            &mut forced_review,
            &mut random_easy,
            &mut forced_coverage,
            &mut random_moderate,
            &mut hard,
        ] {
            set.sort_unstable();
        }
        let total = forced_review.len()
            + random_easy.len()
            + forced_coverage.len()
            + random_moderate.len()
            + hard.len();
        let mut omega: Vec<ImageId> = Vec::with_capacity(total);
        for set in [
            &forced_review,
            &random_easy,
            &forced_coverage,
            &random_moderate,
            &hard,
        ] {
            omega.extend(set.iter().cloned());
        }
        omega.sort_unstable();
        if let Some(dup) = omega.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(dup[0].to_string()));
        }
        Ok(Self {
            epoch,
            forced_review,
            random_easy,
            forced_coverage,
            random_moderate,
            hard,
            omega,
        })
    }

    /// All selected ids, ascending.
    pub fn omega(&self) -> &[ImageId] {
        &self.omega
    }

    pub fn omega_set(&self) -> BTreeSet<&ImageId> {
        self.omega.iter().collect()
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

/// Easy records whose staleness (t − 1 − ep_i) has reached the review
/// threshold, in ascending id order.
pub fn stale_easy<'a>(
    easy: &[&'a ImageRecord],
    t: Epoch,
    review_staleness: u64,
) -> Vec<&'a ImageRecord> {
    easy.iter()
        .copied()
        .filter(|r| r.staleness(t) >= review_staleness)
        .collect()
}

/// Moderate records whose staleness has reached the coverage threshold, in
/// ascending id order.
pub fn forced_moderate<'a>(
    moderate: &[&'a ImageRecord],
    t: Epoch,
    coverage_staleness: u64,
) -> Vec<&'a ImageRecord> {
    moderate
        .iter()
        .copied()
        .filter(|r| r.staleness(t) >= coverage_staleness)
        .collect()
}

/// Partial Fisher-Yates: draw `k` elements without replacement from `pool`,
/// consuming exactly `min(k, pool.len())` range draws.
fn sample_without_replacement<T: Clone>(pool: &[T], k: usize, rng: &mut StdRng) -> Vec<T> {
    let mut candidates: Vec<T> = pool.to_vec();
    let n = candidates.len();
    let k = k.min(n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        candidates.swap(i, j);
    }
    candidates.truncate(k);
    candidates
}

/// Integer budget from a fractional knob, by plain f64 floor.
fn floor_fraction(fraction: f64, count: usize) -> usize {
    (fraction * count as f64).floor() as usize
}

/// Select the easy-tier contribution for epoch `t`: the forced-review set
/// A'_t and the random complement A_r.
///
/// The combined budget is max(1, floor(easy_budget_fraction × |D1|)) when the
/// easy tier is nonempty. Forced review is capped at
/// floor(forced_review_cap_fraction × budget); any shortfall (a thin stale
/// pool) rolls into the random draw so the total budget is preserved.
///
/// A `review_staleness` of `u64::MAX` is the continuous-review off switch:
/// the whole easy tier sits out (no forced and no random review), which is
/// the ablation arm used to measure what review contributes.
pub fn select_easy(
    easy: &[&ImageRecord],
    t: Epoch,
    cfg: &SchedulerConfig,
    rng: &mut StdRng,
) -> (Vec<ImageId>, Vec<ImageId>) {
    if easy.is_empty() || cfg.review_staleness == u64::MAX {
        return (Vec::new(), Vec::new());
    }
    let budget = floor_fraction(cfg.easy_budget_fraction, easy.len()).max(1);
    let cap = floor_fraction(cfg.forced_review_cap_fraction, budget);

    let stale = stale_easy(easy, t, cfg.review_staleness);
    let forced_count = cap.min(stale.len());
    let forced: Vec<ImageId> = match cfg.forced_review_policy {
        ForcedReviewPolicy::UniformRandom => {
            let pool: Vec<ImageId> = stale.iter().map(|r| r.image_id.clone()).collect();
            sample_without_replacement(&pool, forced_count, rng)
        }
        ForcedReviewPolicy::StalenessPriority => {
            let mut ranked = stale;
            ranked.sort_by(|a, b| {
                b.staleness(t)
                    .cmp(&a.staleness(t))
                    .then_with(|| a.image_id.cmp(&b.image_id))
            });
            ranked
                .into_iter()
                .take(forced_count)
                .map(|r| r.image_id.clone())
                .collect()
        }
    };

    let forced_set: BTreeSet<&ImageId> = forced.iter().collect();
    let remaining: Vec<ImageId> = easy
        .iter()
        .filter(|r| !forced_set.contains(&r.image_id))
        .map(|r| r.image_id.clone())
        .collect();
    let random_count = (budget - forced.len()).min(remaining.len());
    let random = sample_without_replacement(&remaining, random_count, rng);
    (forced, random)
}

/// Select the moderate-tier contribution: the (already determined) forced
/// coverage set B_f plus a random top-up B_r toward the moderate fraction.
/// B_f is never trimmed, even when it alone exceeds the target.
pub fn select_moderate(
    moderate: &[&ImageRecord],
    forced: &[&ImageRecord],
    cfg: &SchedulerConfig,
    rng: &mut StdRng,
) -> (Vec<ImageId>, Vec<ImageId>) {
    if moderate.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let target = floor_fraction(cfg.moderate_fraction, moderate.len());
    let top_up = target.saturating_sub(forced.len());

    let forced_ids: Vec<ImageId> = forced.iter().map(|r| r.image_id.clone()).collect();
    let forced_set: BTreeSet<&ImageId> = forced_ids.iter().collect();
    let remaining: Vec<ImageId> = moderate
        .iter()
        .filter(|r| !forced_set.contains(&r.image_id))
        .map(|r| r.image_id.clone())
        .collect();
    let random = sample_without_replacement(&remaining, top_up.min(remaining.len()), rng);
    (forced_ids, random)
}

/// Compose the full epoch-`t` plan from a state snapshot.
///
/// Pure in (table, cfg, t): the generator is derived from `cfg.seed` and `t`,
/// so identical inputs always yield the identical plan. During warm-up the
/// zero-initialized scores put every image in the hard tier, which makes the
/// plan full coverage without a special case.
pub fn compose_plan(table: &StateTable, cfg: &SchedulerConfig, t: Epoch) -> Result<EpochPlan> {
    if t != table.epoch() + 1 {
        return Err(Error::EpochMismatch {
            expected: table.epoch() + 1,
            got: t,
        });
    }
    cfg.validate()?;
    let mut rng = cfg.epoch_rng(t);
    let part = table.partition(&cfg.thresholds, cfg.metric_kind);

    let (forced_review, random_easy) = select_easy(&part.easy, t, cfg, &mut rng);
    let forced = forced_moderate(&part.moderate, t, cfg.coverage_staleness);
    let (forced_coverage, random_moderate) =
        select_moderate(&part.moderate, &forced, cfg, &mut rng);
    let hard = part.hard.iter().map(|r| r.image_id.clone()).collect();

    EpochPlan::from_parts(
        t,
        forced_review,
        random_easy,
        forced_coverage,
        random_moderate,
        hard,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ImageRecord;

    fn record(i: u64, score: f64, last_used: Epoch) -> ImageRecord {
        ImageRecord {
            image_id: ImageId::from(i),
            precision: score,
            recall: score,
            last_used_epoch: last_used,
        }
    }

    fn refs(records: &[ImageRecord]) -> Vec<&ImageRecord> {
        let mut v: Vec<&ImageRecord> = records.iter().collect();
        v.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        v
    }

    #[test]
    fn stale_easy_boundary_inclusive() {
        let records = vec![record(0, 0.9, 9), record(1, 0.9, 10)];
        let easy = refs(&records);
        let stale = stale_easy(&easy, 20, 10);
        // 20 - 1 - 9 = 10 qualifies; 20 - 1 - 10 = 9 does not.
        assert_eq!(stale.len(), 1);
        assert_eq!(stale[0].image_id, ImageId::from(0u64));
    }

    #[test]
    fn stale_easy_empty_pool() {
        assert!(stale_easy(&[], 20, 10).is_empty());
    }

    #[test]
    fn forced_moderate_boundary() {
        let records = vec![record(0, 0.7, 6), record(1, 0.7, 9)];
        let moderate = refs(&records);
        let forced = forced_moderate(&moderate, 10, 3);
        // 10 - 1 - 6 = 3 qualifies; 10 - 1 - 9 = 0 does not.
        assert_eq!(forced.len(), 1);
        assert_eq!(forced[0].image_id, ImageId::from(0u64));
    }

    #[test]
    fn forced_moderate_all_recent_is_empty() {
        let records: Vec<ImageRecord> = (0..5).map(|i| record(i, 0.7, 9)).collect();
        assert!(forced_moderate(&refs(&records), 10, 3).is_empty());
    }

    #[test]
    fn easy_budget_split_with_ample_stale_pool() {
        // |D1| = 1000 with 30 stale: budget 20, forced 10, random 10.
        let records: Vec<ImageRecord> = (0..1000)
            .map(|i| {
                let last_used = if i < 30 { 1 } else { 90 };
                record(i, 0.95, last_used)
            })
            .collect();
        let easy = refs(&records);
        let cfg = SchedulerConfig::default();
        let mut rng = cfg.epoch_rng(100);
        let (forced, random) = select_easy(&easy, 100, &cfg, &mut rng);
        assert_eq!(forced.len(), 10);
        assert_eq!(random.len(), 10);
    }

    #[test]
    fn easy_forced_shortfall_rolls_into_random() {
        // |D1| = 1000 with only 4 stale: forced 4, random 16, total 20.
        let records: Vec<ImageRecord> = (0..1000)
            .map(|i| {
                let last_used = if i < 4 { 1 } else { 95 };
                record(i, 0.95, last_used)
            })
            .collect();
        let easy = refs(&records);
        let cfg = SchedulerConfig::default();
        let mut rng = cfg.epoch_rng(100);
        let (forced, random) = select_easy(&easy, 100, &cfg, &mut rng);
        assert_eq!(forced.len(), 4);
        assert_eq!(random.len(), 16);
        let all: BTreeSet<_> = forced.iter().chain(random.iter()).collect();
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn easy_empty_tier_selects_nothing() {
        let cfg = SchedulerConfig::default();
        let mut rng = cfg.epoch_rng(1);
        let (forced, random) = select_easy(&[], 1, &cfg, &mut rng);
        assert!(forced.is_empty() && random.is_empty());
    }

    #[test]
    fn easy_budget_floor_of_one_on_tiny_tier() {
        let records = vec![record(0, 0.95, 0)];
        let easy = refs(&records);
        let cfg = SchedulerConfig::default();
        let mut rng = cfg.epoch_rng(50);
        let (forced, random) = select_easy(&easy, 50, &cfg, &mut rng);
        // Budget max(1, floor(0.02 * 1)) = 1; cap floor(0.5 * 1) = 0.
        assert_eq!(forced.len(), 0);
        assert_eq!(random.len(), 1);
    }

    #[test]
    fn staleness_priority_takes_oldest_first_with_id_tiebreak() {
        let records = vec![
            record(3, 0.9, 10),
            record(1, 0.9, 5),
            record(2, 0.9, 5),
            record(0, 0.9, 40),
        ];
        let easy = refs(&records);
        let cfg = SchedulerConfig {
            forced_review_policy: ForcedReviewPolicy::StalenessPriority,
            // Large pool budget: make cap allow 2.
            easy_budget_fraction: 1.0,
            forced_review_cap_fraction: 0.5,
            review_staleness: 10,
            ..SchedulerConfig::default()
        };
        let mut rng = cfg.epoch_rng(60);
        let (forced, _) = select_easy(&easy, 60, &cfg, &mut rng);
        // Staleness at t=60: id1/id2 -> 54, id3 -> 49, id0 -> 19. Cap = 2.
        assert_eq!(forced, vec![ImageId::from(1u64), ImageId::from(2u64)]);
    }

    #[test]
    fn moderate_top_up_meets_target() {
        // |D2| = 500, |B_f| = 50: top-up 150, total 200.
        let records: Vec<ImageRecord> = (0..500)
            .map(|i| {
                let last_used = if i < 50 { 1 } else { 19 };
                record(i, 0.7, last_used)
            })
            .collect();
        let moderate = refs(&records);
        let forced = forced_moderate(&moderate, 20, 3);
        assert_eq!(forced.len(), 50);
        let cfg = SchedulerConfig::default();
        let mut rng = cfg.epoch_rng(20);
        let (bf, br) = select_moderate(&moderate, &forced, &cfg, &mut rng);
        assert_eq!(bf.len(), 50);
        assert_eq!(br.len(), 150);
    }

    #[test]
    fn moderate_forced_overflow_is_never_trimmed() {
        // |D2| = 500 with 250 forced: target 200 exceeded, top-up clamps to 0.
        let records: Vec<ImageRecord> = (0..500)
            .map(|i| {
                let last_used = if i < 250 { 1 } else { 19 };
                record(i, 0.7, last_used)
            })
            .collect();
        let moderate = refs(&records);
        let forced = forced_moderate(&moderate, 20, 3);
        assert_eq!(forced.len(), 250);
        let cfg = SchedulerConfig::default();
        let mut rng = cfg.epoch_rng(20);
        let (bf, br) = select_moderate(&moderate, &forced, &cfg, &mut rng);
        assert_eq!(bf.len(), 250);
        assert!(br.is_empty());
    }

    #[test]
    fn moderate_empty_tier_selects_nothing() {
        let cfg = SchedulerConfig::default();
        let mut rng = cfg.epoch_rng(1);
        let (bf, br) = select_moderate(&[], &[], &cfg, &mut rng);
        assert!(bf.is_empty() && br.is_empty());
    }

    #[test]
    fn warmup_plan_is_full_coverage() {
        let table = StateTable::new((0u64..50).map(ImageId::from), 5).unwrap();
        let cfg = SchedulerConfig::default();
        let plan = compose_plan(&table, &cfg, 1).unwrap();
        assert_eq!(plan.len(), 50);
        assert_eq!(plan.hard.len(), 50);
        assert!(plan.forced_review.is_empty());
        assert!(plan.random_easy.is_empty());
    }

    #[test]
    fn compose_plan_requires_consecutive_epoch() {
        let table = StateTable::new((0u64..5).map(ImageId::from), 5).unwrap();
        let cfg = SchedulerConfig::default();
        assert!(matches!(
            compose_plan(&table, &cfg, 2),
            Err(Error::EpochMismatch { .. })
        ));
    }

    #[test]
    fn plans_are_seed_deterministic() {
        let records: Vec<ImageRecord> = (0..200)
            .map(|i| {
                let score = (i as f64 * 0.37).fract();
                record(i, score, (i % 7) as Epoch)
            })
            .collect();
        let table = crate::state::StateTable::from_records(records, 9, 5).unwrap();
        let cfg = SchedulerConfig::default().with_seed(77);
        let a = compose_plan(&table, &cfg, 10).unwrap();
        let b = compose_plan(&table, &cfg, 10).unwrap();
        assert_eq!(a, b);
        let c = compose_plan(&table, &cfg.clone().with_seed(78), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn plan_origin_sets_are_disjoint() {
        let records: Vec<ImageRecord> = (0..300)
            .map(|i| {
                let score = match i % 3 {
                    0 => 0.95,
                    1 => 0.7,
                    _ => 0.2,
                };
                record(i, score, (i % 11) as Epoch)
            })
            .collect();
        let table = crate::state::StateTable::from_records(records, 20, 5).unwrap();
        let cfg = SchedulerConfig::default().with_seed(5);
        let plan = compose_plan(&table, &cfg, 21).unwrap();
        let total = plan.forced_review.len()
            + plan.random_easy.len()
            + plan.forced_coverage.len()
            + plan.random_moderate.len()
            + plan.hard.len();
        assert_eq!(plan.omega().len(), total);
        assert!(plan.len() <= table.len());
    }

    #[test]
    fn from_parts_rejects_overlap() {
        let overlap = EpochPlan::from_parts(
            1,
            vec![ImageId::from(1u64)],
            vec![ImageId::from(1u64)],
            vec![],
            vec![],
            vec![],
        );
        assert!(matches!(overlap, Err(Error::DuplicateId(_))));
    }
}
