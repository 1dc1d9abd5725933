//! Synthetic learning-dynamics environment closing the loop around the
//! scheduler: per-image skill grows when trained and decays when idle,
//! producing (precision, recall) trajectories, so coverage, anti-forgetting,
//! and compute-reduction behavior can be measured at desk scale. Includes
//! simplified baseline policies for ordering comparisons.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::scheduler::{compose_plan, EpochPlan, SchedulerConfig};
use crate::state::{is_refresh_epoch, Epoch, ImageId, MetricsBatch, MetricsEntry, StateTable};
use crate::sufficiency::learning_sufficiency;

/// One simulated image: a fixed difficulty and a latent mastery level that
/// stands in for how well the detector handles it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub image_id: ImageId,
    pub difficulty: f64,
    pub skill: f64,
}

/// Skill dynamics: multiplicative-gap learning when trained, exponential
/// decay when idle, and uniform measurement noise.
///
/// Trained: skill += learn_rate * (1 - difficulty) * (1 - skill).
/// Idle:    skill *= 1 - forget_rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerDynamics {
    pub learn_rate: f64,
    pub forget_rate: f64,
    pub noise_scale: f64,
}

impl Default for LearnerDynamics {
    /// Defaults calibrated against the default difficulty mix so that the
    /// scheduler reaches full-coverage skill at a large visit reduction:
    /// exposures close most of the remaining gap quickly, and idle decay is
    /// slow enough that a 2% review budget can hold mastered images.
    fn default() -> Self {
        Self {
            learn_rate: 0.75,
            forget_rate: 1e-5,
            noise_scale: 0.03,
        }
    }
}

impl LearnerDynamics {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learn_rate", self.learn_rate),
            ("forget_rate", self.forget_rate),
            ("noise_scale", self.noise_scale),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 1), got {v}"
                )));
            }
        }
        if self.forget_rate >= self.learn_rate {
            return Err(Error::InvalidConfig(format!(
                "forget_rate ({}) must be below learn_rate ({}) for convergence",
                self.forget_rate, self.learn_rate
            )));
        }
        Ok(())
    }
}

/// One slice of the difficulty mixture: `fraction` of the dataset drawn
/// uniformly from [low, high].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifficultyBand {
    pub fraction: f64,
    pub low: f64,
    pub high: f64,
}

impl DifficultyBand {
    pub fn new(fraction: f64, low: f64, high: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidConfig(format!(
                "band fraction must be in [0, 1], got {fraction}"
            )));
        }
        if !(low > 0.0 && low <= high && high <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "band range must satisfy 0 < low <= high <= 1, got [{low}, {high}]"
            )));
        }
        Ok(Self {
            fraction,
            low,
            high,
        })
    }
}

/// Which images a refresh pass evaluates (and is billed for). Real trainers
/// differ on this, so both accountings are measurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefreshScope {
    /// Evaluate every image on each refresh epoch.
    #[default]
    FullDataset,
    /// Evaluate only images used within the last refresh interval.
    RecentlyUsed,
}

impl RefreshScope {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(RefreshScope::FullDataset),
            "recent" => Ok(RefreshScope::RecentlyUsed),
            other => Err(Error::InvalidConfig(format!(
                "unknown refresh scope '{other}' (expected full or recent)"
            ))),
        }
    }
}

/// Epoch-level data policy under test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingPolicy {
    /// The adaptive anti-forgetting scheduler.
    Afss,
    /// Vanilla baseline: the whole dataset every epoch.
    FullCoverage,
    /// Uniform random subset of the given fraction each epoch.
    RandomSubset { fraction: f64 },
    /// Full coverage until `prune_epoch`, then permanently drop images whose
    /// measured sufficiency exceeds `threshold`.
    StaticPrune { threshold: f64, prune_epoch: Epoch },
    /// Linear ramp admitting the easiest share of images, reaching the whole
    /// dataset at `ramp_epochs`.
    Curriculum { ramp_epochs: Epoch },
}

impl SamplingPolicy {
    pub fn label(&self) -> String {
        match self {
            SamplingPolicy::Afss => "afss".to_string(),
            SamplingPolicy::FullCoverage => "full".to_string(),
            SamplingPolicy::RandomSubset { fraction } => format!("random:{fraction}"),
            SamplingPolicy::StaticPrune {
                threshold,
                prune_epoch,
            } => format!("prune:{threshold}:{prune_epoch}"),
            SamplingPolicy::Curriculum { ramp_epochs } => format!("curriculum:{ramp_epochs}"),
        }
    }

    /// Parse `afss`, `full`, `random[:fraction]`, `prune[:threshold:epoch]`,
    /// or `curriculum[:ramp_epochs]`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let bad = |msg: String| Error::InvalidConfig(msg);
        let parse_f64 = |raw: &str, name: &str| -> Result<f64> {
            raw.parse()
                .map_err(|e| bad(format!("bad {name} in policy '{s}': {e}")))
        };
        let parse_u64 = |raw: &str, name: &str| -> Result<u64> {
            raw.parse()
                .map_err(|e| bad(format!("bad {name} in policy '{s}': {e}")))
        };
        match (head, rest.as_slice()) {
            ("afss", []) => Ok(SamplingPolicy::Afss),
            ("full", []) => Ok(SamplingPolicy::FullCoverage),
            ("random", []) => Ok(SamplingPolicy::RandomSubset { fraction: 0.5 }),
            ("random", [f]) => Ok(SamplingPolicy::RandomSubset {
                fraction: parse_f64(f, "fraction")?,
            }),
            ("prune", []) => Ok(SamplingPolicy::StaticPrune {
                threshold: 0.3,
                prune_epoch: 30,
            }),
            ("prune", [th, ep]) => Ok(SamplingPolicy::StaticPrune {
                threshold: parse_f64(th, "threshold")?,
                prune_epoch: parse_u64(ep, "prune_epoch")?,
            }),
            ("curriculum", []) => Ok(SamplingPolicy::Curriculum { ramp_epochs: 100 }),
            ("curriculum", [r]) => Ok(SamplingPolicy::Curriculum {
                ramp_epochs: parse_u64(r, "ramp_epochs")?,
            }),
            _ => Err(bad(format!(
                "unknown policy '{s}' (expected afss, full, random[:f], prune[:t:e], curriculum[:r])"
            ))),
        }
    }
}

/// Per-epoch ledger row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: Epoch,
    pub images_used: usize,
    pub cum_visits: u64,
    pub cum_eval_visits: u64,
    pub n_easy: usize,
    pub n_moderate: usize,
    pub n_hard: usize,
    pub mean_skill: f64,
    pub mean_sufficiency: f64,
}

/// Full experiment output: the per-epoch ledger plus final summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub policy: String,
    pub dataset_size: usize,
    pub epochs: Vec<EpochStats>,
    /// Mean latent skill at the final epoch; doubles as the accuracy proxy.
    pub final_mean_skill: f64,
    pub final_accuracy_proxy: f64,
    pub total_visits: u64,
    pub total_eval_visits: u64,
    /// Training visits as a fraction of what full coverage would spend.
    pub visit_ratio_vs_full: f64,
}

/// splitmix64 round, used to derive independent deterministic streams.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Per-image evaluation stream for a refresh pass: a function of
/// (seed, epoch, image_id) only, so evaluation order never matters.
pub fn evaluation_rng(seed: u64, epoch: Epoch, image_id: &ImageId) -> StdRng {
    let mixed = splitmix64(
        splitmix64(seed ^ 0x45564c5f41465353).wrapping_add(epoch)
            ^ fnv1a(image_id.as_str().as_bytes()),
    );
    StdRng::seed_from_u64(mixed)
}

fn policy_rng(seed: u64, epoch: Epoch, salt: u64) -> StdRng {
    StdRng::seed_from_u64(splitmix64(splitmix64(seed ^ salt).wrapping_add(epoch)))
}

/// Generate `n` synthetic images with zero-padded numeric ids (so id order
/// matches numeric order), difficulties drawn per mixture band, and zero
/// starting skill.
pub fn generate_dataset(
    n: usize,
    mix: &[DifficultyBand],
    seed: u64,
) -> Result<Vec<SyntheticImage>> {
    if n == 0 {
        return Err(Error::Validation(
            "dataset size must be at least 1".to_string(),
        ));
    }
    let total: f64 = mix.iter().map(|b| b.fraction).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::MixFractionSum(total));
    }
    for band in mix {
        DifficultyBand::new(band.fraction, band.low, band.high)?;
    }
    let width = (n - 1).to_string().len();
    let mut rng = StdRng::seed_from_u64(splitmix64(seed ^ 0x44415441534554));
    let mut images = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut start = 0usize;
    for (i, band) in mix.iter().enumerate() {
        cumulative += band.fraction;
        let end = if i + 1 == mix.len() {
            n
        } else {
            (cumulative * n as f64).round() as usize
        };
        for idx in start..end {
            let difficulty = if band.low == band.high {
                band.low
            } else {
                rng.random_range(band.low..=band.high)
            };
            images.push(SyntheticImage {
                image_id: ImageId::new(format!("{idx:0width$}")).expect("digits are a valid id"),
                difficulty,
                skill: 0.0,
            });
        }
        start = end;
    }
    Ok(images)
}

/// Advance every image one epoch: trained images gain, idle images decay.
/// `trained_ids` must be sorted ascending (plans already are).
pub fn learner_step(
    images: &mut [SyntheticImage],
    trained_ids: &[ImageId],
    dynamics: &LearnerDynamics,
) {
    debug_assert!(trained_ids.windows(2).all(|w| w[0] < w[1]));
    for image in images.iter_mut() {
        let trained = trained_ids.binary_search(&image.image_id).is_ok();
        let next = if trained {
            image.skill + dynamics.learn_rate * (1.0 - image.difficulty) * (1.0 - image.skill)
        } else {
            image.skill * (1.0 - dynamics.forget_rate)
        };
        image.skill = next.clamp(0.0, 1.0);
    }
}

/// Simulated detector evaluation: precision and recall are the latent skill
/// perturbed by independent uniform noise in [-noise_scale, +noise_scale].
/// Precision is drawn first.
pub fn evaluate(
    image: &SyntheticImage,
    dynamics: &LearnerDynamics,
    rng: &mut StdRng,
) -> (f64, f64) {
    let sigma = dynamics.noise_scale;
    let mut draw = |skill: f64| -> f64 {
        let noise = if sigma == 0.0 {
            0.0
        } else {
            rng.random_range(-sigma..=sigma)
        };
        (skill + noise).clamp(0.0, 1.0)
    };
    let precision = draw(image.skill);
    let recall = draw(image.skill);
    (precision, recall)
}

fn plan_for_policy(
    policy: SamplingPolicy,
    table: &StateTable,
    cfg: &SchedulerConfig,
    t: Epoch,
    seed: u64,
    by_difficulty: &[ImageId],
    pruned: &Option<Vec<ImageId>>,
) -> Result<EpochPlan> {
    let all_ids = || table.ids().cloned().collect::<Vec<_>>();
    match policy {
        SamplingPolicy::Afss => compose_plan(table, cfg, t),
        SamplingPolicy::FullCoverage => {
            EpochPlan::from_parts(t, vec![], vec![], vec![], vec![], all_ids())
        }
        SamplingPolicy::RandomSubset { fraction } => {
            let ids = all_ids();
            let count = ((fraction * ids.len() as f64).floor() as usize).min(ids.len());
            let mut rng = policy_rng(seed, t, 0x52414e44);
            let mut pool = ids;
            let n = pool.len();
            for i in 0..count {
                let j = rng.random_range(i..n);
                pool.swap(i, j);
            }
            pool.truncate(count);
            EpochPlan::from_parts(t, vec![], vec![], vec![], vec![], pool)
        }
        SamplingPolicy::StaticPrune { .. } => {
            let ids = match pruned {
                Some(retained) => retained.clone(),
                None => all_ids(),
            };
            EpochPlan::from_parts(t, vec![], vec![], vec![], vec![], ids)
        }
        SamplingPolicy::Curriculum { ramp_epochs } => {
            let share = (t as f64 / ramp_epochs as f64).min(1.0);
            let count = ((share * by_difficulty.len() as f64).ceil() as usize)
                .clamp(1, by_difficulty.len());
            EpochPlan::from_parts(
                t,
                vec![],
                vec![],
                vec![],
                vec![],
                by_difficulty[..count].to_vec(),
            )
        }
    }
}

/// Run one policy over a synthetic dataset for the given number of epochs.
///
/// Every policy shares the same state-table machinery and refresh cadence,
/// so tier populations and evaluation costs are accounted identically. The
/// scheduler's RNG seed is overridden by `seed` so one knob reproduces the
/// whole run.
pub fn run_experiment(
    policy: SamplingPolicy,
    dataset: &[SyntheticImage],
    epochs: u64,
    cfg: &SchedulerConfig,
    dynamics: &LearnerDynamics,
    seed: u64,
    refresh_scope: RefreshScope,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    dynamics.validate()?;
    if epochs < cfg.warmup_epochs {
        return Err(Error::Validation(format!(
            "epochs ({epochs}) must be at least warmup_epochs ({})",
            cfg.warmup_epochs
        )));
    }
    let cfg = cfg.clone().with_seed(seed);
    let mut images: Vec<SyntheticImage> = dataset.to_vec();
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let n = images.len();
    let mut table = StateTable::new(images.iter().map(|i| i.image_id.clone()), cfg.warmup_epochs)?;

    // Ascending difficulty, ties by id: the curriculum baseline's admission order.
    let by_difficulty: Vec<ImageId> = {
        let mut order: Vec<&SyntheticImage> = images.iter().collect();
        order.sort_by(|a, b| {
            a.difficulty
                .partial_cmp(&b.difficulty)
                .expect("difficulties are finite")
                .then_with(|| a.image_id.cmp(&b.image_id))
        });
        order.into_iter().map(|i| i.image_id.clone()).collect()
    };

    let mut pruned: Option<Vec<ImageId>> = None;
    let mut stats = Vec::with_capacity(epochs as usize);
    let mut cum_visits: u64 = 0;
    let mut cum_eval_visits: u64 = 0;

    for t in 1..=epochs {
        if let SamplingPolicy::StaticPrune {
            threshold,
            prune_epoch,
        } = policy
        {
            if t == prune_epoch && pruned.is_none() {
                let retained: Vec<ImageId> = table
                    .records()
                    .filter(|r| r.sufficiency(cfg.metric_kind) <= threshold)
                    .map(|r| r.image_id.clone())
                    .collect();
                pruned = Some(retained);
            }
        }

        let plan = plan_for_policy(policy, &table, &cfg, t, seed, &by_difficulty, &pruned)?;
        learner_step(&mut images, plan.omega(), dynamics);
        table.apply_usage(&plan, t)?;
        cum_visits += plan.len() as u64;

        if is_refresh_epoch(t, cfg.warmup_epochs, cfg.refresh_interval) {
            let window_start = t.saturating_sub(cfg.refresh_interval - 1);
            let entries: Vec<MetricsEntry> = images
                .iter()
                .filter(|img| match refresh_scope {
                    RefreshScope::FullDataset => true,
                    RefreshScope::RecentlyUsed => table
                        .get(&img.image_id)
                        .map(|r| r.last_used_epoch >= window_start)
                        .unwrap_or(false),
                })
                .map(|img| {
                    let mut rng = evaluation_rng(seed, t, &img.image_id);
                    let (precision, recall) = evaluate(img, dynamics, &mut rng);
                    MetricsEntry {
                        image_id: img.image_id.clone(),
                        precision,
                        recall,
                    }
                })
                .collect();
            cum_eval_visits += entries.len() as u64;
            let batch = MetricsBatch::new(entries, t)?;
            table.apply_metrics(&batch, t, cfg.refresh_interval)?;
        }

        let part = table.partition(&cfg.thresholds, cfg.metric_kind);
        let mean_skill = images.iter().map(|i| i.skill).sum::<f64>() / n as f64;
        let mean_sufficiency = table
            .records()
            .map(|r| learning_sufficiency(r.precision, r.recall, cfg.metric_kind))
            .sum::<f64>()
            / n as f64;
        stats.push(EpochStats {
            epoch: t,
            images_used: plan.len(),
            cum_visits,
            cum_eval_visits,
            n_easy: part.easy.len(),
            n_moderate: part.moderate.len(),
            n_hard: part.hard.len(),
            mean_skill,
            mean_sufficiency,
        });
    }

    let final_mean_skill = stats.last().map(|s| s.mean_skill).unwrap_or(0.0);
    let full_visits = n as u64 * epochs;
    Ok(ExperimentReport {
        policy: policy.label(),
        dataset_size: n,
        epochs: stats,
        final_mean_skill,
        final_accuracy_proxy: final_mean_skill,
        total_visits: cum_visits,
        total_eval_visits: cum_eval_visits,
        visit_ratio_vs_full: cum_visits as f64 / full_visits as f64,
    })
}

/// Sweepable scheduler parameters.
pub const SWEEP_PARAMETERS: [&str; 5] = [
    "review_staleness",
    "coverage_staleness",
    "refresh_interval",
    "easy_above",
    "hard_below",
];

fn cfg_with_parameter(
    base: &SchedulerConfig,
    parameter: &str,
    value: f64,
) -> Result<SchedulerConfig> {
    let mut cfg = base.clone();
    let as_epochs = |v: f64| -> Result<u64> {
        if v.is_infinite() && v > 0.0 {
            return Ok(u64::MAX);
        }
        if v.fract() != 0.0 || v < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "epoch-valued sweep values must be positive integers (or inf), got {v}"
            )));
        }
        Ok(v as u64)
    };
    match parameter {
        "review_staleness" => cfg.review_staleness = as_epochs(value)?,
        "coverage_staleness" => cfg.coverage_staleness = as_epochs(value)?,
        "refresh_interval" => cfg.refresh_interval = as_epochs(value)?,
        "easy_above" => {
            cfg.thresholds =
                crate::sufficiency::StratifyThresholds::new(value, cfg.thresholds.hard_below)?;
        }
        "hard_below" => {
            cfg.thresholds =
                crate::sufficiency::StratifyThresholds::new(cfg.thresholds.easy_above, value)?;
        }
        other => return Err(Error::UnknownSweepParameter(other.to_string())),
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run one experiment per parameter value, holding everything else (seed
/// included) fixed for comparability.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    parameter: &str,
    values: &[f64],
    policy: SamplingPolicy,
    dataset: &[SyntheticImage],
    epochs: u64,
    base_cfg: &SchedulerConfig,
    dynamics: &LearnerDynamics,
    seed: u64,
    refresh_scope: RefreshScope,
) -> Result<Vec<ExperimentReport>> {
    if !SWEEP_PARAMETERS.contains(&parameter) {
        return Err(Error::UnknownSweepParameter(parameter.to_string()));
    }
    values
        .iter()
        .map(|&v| {
            let cfg = cfg_with_parameter(base_cfg, parameter, v)?;
            run_experiment(policy, dataset, epochs, &cfg, dynamics, seed, refresh_scope)
        })
        .collect()
}

/// Full-duty training (in exposure-count nats) for a fresh image to cross
/// the hard/moderate boundary: -ln(1 - 0.55).
const HARD_EXIT_NATS: f64 = 0.8;
/// Exposure nats to cross into the easy tier: the hard phase plus a
/// moderate phase trained at roughly the 40%-coverage duty cycle.
const EASY_ENTRY_NATS: f64 = 3.24;

/// Difficulty mixture used when none is specified.
///
/// A mastery-heavy corpus with a calibrated long tail: a third of the images
/// are quick to master, a majority stay genuinely hard for the whole run, and
/// two thin spreads of intermediate difficulties are placed (via the default
/// dynamics) so that hard-tier exits and easy-tier entries keep occurring
/// throughout a 200-epoch run rather than all at once.
pub fn default_difficulty_mix() -> Vec<DifficultyBand> {
    let gain = LearnerDynamics::default().learn_rate;
    let mut bands = vec![DifficultyBand {
        fraction: 0.35,
        low: 0.02,
        high: 0.06,
    }];
    // Easy-tier entries targeted at epochs 25..205.
    let entry_epochs: Vec<f64> = (0..10).map(|k| 25.0 + 20.0 * k as f64).collect();
    for w in entry_epochs.windows(2) {
        bands.push(DifficultyBand {
            fraction: 0.002,
            low: 1.0 - EASY_ENTRY_NATS / (w[0] * gain),
            high: 1.0 - EASY_ENTRY_NATS / (w[1] * gain),
        });
    }
    // Hard-tier exits targeted at epochs 20..200.
    let exit_epochs: Vec<f64> = (0..10).map(|k| 20.0 + 20.0 * k as f64).collect();
    for w in exit_epochs.windows(2) {
        bands.push(DifficultyBand {
            fraction: 0.0016,
            low: 1.0 - HARD_EXIT_NATS / (w[0] * gain),
            high: 1.0 - HARD_EXIT_NATS / (w[1] * gain),
        });
    }
    let tail = 1.0 - bands.iter().map(|b| b.fraction).sum::<f64>();
    bands.push(DifficultyBand {
        fraction: tail,
        low: 0.9975,
        high: 1.0,
    });
    bands
}

/// Parse a mixture spec like `0.5:0.05-0.35,0.3:0.35-0.65,0.2:0.65-0.95`.
pub fn parse_difficulty_mix(s: &str) -> Result<Vec<DifficultyBand>> {
    let bad = |msg: String| Error::InvalidConfig(msg);
    let mut bands = Vec::new();
    for part in s.split(',') {
        let (frac, range) = part
            .split_once(':')
            .ok_or_else(|| bad(format!("band '{part}' must look like fraction:low-high")))?;
        let (low, high) = range
            .split_once('-')
            .ok_or_else(|| bad(format!("band range '{range}' must look like low-high")))?;
        let fraction: f64 = frac
            .parse()
            .map_err(|e| bad(format!("bad band fraction '{frac}': {e}")))?;
        let low: f64 = low
            .parse()
            .map_err(|e| bad(format!("bad band low '{low}': {e}")))?;
        let high: f64 = high
            .parse()
            .map_err(|e| bad(format!("bad band high '{high}': {e}")))?;
        bands.push(DifficultyBand::new(fraction, low, high)?);
    }
    Ok(bands)
}
