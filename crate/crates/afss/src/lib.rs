//! Anti-forgetting training-data scheduling.
//!
//! Tracks how well each training image has been learned (the minimum of its
//! detection precision and recall), stratifies images into easy / moderate /
//! hard tiers, and composes per-epoch training sets that sparsely review easy
//! images, keep short-term coverage of moderate ones, and always include hard
//! ones. A sidecar file protocol lets any external trainer drive the
//! scheduler, and a synthetic-learner simulator closes the loop for desk-scale
//! studies of coverage, forgetting, and training-cost behavior.

pub mod cli;
pub mod config;
pub mod error;
pub mod scheduler;
pub mod sidecar;
pub mod simulator;
pub mod state;
pub mod sufficiency;

pub use error::{Error, Result};
pub use scheduler::{compose_plan, EpochPlan, ForcedReviewPolicy, SchedulerConfig};
pub use state::{
    is_refresh_epoch, Epoch, ImageId, ImageRecord, MetricsBatch, MetricsEntry, MetricsOutcome,
    StateTable,
};
pub use sufficiency::{
    learning_sufficiency, precision_recall_from_counts, stratify, DetectionCounts, DifficultyLevel,
    StratifyThresholds, SufficiencyMetricKind,
};
