//! Plain `key = value` config files mapping 1:1 onto [`SchedulerConfig`].

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scheduler::{ForcedReviewPolicy, SchedulerConfig};
use crate::sidecar::parse_staleness;
use crate::sufficiency::{StratifyThresholds, SufficiencyMetricKind};

/// Names accepted in config files and as CLI overrides (kebab-cased there).
pub const CONFIG_KEYS: [&str; 12] = [
    "easy_budget_fraction",
    "forced_review_cap_fraction",
    "review_staleness",
    "moderate_fraction",
    "coverage_staleness",
    "refresh_interval",
    "warmup_epochs",
    "easy_above",
    "hard_below",
    "metric_kind",
    "forced_review_policy",
    "seed",
];

/// Apply one `key = value` setting to a config in place.
pub fn apply_setting(cfg: &mut SchedulerConfig, key: &str, value: &str) -> Result<()> {
    let fraction = |v: &str| -> Result<f64> {
        v.parse::<f64>()
            .map_err(|e| Error::InvalidConfig(format!("bad value for '{key}': {e}")))
    };
    let epochs = |v: &str| -> Result<u64> {
        parse_staleness(v).map_err(|e| Error::InvalidConfig(format!("bad value for '{key}': {e}")))
    };
    match key {
        "easy_budget_fraction" => cfg.easy_budget_fraction = fraction(value)?,
        "forced_review_cap_fraction" => cfg.forced_review_cap_fraction = fraction(value)?,
        "review_staleness" => cfg.review_staleness = epochs(value)?,
        "moderate_fraction" => cfg.moderate_fraction = fraction(value)?,
        "coverage_staleness" => cfg.coverage_staleness = epochs(value)?,
        "refresh_interval" => cfg.refresh_interval = epochs(value)?,
        "warmup_epochs" => cfg.warmup_epochs = epochs(value)?,
        "easy_above" => {
            cfg.thresholds = StratifyThresholds::new(fraction(value)?, cfg.thresholds.hard_below)?
        }
        "hard_below" => {
            cfg.thresholds = StratifyThresholds::new(cfg.thresholds.easy_above, fraction(value)?)?
        }
        "metric_kind" => cfg.metric_kind = SufficiencyMetricKind::parse(value)?,
        "forced_review_policy" => cfg.forced_review_policy = ForcedReviewPolicy::parse(value)?,
        "seed" => {
            cfg.seed = value
                .parse::<u64>()
                .map_err(|e| Error::InvalidConfig(format!("bad value for 'seed': {e}")))?
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown config key '{other}'"
            )))
        }
    }
    Ok(())
}

/// Parse a config file onto `base`. Blank lines and `#` comments are
/// ignored; unknown keys are rejected with their line number.
pub fn load_config_file(path: &Path, base: SchedulerConfig) -> Result<SchedulerConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let origin = path.display().to_string();
    let mut cfg = base;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&origin, line_no, "expected 'key = value'"))?;
        apply_setting(&mut cfg, key.trim(), value.trim())
            .map_err(|e| Error::parse(&origin, line_no, e.to_string()))?;
    }
    cfg.validate()?;
    Ok(cfg)
}
