//! File protocol between the scheduler and an external trainer: state
//! snapshots, metrics ingestion, epoch manifests, and report CSVs.
//!
//! All formats are line-delimited text, canonical (equal inputs produce
//! byte-identical files), and versioned. See docs/protocol.md for the
//! byte-level description. Writes go through a temp file in the target
//! directory followed by a rename, so a crashed writer never leaves a torn
//! file behind the final path.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scheduler::{EpochPlan, ForcedReviewPolicy, SchedulerConfig};
use crate::simulator::ExperimentReport;
use crate::state::{Epoch, ImageId, ImageRecord, MetricsBatch, MetricsEntry, StateTable};
use crate::sufficiency::{StratifyThresholds, SufficiencyMetricKind};

pub const SNAPSHOT_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

/// Report CSV header, fixed by the protocol.
pub const REPORT_HEADER: &str =
    "epoch,images_used,cum_visits,cum_eval_visits,n_easy,n_moderate,n_hard,mean_skill,mean_sufficiency";

/// Origin tags used in manifests, in canonical (lexicographic) order.
pub const ORIGIN_TAGS: [&str; 5] = ["FC", "FR", "HD", "RE", "RM"];

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Write `contents` to `path` atomically (temp file + rename).
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| Error::io(path_str(path), e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path_str(path), e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path_str(path), e.error))?;
    Ok(())
}

fn fmt_staleness(v: u64) -> String {
    if v == u64::MAX {
        "inf".to_string()
    } else {
        v.to_string()
    }
}

pub(crate) fn parse_staleness(s: &str) -> std::result::Result<u64, String> {
    if s == "inf" {
        Ok(u64::MAX)
    } else {
        s.parse::<u64>().map_err(|e| e.to_string())
    }
}

/// Render the canonical snapshot document for a table and its config.
pub fn render_snapshot(table: &StateTable, cfg: &SchedulerConfig) -> Result<String> {
    if table.warmup_epochs() != cfg.warmup_epochs {
        return Err(Error::Validation(format!(
            "table warmup_epochs {} disagrees with config warmup_epochs {}",
            table.warmup_epochs(),
            cfg.warmup_epochs
        )));
    }
    let mut out = String::new();
    writeln!(
        out,
        "afss-snapshot v{SNAPSHOT_VERSION} epoch={} warmup_epochs={} \
         easy_budget_fraction={} forced_review_cap_fraction={} review_staleness={} \
         moderate_fraction={} coverage_staleness={} refresh_interval={} \
         easy_above={} hard_below={} metric_kind={} forced_review_policy={} seed={} records={}",
        table.epoch(),
        cfg.warmup_epochs,
        cfg.easy_budget_fraction,
        cfg.forced_review_cap_fraction,
        fmt_staleness(cfg.review_staleness),
        cfg.moderate_fraction,
        fmt_staleness(cfg.coverage_staleness),
        cfg.refresh_interval,
        cfg.thresholds.easy_above,
        cfg.thresholds.hard_below,
        cfg.metric_kind.as_str(),
        cfg.forced_review_policy.as_str(),
        cfg.seed,
        table.len(),
    )
    .expect("writing to String cannot fail");
    for record in table.records() {
        writeln!(
            out,
            "{} {} {} {}",
            record.image_id, record.precision, record.recall, record.last_used_epoch
        )
        .expect("writing to String cannot fail");
    }
    Ok(out)
}

/// Write a state snapshot.
pub fn write_snapshot(table: &StateTable, cfg: &SchedulerConfig, path: &Path) -> Result<()> {
    write_atomic(path, &render_snapshot(table, cfg)?)
}

struct HeaderFields<'a> {
    path: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> HeaderFields<'a> {
    fn get(&self, key: &str) -> Result<&'a str> {
        self.pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::parse(self.path, 1, format!("missing header field '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key)?;
        raw.parse::<T>()
            .map_err(|e| Error::parse(self.path, 1, format!("bad value for '{key}': {e}")))
    }

    fn parse_staleness(&self, key: &str) -> Result<u64> {
        let raw = self.get(key)?;
        parse_staleness(raw)
            .map_err(|e| Error::parse(self.path, 1, format!("bad value for '{key}': {e}")))
    }
}

/// Read a snapshot back into a table and its config.
pub fn read_snapshot(path: &Path) -> Result<(StateTable, SchedulerConfig)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    parse_snapshot(&text, &path_str(path))
}

/// Parse snapshot text. `origin` names the source in error messages.
pub fn parse_snapshot(text: &str, origin: &str) -> Result<(StateTable, SchedulerConfig)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty file"))?;
    let mut tokens = header.split(' ');
    let magic = tokens.next().unwrap_or_default();
    if magic != "afss-snapshot" {
        return Err(Error::parse(
            origin,
            1,
            format!("not a snapshot file (leading token {magic:?})"),
        ));
    }
    let version = tokens
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "missing version token"))?;
    if version != format!("v{SNAPSHOT_VERSION}") {
        return Err(Error::UnsupportedVersion {
            found: version.to_string(),
            supported: SNAPSHOT_VERSION,
        });
    }
    let mut pairs = Vec::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, 1, format!("malformed header token {tok:?}")))?;
        pairs.push((k, v));
    }
    let fields = HeaderFields {
        path: origin,
        pairs,
    };

    let epoch: Epoch = fields.parse("epoch")?;
    let expected_records: usize = fields.parse("records")?;
    let cfg = SchedulerConfig {
        easy_budget_fraction: fields.parse("easy_budget_fraction")?,
        forced_review_cap_fraction: fields.parse("forced_review_cap_fraction")?,
        review_staleness: fields.parse_staleness("review_staleness")?,
        moderate_fraction: fields.parse("moderate_fraction")?,
        coverage_staleness: fields.parse_staleness("coverage_staleness")?,
        refresh_interval: fields.parse("refresh_interval")?,
        warmup_epochs: fields.parse("warmup_epochs")?,
        thresholds: StratifyThresholds::new(
            fields.parse("easy_above")?,
            fields.parse("hard_below")?,
        )?,
        metric_kind: SufficiencyMetricKind::parse(fields.get("metric_kind")?)?,
        forced_review_policy: ForcedReviewPolicy::parse(fields.get("forced_review_policy")?)?,
        seed: fields.parse("seed")?,
    };
    cfg.validate()?;

    let mut records: Vec<ImageRecord> = Vec::with_capacity(expected_records);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let mut cols = line.split(' ');
        let id = cols
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::parse(origin, line_no, "missing image id"))?;
        let image_id =
            ImageId::new(id).map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        let mut float_col = |name: &str| -> Result<f64> {
            let raw = cols
                .next()
                .ok_or_else(|| Error::parse(origin, line_no, format!("missing {name}")))?;
            let v: f64 = raw
                .parse()
                .map_err(|e| Error::parse(origin, line_no, format!("bad {name}: {e}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("{name} {v} outside [0, 1]"),
                ));
            }
            Ok(v)
        };
        let precision = float_col("precision")?;
        let recall = float_col("recall")?;
        let last_used_raw = cols
            .next()
            .ok_or_else(|| Error::parse(origin, line_no, "missing last_used_epoch"))?;
        let last_used_epoch: Epoch = last_used_raw
            .parse()
            .map_err(|e| Error::parse(origin, line_no, format!("bad last_used_epoch: {e}")))?;
        if cols.next().is_some() {
            return Err(Error::parse(origin, line_no, "too many columns"));
        }
        if let Some(prev) = records.last() {
            if prev.image_id >= image_id {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!(
                        "records out of order: '{}' follows '{}'",
                        image_id, prev.image_id
                    ),
                ));
            }
        }
        if last_used_epoch > epoch {
            return Err(Error::parse(
                origin,
                line_no,
                format!("last_used_epoch {last_used_epoch} exceeds table epoch {epoch}"),
            ));
        }
        records.push(ImageRecord {
            image_id,
            precision,
            recall,
            last_used_epoch,
        });
    }
    if records.len() != expected_records {
        return Err(Error::parse(
            origin,
            records.len() + 1,
            format!(
                "header promises {expected_records} records but file holds {}",
                records.len()
            ),
        ));
    }
    let table = StateTable::from_records(records, epoch, cfg.warmup_epochs)?;
    Ok((table, cfg))
}

/// Read a comma-delimited metrics file: one `image_id,precision,recall` row
/// per line, no header. An empty file is a legal (empty) partial refresh.
pub fn read_metrics(path: &Path, expected_epoch: Epoch) -> Result<MetricsBatch> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    parse_metrics(&text, &path_str(path), expected_epoch)
}

pub fn parse_metrics(text: &str, origin: &str, expected_epoch: Epoch) -> Result<MetricsBatch> {
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let row_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                origin,
                row_no,
                format!(
                    "expected 3 fields (image_id,precision,recall), got {}",
                    cols.len()
                ),
            ));
        }
        let image_id =
            ImageId::new(cols[0]).map_err(|e| Error::parse(origin, row_no, e.to_string()))?;
        if !seen.insert(image_id.clone()) {
            return Err(Error::parse(
                origin,
                row_no,
                format!("duplicate image id '{image_id}'"),
            ));
        }
        let value = |name: &str, raw: &str| -> Result<f64> {
            let v: f64 = raw
                .parse()
                .map_err(|e| Error::parse(origin, row_no, format!("bad {name}: {e}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::parse(
                    origin,
                    row_no,
                    format!("{name} {v} outside [0, 1]"),
                ));
            }
            Ok(v)
        };
        let precision = value("precision", cols[1])?;
        let recall = value("recall", cols[2])?;
        entries.push(MetricsEntry {
            image_id,
            precision,
            recall,
        });
    }
    MetricsBatch::new(entries, expected_epoch)
}

/// Render the canonical manifest for a plan: a header line, then one
/// `TAG image_id` line per selected image, sorted by tag then id.
pub fn render_manifest(plan: &EpochPlan) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "afss-manifest v{MANIFEST_VERSION} epoch={} entries={}",
        plan.epoch,
        plan.len()
    )
    .expect("writing to String cannot fail");
    let tagged: [(&str, &[ImageId]); 5] = [
        ("FC", &plan.forced_coverage),
        ("FR", &plan.forced_review),
        ("HD", &plan.hard),
        ("RE", &plan.random_easy),
        ("RM", &plan.random_moderate),
    ];
    for (tag, ids) in tagged {
        for id in ids {
            writeln!(out, "{tag} {id}").expect("writing to String cannot fail");
        }
    }
    out
}

pub fn write_manifest(plan: &EpochPlan, path: &Path) -> Result<()> {
    write_atomic(path, &render_manifest(plan))
}

/// Render the per-epoch report CSV with the fixed protocol header.
pub fn render_report(report: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for row in &report.epochs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.epoch,
            row.images_used,
            row.cum_visits,
            row.cum_eval_visits,
            row.n_easy,
            row.n_moderate,
            row.n_hard,
            row.mean_skill,
            row.mean_sufficiency
        )
        .expect("writing to String cannot fail");
    }
    out
}

pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    write_atomic(path, &render_report(report))
}

/// Read an id list: one image id per line. Blank lines are rejected (they
/// are almost always an editing accident in an id inventory).
pub fn read_ids_file(path: &Path) -> Result<Vec<ImageId>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    let origin = path_str(path);
    let mut ids = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let id = ImageId::new(line).map_err(|e| Error::parse(&origin, line_no, e.to_string()))?;
        if !seen.insert(id.clone()) {
            return Err(Error::parse(
                &origin,
                line_no,
                format!("duplicate image id '{id}'"),
            ));
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::EmptyIdList);
    }
    Ok(ids)
}
