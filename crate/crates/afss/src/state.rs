//! Per-image learning-state table carried across epochs: difficulty
//! partitioning, usage recording, and the periodic metric refresh.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sufficiency::{
    learning_sufficiency, stratify, DifficultyLevel, StratifyThresholds, SufficiencyMetricKind,
};

/// Training-epoch index. Epoch 0 means "never used / pre-training"; real
/// training epochs start at 1.
pub type Epoch = u64;

/// Opaque stable image identifier.
///
/// Ids are ordered lexicographically; every sampling and serialization step
/// in the crate canonicalizes on ascending id order. Ids must be non-empty
/// and contain no whitespace, commas, or control characters so the sidecar
/// file formats stay line- and field-safe.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageId(Arc<str>);

impl ImageId {
    pub fn new(id: impl AsRef<str>) -> Result<Self> {
        let id = id.as_ref();
        let ok = !id.is_empty()
            && !id
                .chars()
                .any(|c| c.is_whitespace() || c.is_control() || c == ',');
        if ok {
            Ok(ImageId(Arc::from(id)))
        } else {
            Err(Error::InvalidImageId(id.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<u64> for ImageId {
    fn from(n: u64) -> Self {
        ImageId(Arc::from(n.to_string().as_str()))
    }
}

impl std::str::FromStr for ImageId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ImageId::new(s)
    }
}

/// One image's learning state: the (I_i, P_i, R_i, ep_i) tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub precision: f64,
    pub recall: f64,
    pub last_used_epoch: Epoch,
}

impl ImageRecord {
    pub fn sufficiency(&self, kind: SufficiencyMetricKind) -> f64 {
        learning_sufficiency(self.precision, self.recall, kind)
    }

    pub fn difficulty(
        &self,
        thresholds: &StratifyThresholds,
        kind: SufficiencyMetricKind,
    ) -> DifficultyLevel {
        stratify(self.sufficiency(kind), thresholds)
    }

    /// Completed epochs since this image was last used, as of planning
    /// epoch `t`: t − 1 − ep_i.
    pub fn staleness(&self, t: Epoch) -> u64 {
        (t - 1).saturating_sub(self.last_used_epoch)
    }
}

/// A batch of externally evaluated (precision, recall) pairs for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsBatch {
    entries: Vec<MetricsEntry>,
    source_epoch: Epoch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsEntry {
    pub image_id: ImageId,
    pub precision: f64,
    pub recall: f64,
}

impl MetricsBatch {
    /// Build a batch, rejecting duplicate ids and out-of-range values.
    pub fn new(entries: Vec<MetricsEntry>, source_epoch: Epoch) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if !(0.0..=1.0).contains(&e.precision) {
                return Err(Error::OutOfRange {
                    context: format!("precision for '{}'", e.image_id),
                    value: e.precision,
                });
            }
            if !(0.0..=1.0).contains(&e.recall) {
                return Err(Error::OutOfRange {
                    context: format!("recall for '{}'", e.image_id),
                    value: e.recall,
                });
            }
            if !seen.insert(e.image_id.clone()) {
                return Err(Error::DuplicateId(e.image_id.to_string()));
            }
        }
        Ok(Self {
            entries,
            source_epoch,
        })
    }

    pub fn entries(&self) -> &[MetricsEntry] {
        &self.entries
    }

    pub fn source_epoch(&self) -> Epoch {
        self.source_epoch
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Outcome of [`StateTable::apply_metrics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsOutcome {
    /// This was a refresh epoch; the batch was merged in.
    Applied,
    /// Off the refresh schedule; previous values were retained and the
    /// caller should surface a warning.
    RetainedOffSchedule,
}

/// The state dictionary D_t: every image's record plus the epoch counter.
///
/// The image set is fixed at construction; only epochs and per-record
/// metrics/usage change afterwards. Single-writer: one actor mutates the
/// table per epoch cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTable {
    records: BTreeMap<ImageId, ImageRecord>,
    epoch: Epoch,
    warmup_epochs: u64,
}

/// Borrowed view of one difficulty partition, each tier in ascending id order.
#[derive(Debug)]
pub struct TierPartition<'a> {
    pub easy: Vec<&'a ImageRecord>,
    pub moderate: Vec<&'a ImageRecord>,
    pub hard: Vec<&'a ImageRecord>,
}

impl StateTable {
    /// Initialize a table with every record at precision = recall = 0
    /// (forcing Hard, hence full coverage, until the first refresh) and
    /// last_used_epoch = 0.
    pub fn new(image_ids: impl IntoIterator<Item = ImageId>, warmup_epochs: u64) -> Result<Self> {
        if warmup_epochs == 0 {
            return Err(Error::InvalidConfig(
                "warmup_epochs must be at least 1".to_string(),
            ));
        }
        let mut records = BTreeMap::new();
        for id in image_ids {
            let record = ImageRecord {
                image_id: id.clone(),
                precision: 0.0,
                recall: 0.0,
                last_used_epoch: 0,
            };
            if records.insert(id.clone(), record).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        if records.is_empty() {
            return Err(Error::EmptyIdList);
        }
        Ok(Self {
            records,
            epoch: 0,
            warmup_epochs,
        })
    }

    /// Rebuild a table from already-populated records, validating ranges,
    /// uniqueness, and epoch consistency (snapshot loading, test fixtures).
    pub fn from_records(
        records: Vec<ImageRecord>,
        epoch: Epoch,
        warmup_epochs: u64,
    ) -> Result<Self> {
        if warmup_epochs == 0 {
            return Err(Error::InvalidConfig(
                "warmup_epochs must be at least 1".to_string(),
            ));
        }
        let mut map = BTreeMap::new();
        for r in records {
            for (name, v) in [("precision", r.precision), ("recall", r.recall)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        context: format!("{name} for '{}'", r.image_id),
                        value: v,
                    });
                }
            }
            if r.last_used_epoch > epoch {
                return Err(Error::Validation(format!(
                    "record '{}' used at epoch {} but table is at epoch {}",
                    r.image_id, r.last_used_epoch, epoch
                )));
            }
            let id = r.image_id.clone();
            if map.insert(id.clone(), r).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        if map.is_empty() {
            return Err(Error::EmptyIdList);
        }
        Ok(Self {
            records: map,
            epoch,
            warmup_epochs,
        })
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn warmup_epochs(&self) -> u64 {
        self.warmup_epochs
    }

    /// Number of images K.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, id: &ImageId) -> bool {
        self.records.contains_key(id)
    }

    pub fn get(&self, id: &ImageId) -> Option<&ImageRecord> {
        self.records.get(id)
    }

    /// Records in ascending id order.
    pub fn records(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ImageId> {
        self.records.keys()
    }

    /// Split all records into the three difficulty tiers (D1, D2, D3 in the
    /// easy/moderate/hard sense), each in ascending id order.
    pub fn partition(
        &self,
        thresholds: &StratifyThresholds,
        kind: SufficiencyMetricKind,
    ) -> TierPartition<'_> {
        let mut part = TierPartition {
            easy: Vec::new(),
            moderate: Vec::new(),
            hard: Vec::new(),
        };
        for record in self.records.values() {
            match record.difficulty(thresholds, kind) {
                DifficultyLevel::Easy => part.easy.push(record),
                DifficultyLevel::Moderate => part.moderate.push(record),
                DifficultyLevel::Hard => part.hard.push(record),
            }
        }
        part
    }

    /// Record that every image in the plan was used at epoch `t` (ep'_i = t)
    /// and advance the epoch counter. `t` must be exactly one past the
    /// table's current epoch, and every planned id must exist.
    pub fn apply_usage(&mut self, plan: &crate::scheduler::EpochPlan, t: Epoch) -> Result<()> {
        if t != self.epoch + 1 {
            return Err(Error::EpochMismatch {
                expected: self.epoch + 1,
                got: t,
            });
        }
        for id in plan.omega() {
            if !self.records.contains_key(id) {
                return Err(Error::UnknownId(id.to_string()));
            }
        }
        for id in plan.omega() {
            // Existence checked above.
            self.records.get_mut(id).unwrap().last_used_epoch = t;
        }
        self.epoch = t;
        Ok(())
    }

    /// Merge externally evaluated metrics for epoch `t`.
    ///
    /// On a refresh epoch every batched entry replaces the stored
    /// (precision, recall); records absent from the batch keep their old
    /// values. Off the refresh schedule the table is left untouched and
    /// [`MetricsOutcome::RetainedOffSchedule`] is returned so the caller can
    /// warn. Batch ids and the source epoch are validated either way.
    pub fn apply_metrics(
        &mut self,
        batch: &MetricsBatch,
        t: Epoch,
        refresh_interval: u64,
    ) -> Result<MetricsOutcome> {
        if batch.source_epoch != t {
            return Err(Error::MetricsEpochMismatch {
                batch: batch.source_epoch,
                requested: t,
            });
        }
        if t != self.epoch {
            return Err(Error::EpochMismatch {
                expected: self.epoch,
                got: t,
            });
        }
        for entry in &batch.entries {
            if !self.records.contains_key(&entry.image_id) {
                return Err(Error::UnknownId(entry.image_id.to_string()));
            }
        }
        if !is_refresh_epoch(t, self.warmup_epochs, refresh_interval) {
            return Ok(MetricsOutcome::RetainedOffSchedule);
        }
        for entry in &batch.entries {
            let record = self.records.get_mut(&entry.image_id).unwrap();
            record.precision = entry.precision;
            record.recall = entry.recall;
        }
        Ok(MetricsOutcome::Applied)
    }
}

/// True iff epoch `t` is on the metric-refresh schedule:
/// t ≥ τ and (t − τ) mod interval = 0.
pub fn is_refresh_epoch(t: Epoch, warmup_epochs: u64, interval: u64) -> bool {
    debug_assert!(interval >= 1);
    t >= warmup_epochs && (t - warmup_epochs).is_multiple_of(interval)
}
