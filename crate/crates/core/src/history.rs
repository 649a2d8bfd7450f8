//! Per-classifier score history with strict lower-bound window queries.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::Result;
use crate::types::{ClassifierId, ScoreRecord, TimeInstant};

/// One stored score, without its classifier id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub alpha: f64,
    pub t: TimeInstant,
}

impl Sample {
    fn order(&self, other: &Sample) -> Ordering {
        self.t
            .cmp(&other.t)
            .then_with(|| self.alpha.total_cmp(&other.alpha))
    }
}

/// Time-ordered score lists keyed by classifier.
///
/// Each list is kept sorted by `(t, alpha)`, so the stored order does not
/// depend on the order in which records were inserted. Two scores from one
/// classifier may share a timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    lists: BTreeMap<ClassifierId, Vec<Sample>>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a record, keeping its classifier's list sorted.
    pub fn insert(&mut self, record: ScoreRecord) -> Result<()> {
        record.validate()?;
        let sample = Sample {
            alpha: record.alpha,
            t: record.t,
        };
        let list = self.lists.entry(record.cid).or_default();
        let at = list.partition_point(|s| s.order(&sample) != Ordering::Greater);
        list.insert(at, sample);
        Ok(())
    }

    pub fn extend<I: IntoIterator<Item = ScoreRecord>>(&mut self, records: I) -> Result<()> {
        for r in records {
            self.insert(r)?;
        }
        Ok(())
    }

    /// Samples of `cid` with `t > bound`, in time order. Unknown classifiers
    /// yield an empty slice.
    pub fn since(&self, cid: &ClassifierId, bound: TimeInstant) -> &[Sample] {
        match self.lists.get(cid) {
            Some(list) => {
                let start = list.partition_point(|s| s.t <= bound);
                &list[start..]
            }
            None => &[],
        }
    }

    /// Same as [`History::since`] but materialized as records.
    pub fn records_since(&self, cid: &ClassifierId, bound: TimeInstant) -> Vec<ScoreRecord> {
        self.since(cid, bound)
            .iter()
            .map(|s| ScoreRecord {
                cid: cid.clone(),
                alpha: s.alpha,
                t: s.t,
            })
            .collect()
    }

    pub fn samples(&self, cid: &ClassifierId) -> &[Sample] {
        self.lists.get(cid).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn classifiers(&self) -> impl Iterator<Item = &ClassifierId> {
        self.lists.keys()
    }

    pub fn len(&self) -> usize {
        self.lists.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every sample with `t <= bound`. A window query whose bound is
    /// at or after `bound` returns the same result before and after.
    pub fn prune_through(&mut self, bound: TimeInstant) {
        for list in self.lists.values_mut() {
            let cut = list.partition_point(|s| s.t <= bound);
            list.drain(..cut);
        }
    }
}
