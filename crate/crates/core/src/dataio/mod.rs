//! Sensor streams, activity sets, and the segmentation pipeline that turns
//! annotated recordings into fixed-size labelled windows.

mod archive;
mod formats;
mod normalize;
mod segment;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use archive::{read_archive, write_labeled_archive, write_unlabeled_archive, SegmentArchive, ARCHIVE_DATA_FILE, ARCHIVE_MANIFEST_FILE};
pub use formats::{read_generic_csv, read_wisdm_csv, write_generic_csv, WisdmIngest, WISDM_SAMPLE_RATE_HZ};
pub use normalize::{normalize_per_channel, NormStats, RANGE_EPSILON};
pub use segment::{build_target_set, label_segments, segment, SegmentationConfig};
pub use split::{partition, split_dataset};

/// Largest vocabulary an [`ActivitySet`] can address.
pub const MAX_ACTIVITIES: usize = 64;

/// Ordered activity names. The Null class is not a member; it is the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ActivityVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl ActivityVocabulary {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Config("activity vocabulary needs at least one label".into()));
        }
        if labels.len() > MAX_ACTIVITIES {
            return Err(Error::Config(format!(
                "activity vocabulary has {} labels, at most {MAX_ACTIVITIES} supported",
                labels.len()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate activity label {l:?}")));
            }
        }
        Ok(ActivityVocabulary { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Resolves names into a set, failing on the first unknown label.
    pub fn set_of<S: AsRef<str>>(&self, names: &[S]) -> Result<ActivitySet> {
        let mut set = ActivitySet::empty();
        for n in names {
            let idx = self
                .index_of(n.as_ref())
                .ok_or_else(|| Error::UnknownLabel(n.as_ref().to_string()))?;
            set.insert(idx);
        }
        Ok(set)
    }

    pub fn names_of(&self, set: ActivitySet) -> Vec<String> {
        set.iter().map(|i| self.labels[i].clone()).collect()
    }

    pub fn display(&self, set: ActivitySet) -> String {
        format!("{{{}}}", self.names_of(set).join(","))
    }
}

impl TryFrom<Vec<String>> for ActivityVocabulary {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        ActivityVocabulary::new(labels)
    }
}

impl From<ActivityVocabulary> for Vec<String> {
    fn from(v: ActivityVocabulary) -> Self {
        v.labels
    }
}

/// Subset of a vocabulary, stored as a bitmask over label indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActivitySet(u64);

impl ActivitySet {
    pub fn empty() -> Self {
        ActivitySet(0)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty();
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn from_bits(bits: u64) -> Self {
        ActivitySet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < MAX_ACTIVITIES, "activity index {index} out of range");
        self.0 |= 1 << index;
    }

    pub fn contains(self, index: usize) -> bool {
        index < MAX_ACTIVITIES && self.0 & (1 << index) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Member indices in ascending (vocabulary) order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_ACTIVITIES).filter(move |&i| self.contains(i))
    }

    /// Indicator vector of length `m`.
    pub fn indicator(self, m: usize) -> Vec<f64> {
        (0..m).map(|i| if self.contains(i) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Display for ActivitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Per-sample annotation: `None` is the Null (non-relevant) class.
pub type Annotation = Option<Arc<str>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub id: String,
    pub channel_names: Vec<String>,
    pub channels: Vec<Vec<f64>>,
    pub annotations: Option<Vec<Annotation>>,
    pub sample_rate_hz: f64,
}

impl SensorStream {
    pub fn new(
        id: impl Into<String>,
        channel_names: Vec<String>,
        channels: Vec<Vec<f64>>,
        annotations: Option<Vec<Annotation>>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("sensor stream needs at least one channel".into()));
        }
        if channel_names.len() != channels.len() {
            return Err(Error::Config(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                channels.len()
            )));
        }
        let len = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != len) {
            return Err(Error::Config(format!(
                "channel {bad} has length {}, expected {len}",
                channels[bad].len()
            )));
        }
        if let Some(a) = &annotations {
            if a.len() != len {
                return Err(Error::Config(format!("{} annotations for {len} samples", a.len())));
            }
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        Ok(SensorStream {
            id: id.into(),
            channel_names,
            channels,
            annotations,
            sample_rate_hz,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct non-Null annotation labels, sorted.
    pub fn label_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .annotations
            .iter()
            .flatten()
            .flatten()
            .map(|l| l.to_string())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

/// One `d × w` window of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub stream: String,
    pub offset: usize,
    pub data: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSegment {
    pub segment: Segment,
    pub target: ActivitySet,
}
