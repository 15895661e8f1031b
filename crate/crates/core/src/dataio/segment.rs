use serde::{Deserialize, Serialize};

use super::{ActivitySet, ActivityVocabulary, LabeledSegment, Segment, SensorStream};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Window length `w` in samples.
    pub window: usize,
    pub stride: usize,
    /// Minimum number of samples of an activity for it to enter the target set.
    pub recognition_length: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            window: 200,
            stride: 20,
            recognition_length: 10,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.recognition_length == 0 {
            return Err(Error::Config("window, stride and recognition length must be positive".into()));
        }
        if self.recognition_length > self.window {
            return Err(Error::Config(format!(
                "recognition length {} exceeds window {}",
                self.recognition_length, self.window
            )));
        }
        if self.stride > self.window {
            return Err(Error::Config(format!("stride {} exceeds window {}", self.stride, self.window)));
        }
        Ok(())
    }

    /// Window start offsets for a stream of `len` samples.
    pub fn offsets(&self, len: usize) -> impl Iterator<Item = usize> {
        let count = if len < self.window {
            0
        } else {
            (len - self.window) / self.stride + 1
        };
        let stride = self.stride;
        (0..count).map(move |i| i * stride)
    }
}

/// Slides a `window × stride` window over the stream. A trailing partial
/// window is dropped; a stream shorter than one window yields nothing.
pub fn segment(stream: &SensorStream, cfg: &SegmentationConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    if stream.len() < cfg.window {
        log::warn!(
            "stream {} has {} samples, shorter than the {}-sample window; no segments emitted",
            stream.id,
            stream.len(),
            cfg.window
        );
        return Ok(Vec::new());
    }
    let d = stream.n_channels();
    cfg.offsets(stream.len())
        .map(|offset| {
            let mut data = Vec::with_capacity(d * cfg.window);
            for ch in &stream.channels {
                data.extend_from_slice(&ch[offset..offset + cfg.window]);
            }
            Ok(Segment {
                stream: stream.id.clone(),
                offset,
                data: Tensor::new(vec![d, cfg.window], data)?,
            })
        })
        .collect()
}

/// Activities with at least `r` annotated samples in the window. Null samples
/// (`None`) never enter the set.
pub fn build_target_set<S: AsRef<str>>(
    window: &[Option<S>],
    vocab: &ActivityVocabulary,
    r: usize,
) -> Result<ActivitySet> {
    let mut counts = vec![0usize; vocab.len()];
    for label in window.iter().flatten() {
        let idx = vocab
            .index_of(label.as_ref())
            .ok_or_else(|| Error::UnknownLabel(label.as_ref().to_string()))?;
        counts[idx] += 1;
    }
    Ok(ActivitySet::from_indices(
        counts.iter().enumerate().filter(|(_, &c)| c >= r).map(|(i, _)| i),
    ))
}

/// Segments an annotated stream and attaches each window's target set.
pub fn label_segments(
    stream: &SensorStream,
    cfg: &SegmentationConfig,
    vocab: &ActivityVocabulary,
) -> Result<Vec<LabeledSegment>> {
    let annotations = stream
        .annotations
        .as_ref()
        .ok_or_else(|| Error::Config(format!("stream {} has no annotations", stream.id)))?;
    segment(stream, cfg)?
        .into_iter()
        .map(|seg| {
            let window = &annotations[seg.offset..seg.offset + cfg.window];
            let target = build_target_set(window, vocab, cfg.recognition_length)?;
            Ok(LabeledSegment { segment: seg, target })
        })
        .collect()
}
