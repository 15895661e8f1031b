//! Segment archives: a directory holding `segments.bin`, a concatenation of
//! fixed-layout little-endian records
//!
//! ```text
//! u32 d | u32 w | d·w × f64 (row-major, channel-major) | u16 set bitmap
//! ```
//!
//! and `manifest.json` with the vocabulary, labelled flag and the
//! (stream, offset) origin of every record. Unlabelled archives store a zero
//! bitmap.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActivitySet, ActivityVocabulary, LabeledSegment, Segment};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ARCHIVE_DATA_FILE: &str = "segments.bin";
pub const ARCHIVE_MANIFEST_FILE: &str = "manifest.json";
const ARCHIVE_VERSION: u32 = 1;
const BITMAP_WIDTH: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    labeled: bool,
    vocabulary: ActivityVocabulary,
    count: usize,
    origins: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentArchive {
    pub vocabulary: ActivityVocabulary,
    pub segments: Vec<Segment>,
    /// Present for labelled archives, aligned with `segments`.
    pub targets: Option<Vec<ActivitySet>>,
}

impl SegmentArchive {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn into_labeled(self) -> Result<Vec<LabeledSegment>> {
        let targets = self
            .targets
            .ok_or_else(|| Error::Config("archive is unlabelled".into()))?;
        Ok(self
            .segments
            .into_iter()
            .zip(targets)
            .map(|(segment, target)| LabeledSegment { segment, target })
            .collect())
    }
}

fn write_archive(dir: &Path, vocab: &ActivityVocabulary, segments: &[&Segment], targets: Option<&[ActivitySet]>) -> Result<()> {
    if vocab.len() > BITMAP_WIDTH {
        return Err(Error::Config(format!(
            "segment archives address at most {BITMAP_WIDTH} activities, vocabulary has {}",
            vocab.len()
        )));
    }
    let mut bytes = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let shape = seg.data.shape();
        if shape.len() != 2 {
            return Err(Error::shape("archive", format!("segment {i} has shape {shape:?}")));
        }
        bytes.extend_from_slice(&(shape[0] as u32).to_le_bytes());
        bytes.extend_from_slice(&(shape[1] as u32).to_le_bytes());
        for v in seg.data.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let bitmap = targets.map_or(0, |t| t[i].bits() as u16);
        bytes.extend_from_slice(&bitmap.to_le_bytes());
    }
    let manifest = Manifest {
        version: ARCHIVE_VERSION,
        labeled: targets.is_some(),
        vocabulary: vocab.clone(),
        count: segments.len(),
        origins: segments.iter().map(|s| (s.stream.clone(), s.offset)).collect(),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data_path = dir.join(ARCHIVE_DATA_FILE);
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    let manifest_path = dir.join(ARCHIVE_MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))
}

pub fn write_labeled_archive(dir: &Path, vocab: &ActivityVocabulary, segments: &[LabeledSegment]) -> Result<()> {
    let segs: Vec<&Segment> = segments.iter().map(|s| &s.segment).collect();
    let targets: Vec<ActivitySet> = segments.iter().map(|s| s.target).collect();
    write_archive(dir, vocab, &segs, Some(&targets))
}

pub fn write_unlabeled_archive(dir: &Path, vocab: &ActivityVocabulary, segments: &[Segment]) -> Result<()> {
    let segs: Vec<&Segment> = segments.iter().collect();
    write_archive(dir, vocab, &segs, None)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let chunk = self.bytes.get(self.pos..self.pos + N)?;
        self.pos += N;
        chunk.try_into().ok()
    }
}

pub fn read_archive(dir: &Path) -> Result<SegmentArchive> {
    let manifest_path = dir.join(ARCHIVE_MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != ARCHIVE_VERSION {
        return Err(Error::format(
            "segment archive",
            &manifest_path,
            format!("unsupported version {}", manifest.version),
        ));
    }
    if manifest.origins.len() != manifest.count {
        return Err(Error::format("segment archive", &manifest_path, "origin count mismatch"));
    }
    let data_path = dir.join(ARCHIVE_DATA_FILE);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let truncated = || Error::format("segment archive", &data_path, "truncated record");
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let mut segments = Vec::with_capacity(manifest.count);
    let mut targets = Vec::with_capacity(manifest.count);
    for (stream, offset) in manifest.origins {
        let d = u32::from_le_bytes(cur.take().ok_or_else(truncated)?) as usize;
        let w = u32::from_le_bytes(cur.take().ok_or_else(truncated)?) as usize;
        let mut data = Vec::with_capacity(d * w);
        for _ in 0..d * w {
            data.push(f64::from_le_bytes(cur.take().ok_or_else(truncated)?));
        }
        let bitmap = u16::from_le_bytes(cur.take().ok_or_else(truncated)?);
        if manifest.labeled && (bitmap as u64) >> manifest.vocabulary.len() != 0 {
            return Err(Error::format(
                "segment archive",
                &data_path,
                format!("bitmap {bitmap:#06x} addresses labels beyond the vocabulary"),
            ));
        }
        segments.push(Segment {
            stream,
            offset,
            data: Tensor::new(vec![d, w], data)?,
        });
        targets.push(ActivitySet::from_bits(bitmap as u64));
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            "segment archive",
            &data_path,
            format!("{} trailing bytes", bytes.len() - cur.pos),
        ));
    }
    Ok(SegmentArchive {
        vocabulary: manifest.vocabulary,
        segments,
        targets: manifest.labeled.then_some(targets),
    })
}
