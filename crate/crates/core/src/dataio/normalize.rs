use serde::{Deserialize, Serialize};

use super::SensorStream;
use crate::error::{Error, Result};

/// Channels whose range is below this are treated as constant.
pub const RANGE_EPSILON: f64 = 1e-12;

/// Per-channel min/max used for `[0,1]` scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    /// Pooled statistics over several streams with the same channel layout.
    pub fn from_streams<'a>(streams: impl IntoIterator<Item = &'a SensorStream>) -> Result<Self> {
        let mut stats: Option<NormStats> = None;
        for s in streams {
            let local = NormStats::of(s);
            stats = Some(match stats {
                None => local,
                Some(acc) => {
                    if acc.min.len() != local.min.len() {
                        return Err(Error::Config(format!(
                            "stream {} has {} channels, expected {}",
                            s.id,
                            local.min.len(),
                            acc.min.len()
                        )));
                    }
                    NormStats {
                        min: acc.min.iter().zip(&local.min).map(|(a, b)| a.min(*b)).collect(),
                        max: acc.max.iter().zip(&local.max).map(|(a, b)| a.max(*b)).collect(),
                    }
                }
            });
        }
        stats.ok_or(Error::Empty("stream list"))
    }

    fn of(stream: &SensorStream) -> Self {
        let (min, max) = stream
            .channels
            .iter()
            .map(|c| {
                c.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
            })
            .unzip();
        NormStats { min, max }
    }

    pub fn scale(&self, channel: usize, value: f64) -> f64 {
        let (lo, hi) = (self.min[channel], self.max[channel]);
        let range = hi - lo;
        if !(range > RANGE_EPSILON) {
            return 0.0;
        }
        ((value - lo) / range).clamp(0.0, 1.0)
    }
}

/// Scales every channel to `[0,1]`. With `stats = None` the statistics are
/// computed from this stream; otherwise the given (training) statistics are
/// applied and out-of-range values clamped. Returns the statistics used.
pub fn normalize_per_channel(stream: &SensorStream, stats: Option<&NormStats>) -> Result<(SensorStream, NormStats)> {
    let stats = match stats {
        Some(s) => {
            if s.min.len() != stream.n_channels() || s.max.len() != stream.n_channels() {
                return Err(Error::Config(format!(
                    "normalization stats cover {} channels, stream {} has {}",
                    s.min.len(),
                    stream.id,
                    stream.n_channels()
                )));
            }
            s.clone()
        }
        None => NormStats::of(stream),
    };
    let channels = stream
        .channels
        .iter()
        .enumerate()
        .map(|(c, values)| values.iter().map(|&v| stats.scale(c, v)).collect())
        .collect();
    let out = SensorStream {
        channels,
        ..stream.clone()
    };
    Ok((out, stats))
}
