//! Deterministic synthetic recordings: concatenated activity episodes, each
//! activity a fixed per-channel sinusoid signature plus Gaussian noise.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{Annotation, SensorStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSignature {
    pub frequency_hz: f64,
    pub amplitude: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySignature {
    pub name: String,
    pub channels: Vec<ChannelSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub sample_rate_hz: f64,
    pub activities: Vec<ActivitySignature>,
    /// Probability that an episode is Null (flat zero signal plus noise).
    pub null_probability: f64,
    pub noise_std: f64,
    pub episode_min: usize,
    pub episode_max: usize,
    pub total_length: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Three well-separated activities on three channels at 20 Hz.
    pub fn three_activities(total_length: usize, seed: u64) -> Self {
        let sig = |name: &str, rows: [(f64, f64, f64); 3]| ActivitySignature {
            name: name.to_string(),
            channels: rows
                .iter()
                .map(|&(frequency_hz, amplitude, offset)| ChannelSignature {
                    frequency_hz,
                    amplitude,
                    offset,
                })
                .collect(),
        };
        SynthConfig {
            n_channels: 3,
            sample_rate_hz: 20.0,
            activities: vec![
                sig("walk", [(1.0, 1.0, 0.0), (1.5, 0.6, 1.0), (2.0, 0.8, -0.5)]),
                sig("jog", [(2.5, 2.0, 0.5), (3.0, 1.5, -1.0), (3.5, 1.8, 0.5)]),
                sig("sit", [(0.2, 0.2, -1.5), (0.3, 0.2, 0.5), (0.25, 0.2, 1.5)]),
            ],
            null_probability: 0.1,
            noise_std: 0.1,
            episode_min: 100,
            episode_max: 300,
            total_length,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.total_length == 0 {
            return Err(Error::Config("synthetic stream needs channels and a positive length".into()));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if self.activities.is_empty() {
            return Err(Error::Config("at least one activity signature required".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be non-negative, got {}", self.noise_std)));
        }
        if !(0.0..1.0).contains(&self.null_probability) {
            return Err(Error::Config("null_probability must lie in [0, 1)".into()));
        }
        if self.episode_min == 0 || self.episode_min > self.episode_max {
            return Err(Error::Config(format!(
                "episode bounds {}..{} invalid",
                self.episode_min, self.episode_max
            )));
        }
        for a in &self.activities {
            if a.channels.len() != self.n_channels {
                return Err(Error::Config(format!(
                    "activity {} has {} channel signatures, expected {}",
                    a.name,
                    a.channels.len(),
                    self.n_channels
                )));
            }
        }
        for (i, a) in self.activities.iter().enumerate() {
            for b in &self.activities[i + 1..] {
                if a.name == b.name || a.channels == b.channels {
                    return Err(Error::Config(format!("activities {} and {} are not distinct", a.name, b.name)));
                }
            }
        }
        Ok(())
    }

    pub fn activity_names(&self) -> Vec<String> {
        self.activities.iter().map(|a| a.name.clone()).collect()
    }
}

/// Picks the next episode label, never repeating the previous one when an
/// alternative exists. `None` is Null.
fn next_label(cfg: &SynthConfig, prev: Option<Option<usize>>, rng: &mut ChaCha8Rng) -> Option<usize> {
    let prev_null = prev == Some(None);
    if !prev_null && cfg.null_probability > 0.0 && rng.random::<f64>() < cfg.null_probability {
        return None;
    }
    let n = cfg.activities.len();
    match prev {
        Some(Some(p)) if n > 1 => {
            let k = rng.random_range(0..n - 1);
            Some(if k >= p { k + 1 } else { k })
        }
        _ => Some(rng.random_range(0..n)),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SensorStream> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let names: Vec<Arc<str>> = cfg.activities.iter().map(|a| Arc::from(a.name.as_str())).collect();

    let mut channels = vec![Vec::with_capacity(cfg.total_length); cfg.n_channels];
    let mut annotations: Vec<Annotation> = Vec::with_capacity(cfg.total_length);
    let mut prev = None;
    let mut t = 0usize;
    while t < cfg.total_length {
        let label = next_label(cfg, prev, &mut rng);
        prev = Some(label);
        let len = rng.random_range(cfg.episode_min..=cfg.episode_max).min(cfg.total_length - t);
        for _ in 0..len {
            let time = t as f64 / cfg.sample_rate_hz;
            for (c, out) in channels.iter_mut().enumerate() {
                let clean = match label {
                    Some(a) => {
                        let s = &cfg.activities[a].channels[c];
                        s.offset + s.amplitude * (std::f64::consts::TAU * s.frequency_hz * time).sin()
                    }
                    None => 0.0,
                };
                let eps = if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                out.push(clean + eps);
            }
            annotations.push(label.map(|a| names[a].clone()));
            t += 1;
        }
    }
    SensorStream::new(
        format!("synthetic-{}", cfg.seed),
        (0..cfg.n_channels).map(|c| format!("ch{}", c + 1)).collect(),
        channels,
        Some(annotations),
        cfg.sample_rate_hz,
    )
}
