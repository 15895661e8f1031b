use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledSegment, Segment};

/// Seeded partition of `items` into (selected, rest), each keeping the input
/// order. `fraction` of the items (rounded) are selected.
pub fn partition<T: Clone>(items: &[T], fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let fraction = fraction.clamp(0.0, 1.0);
    let n_pick = (fraction * items.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picked = vec![false; items.len()];
    for &i in &order[..n_pick] {
        picked[i] = true;
    }
    let mut selected = Vec::with_capacity(n_pick);
    let mut rest = Vec::with_capacity(items.len() - n_pick);
    for (item, p) in items.iter().zip(picked) {
        if p {
            selected.push(item.clone());
        } else {
            rest.push(item.clone());
        }
    }
    (selected, rest)
}

/// Labelled subset `S` (a seeded `labeled_fraction` of the segments) and the
/// unlabelled corpus `U`, which always holds every segment with its label
/// stripped.
pub fn split_dataset(
    segments: &[LabeledSegment],
    labeled_fraction: f64,
    seed: u64,
) -> (Vec<LabeledSegment>, Vec<Segment>) {
    let (labeled, _) = partition(segments, labeled_fraction, seed);
    let unlabeled = segments.iter().map(|s| s.segment.clone()).collect();
    (labeled, unlabeled)
}
