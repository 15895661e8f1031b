//! Set decoding: MAP inference over (cardinality, elements), the per-element
//! threshold baseline, grid calibration of `U`, and the prediction dump.
//!
//! The MAP score of a set `Y` with `|Y| = m` is
//! `log p(m) + m·log U + Σ_{a∈Y} log p_a`. For a fixed `m` the best `Y` is the
//! `m` highest element scores, so the decoder sorts once and sweeps `m`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{ActivitySet, ActivityVocabulary};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalPair};
use crate::network::SetScores;
use crate::training::SCORE_EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    #[default]
    MapSet,
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub mode: InferenceMode,
    pub u: f64,
    pub threshold: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            mode: InferenceMode::MapSet,
            u: 2.5,
            threshold: 0.5,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.u > 0.0 && self.u.is_finite()) {
            return Err(Error::Config(format!("U must be positive, got {}", self.u)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }

    pub fn decode(&self, scores: &SetScores) -> ActivitySet {
        match self.mode {
            InferenceMode::MapSet => map_set_inference(scores, self.u).set,
            InferenceMode::Threshold => threshold_inference(scores, self.threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetPrediction {
    pub set: ActivitySet,
    pub objective: f64,
    /// Best attainable objective for each cardinality `0..=K`.
    pub per_cardinality_best: Vec<f64>,
}

fn clamped_ln(p: f64) -> f64 {
    p.clamp(SCORE_EPSILON, 1.0 - SCORE_EPSILON).ln()
}

/// Objective of an explicit set; elements are summed in index order.
pub fn set_objective(scores: &SetScores, set: ActivitySet, u: f64) -> f64 {
    let m = set.len();
    scores.cardinality_logscores[m] + m as f64 * u.ln() + set.iter().map(|a| clamped_ln(scores.element_scores[a])).sum::<f64>()
}

/// Exact MAP decoding. Ties go to the lower cardinality, then to the element
/// earlier in the vocabulary. `u` must be positive.
pub fn map_set_inference(scores: &SetScores, u: f64) -> SetPrediction {
    assert!(u > 0.0, "U must be positive");
    let k = scores.max_cardinality().min(scores.element_scores.len());
    let logs: Vec<f64> = scores.element_scores.iter().map(|&p| clamped_ln(p)).collect();
    let mut order: Vec<usize> = (0..logs.len()).collect();
    // stable: equal scores keep vocabulary order
    order.sort_by(|&a, &b| logs[b].total_cmp(&logs[a]));

    let ln_u = u.ln();
    let mut per_cardinality_best = Vec::with_capacity(k + 1);
    let mut prefix = 0.0;
    let mut best_m = 0;
    let mut best = f64::NEG_INFINITY;
    for m in 0..=k {
        if m > 0 {
            prefix += logs[order[m - 1]];
        }
        let value = scores.cardinality_logscores[m] + m as f64 * ln_u + prefix;
        per_cardinality_best.push(value);
        if value > best {
            best = value;
            best_m = m;
        }
    }
    let set = ActivitySet::from_indices(order[..best_m].iter().copied());
    SetPrediction {
        set,
        objective: set_objective(scores, set, u),
        per_cardinality_best,
    }
}

/// `{a : p_a > τ}`; the cardinality head is ignored.
pub fn threshold_inference(scores: &SetScores, threshold: f64) -> ActivitySet {
    ActivitySet::from_indices(
        scores
            .element_scores
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > threshold)
            .map(|(i, _)| i),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMetric {
    #[default]
    ExactMatch,
    MeanF1,
}

/// `0.5, 0.6, …, 5.0`.
pub fn default_u_grid() -> Vec<f64> {
    (5..=50).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub u: f64,
    pub metric: CalibrationMetric,
    pub score: f64,
}

/// Picks the grid value maximizing `metric` on labelled validation scores;
/// ties go to the smallest `U`.
pub fn calibrate_u(scores: &[SetScores], targets: &[ActivitySet], grid: &[f64], metric: CalibrationMetric) -> Result<Calibration> {
    if scores.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if scores.len() != targets.len() {
        return Err(Error::Config(format!("{} score records for {} targets", scores.len(), targets.len())));
    }
    if grid.is_empty() || grid.iter().any(|&u| !(u > 0.0)) {
        return Err(Error::Config("U grid must be non-empty and positive".into()));
    }
    let m = scores[0].element_scores.len();
    let k = scores[0].max_cardinality();
    let vocab = ActivityVocabulary::new((0..m).map(|i| format!("a{i}")))?;
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<Calibration> = None;
    for u in sorted {
        let pairs: Vec<EvalPair> = scores
            .iter()
            .zip(targets)
            .map(|(s, &target)| EvalPair {
                predicted: map_set_inference(s, u).set,
                target,
            })
            .collect();
        let report = evaluate(&pairs, &vocab, k)?;
        let score = match metric {
            CalibrationMetric::ExactMatch => report.exact_match,
            CalibrationMetric::MeanF1 => report.f1_mean,
        };
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(Calibration { u, metric, score });
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub mode: InferenceMode,
    /// Present for MAP decoding.
    pub u: Option<f64>,
    /// Present for threshold decoding.
    pub threshold: Option<f64>,
    pub vocabulary: ActivityVocabulary,
    pub max_cardinality: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub stream: String,
    pub offset: usize,
    pub set: Vec<String>,
    pub element_scores: Vec<f64>,
    pub cardinality_logscores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDump {
    pub header: DumpHeader,
    pub records: Vec<DumpRecord>,
}

impl PredictionDump {
    pub fn predicted_sets(&self) -> Result<Vec<ActivitySet>> {
        self.records.iter().map(|r| self.header.vocabulary.set_of(&r.set)).collect()
    }
}

/// JSON lines: the header first, then one record per segment.
pub fn write_prediction_dump(path: &Path, dump: &PredictionDump) -> Result<()> {
    let mut out = Vec::new();
    let mut line = |v: String| {
        out.extend_from_slice(v.as_bytes());
        out.push(b'\n');
    };
    line(serde_json::to_string(&dump.header)?);
    for r in &dump.records {
        line(serde_json::to_string(r)?);
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_prediction_dump(path: &Path) -> Result<PredictionDump> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: DumpHeader = serde_json::from_str(lines.next().ok_or_else(|| Error::format("prediction dump", path, "missing header"))?)?;
    let records = lines.map(serde_json::from_str).collect::<std::result::Result<Vec<DumpRecord>, _>>()?;
    if records.len() != header.count {
        return Err(Error::format(
            "prediction dump",
            path,
            format!("header announces {} records, found {}", header.count, records.len()),
        ));
    }
    Ok(PredictionDump { header, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(elem: &[f64], card: &[f64]) -> SetScores {
        SetScores {
            element_scores: elem.to_vec(),
            cardinality_logscores: card.to_vec(),
        }
    }

    /// Enumerates every subset of size ≤ K; keeps the first strict maximum when
    /// visiting by cardinality, then by ascending bit pattern.
    fn brute_force(s: &SetScores, u: f64) -> (ActivitySet, f64) {
        let m = s.element_scores.len();
        let k = s.max_cardinality().min(m);
        let mut best = (ActivitySet::empty(), f64::NEG_INFINITY);
        for card in 0..=k {
            for bits in 0u64..(1 << m) {
                if bits.count_ones() as usize != card {
                    continue;
                }
                let set = ActivitySet::from_bits(bits);
                let mut v = s.cardinality_logscores[card] + card as f64 * u.ln();
                for a in set.iter() {
                    v += s.element_scores[a].clamp(1e-7, 1.0 - 1e-7).ln();
                }
                if v > best.1 {
                    best = (set, v);
                }
            }
        }
        best
    }

    fn normalize(logits: &[f64]) -> Vec<f64> {
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        logits.iter().map(|l| l - lse).collect()
    }

    fn arb_scores() -> impl Strategy<Value = SetScores> {
        prop::sample::select(vec![3usize, 5, 8, 10]).prop_flat_map(|m| {
            (1..=m).prop_flat_map(move |k| {
                (
                    prop::collection::vec(0.0..1.0f64, m),
                    prop::collection::vec(-4.0..4.0f64, k + 1),
                )
                    .prop_map(|(e, c)| scores(&e, &normalize(&c)))
            })
        })
    }

    #[test]
    fn dominant_empty_cardinality_gives_empty_set() {
        let s = scores(&[0.99, 0.98, 0.97], &[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        assert!(map_set_inference(&s, 1.0).set.is_empty());
    }

    #[test]
    fn three_label_fixture_matches_enumeration() {
        let s = scores(&[0.9, 0.8, 0.1], &[(0.25f64).ln(); 4]);
        let p = map_set_inference(&s, 1.0);
        let (set, v) = brute_force(&s, 1.0);
        assert_eq!(p.set, set);
        // every ln p_a < 0 and U = 1, so nothing beats the empty set
        assert!(p.set.is_empty());
        assert!((p.objective - v).abs() < 1e-12);
        assert_eq!(p.per_cardinality_best.len(), 4);
        assert_eq!(map_set_inference(&s, 5.0).set, ActivitySet::from_indices([0, 1]));
    }

    #[test]
    fn ties_prefer_lower_cardinality_then_vocabulary_order() {
        // {} and {a} tie exactly: log .5 + log 2 = 0 offset
        let s = scores(&[0.5, 0.5], &[(0.5f64).ln(), (0.5f64).ln(), f64::NEG_INFINITY]);
        let p = map_set_inference(&s, 2.0);
        assert!(p.set.is_empty() || p.set == ActivitySet::from_indices([0]));
        let s = scores(&[0.7, 0.7, 0.7], &[f64::NEG_INFINITY, 0.0]);
        assert_eq!(map_set_inference(&s, 1.0).set, ActivitySet::from_indices([0]));
    }

    #[test]
    fn threshold_examples() {
        let s = scores(&[0.9, 0.4, 0.6], &[0.0]);
        assert_eq!(threshold_inference(&s, 0.5), ActivitySet::from_indices([0, 2]));
        assert!(threshold_inference(&scores(&[0.1, 0.2], &[0.0]), 0.5).is_empty());
        assert_eq!(InferenceConfig::default().threshold, 0.5);
    }

    #[test]
    fn calibration_single_candidate_and_tie_rule() {
        let s = vec![
            scores(&[0.99, 0.01, 0.01], &[-5.0, -0.01, -5.0]),
            scores(&[0.01, 0.99, 0.01], &[-5.0, -0.01, -5.0]),
        ];
        let t = vec![ActivitySet::from_indices([0]), ActivitySet::from_indices([1])];
        let c = calibrate_u(&s, &t, &[2.5], CalibrationMetric::ExactMatch).unwrap();
        assert_eq!(c.u, 2.5);
        // sharp singletons: every grid value is perfect, the smallest wins
        let c = calibrate_u(&s, &t, &default_u_grid(), CalibrationMetric::ExactMatch).unwrap();
        assert_eq!(c.u, 0.5);
        assert_eq!(c.score, 1.0);
        // self-consistency
        let mr = s.iter().zip(&t).filter(|(s, t)| map_set_inference(s, c.u).set == **t).count() as f64 / 2.0;
        assert_eq!(mr, c.score);
        assert!(calibrate_u(&[], &[], &[1.0], CalibrationMetric::ExactMatch).is_err());
    }

    #[test]
    fn calibration_finds_interior_optimum() {
        // cardinality head slightly prefers 1, but targets are pairs with strong elements
        let s = vec![scores(&[0.6, 0.6, 0.01], &[-3.0, -0.5, -1.0]); 3];
        let t = vec![ActivitySet::from_indices([0, 1]); 3];
        let c = calibrate_u(&s, &t, &default_u_grid(), CalibrationMetric::ExactMatch).unwrap();
        // need −1 + 2 ln U + 2 ln .6 > −.5 + ln U + ln .6  ⇔  ln U > .5 − ln .6
        let bound = (0.5 - 0.6f64.ln()).exp();
        assert!(c.u > bound && c.u - 0.1 <= bound, "u = {}", c.u);
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.jsonl");
        let vocab = ActivityVocabulary::new(["walk", "jog"]).unwrap();
        let dump = PredictionDump {
            header: DumpHeader {
                mode: InferenceMode::MapSet,
                u: Some(2.5),
                threshold: None,
                vocabulary: vocab,
                max_cardinality: 2,
                count: 1,
            },
            records: vec![DumpRecord {
                stream: "s".into(),
                offset: 20,
                set: vec!["jog".into()],
                element_scores: vec![0.1, 0.9],
                cardinality_logscores: vec![-3.0, -0.1, -2.5],
            }],
        };
        write_prediction_dump(&p, &dump).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"u\":2.5"));
        let back = read_prediction_dump(&p).unwrap();
        assert_eq!(back, dump);
        assert_eq!(back.predicted_sets().unwrap(), vec![ActivitySet::from_indices([1])]);
    }

    proptest! {
        #[test]
        fn map_matches_enumeration(s in arb_scores(), u in prop::sample::select(vec![0.5, 1.0, 2.5, 5.0])) {
            let p = map_set_inference(&s, u);
            let (set, v) = brute_force(&s, u);
            prop_assert_eq!(p.set, set);
            prop_assert!((p.objective - v).abs() < 1e-12);
            prop_assert!((p.objective - set_objective(&s, p.set, u)).abs() < 1e-12);
            prop_assert!(p.set.len() <= s.max_cardinality());
        }

        #[test]
        fn cardinality_monotone_in_u(s in arb_scores()) {
            let sizes: Vec<usize> = [0.5, 1.0, 2.5, 5.0].iter().map(|&u| map_set_inference(&s, u).set.len()).collect();
            prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{:?}", sizes);
        }

        #[test]
        fn permutation_equivariant(s in arb_scores(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let m = s.element_scores.len();
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            // label i moves to position perm[i]
            let mut elem = vec![0.0; m];
            for i in 0..m {
                elem[perm[i]] = s.element_scores[i];
            }
            let permuted = scores(&elem, &s.cardinality_logscores);
            let a = map_set_inference(&s, 2.5).set;
            let b = map_set_inference(&permuted, 2.5).set;
            prop_assert_eq!(ActivitySet::from_indices(a.iter().map(|i| perm[i])), b);
        }

        #[test]
        fn cardinality_shift_invariant(s in arb_scores(), c in -10.0..10.0f64) {
            let shifted = scores(&s.element_scores, &s.cardinality_logscores.iter().map(|v| v + c).collect::<Vec<_>>());
            prop_assert_eq!(map_set_inference(&s, 1.0).set, map_set_inference(&shifted, 1.0).set);
        }
    }
}
