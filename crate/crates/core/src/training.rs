//! Objectives and the optimization loop.
//!
//! * reconstruction: `‖x − dec(enc(x))‖²` over `(θ_enc, θ_dec)`
//! * set: element BCE over every label plus cardinality NLL, over `(θ_enc, Ω)`
//! * bce: the element term alone (multi-label baseline)

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::dataio::ActivitySet;
use crate::error::{Error, Result};
use crate::network::{decode_on, encode_on, head_on, Bound, Group, ParameterStore};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[SCORE_EPSILON, 1 - SCORE_EPSILON]` before logs.
pub const SCORE_EPSILON: f64 = 1e-7;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Auto,
    Set,
    Bce,
}

impl Objective {
    pub fn trainable(self) -> &'static [Group] {
        match self {
            Objective::Auto => &[Group::ThetaEnc, Group::ThetaDec],
            Objective::Set | Objective::Bce => &[Group::ThetaEnc, Group::Omega],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Auto => "auto",
            Objective::Set => "set",
            Objective::Bce => "bce",
        }
    }
}

/// One training example; `target` is ignored by the reconstruction objective.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub x: &'a Tensor,
    pub target: Option<ActivitySet>,
}

impl<'a> Example<'a> {
    pub fn unlabeled(x: &'a Tensor) -> Self {
        Example { x, target: None }
    }

    pub fn labeled(x: &'a Tensor, target: ActivitySet) -> Self {
        Example {
            x,
            target: Some(target),
        }
    }
}

fn require_target(ex: &Example<'_>) -> Result<ActivitySet> {
    ex.target
        .ok_or_else(|| Error::Config("supervised objective needs a labelled example".into()))
}

fn build_loss(graph: &mut Graph, store: &ParameterStore, bound: &Bound, objective: Objective, ex: &Example<'_>) -> Result<Var> {
    let x = graph.input(ex.x.clone());
    let z = encode_on(graph, store, bound, x)?;
    match objective {
        Objective::Auto => {
            let recon = decode_on(graph, store, bound, z)?;
            graph.sum_squared_error(x, recon)
        }
        Objective::Set | Objective::Bce => {
            let target = require_target(ex)?;
            let arch = store.arch();
            let (elem, card) = head_on(graph, store, bound, z)?;
            let bce = graph.bce(elem, &target.indicator(arch.n_elements), SCORE_EPSILON)?;
            if objective == Objective::Bce {
                return Ok(bce);
            }
            if target.len() > arch.max_cardinality {
                return Err(Error::CardinalityOverflow {
                    cardinality: target.len(),
                    max: arch.max_cardinality,
                });
            }
            let nll = graph.nll(card, target.len())?;
            graph.add(bce, nll)
        }
    }
}

pub fn objective_value(objective: Objective, store: &ParameterStore, ex: &Example<'_>) -> Result<f64> {
    let mut g = Graph::new();
    let bound = store.bind(&mut g, &[]);
    let loss = build_loss(&mut g, store, &bound, objective, ex)?;
    Ok(g.value(loss).item())
}

/// Reconstruction loss `‖x − dec(enc(x))‖²`, unaveraged.
pub fn loss_auto(x: &Tensor, store: &ParameterStore) -> Result<f64> {
    objective_value(Objective::Auto, store, &Example::unlabeled(x))
}

pub fn loss_set(x: &Tensor, target: ActivitySet, store: &ParameterStore) -> Result<f64> {
    objective_value(Objective::Set, store, &Example::labeled(x, target))
}

pub fn loss_bce(x: &Tensor, target: ActivitySet, store: &ParameterStore) -> Result<f64> {
    objective_value(Objective::Bce, store, &Example::labeled(x, target))
}

/// Gradients aligned with [`ParameterStore::entries`]; `None` for tensors the
/// objective does not train.
pub type ParamGrads = Vec<Option<Tensor>>;

pub fn loss_and_gradients(objective: Objective, store: &ParameterStore, ex: &Example<'_>) -> Result<(f64, ParamGrads)> {
    let trainable = objective.trainable();
    for &g in trainable {
        store.require(g)?;
    }
    let mut g = Graph::new();
    let bound = store.bind(&mut g, trainable);
    let loss = build_loss(&mut g, store, &bound, objective, ex)?;
    let mut grads = g.backward(loss)?;
    let out = store
        .entries()
        .iter()
        .zip(&bound.vars)
        .map(|(e, &v)| if trainable.contains(&e.group) { grads.take(v) } else { None })
        .collect();
    Ok((g.value(loss).item(), out))
}

/// Mean loss and mean gradient over a mini-batch, reduced in batch order.
pub fn batch_gradients(objective: Objective, store: &ParameterStore, batch: &[Example<'_>]) -> Result<(f64, ParamGrads)> {
    if batch.is_empty() {
        return Err(Error::Empty("mini-batch"));
    }
    let mut total = 0.0;
    let mut acc: ParamGrads = vec![None; store.entries().len()];
    for ex in batch {
        let (loss, grads) = loss_and_gradients(objective, store, ex)?;
        total += loss;
        for (slot, g) in acc.iter_mut().zip(grads) {
            match (slot.as_mut(), g) {
                (Some(s), Some(g)) => s.add_assign(&g),
                (None, Some(g)) => *slot = Some(g),
                _ => {}
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    acc.iter_mut().flatten().for_each(|g| g.scale(inv));
    Ok((total * inv, acc))
}

pub fn mean_objective(objective: Objective, store: &ParameterStore, examples: &[Example<'_>]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut total = 0.0;
    for ex in examples {
        total += objective_value(objective, store, ex)?;
    }
    Ok(total / examples.len() as f64)
}

/// One ADAM update. Weight decay is applied as `g + λθ` before the moment
/// updates. Tensors with a `None` gradient are left untouched.
pub fn adam_step(store: &mut ParameterStore, grads: &[Option<Tensor>], learning_rate: f64, weight_decay: f64) -> Result<()> {
    if grads.len() != store.entries().len() {
        return Err(Error::shape(
            "adam",
            format!("{} gradients for {} parameters", grads.len(), store.entries().len()),
        ));
    }
    for (e, g) in store.entries().iter().zip(grads) {
        if let Some(g) = g {
            if g.shape() != e.value.shape() {
                return Err(Error::shape(
                    "adam",
                    format!("gradient for {} has shape {:?}, parameter {:?}", e.name, g.shape(), e.value.shape()),
                ));
            }
        }
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (e, g) in store.entries_mut().iter_mut().zip(grads) {
        let Some(g) = g else { continue };
        let theta = e.value.data_mut();
        let m = e.m.data_mut();
        let v = e.v.data_mut();
        for i in 0..theta.len() {
            let gi = g.data()[i] + weight_decay * theta[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Set,
            learning_rate: 1e-4,
            weight_decay: 5e-5,
            batch_size: 64,
            lr_decay: 0.95,
            patience: 5,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be positive and weight decay non-negative".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size, patience and max epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stops once `patience` consecutive epochs fail to strictly improve on the
/// best validation value seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records the validation value of 1-based `epoch`; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, value: f64) -> (bool, bool) {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_value(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_objective: f64,
    pub validation_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub phase: String,
    pub objective: Objective,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation objective.
    pub best_epoch: usize,
    pub best_validation_objective: f64,
    pub stopped_early: bool,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// Line-oriented `key=value` log. Timing is left out so logs are reproducible.
    pub fn to_log(&self) -> String {
        let mut out = format!("phase={}\nobjective={}\n", self.phase, self.objective.name());
        for e in &self.epochs {
            out.push_str(&format!(
                "epoch={} lr={:e} train={} validation={}\n",
                e.epoch, e.learning_rate, e.train_objective, e.validation_objective
            ));
        }
        out.push_str(&format!(
            "best_epoch={}\nbest_validation={}\nstopped_early={}\n",
            self.best_epoch, self.best_validation_objective, self.stopped_early
        ));
        out
    }
}

/// Mini-batch ADAM with per-epoch validation, learning-rate decay and early
/// stopping. Returns the parameters of the best validation epoch. With an
/// empty validation set the training objective stands in for it.
pub fn train(
    mut store: ParameterStore,
    phase: &str,
    train_set: &[Example<'_>],
    validation: &[Example<'_>],
    cfg: &TrainConfig,
) -> Result<(ParameterStore, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let objective = cfg.objective;
    for &g in objective.trainable() {
        store.require(g)?;
    }
    if validation.is_empty() {
        log::warn!("{phase}: no validation examples, early stopping follows the training objective");
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = store.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut lr = cfg.learning_rate;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut running = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| train_set[i]).collect();
            let (loss, grads) = batch_gradients(objective, &store, &batch)?;
            running += loss * batch.len() as f64;
            adam_step(&mut store, &grads, lr, cfg.weight_decay)?;
        }
        let train_objective = running / train_set.len() as f64;
        let validation_objective = if validation.is_empty() {
            train_objective
        } else {
            mean_objective(objective, &store, validation)?
        };
        if !validation_objective.is_finite() {
            return Err(Error::Config(format!("{phase}: validation objective diverged at epoch {epoch}")));
        }
        log::info!("{phase} epoch {epoch}: lr={lr:.3e} train={train_objective:.6} validation={validation_objective:.6}");
        epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_objective,
            validation_objective,
        });
        let (improved, stop) = stopper.observe(epoch, validation_objective);
        if improved {
            best = store.clone();
        }
        if stop {
            stopped_early = true;
            break;
        }
        lr *= cfg.lr_decay;
    }

    let report = TrainReport {
        phase: phase.to_string(),
        objective,
        epochs,
        best_epoch: stopper.best_epoch(),
        best_validation_objective: stopper.best_value(),
        stopped_early,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ArchitectureConfig, FinalActivation};
    use rand::Rng;

    fn arch() -> ArchitectureConfig {
        ArchitectureConfig {
            channels: 2,
            window: 40,
            conv_filters: vec![4, 4],
            dense_hidden: vec![16, 16],
            n_elements: 2,
            max_cardinality: 2,
            ..ArchitectureConfig::default()
        }
    }

    fn segment(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![2, 40], (0..80).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// Store whose head output is exactly `logits` regardless of the input.
    fn constant_head(logits: &[f64]) -> ParameterStore {
        let mut store = ParameterStore::init(&arch(), &Group::ALL, 0).unwrap();
        for e in store.entries_mut() {
            if e.name == "head.out.weight" {
                e.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            if e.name == "head.out.bias" {
                e.value.data_mut().copy_from_slice(logits);
            }
        }
        store
    }

    #[test]
    fn set_loss_hand_arithmetic() {
        // element logits 0 → scores (0.5, 0.5); equal cardinality logits → uniform over {0,1,2}
        let store = constant_head(&[0.0, 0.0, 1.0, 1.0, 1.0]);
        let x = segment(1);
        let t = ActivitySet::from_indices([0]);
        let set = loss_set(&x, t, &store).unwrap();
        let bce = loss_bce(&x, t, &store).unwrap();
        assert!((bce - 1.3862943611198906).abs() < 1e-12);
        assert!((set - bce - 3f64.ln()).abs() < 1e-12);
        assert!((set - 2.4849066497880004).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_limit() {
        // saturated correct scores: loss bounded by the clamp floor
        let store = constant_head(&[40.0, -40.0, -40.0, 40.0, -40.0]);
        let t = ActivitySet::from_indices([0]);
        let x = segment(2);
        assert!(loss_set(&x, t, &store).unwrap() < 1e-6);
        assert!(loss_bce(&x, t, &store).unwrap() < 1e-6);
    }

    #[test]
    fn bce_is_label_permutation_symmetric() {
        let a = constant_head(&[1.3, -0.4, 0.0, 0.0, 0.0]);
        let b = constant_head(&[-0.4, 1.3, 0.0, 0.0, 0.0]);
        let x = segment(3);
        let la = loss_bce(&x, ActivitySet::from_indices([0]), &a).unwrap();
        let lb = loss_bce(&x, ActivitySet::from_indices([1]), &b).unwrap();
        assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn cardinality_overflow_rejected() {
        let arch = ArchitectureConfig {
            n_elements: 3,
            max_cardinality: 1,
            ..arch()
        };
        let store = ParameterStore::init(&arch, &Group::ALL, 0).unwrap();
        let err = loss_set(&segment(1), ActivitySet::from_indices([0, 2]), &store).unwrap_err();
        assert!(matches!(err, Error::CardinalityOverflow { cardinality: 2, max: 1 }));
    }

    #[test]
    fn reconstruction_loss_hand_arithmetic() {
        // d=1, w=4 with identity output and all-zero decoder → reconstruction ≡ 0
        let arch = ArchitectureConfig {
            channels: 1,
            window: 4,
            conv_filters: vec![1],
            kernel: 2,
            stride: 2,
            dense_hidden: vec![],
            n_elements: 1,
            max_cardinality: 1,
            decoder_final: FinalActivation::Identity,
        };
        let mut store = ParameterStore::init(&arch, &[Group::ThetaEnc, Group::ThetaDec], 0).unwrap();
        for e in store.entries_mut().iter_mut().filter(|e| e.group == Group::ThetaDec) {
            e.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::full(&[1, 4], 0.5);
        assert!((loss_auto(&x, &store).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_loss_zero_on_perfect_reconstruction() {
        // conv with a unit tap and stride 1 copies the input; the matching deconv copies it back
        let arch = ArchitectureConfig {
            channels: 1,
            window: 6,
            conv_filters: vec![1],
            kernel: 1,
            stride: 1,
            dense_hidden: vec![],
            n_elements: 1,
            max_cardinality: 1,
            decoder_final: FinalActivation::Identity,
        };
        let mut store = ParameterStore::init(&arch, &[Group::ThetaEnc, Group::ThetaDec], 0).unwrap();
        for e in store.entries_mut() {
            if e.name.ends_with("weight") {
                e.value.data_mut()[0] = 1.0;
            }
        }
        let x = Tensor::new(vec![1, 6], vec![0.1, 0.9, 0.3, 0.0, 1.0, 0.5]).unwrap();
        assert_eq!(loss_auto(&x, &store).unwrap(), 0.0);
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParameterStore::init(&ArchitectureConfig { n_elements: 3, ..arch() }, &Group::ALL, 9).unwrap();
        // keep pre-activations off the ReLU kink at zero
        for e in store.entries_mut().iter_mut().filter(|e| e.name.ends_with(".bias")) {
            e.value.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let x = segment(7);
        let ex = Example::labeled(&x, ActivitySet::from_indices([1, 2]));
        let eps = 1e-5;
        for objective in [Objective::Auto, Objective::Set, Objective::Bce] {
            let (_, grads) = loss_and_gradients(objective, &store, &ex).unwrap();
            for (i, g) in grads.iter().enumerate() {
                let trainable = objective.trainable().contains(&store.entries()[i].group);
                assert_eq!(g.is_some(), trainable);
                let Some(g) = g else { continue };
                let mut probe = store.clone();
                let mut diff = 0.0;
                for k in 0..g.numel() {
                    let orig = probe.entries()[i].value.data()[k];
                    probe.entries_mut()[i].value.data_mut()[k] = orig + eps;
                    let up = objective_value(objective, &probe, &ex).unwrap();
                    probe.entries_mut()[i].value.data_mut()[k] = orig - eps;
                    let down = objective_value(objective, &probe, &ex).unwrap();
                    probe.entries_mut()[i].value.data_mut()[k] = orig;
                    diff += ((up - down) / (2.0 * eps) - g.data()[k]).powi(2);
                }
                let scale = g.dot(g).sqrt().max(1e-8);
                assert!(diff.sqrt() / scale < 1e-5, "{:?} {}", objective, store.entries()[i].name);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_no_decay_is_identity() {
        let mut store = ParameterStore::init(&arch(), &Group::ALL, 1).unwrap();
        let before = store.clone();
        let grads: ParamGrads = store.entries().iter().map(|e| Some(Tensor::zeros(e.value.shape()))).collect();
        adam_step(&mut store, &grads, 1e-3, 0.0).unwrap();
        for (a, b) in store.entries().iter().zip(before.entries()) {
            assert_eq!(a.value, b.value);
        }
        assert_eq!(store.step, 1);
    }

    #[test]
    fn adam_first_step_single_parameter_trace() {
        let mut store = ParameterStore::init(&arch(), &Group::ALL, 1).unwrap();
        let idx = store.entries().iter().position(|e| e.name == "head.out.bias").unwrap();
        let theta0 = store.entries()[idx].value.data()[0];
        let g = 0.37;
        let lr = 1e-3;
        let mut grads: ParamGrads = vec![None; store.entries().len()];
        let mut gt = Tensor::zeros(store.entries()[idx].value.shape());
        gt.data_mut()[0] = g;
        grads[idx] = Some(gt);
        adam_step(&mut store, &grads, lr, 0.0).unwrap();
        // m̂ = g, v̂ = g² after bias correction
        let expect = theta0 - lr * g / (g.abs() + 1e-8);
        let got = store.entries()[idx].value.data()[0];
        assert!((got - expect).abs() < 1e-15);
        assert!((theta0 - got - lr).abs() < 1e-9);
        // untouched entries of the same tensor have zero gradient → no change
        assert_eq!(store.entries()[idx].value.data()[1], 0.0);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut store = ParameterStore::init(&arch(), &Group::ALL, 1).unwrap();
        let mut grads: ParamGrads = vec![None; store.entries().len()];
        grads[0] = Some(Tensor::zeros(&[1]));
        assert!(adam_step(&mut store, &grads, 1e-3, 0.0).is_err());
    }

    #[test]
    fn early_stopping_on_flat_series() {
        let mut es = EarlyStopping::new(5);
        let mut stopped_at = None;
        for epoch in 1..=6 {
            if es.observe(epoch, 3.0).1 {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(6));
        assert_eq!(es.best_epoch(), 1);
    }

    #[test]
    fn losses_are_finite_and_non_negative() {
        let store = ParameterStore::init(&arch(), &Group::ALL, 5).unwrap();
        for s in 0..5 {
            let x = segment(s);
            let t = ActivitySet::from_indices((0..(s as usize % 3)).map(|i| i % 2));
            for v in [loss_auto(&x, &store).unwrap(), loss_set(&x, t, &store).unwrap(), loss_bce(&x, t, &store).unwrap()] {
                assert!(v.is_finite() && v >= 0.0);
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let xs: Vec<Tensor> = (0..24).map(segment).collect();
        let ex: Vec<Example> = xs.iter().map(Example::unlabeled).collect();
        let cfg = TrainConfig {
            objective: Objective::Auto,
            learning_rate: 1e-2,
            batch_size: 8,
            max_epochs: 5,
            seed: 3,
            ..TrainConfig::default()
        };
        let store = ParameterStore::init(&arch(), &[Group::ThetaEnc, Group::ThetaDec], 2).unwrap();
        let (a, ra) = train(store.clone(), "auto", &ex[..16], &ex[16..], &cfg).unwrap();
        let (b, rb) = train(store, "auto", &ex[..16], &ex[16..], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.to_log(), rb.to_log());
        assert!(ra.best_validation_objective < ra.epochs[0].validation_objective);
        let best = ra.epochs.iter().min_by(|x, y| x.validation_objective.total_cmp(&y.validation_objective)).unwrap();
        assert_eq!(best.epoch, ra.best_epoch);
        assert!((ra.epochs[1].learning_rate - 0.95e-2).abs() < 1e-15);
    }

    #[test]
    fn train_rejects_empty_and_missing_groups() {
        let cfg = TrainConfig::default();
        let store = ParameterStore::init(&arch(), &[Group::ThetaEnc, Group::Omega], 2).unwrap();
        assert!(matches!(train(store.clone(), "s", &[], &[], &cfg), Err(Error::Empty(_))));
        let x = segment(0);
        let auto = TrainConfig {
            objective: Objective::Auto,
            ..cfg
        };
        assert!(matches!(
            train(store, "a", &[Example::unlabeled(&x)], &[], &auto),
            Err(Error::MissingGroup(_))
        ));
    }
}
