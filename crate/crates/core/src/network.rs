//! The auto-encoder-set network: a strided temporal conv encoder shared by a
//! mirrored deconv decoder (reconstruction path) and a dense set head
//! (element sigmoid scores plus cardinality log-softmax).

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{conv_output_len, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// Encoder weights, shared by both paths.
    ThetaEnc,
    /// Decoder weights, reconstruction path only.
    ThetaDec,
    /// Set-prediction head.
    Omega,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::ThetaEnc, Group::ThetaDec, Group::Omega];

    pub fn tag(self) -> u8 {
        match self {
            Group::ThetaEnc => 0,
            Group::ThetaDec => 1,
            Group::Omega => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Group> {
        Group::ALL.into_iter().find(|g| g.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::ThetaEnc => "theta_enc",
            Group::ThetaDec => "theta_dec",
            Group::Omega => "omega",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalActivation {
    #[default]
    Sigmoid,
    Identity,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub channels: usize,
    pub window: usize,
    /// Feature maps per encoder conv layer; the decoder mirrors them.
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    /// Widths of the ReLU dense layers in the set head.
    pub dense_hidden: Vec<usize>,
    /// Number of activity elements `M`.
    pub n_elements: usize,
    /// Largest predictable set size `K`; the cardinality head has `K + 1` outputs.
    pub max_cardinality: usize,
    pub decoder_final: FinalActivation,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            channels: 3,
            window: 200,
            conv_filters: vec![64; 4],
            kernel: 5,
            stride: 2,
            dense_hidden: vec![128, 128],
            n_elements: 3,
            max_cardinality: 2,
            decoder_final: FinalActivation::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: Group,
    pub fan_in: usize,
    pub fan_out: usize,
    pub is_bias: bool,
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels == 0 || self.window == 0 {
            return bad("channels and window must be positive".into());
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad("need at least one conv layer with a positive filter count".into());
        }
        if self.kernel == 0 || self.stride == 0 {
            return bad("kernel and stride must be positive".into());
        }
        if self.dense_hidden.contains(&0) {
            return bad("dense widths must be positive".into());
        }
        if self.n_elements == 0 {
            return bad("need at least one activity element".into());
        }
        if self.max_cardinality > self.n_elements {
            return bad(format!(
                "max cardinality {} exceeds element count {}",
                self.max_cardinality, self.n_elements
            ));
        }
        self.try_temporal_lengths().map(|_| ())
    }

    fn try_temporal_lengths(&self) -> Result<Vec<usize>> {
        let mut lens = vec![self.window];
        for layer in 0..self.conv_filters.len() {
            let prev = *lens.last().expect("non-empty");
            let next = conv_output_len(prev, self.kernel, self.stride).ok_or_else(|| {
                Error::Config(format!(
                    "conv layer {} receives length {prev}, shorter than kernel {}",
                    layer + 1,
                    self.kernel
                ))
            })?;
            lens.push(next);
        }
        Ok(lens)
    }

    /// Temporal length at the encoder input and after each conv layer,
    /// e.g. `[200, 98, 47, 22, 9]` for the default geometry.
    pub fn temporal_lengths(&self) -> Vec<usize> {
        self.try_temporal_lengths().expect("validated architecture")
    }

    /// Size `p` of the flattened latent representation.
    pub fn latent_dim(&self) -> usize {
        self.conv_filters.last().copied().unwrap_or(0) * self.temporal_lengths().last().copied().unwrap_or(0)
    }

    pub fn head_outputs(&self) -> usize {
        self.n_elements + self.max_cardinality + 1
    }

    pub fn parameter_specs(&self) -> Vec<ParamSpec> {
        let k = self.kernel;
        let mut specs = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, group, fan_in, fan_out, is_bias| {
            specs.push(ParamSpec {
                name,
                shape,
                group,
                fan_in,
                fan_out,
                is_bias,
            })
        };

        let mut c_prev = self.channels;
        for (i, &f) in self.conv_filters.iter().enumerate() {
            push(format!("enc.conv{}.weight", i + 1), vec![f, c_prev, k], Group::ThetaEnc, c_prev * k, f * k, false);
            push(format!("enc.conv{}.bias", i + 1), vec![f], Group::ThetaEnc, c_prev * k, f * k, true);
            c_prev = f;
        }

        let n = self.conv_filters.len();
        for j in 0..n {
            let c_in = self.conv_filters[n - 1 - j];
            let c_out = if j + 1 < n { self.conv_filters[n - 2 - j] } else { self.channels };
            push(format!("dec.deconv{}.weight", j + 1), vec![c_in, c_out, k], Group::ThetaDec, c_in * k, c_out * k, false);
            push(format!("dec.deconv{}.bias", j + 1), vec![c_out], Group::ThetaDec, c_in * k, c_out * k, true);
        }

        let mut prev = self.latent_dim();
        for (i, &h) in self.dense_hidden.iter().enumerate() {
            push(format!("head.dense{}.weight", i + 1), vec![h, prev], Group::Omega, prev, h, false);
            push(format!("head.dense{}.bias", i + 1), vec![h], Group::Omega, prev, h, true);
            prev = h;
        }
        let out = self.head_outputs();
        push("head.out.weight".into(), vec![out, prev], Group::Omega, prev, out, false);
        push("head.out.bias".into(), vec![out], Group::Omega, prev, out, true);
        specs
    }

    pub fn parameter_count(&self, group: Group) -> usize {
        self.parameter_specs()
            .iter()
            .filter(|s| s.group == group)
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }
}

/// FNV-1a, used to give every named tensor its own reproducible init stream.
fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub group: Group,
    pub value: Tensor,
    /// ADAM first moment.
    pub m: Tensor,
    /// ADAM second moment.
    pub v: Tensor,
}

/// Named parameter tensors for the groups a model carries, plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    arch: ArchitectureConfig,
    groups: Vec<Group>,
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    /// ADAM step counter.
    pub step: u64,
}

impl ParameterStore {
    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero. Each
    /// tensor draws from a stream keyed by `(seed, name)`, so a tensor's
    /// initial value does not depend on which other groups are present.
    pub fn init(arch: &ArchitectureConfig, groups: &[Group], seed: u64) -> Result<Self> {
        arch.validate()?;
        let entries = arch
            .parameter_specs()
            .into_iter()
            .filter(|s| groups.contains(&s.group))
            .map(|s| {
                let value = if s.is_bias {
                    Tensor::zeros(&s.shape)
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(&s.name));
                    Tensor::glorot_uniform(&s.shape, s.fan_in, s.fan_out, &mut rng)
                };
                ParamEntry {
                    name: s.name,
                    group: s.group,
                    m: Tensor::zeros(value.shape()),
                    v: Tensor::zeros(value.shape()),
                    value,
                }
            })
            .collect();
        Self::from_entries(arch.clone(), entries)
    }

    pub(crate) fn from_entries(arch: ArchitectureConfig, entries: Vec<ParamEntry>) -> Result<Self> {
        let mut groups: Vec<Group> = Vec::new();
        let mut index = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if !groups.contains(&e.group) {
                groups.push(e.group);
            }
            index.insert(e.name.clone(), i);
        }
        groups.sort_by_key(|g| g.tag());
        let store = ParameterStore {
            arch,
            groups,
            entries,
            index,
            step: 0,
        };
        store.check_complete()?;
        Ok(store)
    }

    fn check_complete(&self) -> Result<()> {
        for spec in self.arch.parameter_specs() {
            if !self.groups.contains(&spec.group) {
                continue;
            }
            let e = self
                .get(&spec.name)
                .ok_or_else(|| Error::Config(format!("parameter {} missing", spec.name)))?;
            if e.value.shape() != spec.shape.as_slice() || e.group != spec.group {
                return Err(Error::shape(
                    "parameter store",
                    format!("{} has shape {:?}, architecture expects {:?}", spec.name, e.value.shape(), spec.shape),
                ));
            }
        }
        let expected: usize = self
            .arch
            .parameter_specs()
            .iter()
            .filter(|s| self.groups.contains(&s.group))
            .count();
        if expected != self.entries.len() {
            return Err(Error::Config(format!(
                "store holds {} tensors, architecture defines {expected}",
                self.entries.len()
            )));
        }
        Ok(())
    }

    pub fn arch(&self) -> &ArchitectureConfig {
        &self.arch
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn has_group(&self, group: Group) -> bool {
        self.groups.contains(&group)
    }

    pub fn require(&self, group: Group) -> Result<()> {
        if self.has_group(group) {
            Ok(())
        } else {
            Err(Error::MissingGroup(group.name()))
        }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    /// Mutable access for optimizers; names, groups and shapes must be left intact.
    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    /// Copies every tensor of `group` from `other`, which must share the
    /// same geometry for that group. Optimizer state is reset.
    pub fn copy_group_from(&mut self, other: &ParameterStore, group: Group) -> Result<()> {
        self.require(group)?;
        other.require(group)?;
        for e in self.entries.iter_mut().filter(|e| e.group == group) {
            let src = other
                .get(&e.name)
                .ok_or_else(|| Error::Config(format!("source store lacks {}", e.name)))?;
            if src.value.shape() != e.value.shape() {
                return Err(Error::shape(
                    "warm start",
                    format!("{}: {:?} vs {:?}", e.name, src.value.shape(), e.value.shape()),
                ));
            }
            e.value = src.value.clone();
            e.m = Tensor::zeros(e.value.shape());
            e.v = Tensor::zeros(e.value.shape());
        }
        Ok(())
    }

    /// A copy restricted to `groups`, with optimizer state dropped.
    pub fn subset(&self, groups: &[Group]) -> Result<ParameterStore> {
        for &g in groups {
            self.require(g)?;
        }
        let entries = self
            .entries
            .iter()
            .filter(|e| groups.contains(&e.group))
            .map(|e| ParamEntry {
                m: Tensor::zeros(e.value.shape()),
                v: Tensor::zeros(e.value.shape()),
                ..e.clone()
            })
            .collect();
        Self::from_entries(self.arch.clone(), entries)
    }

    pub fn parameter_count(&self, group: Group) -> usize {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| e.value.numel())
            .sum()
    }

    /// Places every tensor on `graph`: tensors of `trainable` groups as
    /// differentiable leaves, the rest as constants.
    pub fn bind(&self, graph: &mut Graph, trainable: &[Group]) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| {
                if trainable.contains(&e.group) {
                    graph.param(e.value.clone())
                } else {
                    graph.input(e.value.clone())
                }
            })
            .collect();
        Bound { vars }
    }
}

/// Graph handles for a store's tensors, aligned with [`ParameterStore::entries`].
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
}

impl Bound {
    fn var(&self, store: &ParameterStore, name: &str) -> Var {
        self.vars[store.index[name]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRep {
    pub z: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetScores {
    /// Sigmoid probability per activity element.
    pub element_scores: Vec<f64>,
    /// Log-probability of each set size `0..=K`.
    pub cardinality_logscores: Vec<f64>,
}

impl SetScores {
    pub fn max_cardinality(&self) -> usize {
        self.cardinality_logscores.len().saturating_sub(1)
    }
}

fn check_input(arch: &ArchitectureConfig, x: &Tensor) -> Result<()> {
    if x.shape() != [arch.channels, arch.window] {
        return Err(Error::shape(
            "encode",
            format!(
                "segment shape {:?} does not match configured {}×{}",
                x.shape(),
                arch.channels,
                arch.window
            ),
        ));
    }
    Ok(())
}

/// Encoder on a graph: conv → ReLU per layer, then flatten. Returns the flat latent.
pub fn encode_on(graph: &mut Graph, store: &ParameterStore, bound: &Bound, x: Var) -> Result<Var> {
    store.require(Group::ThetaEnc)?;
    let arch = &store.arch;
    check_input(arch, graph.value(x))?;
    let mut h = x;
    for i in 1..=arch.conv_filters.len() {
        let w = bound.var(store, &format!("enc.conv{i}.weight"));
        let b = bound.var(store, &format!("enc.conv{i}.bias"));
        let c = graph.conv1d(h, w, b, arch.stride)?;
        h = graph.relu(c);
    }
    graph.reshape(h, &[arch.latent_dim()])
}

/// Decoder on a graph: un-flatten, then mirrored deconvs restoring each
/// encoder length exactly. ReLU between layers, configured final activation.
pub fn decode_on(graph: &mut Graph, store: &ParameterStore, bound: &Bound, z: Var) -> Result<Var> {
    store.require(Group::ThetaDec)?;
    let arch = &store.arch;
    let lens = arch.temporal_lengths();
    let n = arch.conv_filters.len();
    if graph.value(z).numel() != arch.latent_dim() {
        return Err(Error::shape(
            "decode",
            format!("latent has {} values, expected {}", graph.value(z).numel(), arch.latent_dim()),
        ));
    }
    let mut h = graph.reshape(z, &[arch.conv_filters[n - 1], lens[n]])?;
    for j in 1..=n {
        let w = bound.var(store, &format!("dec.deconv{j}.weight"));
        let b = bound.var(store, &format!("dec.deconv{j}.bias"));
        let d = graph.deconv1d(h, w, b, arch.stride, lens[n - j])?;
        h = if j < n {
            graph.relu(d)
        } else {
            match arch.decoder_final {
                FinalActivation::Sigmoid => graph.sigmoid(d),
                FinalActivation::Relu => graph.relu(d),
                FinalActivation::Identity => d,
            }
        };
    }
    Ok(h)
}

/// Set head on a graph. Returns `(element probabilities, cardinality log-probabilities)`.
pub fn head_on(graph: &mut Graph, store: &ParameterStore, bound: &Bound, z: Var) -> Result<(Var, Var)> {
    store.require(Group::Omega)?;
    let arch = &store.arch;
    let mut h = z;
    for i in 1..=arch.dense_hidden.len() {
        let w = bound.var(store, &format!("head.dense{i}.weight"));
        let b = bound.var(store, &format!("head.dense{i}.bias"));
        let d = graph.dense(h, w, b)?;
        h = graph.relu(d);
    }
    let out = graph.dense(h, bound.var(store, "head.out.weight"), bound.var(store, "head.out.bias"))?;
    let elem = graph.slice(out, 0, arch.n_elements)?;
    let elem = graph.sigmoid(elem);
    let card = graph.slice(out, arch.n_elements, arch.max_cardinality + 1)?;
    let card = graph.log_softmax(card);
    Ok((elem, card))
}

pub fn encode(x: &Tensor, store: &ParameterStore) -> Result<LatentRep> {
    let mut g = Graph::new();
    let bound = store.bind(&mut g, &[]);
    let xv = g.input(x.clone());
    let z = encode_on(&mut g, store, &bound, xv)?;
    Ok(LatentRep { z: g.value(z).clone() })
}

pub fn decode(z: &LatentRep, store: &ParameterStore) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = store.bind(&mut g, &[]);
    let zv = g.input(z.z.clone());
    let out = decode_on(&mut g, store, &bound, zv)?;
    Ok(g.value(out).clone())
}

/// Full reconstruction `decode(encode(x))`.
pub fn reconstruct(x: &Tensor, store: &ParameterStore) -> Result<Tensor> {
    decode(&encode(x, store)?, store)
}

pub fn predict_scores(x: &Tensor, store: &ParameterStore) -> Result<SetScores> {
    let mut g = Graph::new();
    let bound = store.bind(&mut g, &[]);
    let xv = g.input(x.clone());
    let z = encode_on(&mut g, store, &bound, xv)?;
    let (elem, card) = head_on(&mut g, store, &bound, z)?;
    Ok(SetScores {
        element_scores: g.value(elem).data().to_vec(),
        cardinality_logscores: g.value(card).data().to_vec(),
    })
}
