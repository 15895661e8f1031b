//! prepare → train → infer → eval / compare.

use std::fs;
use std::path::{Path, PathBuf};

use autoset_core::checkpoint::{load_checkpoint, save_checkpoint};
use autoset_core::dataio::{
    label_segments, normalize_per_channel, partition, read_archive, read_generic_csv, read_wisdm_csv,
    write_generic_csv, write_labeled_archive, write_unlabeled_archive, ActivitySet, ActivityVocabulary,
    LabeledSegment, NormStats, SegmentArchive, SensorStream,
};
use autoset_core::inference::{
    calibrate_u, map_set_inference, read_prediction_dump, threshold_inference, write_prediction_dump, DumpHeader,
    DumpRecord, InferenceMode, PredictionDump,
};
use autoset_core::metrics::{compare_runs, evaluate, ComparisonTable, EvalPair, MetricsReport};
use autoset_core::network::{predict_scores, Group, ParameterStore, SetScores};
use autoset_core::synthgen::generate;
use autoset_core::training::{self, Example, Objective, TrainReport};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::config::{DataFormat, RunConfig};
use crate::error::{CliError, Result};

pub const TRAIN_DIR: &str = "train";
pub const VALIDATION_DIR: &str = "val";
pub const TEST_DIR: &str = "test";
pub const UNLABELED_DIR: &str = "unlabeled";
pub const STATS_FILE: &str = "stats.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const PRETRAIN_CHECKPOINT_FILE: &str = "pretrain.ckpt";
pub const MODEL_INFO_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const TRAIN_REPORT_FILE: &str = "train.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMode {
    DeepBce,
    AutoBce,
    DeepSet,
    AutoSet,
}

impl ModelMode {
    pub const ALL: [ModelMode; 4] = [ModelMode::DeepBce, ModelMode::AutoBce, ModelMode::DeepSet, ModelMode::AutoSet];

    pub fn pretrains(self) -> bool {
        matches!(self, ModelMode::AutoBce | ModelMode::AutoSet)
    }

    pub fn objective(self) -> Objective {
        match self {
            ModelMode::DeepBce | ModelMode::AutoBce => Objective::Bce,
            ModelMode::DeepSet | ModelMode::AutoSet => Objective::Set,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelMode::DeepBce => "deep-bce",
            ModelMode::AutoBce => "auto-bce",
            ModelMode::DeepSet => "deep-set",
            ModelMode::AutoSet => "auto-set",
        }
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.to_path_buf(), e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the configured synthetic stream as a generic CSV.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<SensorStream> {
    cfg.validate()?;
    let stream = generate(&cfg.synth_config())?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.to_path_buf(), e))?;
    }
    write_generic_csv(&stream, out)?;
    Ok(stream)
}

fn load_streams(cfg: &RunConfig) -> Result<Vec<SensorStream>> {
    Ok(match cfg.data.format {
        DataFormat::Synthetic => vec![generate(&cfg.synth_config())?],
        DataFormat::Wisdm => {
            let mut streams = Vec::new();
            for p in &cfg.data.inputs {
                let ingest = read_wisdm_csv(p)?;
                if ingest.skipped_rows > 0 {
                    log::warn!("{}: skipped {} malformed rows", p.display(), ingest.skipped_rows);
                }
                streams.extend(ingest.streams);
            }
            streams
        }
        DataFormat::Generic => cfg
            .data
            .inputs
            .iter()
            .map(|p| read_generic_csv(p, &cfg.data.null_labels))
            .collect::<autoset_core::Result<_>>()?,
    })
}

fn vocabulary_for(cfg: &RunConfig, streams: &[SensorStream]) -> Result<ActivityVocabulary> {
    let labels = if !cfg.data.vocabulary.is_empty() {
        cfg.data.vocabulary.clone()
    } else if cfg.data.format == DataFormat::Synthetic {
        cfg.synth_config().activity_names()
    } else {
        let mut all: Vec<String> = streams.iter().flat_map(|s| s.label_names()).collect();
        all.sort();
        all.dedup();
        all
    };
    let vocab = ActivityVocabulary::new(labels)?;
    if vocab.len() != cfg.architecture.n_elements {
        return Err(CliError::Config(format!(
            "vocabulary has {} activities {:?} but architecture.n_elements = {}",
            vocab.len(),
            vocab.labels(),
            cfg.architecture.n_elements
        )));
    }
    Ok(vocab)
}

fn slice_stream(s: &SensorStream, from: usize, to: usize) -> Result<SensorStream> {
    Ok(SensorStream::new(
        s.id.clone(),
        s.channel_names.clone(),
        s.channels.iter().map(|c| c[from..to].to_vec()).collect(),
        s.annotations.as_ref().map(|a| a[from..to].to_vec()),
        s.sample_rate_hz,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub segments: usize,
    /// Segment count per target cardinality `0..`.
    pub cardinality: Vec<usize>,
}

fn split_summary(segments: &[LabeledSegment]) -> SplitSummary {
    let mut cardinality = vec![0; segments.iter().map(|s| s.target.len() + 1).max().unwrap_or(1)];
    for s in segments {
        cardinality[s.target.len()] += 1;
    }
    SplitSummary {
        segments: segments.len(),
        cardinality,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub vocabulary: ActivityVocabulary,
    pub streams: Vec<String>,
    pub train: SplitSummary,
    pub validation: SplitSummary,
    pub test: SplitSummary,
    pub unlabeled: usize,
}

/// Normalizes, segments and splits the configured streams into
/// `train/`, `val/`, `test/` and `unlabeled/` archives under `out`.
///
/// The last `test_fraction` of every stream becomes test data so test windows
/// never overlap training windows. Validation segments are drawn at random
/// from the rest; the unlabeled archive holds every non-test segment.
pub fn prepare(cfg: &RunConfig, out: &Path) -> Result<PrepareSummary> {
    cfg.validate()?;
    let streams = load_streams(cfg)?;
    if streams.is_empty() {
        return Err(CliError::Config("no input streams".into()));
    }
    let vocab = vocabulary_for(cfg, &streams)?;
    let mut train_parts = Vec::new();
    let mut test_parts = Vec::new();
    for s in &streams {
        if s.n_channels() != cfg.architecture.channels {
            return Err(CliError::Config(format!(
                "stream {} has {} channels, architecture expects {}",
                s.id,
                s.n_channels(),
                cfg.architecture.channels
            )));
        }
        let cut = ((1.0 - cfg.data.test_fraction) * s.len() as f64).round() as usize;
        train_parts.push(slice_stream(s, 0, cut.max(1))?);
        if cut < s.len() {
            test_parts.push((cut, slice_stream(s, cut, s.len())?));
        }
    }
    let stats = NormStats::from_streams(&train_parts)?;

    let mut pool = Vec::new();
    for s in &train_parts {
        let (n, _) = normalize_per_channel(s, Some(&stats))?;
        pool.extend(label_segments(&n, &cfg.segmentation, &vocab)?);
    }
    let mut test = Vec::new();
    for (cut, s) in &test_parts {
        let (n, _) = normalize_per_channel(s, Some(&stats))?;
        test.extend(label_segments(&n, &cfg.segmentation, &vocab)?.into_iter().map(|mut l| {
            l.segment.offset += cut;
            l
        }));
    }
    let k = cfg.architecture.max_cardinality;
    if let Some(big) = pool.iter().chain(&test).map(|l| l.target.len()).find(|&c| c > k) {
        return Err(CliError::Config(format!(
            "segments carry {big} activities but architecture.max_cardinality = {k}"
        )));
    }
    if pool.is_empty() {
        return Err(CliError::Config("no training segments: streams shorter than the window".into()));
    }
    let (validation, rest) = partition(&pool, cfg.data.validation_fraction, cfg.seed);
    let (train, _) = partition(&rest, cfg.data.labeled_fraction, cfg.seed.wrapping_add(1));
    let unlabeled: Vec<_> = pool.iter().map(|l| l.segment.clone()).collect();

    write_labeled_archive(&out.join(TRAIN_DIR), &vocab, &train)?;
    write_labeled_archive(&out.join(VALIDATION_DIR), &vocab, &validation)?;
    write_labeled_archive(&out.join(TEST_DIR), &vocab, &test)?;
    write_unlabeled_archive(&out.join(UNLABELED_DIR), &vocab, &unlabeled)?;
    write_json(&out.join(STATS_FILE), &stats)?;
    let summary = PrepareSummary {
        vocabulary: vocab,
        streams: streams.iter().map(|s| s.id.clone()).collect(),
        train: split_summary(&train),
        validation: split_summary(&validation),
        test: split_summary(&test),
        unlabeled: unlabeled.len(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub mode: ModelMode,
    pub vocabulary: ActivityVocabulary,
    pub seed: u64,
}

pub struct TrainOutcome {
    pub store: ParameterStore,
    pub reports: Vec<TrainReport>,
}

fn check_archive(archive: &SegmentArchive, cfg: &RunConfig, what: &str) -> Result<()> {
    let arch = &cfg.architecture;
    if archive.vocabulary.len() != arch.n_elements {
        return Err(CliError::Mismatch(format!(
            "{what} archive has {} activities, architecture expects {}",
            archive.vocabulary.len(),
            arch.n_elements
        )));
    }
    if let Some(s) = archive.segments.iter().find(|s| s.data.shape() != [arch.channels, arch.window]) {
        return Err(CliError::Mismatch(format!(
            "{what} archive holds {:?} segments, architecture expects [{}, {}]",
            s.data.shape(),
            arch.channels,
            arch.window
        )));
    }
    Ok(())
}

fn labeled_examples(archive: &SegmentArchive) -> Result<Vec<Example<'_>>> {
    let targets = archive
        .targets
        .as_ref()
        .ok_or_else(|| CliError::Mismatch("expected a labelled archive".into()))?;
    Ok(archive
        .segments
        .iter()
        .zip(targets)
        .map(|(s, &t)| Example::labeled(&s.data, t))
        .collect())
}

/// Trains one of the four model variants from a prepared directory. Auto
/// modes pretrain the encoder/decoder on the unlabeled archive (or reuse
/// `pretrained`) and warm-start the supervised phase from its encoder.
pub fn train(cfg: &RunConfig, mode: ModelMode, prepared: &Path, out: &Path, pretrained: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let arch = &cfg.architecture;
    let train_archive = read_archive(&prepared.join(TRAIN_DIR))?;
    let val_archive = read_archive(&prepared.join(VALIDATION_DIR))?;
    check_archive(&train_archive, cfg, "training")?;
    check_archive(&val_archive, cfg, "validation")?;
    if train_archive.vocabulary != val_archive.vocabulary {
        return Err(CliError::Mismatch("training and validation vocabularies differ".into()));
    }
    let train_set = labeled_examples(&train_archive)?;
    let validation = labeled_examples(&val_archive)?;

    let mut reports = Vec::new();
    let mut store = ParameterStore::init(arch, &[Group::ThetaEnc, Group::Omega], cfg.seed)?;
    let mut pretrain_store = None;
    if mode.pretrains() {
        let pre = match pretrained {
            Some(p) => {
                let pre = load_checkpoint(p)?;
                if pre.arch() != arch {
                    return Err(CliError::Mismatch(format!("{}: architecture differs from the config", p.display())));
                }
                pre.require(Group::ThetaEnc)?;
                pre
            }
            None => {
                let unlabeled = read_archive(&prepared.join(UNLABELED_DIR))?;
                check_archive(&unlabeled, cfg, "unlabeled")?;
                let u: Vec<Example> = unlabeled.segments.iter().map(|s| Example::unlabeled(&s.data)).collect();
                let v: Vec<Example> = val_archive.segments.iter().map(|s| Example::unlabeled(&s.data)).collect();
                let init = ParameterStore::init(arch, &[Group::ThetaEnc, Group::ThetaDec], cfg.seed)?;
                let tc = cfg.pretrain.to_train_config(Objective::Auto, cfg.seed);
                let (pre, report) = training::train(init, "pretrain", &u, &v, &tc)?;
                reports.push(report);
                pre
            }
        };
        store.copy_group_from(&pre, Group::ThetaEnc)?;
        pretrain_store = Some(pre);
    }
    let tc = cfg.train.to_train_config(mode.objective(), cfg.seed);
    let (store, report) = training::train(store, mode.name(), &train_set, &validation, &tc)?;
    reports.push(report);

    fs::create_dir_all(out).map_err(|e| CliError::Io(out.to_path_buf(), e))?;
    save_checkpoint(&store, &out.join(CHECKPOINT_FILE))?;
    if let (Some(pre), None) = (&pretrain_store, pretrained) {
        save_checkpoint(pre, &out.join(PRETRAIN_CHECKPOINT_FILE))?;
    }
    write_json(
        &out.join(MODEL_INFO_FILE),
        &ModelInfo {
            mode,
            vocabulary: train_archive.vocabulary.clone(),
            seed: cfg.seed,
        },
    )?;
    write_file(&out.join(TRAIN_LOG_FILE), reports.iter().map(|r| r.to_log()).collect::<String>())?;
    write_json(&out.join(TRAIN_REPORT_FILE), &reports)?;
    Ok(TrainOutcome { store, reports })
}

pub fn load_model(dir: &Path) -> Result<(ModelInfo, ParameterStore)> {
    let info: ModelInfo = read_json(&dir.join(MODEL_INFO_FILE))?;
    let store = load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    store.require(Group::ThetaEnc)?;
    store.require(Group::Omega)?;
    if store.arch().n_elements != info.vocabulary.len() {
        return Err(CliError::Mismatch("checkpoint head does not match the model vocabulary".into()));
    }
    Ok((info, store))
}

fn archive_scores(store: &ParameterStore, archive: &SegmentArchive) -> Result<Vec<SetScores>> {
    let arch = store.arch();
    archive
        .segments
        .iter()
        .map(|s| {
            if s.data.shape() != [arch.channels, arch.window] {
                return Err(CliError::Mismatch(format!(
                    "segment {}@{} has shape {:?}, model expects [{}, {}]",
                    s.stream,
                    s.offset,
                    s.data.shape(),
                    arch.channels,
                    arch.window
                )));
            }
            Ok(predict_scores(&s.data, store)?)
        })
        .collect()
}

pub struct InferOptions<'a> {
    pub model: &'a Path,
    pub archive: &'a Path,
    /// Labelled archive used to calibrate U when it is not pinned.
    pub calibration: &'a Path,
    pub u: Option<f64>,
    pub threshold: Option<f64>,
    pub out: &'a Path,
}

/// Scores every segment of an archive and decodes it: MAP set inference for
/// set models, thresholding for BCE models.
pub fn infer(cfg: &RunConfig, opts: &InferOptions<'_>) -> Result<PredictionDump> {
    cfg.validate()?;
    let (info, store) = load_model(opts.model)?;
    let archive = read_archive(opts.archive)?;
    if archive.vocabulary != info.vocabulary {
        return Err(CliError::Mismatch("archive vocabulary differs from the model".into()));
    }
    let scores = archive_scores(&store, &archive)?;
    let set_model = info.mode.objective() == Objective::Set;
    let (header_u, header_threshold, sets): (Option<f64>, Option<f64>, Vec<ActivitySet>) = if set_model {
        let u = match opts.u.or(cfg.inference.u) {
            Some(u) if u > 0.0 => u,
            Some(u) => return Err(CliError::Config(format!("U must be positive, got {u}"))),
            None => {
                let cal = read_archive(opts.calibration)?;
                if cal.vocabulary != info.vocabulary {
                    return Err(CliError::Mismatch("calibration vocabulary differs from the model".into()));
                }
                let targets = cal
                    .targets
                    .clone()
                    .ok_or_else(|| CliError::Mismatch("calibration archive is unlabelled".into()))?;
                let cal_scores = archive_scores(&store, &cal)?;
                let c = calibrate_u(&cal_scores, &targets, &cfg.inference.u_grid, cfg.inference.calibration_metric)?;
                log::info!("calibrated U = {} ({:?} {:.4})", c.u, c.metric, c.score);
                c.u
            }
        };
        (Some(u), None, scores.iter().map(|s| map_set_inference(s, u).set).collect())
    } else {
        let t = opts.threshold.unwrap_or(cfg.inference.threshold);
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Config(format!("threshold must lie in (0, 1), got {t}")));
        }
        (None, Some(t), scores.iter().map(|s| threshold_inference(s, t)).collect())
    };
    let records = archive
        .segments
        .iter()
        .zip(scores)
        .zip(&sets)
        .map(|((seg, s), &set)| DumpRecord {
            stream: seg.stream.clone(),
            offset: seg.offset,
            set: info.vocabulary.names_of(set),
            element_scores: s.element_scores,
            cardinality_logscores: s.cardinality_logscores,
        })
        .collect();
    let dump = PredictionDump {
        header: DumpHeader {
            mode: if set_model { InferenceMode::MapSet } else { InferenceMode::Threshold },
            u: header_u,
            threshold: header_threshold,
            vocabulary: info.vocabulary,
            max_cardinality: store.arch().max_cardinality,
            count: sets.len(),
        },
        records,
    };
    if let Some(parent) = opts.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.to_path_buf(), e))?;
    }
    write_prediction_dump(opts.out, &dump)?;
    Ok(dump)
}

fn aligned_pairs(dump: &PredictionDump, targets: &SegmentArchive) -> Result<Vec<EvalPair>> {
    let truth = targets
        .targets
        .as_ref()
        .ok_or_else(|| CliError::Mismatch("target archive is unlabelled".into()))?;
    if dump.header.vocabulary != targets.vocabulary {
        return Err(CliError::Mismatch("dump and target archive use different vocabularies".into()));
    }
    if dump.records.len() != targets.segments.len() {
        return Err(CliError::Mismatch(format!(
            "dump has {} records, target archive {} segments",
            dump.records.len(),
            targets.segments.len()
        )));
    }
    for (r, s) in dump.records.iter().zip(&targets.segments) {
        if r.stream != s.stream || r.offset != s.offset {
            return Err(CliError::Mismatch(format!(
                "dump record {}@{} does not align with segment {}@{}",
                r.stream, r.offset, s.stream, s.offset
            )));
        }
    }
    Ok(dump
        .predicted_sets()?
        .into_iter()
        .zip(truth)
        .map(|(predicted, &target)| EvalPair { predicted, target })
        .collect())
}

/// Scores a prediction dump against a labelled archive; with `out`, writes
/// `metrics.json` and `metrics.txt` there.
pub fn eval(dump: &Path, targets: &Path, out: Option<&Path>) -> Result<MetricsReport> {
    let d = read_prediction_dump(dump)?;
    let t = read_archive(targets)?;
    let pairs = aligned_pairs(&d, &t)?;
    let report = evaluate(&pairs, &d.header.vocabulary, d.header.max_cardinality)?;
    if let Some(out) = out {
        write_json(&out.join("metrics.json"), &report)?;
        write_file(&out.join("metrics.txt"), report.to_text())?;
    }
    Ok(report)
}

/// One row per named dump, in the given order.
pub fn compare(dumps: &[(String, PathBuf)], targets: &Path, out: Option<&Path>) -> Result<ComparisonTable> {
    let t = read_archive(targets)?;
    let mut reports = Vec::with_capacity(dumps.len());
    for (name, path) in dumps {
        let d = read_prediction_dump(path)?;
        let pairs = aligned_pairs(&d, &t)?;
        reports.push((name.clone(), evaluate(&pairs, &d.header.vocabulary, d.header.max_cardinality)?));
    }
    let table = compare_runs(&reports)?;
    if let Some(out) = out {
        write_json(&out.join("comparison.json"), &table)?;
        write_file(&out.join("comparison.txt"), table.to_text())?;
    }
    Ok(table)
}
