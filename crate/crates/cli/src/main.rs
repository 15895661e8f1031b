// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autoset_cli::commands::{self, InferOptions, ModelMode};
use autoset_cli::{CliError, Result, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autoset", version, about = "Set-based activity recognition from wearable sensor streams")]
struct Cli {
    /// TOML run configuration; AUTOSET_<SECTION>_<KEY> variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic stream as CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalize, segment and split the input streams into archives.
    Prepare {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model variant on prepared archives.
    Train {
        #[arg(long, value_enum)]
        mode: ModelMode,
        /// Prepared data directory (defaults to paths.prepared).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Reuse an existing pretraining checkpoint (auto-* modes).
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a segment archive into a prediction dump.
    Infer {
        #[arg(long, value_enum)]
        mode: ModelMode,
        /// Model directory (defaults to paths.models/<mode>).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Archive to decode (defaults to the prepared test archive).
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Pin U instead of calibrating it on the validation archive.
        #[arg(long)]
        u: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Output dump file (defaults to paths.outputs/<mode>/predictions.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction dump against a labelled archive.
    Eval {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate several dumps side by side (NAME=PATH ...).
    Compare {
        #[arg(required = true, value_parser = parse_named)]
        dumps: Vec<(String, PathBuf)>,
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => {
            let path = Path::new(s);
            let name = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| format!("expected NAME=PATH, got {s}"))?;
            Ok((name, path.to_path_buf()))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let test_archive = || cfg.paths.prepared.join(commands::TEST_DIR);
    match cli.command {
        Command::Synth { out } => {
            let s = commands::synth(&cfg, &out)?;
            println!("wrote {} samples to {}", s.len(), out.display());
        }
        Command::Prepare { out } => {
            let out = out.unwrap_or_else(|| cfg.paths.prepared.clone());
            let summary = commands::prepare(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Train { mode, data, pretrained, out } => {
            let data = data.unwrap_or_else(|| cfg.paths.prepared.clone());
            let out = out.unwrap_or_else(|| cfg.paths.models.join(mode.name()));
            let outcome = commands::train(&cfg, mode, &data, &out, pretrained.as_deref())?;
            for r in &outcome.reports {
                print!("{}", r.to_log());
            }
            println!("checkpoint: {}", out.join(commands::CHECKPOINT_FILE).display());
        }
        Command::Infer {
            mode,
            model,
            archive,
            u,
            threshold,
            out,
        } => {
            let model = model.unwrap_or_else(|| cfg.paths.models.join(mode.name()));
            let archive = archive.unwrap_or_else(test_archive);
            let out = out.unwrap_or_else(|| cfg.paths.outputs.join(mode.name()).join("predictions.jsonl"));
            let calibration = cfg.paths.prepared.join(commands::VALIDATION_DIR);
            let dump = commands::infer(
                &cfg,
                &InferOptions {
                    model: &model,
                    archive: &archive,
                    calibration: &calibration,
                    u,
                    threshold,
                    out: &out,
                },
            )?;
            if dump.header.mode != autoset_core::inference::InferenceMode::Threshold {
                if let Some(u) = dump.header.u {
                    println!("U = {u}");
                }
            }
            println!("wrote {} predictions to {}", dump.records.len(), out.display());
        }
        Command::Eval { dump, archive, out } => {
            let archive = archive.unwrap_or_else(test_archive);
            let report = commands::eval(&dump, &archive, out.as_deref())?;
            print!("{}", report.to_text());
        }
        Command::Compare { dumps, archive, out } => {
            let archive = archive.unwrap_or_else(test_archive);
            let table = commands::compare(&dumps, &archive, out.as_deref())?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(inner) = &e {
                log::debug!("{inner:?}");
            }
            ExitCode::FAILURE
        }
    }
}
