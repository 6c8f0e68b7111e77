//! Command-line driver for the phone-level content/style pipeline.

mod artifacts;
mod config;
mod data;
mod generate;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use plcsd_core::synth::GenerationMode;
use plcsd_core::Error;

use crate::config::LoadedConfig;
use crate::data::PrepareOutcome;
use crate::generate::{AudioPair, SplitChoice, SyntheticRequest};

#[derive(Parser, Debug)]
#[command(name = "plcsd", version, about = "Phone-level content/style disentanglement for expressive speech synthesis")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Print debug output.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Run configuration (JSON).
    #[arg(long, short = 'c')]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Continue from the latest checkpoint of this stage.
    #[arg(long)]
    resume: bool,
    /// Override the configured number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute mel features, validate alignments and split the corpus.
    Prepare(ConfigArg),
    /// Train the phone-level disentanglement model.
    TrainPlcsd(TrainArgs),
    /// Train the utterance-level acoustic model on a frozen PL-CSD model.
    TrainUtterance(TrainArgs),
    /// Train the style predictor used for text-to-speech.
    TrainPredictor {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Resynthesize a corpus utterance from its own style.
    Reconstruct {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long = "utt")]
        utterance: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Speak new phones in the style of a reference utterance.
    Transfer {
        #[command(flatten)]
        config: ConfigArg,
        /// File of whitespace-separated phone labels.
        #[arg(long)]
        text_phones: PathBuf,
        /// Corpus id of the style reference.
        #[arg(long = "ref")]
        reference: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Speak phones with a predicted style.
    Tts {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        text_phones: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Pitch and spectral metrics between reference and synthesized audio.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, requires = "synthesized", conflicts_with = "pairs")]
        reference: Option<PathBuf>,
        #[arg(long, requires = "reference")]
        synthesized: Option<PathBuf>,
        /// JSON list of {"reference", "synthesized"} objects.
        #[arg(long, required_unless_present = "reference")]
        pairs: Option<PathBuf>,
        /// Write the report here instead of only printing it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-frame aligned pitch diagnostics.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write content and style embeddings of corpus segments as TSV.
    ExportEmbeddings {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "valid")]
        split: SplitChoice,
        /// Restrict to these phones (comma separated).
        #[arg(long, value_delimiter = ',')]
        phones: Vec<String>,
        /// Segments sampled per phone when --phones is given.
        #[arg(long, default_value_t = 50)]
        per_phone: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic corpus with known phone and style factors.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        utterances: usize,
        #[arg(long, default_value_t = 5)]
        phones: usize,
        #[arg(long, default_value_t = 3)]
        styles: usize,
        #[arg(long, default_value_t = 3)]
        min_phones: usize,
        #[arg(long, default_value_t = 6)]
        max_phones: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load(arg: &ConfigArg) -> anyhow::Result<LoadedConfig> {
    LoadedConfig::load(&arg.config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prepare(c) => {
            let cfg = load(&c)?;
            match data::prepare(&cfg)? {
                PrepareOutcome::Computed { kept, rejected } => info!("prepare: kept {kept} utterances, rejected {rejected}"),
                PrepareOutcome::CacheHit => {}
            }
        }
        Command::TrainPlcsd(a) => train::train_plcsd(&load(&a.config)?, a.resume, a.epochs)?,
        Command::TrainUtterance(a) => train::train_utterance(&load(&a.config)?, a.resume, a.epochs)?,
        Command::TrainPredictor { config, epochs } => train::train_predictor(&load(&config)?, epochs)?,
        Command::Reconstruct { config, utterance, name } => {
            generate::generate(&load(&config)?, GenerationMode::Reconstruct, None, Some(&utterance), name)?;
        }
        Command::Transfer {
            config,
            text_phones,
            reference,
            name,
        } => {
            let cfg = load(&config)?;
            let phones = generate::read_phones(&text_phones)?;
            generate::generate(&cfg, GenerationMode::Transfer, Some(phones), Some(&reference), name)?;
        }
        Command::Tts { config, text_phones, name } => {
            let cfg = load(&config)?;
            let phones = generate::read_phones(&text_phones)?;
            generate::generate(&cfg, GenerationMode::Tts, Some(phones), None, name)?;
        }
        Command::Evaluate {
            config,
            reference,
            synthesized,
            pairs,
            out,
            csv,
        } => {
            let cfg = load(&config)?;
            let (pairs, single) = match (reference, synthesized, pairs) {
                (Some(reference), Some(synthesized), None) => (vec![AudioPair { reference, synthesized }], true),
                (None, None, Some(p)) => (generate::read_pairs(&p)?, false),
                _ => return Err(Error::Validation("give --reference with --synthesized, or --pairs".into()).into()),
            };
            let report = generate::evaluate(&cfg, &pairs, single, out.as_deref(), csv.as_deref())?;
            println!("{report}");
        }
        Command::ExportEmbeddings {
            config,
            out,
            split,
            phones,
            per_phone,
            seed,
        } => {
            generate::export(&load(&config)?, &out, split, &phones, per_phone, seed)?;
        }
        Command::MakeSynthetic {
            out,
            utterances,
            phones,
            styles,
            min_phones,
            max_phones,
            seed,
        } => {
            let req = SyntheticRequest {
                utterances,
                phones,
                styles,
                min_phones,
                max_phones,
                seed,
            };
            generate::make_synthetic(&out, &req).with_context(|| format!("writing synthetic corpus to {}", out.display()))?;
        }
    }
    Ok(())
}

/// 2 for invalid input, 3 for numeric failures, 4 for a missing earlier
/// stage, 1 for anything else (I/O and the like).
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Validation(_) | Error::Parse { .. } | Error::UnknownPhone(_) | Error::Shape(_) | Error::Format(_) => 2,
                Error::Numeric { .. } => 3,
                Error::MissingPrerequisite(_) => 4,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet {
        "warn"
    } else if cli.verbose {
        "debug"
    } else {
        "info"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
