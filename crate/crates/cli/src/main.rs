//! `actorscene` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use actorscene::longterm::Strategy;
use actorscene::relation_model::Variant;
use actorscene::synthdata::ProposalSampling;
use actorscene::Error;
use clap::{Parser, Subcommand, ValueEnum};

use commands::{EvalArgs, InspectArgs, Phase, TrainArgs};

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "ACTORSCENE_THREADS";

#[derive(Parser)]
#[command(name = "actorscene", version, about = "Actor-scene relation transformer on a synthetic action world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Short,
    Long,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a run config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write into a non-empty directory.
        #[arg(long)]
        force: bool,
    },
    /// Train the short-term model or fit long-term aggregation weights.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "short")]
        phase: PhaseArg,
        /// Phase-1 checkpoint for `--phase long` (default: <out>/short.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from <out>/last.ckpt when present.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint over a sweep of settings.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Aggregation strategies: weighted, max, avg, top<k>.
        #[arg(long, value_delimiter = ',', value_parser = commands::parse_strategy)]
        strategy: Vec<Strategy>,
        /// Temporal supports in seconds.
        #[arg(long, value_delimiter = ',')]
        support: Vec<f64>,
        /// Proposal confidence thresholds.
        #[arg(long, value_delimiter = ',')]
        threshold: Vec<f64>,
        /// Also evaluate dense top-K proposals.
        #[arg(long)]
        topk: bool,
        /// Expected relation architecture of the checkpoint.
        #[arg(long, value_parser = commands::parse_variant)]
        variant: Option<Variant>,
    },
    /// Export per-layer attention of one actor token.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clip: String,
        #[arg(long)]
        attention: PathBuf,
        /// Proposal index of the query token (default: a paired actor, else 0).
        #[arg(long)]
        actor: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::NonFiniteLoss { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> actorscene::Result<()> {
    match cli.command {
        Command::Generate { config, out, force } => commands::generate(&config, out, force),
        Command::Train {
            config,
            data,
            out,
            phase,
            checkpoint,
            resume,
        } => commands::train(TrainArgs {
            config,
            data,
            out,
            phase: match phase {
                PhaseArg::Short => Phase::Short,
                PhaseArg::Long => Phase::Long,
            },
            checkpoint,
            resume,
        }),
        Command::Eval {
            checkpoint,
            data,
            out,
            strategy,
            support,
            threshold,
            topk,
            variant,
        } => {
            let mut samplings: Vec<ProposalSampling> =
                threshold.into_iter().map(ProposalSampling::Threshold).collect();
            if topk {
                samplings.push(ProposalSampling::TopK);
            }
            commands::eval(EvalArgs {
                checkpoint,
                data,
                out,
                strategies: strategy,
                supports: support,
                samplings,
                variant,
            })
        }
        Command::Inspect {
            checkpoint,
            data,
            clip,
            attention,
            actor,
        } => commands::inspect(InspectArgs {
            checkpoint,
            data,
            clip,
            attention,
            actor,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("cannot size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got `{v}`");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
