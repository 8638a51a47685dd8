//! Command-line front end for corpus generation, pretraining, synthesis and
//! evaluation.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numerical failure.

mod data;
mod report;
mod runconfig;
mod study;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use runconfig::UsageError;

#[derive(Parser, Debug)]
#[command(name = "ctxsynth", version, about = "In-context latent diffusion for tabular data synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a random task manifest.
    Plan(data::PlanArgs),
    /// Materialize a corpus directory from a task manifest.
    Corpus(data::CorpusArgs),
    /// Pretrain a denoiser on a corpus directory.
    Pretrain(train::PretrainArgs),
    /// Generate a synthetic table conditioned on a real one.
    Synth(train::SynthArgs),
    /// Score a synthetic table against train/validation/test splits.
    Eval(study::EvalArgs),
    /// Trace quality and privacy over training steps or context ratios.
    Frontier(study::FrontierArgs),
    /// Run a pretraining ablation end to end and score it.
    Ablate(study::AblateArgs),
    /// Aggregate metric reports into tables and correlation matrices.
    Report(report::ReportArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<ctxsynth::Error>() {
            return match e {
                ctxsynth::Error::Config(_) | ctxsynth::Error::Contract(_) | ctxsynth::Error::Json(_) => 2,
                ctxsynth::Error::Numerical(_) => 4,
                _ => 3,
            };
        }
    }
    3
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Plan(a) => data::plan(a),
        Command::Corpus(a) => data::corpus(a),
        Command::Pretrain(a) => train::pretrain_cmd(a),
        Command::Synth(a) => train::synth_cmd(a),
        Command::Eval(a) => study::eval_cmd(a),
        Command::Frontier(a) => study::frontier_cmd(a),
        Command::Ablate(a) => study::ablate_cmd(a),
        Command::Report(a) => report::report_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
