mod commands;
mod plot;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "longtrack", version, about = "Longitudinal audio-biomarker pipeline")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic longitudinal cohort with a manifest.
    Synth(commands::SynthArgs),
    /// Screen a manifest and write prepared (mono, 16 kHz, trimmed) clips.
    Preprocess(commands::PreprocessArgs),
    /// Train the sequential model and the single/average baselines.
    Train(commands::TrainArgs),
    /// Score a partition and write the metric report.
    Eval(commands::EvalArgs),
    /// Write one participant's probability trajectory.
    Trajectory(commands::TrajectoryArgs),
    /// Render a trajectory CSV as SVG.
    Plot(commands::PlotArgs),
    /// Collect evaluation (and training) artifacts into one text summary.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn }).init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Trajectory(a) => commands::trajectory(a),
        Command::Plot(a) => commands::plot(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("longtrack: {e}");
            ExitCode::from(e.code())
        }
    }
}
