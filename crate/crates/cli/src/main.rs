mod args;
mod commands;
mod error;

use std::process::ExitCode;

use args::{Command, ParseFailure};
use error::{Classify, Failure, Outcome};

fn init_logging() {
    let env = env_logger::Env::new().filter_or("DENSETRACK_LOG", "info");
    env_logger::Builder::from_env(env).format_timestamp(None).init();
}

fn dispatch(command: &Command) -> Outcome {
    match command {
        Command::Synth(a) => commands::synth::run(a),
        Command::Densify(a) => commands::densify::run(a),
        Command::Ensemble(a) => commands::ensemble::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::FcosTargets(a) => commands::fcos::run(a),
    }
}

fn run(argv: Vec<String>) -> Outcome {
    let resolved = match args::parse(argv) {
        Ok(r) => r,
        Err(ParseFailure::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() {
                Err(Failure::usage("invalid arguments"))
            } else {
                Ok(())
            };
        }
        Err(ParseFailure::Config(f)) => return Err(f),
    };
    let command = resolved.cli.command;
    let common = command.common();
    if let Some(path) = &common.config {
        log::info!("config file {}", path.display());
        for (k, v) in &resolved.file_entries {
            log::info!("  {k} = {v}");
        }
    }
    log::info!("resolved configuration: {command:#?}");

    let threads = common
        .parallel
        .map_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()), |n| n.get());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().internal()?;
    log::debug!("using {threads} worker threads");
    pool.install(|| dispatch(&command))
}

fn main() -> ExitCode {
    init_logging();
    let argv: Vec<String> = std::env::args().collect();
    let outcome = std::panic::catch_unwind(|| run(argv))
        .unwrap_or_else(|_| Err(Failure::Internal(anyhow::anyhow!("unexpected panic"))));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("densetrack: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
