//! The `textseek` command line: dataset generation, training, indexing,
//! retrieval, evaluation, annotation, ablations and similarity histograms.

pub mod args;
pub mod commands;
pub mod error;
pub mod experiment;
pub mod hist;
pub mod settings;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::Result;
use crate::settings::{create_dir, write_json, RunManifest, Settings, RUN_FILE};

/// Runs a parsed command line.
pub fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    let settings = Settings::resolve(cli.config.as_deref(), cli.seed)?;
    let out = cli.out.as_path();
    create_dir(out)?;
    let mut train = None;
    let mut synth = None;
    match &cli.command {
        Command::GenData(a) => {
            commands::gen_data(a, &settings, out)?;
            synth = Some(&settings.synth);
        }
        Command::Train(a) => train = Some(commands::train_model(a, &settings, out)?),
        Command::Index(a) => commands::index(a, out)?,
        Command::Retrieve(a) => {
            commands::retrieve_queries(a, out)?;
        }
        Command::EvalMap(a) => {
            commands::eval_map(a, out)?;
        }
        Command::Annotate(a) => commands::annotate_image(a, out)?,
        Command::Ablate(a) => {
            commands::ablate(a, &settings, out)?;
            train = Some(settings.train_with(&a.overrides)?);
        }
        Command::PlotHist(a) => {
            commands::plot_hist(a, &settings, out)?;
        }
    }
    let manifest = RunManifest {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: settings.seed,
        args: argv.iter().skip(1).cloned().collect(),
        train: train.as_ref(),
        synth,
    };
    write_json(&out.join(RUN_FILE), &manifest)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // A second initialization in the same process keeps the first logger.
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Parses `argv`, runs the command and returns the process exit code: 0 on
/// success, 1 for usage errors, 2 for failures while running.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    let text: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &text) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
