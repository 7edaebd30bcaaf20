//! `thumbsel` command-line front end.

mod commands;
mod manifest;
mod output;

use std::fs;
use std::path::PathBuf;

use clap::{ArgAction, Parser};
use thumbsel::config::Settings;

use crate::commands::{Command, Ctx, Failure};
use crate::manifest::ManifestBuilder;

#[derive(Parser, Debug)]
#[command(name = "thumbsel", version, about = "Popularity-driven thumbnail selection for micro-videos")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Leave wall-clock times out of logs and manifests.
    #[arg(long, global = true)]
    no_wall_clock: bool,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

fn effective_settings(cli: &Cli) -> Result<Settings, Failure> {
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        settings.train.seed = seed;
    }
    if cli.no_wall_clock {
        settings.train.wall_clock = false;
    }
    cli.command.apply_overrides(&mut settings);
    settings.validate()?;
    Ok(settings)
}

fn run(cli: Cli) -> i32 {
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create output directory {}: {e}", cli.out.display());
        return 2;
    }
    let (settings, settings_err) = match effective_settings(&cli) {
        Ok(s) => (s, None),
        Err(e) => {
            let mut s = Settings::default();
            s.train.wall_clock = !cli.no_wall_clock;
            (s, Some(e))
        }
    };
    let name = cli.command.name();
    let mut manifest = ManifestBuilder::new(
        name,
        settings.train.seed,
        cli.command.args_json(),
        settings.entries(),
        &cli.out,
        settings.train.wall_clock,
    );
    if let Some(cfg) = &cli.config {
        manifest.input(cfg);
    }
    let result = match settings_err {
        Some(e) => Err(e),
        None => {
            let ctx = Ctx {
                settings,
                out: cli.out.clone(),
            };
            cli.command.run(&ctx, &mut manifest)
        }
    };
    let (code, message) = match result {
        Ok(()) => (0, None),
        Err(f) => {
            eprintln!("error: {f}");
            (f.exit_code(), Some(f.to_string()))
        }
    };
    let record = manifest.finish(code, message);
    let path = cli.out.join(format!("{name}.manifest.json"));
    let json = serde_json::to_string_pretty(&record).expect("manifest serializes") + "\n";
    if let Err(e) = output::write_bytes(&path, json.as_bytes()) {
        eprintln!("error: could not write manifest: {e}");
        return code.max(2);
    }
    code
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    std::process::exit(run(cli));
}
