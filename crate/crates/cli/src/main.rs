use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use milne_cli::{run, Command, RunConfig};

/// Linearized Bose-condensate collision operator and half-space solver.
#[derive(Parser, Debug)]
#[command(name = "milne", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON run configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one field, e.g. `--set grid.n_x=16` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are config errors; --help and --version are not errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = RunConfig::load(cli.config.as_deref(), &cli.set).and_then(|mut cfg| {
        if let Some(dir) = cli.out {
            cfg.output.dir = dir;
        }
        run(cli.command, &cfg)
    });
    match result {
        Ok(files) => {
            log::info!("{} files written", files.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
