use std::process::ExitCode;

use clap::Parser;

use tfelab_cli::cli::{Cli, Command};
use tfelab_cli::{execute, reproduce, CliError, ExperimentConfig};

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Reproduce { manifest } => {
            let report = reproduce(manifest, cli.workers)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.all_match {
                Ok(())
            } else {
                Err(CliError::Mismatch(
                    report
                        .first_divergence
                        .clone()
                        .unwrap_or_else(|| "outputs differ".into()),
                ))
            }
        }
        cmd => {
            let (name, path) = cmd.experiment().expect("experiment command");
            let cfg = ExperimentConfig::load(name, path.map(|p| p.as_path()))?;
            let manifest = execute(&cfg, &cli.out, cli.workers)?;
            println!(
                "{}: {} files in {} ({:.2} s), config {}",
                manifest.command,
                manifest.files.len(),
                cli.out.display(),
                manifest.wall_time_s,
                &manifest.config_hash[..12]
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
