use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use porehomog::harness::{exit, exit_code, run_command, Command, ExperimentConfig};
use porehomog::HomogError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Cell,
    Micro,
    Macro,
    Unfold,
    Sweep,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Cell => Command::Cell,
            Sub::Micro => Command::Micro,
            Sub::Macro => Command::Macro,
            Sub::Unfold => Command::Unfold,
            Sub::Sweep => Command::Sweep,
        }
    }
}

/// Pore-scale phase-field flow, cell problems and two-scale checks.
#[derive(Debug, Parser)]
#[command(name = "homog", version)]
struct Cli {
    /// Experiment to run; must agree with `command=` in the config.
    #[arg(value_enum)]
    command: Sub,
    /// `key=value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out=` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random initial data (overrides `seed=` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<i32, HomogError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| HomogError::ConfigMissing(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if cfg.command != cli.command.command() {
        return Err(HomogError::ConfigMissing(format!(
            "subcommand {} does not match command={} in {}",
            cli.command.command().label(),
            cfg.command.label(),
            cli.config.display()
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| HomogError::ConfigMissing("no output directory (use --out or out=)".into()))?;
    let outcome = run_command(&cfg, &out)?;
    println!("{}", outcome.summary);
    if outcome.exit_code() == exit::VERDICT {
        eprintln!("verdict failed: {}", outcome.summary);
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
