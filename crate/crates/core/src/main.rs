use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use splt::config::ScenarioConfig;
use splt::scenarios;

#[derive(Parser)]
#[command(name = "splt", version, about = "Secured position location and tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named scenario and write its CSV files.
    Run(RunArgs),
    /// Print the effective configuration.
    Config(ConfigArgs),
}

#[derive(clap::Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a value, e.g. `--set channel.sigma_t=3e-9`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(clap::Args)]
struct RunArgs {
    /// detection, multi-target, trajectory, switching, energy, friendliness or all.
    name: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Monte Carlo trials per detection grid point.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(path: Option<&PathBuf>, overrides: &[String]) -> Result<ScenarioConfig, Box<dyn std::error::Error>> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => ScenarioConfig::default(),
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Config(args) => {
            let cfg = load(args.config.as_ref(), &args.overrides)?;
            cfg.validate()?;
            print!("{}", cfg.echo());
        }
        Command::Run(args) => {
            let mut cfg = load(args.config.as_ref(), &args.overrides)?;
            if let Some(seed) = args.master_seed {
                cfg.sim.master_seed = seed;
            }
            if let Some(trials) = args.trials {
                cfg.sfv.trials = trials;
            }
            if let (Some(a), Some(b)) = (&args.name, &args.scenario) {
                if a != b {
                    return Err(format!("scenario given twice: `{a}` and `{b}`").into());
                }
            }
            if let Some(name) = args.name.or(args.scenario) {
                cfg.sim.scenario = name;
            }
            let files = scenarios::run(&cfg.sim.scenario.clone(), &cfg, &args.out)?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("splt: {e}");
            ExitCode::FAILURE
        }
    }
}
