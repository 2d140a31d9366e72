//! `lepra`: run the within-host leprosy model from the command line.
//!
//! Exit codes: 0 success, 1 numerical or I/O failure, 2 invalid
//! configuration, 3 a reproduction target ran but missed its tolerance.

mod commands;
mod config;
mod output;
mod repro;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::SensitivityKind;
use config::{ConfigError, ScenarioConfig};
use output::OutDir;

#[derive(Parser)]
#[command(
    name = "lepra",
    version,
    about = "Within-host leprosy dynamics, sensitivity and drug-control experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter preset: table1, table2 or table3.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `--set params.beta=0.01`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the model and write the trajectory.
    Simulate,
    /// R0 and the equilibria.
    Equilibria,
    /// Eigenvalues and classification at each equilibrium.
    Stability,
    /// Sweep one rate and record R0, I* and stability.
    Bifurcate,
    /// Bacterial load after the doubling time over an (α, γ) grid.
    Heatmap,
    /// Latin hypercube sensitivity analysis.
    Sensitivity {
        #[arg(value_enum)]
        kind: SensitivityKind,
    },
    /// Solve the optimal drug-control problem for one combination.
    Optimize,
    /// Solve for several drug combinations side by side.
    Compare,
    /// Rank drug combinations by their reduction of R0.
    Rank,
    /// Rebuild a published table or figure and check it.
    Repro {
        #[arg(value_enum)]
        target: repro::Target,
    },
    /// Check the configuration without running anything.
    Validate,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Simulate => "simulate".into(),
            Command::Equilibria => "equilibria".into(),
            Command::Stability => "stability".into(),
            Command::Bifurcate => "bifurcate".into(),
            Command::Heatmap => "heatmap".into(),
            Command::Sensitivity { kind } => format!("sensitivity {kind:?}").to_lowercase(),
            Command::Optimize => "optimize".into(),
            Command::Compare => "compare".into(),
            Command::Rank => "rank".into(),
            Command::Repro { target } => format!("repro {}", target.id()),
            Command::Validate => "validate".into(),
        }
    }

    /// Preset used when neither the file nor `--preset` names one.
    fn default_preset(&self) -> &'static str {
        match self {
            Command::Bifurcate | Command::Heatmap | Command::Sensitivity { .. } => "table1",
            _ => "table3",
        }
    }
}

/// Prints to stdout, ignoring a closed pipe.
fn say(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

enum Outcome {
    Done,
    Failed,
}

fn load(common: &Common) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = config::load(common.config.as_deref(), &common.overrides)?;
    if let Some(p) = &common.preset {
        cfg.preset = Some(p.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
        if let Some(b) = cfg.sensitivity.as_mut() {
            b.seed = Some(s);
        }
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome> {
    let cfg = load(&cli.common)?;
    let preset = cli.command.default_preset();
    if let Command::Validate = cli.command {
        say(&commands::validate(&cfg, preset)?);
        return Ok(Outcome::Done);
    }
    let report = cfg.check(preset);
    if !report.is_valid() {
        return Err(ConfigError(report.violations).into());
    }
    let mut out = OutDir::create(cfg.out.as_deref().unwrap_or("out".as_ref()))?;
    let mut outcome = Outcome::Done;
    let mut seed = None;
    let summary = match &cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out, preset)?,
        Command::Equilibria => commands::equilibria_cmd(&cfg, &mut out, preset)?,
        Command::Stability => commands::stability(&cfg, &mut out, preset)?,
        Command::Bifurcate => commands::bifurcate(&cfg, &mut out, preset)?,
        Command::Heatmap => commands::heatmap(&cfg, &mut out, preset)?,
        Command::Sensitivity { kind } => {
            seed = Some(cfg.sensitivity_seed());
            commands::sensitivity(&cfg, &mut out, preset, *kind)?
        }
        Command::Optimize => commands::optimize(&cfg, &mut out, preset)?,
        Command::Compare => commands::compare(&cfg, &mut out, preset)?,
        Command::Rank => commands::rank(&cfg, &mut out, preset)?,
        Command::Repro { target } => {
            seed = Some(cfg.seed.unwrap_or(42));
            let v = repro::run(*target, &cfg, &mut out)?;
            if !v.pass {
                outcome = Outcome::Failed;
            }
            v.render()
        }
        Command::Validate => unreachable!("handled above"),
    };
    let dir = out.finish(&cli.command.name(), &cfg, seed)?;
    say(&summary);
    eprintln!("wrote {}", dir.display());
    Ok(outcome)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
