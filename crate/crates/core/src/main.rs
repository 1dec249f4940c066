use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use advctl::harness::run::summary_csv;
use advctl::harness::{resolve_output_dir, run_experiment, ExperimentConfig, Kind, RawConfig};
use advctl::selftest::{run_check, CRITERIA};
use advctl::Error;

/// Adversarial machine learning as optimal control: run attack and defense
/// experiments from a config file.
#[derive(Debug, Parser)]
#[command(name = "advctl", version)]
struct Cli {
    /// Experiment config (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run this seed only, replacing `experiment.seeds`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides ADVCTL_OUT and `experiment.output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Poison a batch learner's training set.
    PoisonBatch,
    /// Poison a gradient-descent learner's training sequence.
    PoisonSeq,
    /// Test-time evasion of a fixed linear model.
    Evade,
    /// Adversarial training against margin violations.
    Defend,
    /// Reward shaping against a UCB bandit.
    ShapeRewards,
    /// Check a config without running anything.
    Validate,
    /// Run the acceptance suite.
    Selftest {
        /// Run a single criterion (1 to 7).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
        criterion: Option<u8>,
    },
}

const EXIT_INVALID: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = match cli.command {
        Command::PoisonBatch => Kind::PoisonBatch,
        Command::PoisonSeq => Kind::PoisonSeq,
        Command::Evade => Kind::Evade,
        Command::Defend => Kind::Defend,
        Command::ShapeRewards => Kind::ShapeRewards,
        Command::Validate => return report(validate(&cli)),
        Command::Selftest { criterion } => return selftest(criterion),
    };
    report(run(&cli, kind))
}

fn report(outcome: Result<ExitCode, Error>) -> ExitCode {
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(match e {
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_INVALID,
        })
    })
}

fn load(cli: &Cli) -> Result<RawConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--config PATH is required".into()))?;
    RawConfig::load(path)
}

fn run(cli: &Cli, kind: Kind) -> Result<ExitCode, Error> {
    let raw = load(cli)?;
    let mut config = ExperimentConfig::from_raw(&raw, Some(kind))?;
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    let out = resolve_output_dir(cli.out.as_deref(), &config);
    let summary = run_experiment(&config, &out)?;
    print!("{}", summary_csv(&summary.rows, config.record_wall_time));
    eprintln!("wrote {}", summary.dir.display());
    if summary.infeasible {
        eprintln!("goal infeasible for at least one seed");
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(cli: &Cli) -> Result<ExitCode, Error> {
    let raw = load(cli)?;
    let kinds: Vec<Option<Kind>> = if raw.declares_kind() {
        vec![None]
    } else {
        raw.sections().into_iter().map(Some).collect()
    };
    if kinds.is_empty() {
        return Err(Error::InvalidInput("config has no experiment sections".into()));
    }
    for k in kinds {
        let config = ExperimentConfig::from_raw(&raw, k)?;
        println!("ok: {} ({} seeds)", config.kind(), config.seeds.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn selftest(criterion: Option<u8>) -> ExitCode {
    let ids = criterion.map_or(CRITERIA.to_vec(), |c| vec![c]);
    let mut all = true;
    for id in ids {
        let r = run_check(id);
        println!("{r}");
        all &= r.passed;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVALID)
    }
}
