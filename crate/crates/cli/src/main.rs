use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kramers_core::config::{parse_stage_list, ExperimentConfig, Stage};
use kramers_core::experiment::{render_report, run_experiment, write_outputs, ExperimentReport};
use kramers_core::KramersError;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "kramers", version, about = "Metastable transition times for mean-field diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (flat TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated stage list used by `all`.
    #[arg(long, global = true)]
    stages: Option<String>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    Landscape,
    Predict,
    Simulate,
    VerifyCramer,
    VerifyLaplace,
    VerifyObservables,
    /// Re-render tables and plots from an existing report.json.
    Report,
    /// Run the stages listed in the config, or those given by --stages.
    All,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        match self {
            Command::Landscape => Some(Stage::Landscape),
            Command::Predict => Some(Stage::Predict),
            Command::Simulate => Some(Stage::Simulate),
            Command::VerifyCramer => Some(Stage::VerifyCramer),
            Command::VerifyLaplace => Some(Stage::VerifyLaplace),
            Command::VerifyObservables => Some(Stage::VerifyObservables),
            Command::Report | Command::All => None,
        }
    }
}

enum Failure {
    Config(String),
    Stage(String),
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match cli.command.stage() {
        Some(stage) => cfg.stages = vec![stage],
        None => {
            if let Some(list) = &cli.stages {
                cfg.stages = parse_stage_list(list).map_err(|e| Failure::Config(e.to_string()))?;
            }
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let cfg = load(cli)?;
    if cli.command == Command::Report {
        let path = cfg.out_dir.join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Failure::Stage(format!("{}: {e}", path.display())))?;
        let report = ExperimentReport::from_json(&text).map_err(|e| Failure::Stage(e.to_string()))?;
        return render_report(&report, &cfg.out_dir).map_err(|e| Failure::Stage(e.to_string()));
    }
    let (report, timing) = run_experiment(&cfg).map_err(|e| match e {
        KramersError::ConfigInvalid(_) => Failure::Config(e.to_string()),
        other => Failure::Stage(other.to_string()),
    })?;
    write_outputs(&report, Some(&timing), &cfg.out_dir).map_err(|e| Failure::Stage(e.to_string()))?;
    log::info!("report written to {}", cfg.out_dir.join("report.json").display());
    let failed = report.failed_stages();
    if failed.is_empty() {
        Ok(())
    } else {
        let names: Vec<&str> = failed.iter().map(|s| s.name()).collect();
        Err(Failure::Stage(format!("failed stages: {}", names.join(", "))))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KRAMERS_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            log::error!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Stage(msg)) => {
            log::error!("{msg}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
