use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lubelastic::experiment::{self, ExperimentConfig, Mode, Resolution, CONFIG_VERSION};
use lubelastic::Error;

#[derive(Parser)]
#[command(name = "lubelastic", version, about = "Thin-film and thin-channel FSI experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a thin-film equation.
    Thinfilm {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Run the full-order fluid-plate solver.
    Fsi {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Solve the stationary Reynolds equation.
    Reynolds {
        #[command(subcommand)]
        action: SolveAction,
    },
    /// Convergence-rate studies.
    Verify {
        #[command(subcommand)]
        action: VerifyAction,
    },
    /// Built-in experiment presets.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
}

#[derive(Subcommand)]
enum RunAction {
    Run(RunArgs),
}

#[derive(Subcommand)]
enum SolveAction {
    Solve(RunArgs),
}

#[derive(Subcommand)]
enum VerifyAction {
    Rates(RunArgs),
}

#[derive(Subcommand)]
enum PresetsAction {
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use a built-in preset instead of a configuration file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// `n` or `n,m`.
    #[arg(long)]
    resolution: Option<Resolution>,
}

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LUBELASTIC_LOG", "warn")).init();
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Presets { action: PresetsAction::List } => {
            for p in experiment::list_presets() {
                println!("{:<22} {:<9} {}", p.id, format!("{:?}", p.mode).to_lowercase(), p.summary);
            }
            return ExitCode::SUCCESS;
        }
        Command::Thinfilm { action: RunAction::Run(a) } => (Mode::Thinfilm, a),
        Command::Fsi { action: RunAction::Run(a) } => (Mode::Fsi, a),
        Command::Reynolds { action: SolveAction::Solve(a) } => (Mode::Reynolds, a),
        Command::Verify { action: VerifyAction::Rates(a) } => (Mode::Rates, a),
    };
    run(mode, args)
}

fn load(mode: Mode, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(id)) => ExperimentConfig {
            version: CONFIG_VERSION,
            mode,
            preset: Some(id.clone()),
            params: None,
            output_dir: None,
            resolution: None,
        },
        (None, None) => return Err(Error::Config("pass --config <path> or --preset <id>".into())),
    };
    if config.mode != mode {
        return Err(Error::Config(format!(
            "configuration is for mode {:?}, not {:?}",
            config.mode, mode
        )));
    }
    if args.resolution.is_some() {
        config.resolution = args.resolution;
    }
    Ok(config)
}

fn run(mode: Mode, args: RunArgs) -> ExitCode {
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let config = match load(mode, &args) {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    let dir = args
        .output
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("lubelastic-out"));
    match experiment::run(&config, &dir) {
        Ok(manifest) => {
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
            if manifest.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification criteria failed; see {}", dir.display());
                ExitCode::from(EXIT_FAILED)
            }
        }
        Err(e) => fail(&e, Some(&dir)),
    }
}

fn fail(e: &Error, dir: Option<&PathBuf>) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_usage() {
        return ExitCode::from(EXIT_USAGE);
    }
    if e.is_numerical() {
        let diag = serde_json::to_string_pretty(&experiment::diagnostic(e)).expect("diagnostic serializes");
        println!("{diag}");
        if let Some(dir) = dir {
            if experiment::write_atomic(&dir.join("diagnostic.json"), format!("{diag}\n").as_bytes()).is_err() {
                log::warn!("could not write diagnostic.json");
            }
        }
        return ExitCode::from(EXIT_NUMERICAL);
    }
    ExitCode::from(EXIT_FAILED)
}
