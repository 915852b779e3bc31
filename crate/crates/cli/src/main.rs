use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qclab::error::Result;
use qclab::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "qclab", version, about = "Quantum-classical correspondence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a named preset
    Run {
        /// TOML experiment config
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Output directory; defaults to the config's output_dir
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Override run.n_samples
        #[arg(long)]
        samples: Option<usize>,
        /// Override master_seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List or print presets
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Check a config without running it
    Validate { config: PathBuf },
    /// Summarize a finished run directory
    Report { run_dir: PathBuf },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as TOML
    Show { name: String },
}

fn load(config: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig> {
    match (config, preset) {
        (Some(path), _) => ExperimentConfig::load(path),
        (None, Some(name)) => harness::preset(name),
        (None, None) => unreachable!("clap requires one of config or --preset"),
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            config,
            preset,
            output,
            samples,
            seed,
        } => {
            let mut cfg = load(config.as_deref(), preset.as_deref())?;
            if let (Some(n), Some(run)) = (samples, cfg.run.as_mut()) {
                run.n_samples = n;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let dir = output.unwrap_or_else(|| cfg.output_dir.clone());
            let manifest = harness::run(&cfg, &dir)?;
            let verdict = match manifest.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "done",
            };
            println!("{} {verdict} -> {}", manifest.name, dir.display());
            for f in &manifest.files {
                println!("  {} {} {}", f.sha256, f.bytes, f.path);
            }
            Ok(harness::manifest_exit_code(&manifest))
        }
        Command::Preset {
            action: PresetAction::List,
        } => {
            let width = harness::PRESETS.iter().map(|n| n.len()).max().unwrap_or(0);
            for name in harness::PRESETS {
                println!("{name:<width$}  {}", harness::describe(name).unwrap_or_default());
            }
            Ok(harness::EXIT_OK)
        }
        Command::Preset {
            action: PresetAction::Show { name },
        } => {
            print!("{}", harness::preset(&name)?.to_toml_string()?);
            Ok(harness::EXIT_OK)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok ({}, sha256 {})", config.display(), cfg.experiment.as_str(), cfg.hash()?);
            Ok(harness::EXIT_OK)
        }
        Command::Report { run_dir } => {
            print!("{}", harness::render_report(&run_dir)?);
            Ok(harness::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            harness::error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
