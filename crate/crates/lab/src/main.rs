use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use loopsoup_lab::{calibrate_for, exit_code, parse_config, run, RunConfig, RunError};

/// Loop-soup and excursion experiments on lattice domains.
#[derive(Parser)]
#[command(name = "loopsoup-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its report.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List experiments and their claim ids.
    List,
    /// Print the lattice calibration and the arc couplings of a config's domain.
    Calibrate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads; does not change results.
    #[arg(long)]
    workers: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replicas {
            cfg.replicas = r;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, RunError> {
    let mut cfg = parse_config(path)?;
    overrides.apply(&mut cfg);
    // overrides are re-validated through the same path as the file
    let text = cfg.to_canonical_toml();
    Ok(loopsoup_lab::parse_config_str(&text, &path.display().to_string())?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let started = Instant::now();
    let code = match cli.command {
        Command::List => {
            print!("{}", loopsoup_lab::run::catalog_text());
            0
        }
        Command::Run { config, overrides } => match load(&config, &overrides).and_then(|c| run(&c)) {
            Ok(outcome) => {
                for f in &outcome.files {
                    eprintln!("wrote {}", f.display());
                }
                for c in &outcome.report.claims {
                    println!("{:<12} {:<26} {:<16} {}", c.verdict, c.claim, c.label, c.estimate);
                }
                println!("{}: {}", outcome.report.experiment, outcome.report.verdict);
                exit_code(outcome.report.verdict)
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Calibrate { config, overrides } => match load(&config, &overrides).and_then(|c| calibrate_for(&c)) {
            Ok(out) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&out).expect("calibration serializes")
                );
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    eprintln!("elapsed {:.2?}", started.elapsed());
    ExitCode::from(code as u8)
}
