use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "spinlab",
    version,
    about = "Run lattice-to-continuum convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides [output] dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the studies
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for defect placement (overrides [defects] seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the studies listed in the configuration
    Run { config: PathBuf },
    /// Parse and validate a configuration, printing the resolved values
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let path = match &cli.command {
        Command::Run { config } | Command::Validate { config } => config.clone(),
    };
    let mut cfg = match spinlab_cli::parse_config(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.set_out_dir(out);
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("--threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::Validate { .. } => {
            for line in &cfg.resolved {
                println!("{line}");
            }
            let names: Vec<&str> = cfg.studies.iter().map(|s| s.name()).collect();
            println!(
                "studies: {}",
                if names.is_empty() {
                    "none".to_string()
                } else {
                    names.join(", ")
                }
            );
            ExitCode::SUCCESS
        }
        Command::Run { .. } => match spinlab_cli::run(cfg, Some(&path), cli.threads) {
            Ok(manifest) => {
                print!("{}", manifest.render());
                for r in &manifest.records {
                    if !r.outcome.is_success() {
                        eprintln!("study {} did not pass", r.study.name());
                    }
                }
                ExitCode::from(manifest.exit_code() as u8)
            }
            Err(e) => {
                eprintln!("cannot write outputs: {e}");
                ExitCode::from(2)
            }
        },
    }
}
