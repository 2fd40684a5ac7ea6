use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smcwake::harness::{compare_runs, recipes, run_config_file, Overrides, OUT_DIR_ENV};
use smcwake::trainers::Method;

#[derive(Parser)]
#[command(name = "smcwake", version, about = "Amortized inclusive-KL inference with LT-SMC gradient estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run {
        /// Config file (positional or `--config`).
        path: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        particles: Option<usize>,
    },
    /// Tabulate final and best divergences of several metrics files.
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Packaged experiments.
    Recipes {
        #[command(subcommand)]
        action: RecipeAction,
    },
}

#[derive(Subcommand)]
enum RecipeAction {
    List,
    Run {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output root; defaults to `$SMCWAKE_OUT_DIR` or `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_root(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { path, config, seed, method, out, steps, particles } => {
            let Some(path) = config.or(path) else {
                eprintln!("error: a config file is required");
                return ExitCode::from(2);
            };
            let overrides = Overrides { seed, method, out, steps, particles };
            match run_config_file(&path, &overrides) {
                Ok(o) => {
                    println!("wrote {}", o.out_dir.display());
                    if let Some(r) = &o.summary.final_metrics {
                        println!(
                            "step {} fwd_kl {:.6} rev_kl {:.6} sym_kl {:.6}",
                            r.step, r.fwd_kl, r.rev_kl, r.sym_kl
                        );
                    }
                    match o.summary.error {
                        Some(e) => {
                            eprintln!("error: {e}");
                            ExitCode::FAILURE
                        }
                        None => ExitCode::SUCCESS,
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Compare { files, json } => match compare_runs(&files) {
            Ok(c) => {
                if json {
                    match c.to_json() {
                        Ok(s) => println!("{s}"),
                        Err(e) => {
                            eprintln!("error: {e}");
                            return ExitCode::FAILURE;
                        }
                    }
                } else {
                    print!("{}", c.to_text());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Recipes { action: RecipeAction::List } => {
            for r in recipes::RECIPES {
                println!("{:<22} {}", r.name, r.description);
            }
            ExitCode::SUCCESS
        }
        Command::Recipes { action: RecipeAction::Run { name, seed, out } } => {
            match recipes::run_recipe(&name, &out_root(out), seed) {
                Ok(report) => {
                    println!("wrote {}", report.out_dir.display());
                    if let Some(c) = &report.comparison {
                        print!("{}", c.to_text());
                    }
                    if report.summaries.iter().any(|s| s.error.is_some()) {
                        ExitCode::FAILURE
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
