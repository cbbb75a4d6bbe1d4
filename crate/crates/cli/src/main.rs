use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use finsler_cli::{convergence_study, exit_code, load_scenario, run_files, Check, FileResult, RunError};

#[derive(Debug, Parser)]
#[command(name = "finsler", version, about = "Solve and check anisotropic capacity problems from scenario files")]
struct Cli {
    /// Overrides the seed of every scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Scenarios run in parallel (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the checks listed in each scenario.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Refinement study over halving mesh sizes.
    Study {
        config: PathBuf,
        /// Mesh sizes, coarse to fine; defaults to the scenario's `mesh.h`.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        h_list: Vec<f64>,
    },
    /// Run only the rigidity probe.
    Probe {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
}

fn report(results: &[FileResult]) {
    for r in results {
        match &r.outcome {
            Ok(o) => {
                for w in &o.warnings {
                    eprintln!("warning: {}: {w}", o.name);
                }
                for f in &o.failures {
                    eprintln!("FAIL {}: {f}", o.name);
                }
                let verdict = if o.summary.verdict.is_empty() { String::new() } else { format!(" ({})", o.summary.verdict) };
                println!("{} {}{verdict} -> {}", o.summary.status, o.name, o.dir.display());
            }
            Err(e) => eprintln!("error: {e}"),
        }
    }
}

fn finish(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("error: {e}");
    finish(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    let only_rigidity = [Check::Rigidity];
    let (configs, only) = match &cli.command {
        Command::Run { configs } => (configs, None),
        Command::Probe { configs } => (configs, Some(&only_rigidity[..])),
        Command::Study { config, h_list } => {
            let scenario = match load_scenario(config, cli.seed, None) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let hs = if h_list.is_empty() { scenario.mesh.h.clone() } else { h_list.clone() };
            return match convergence_study(&scenario, &hs, &cli.out_dir) {
                Ok(study) => {
                    for w in &study.warnings {
                        eprintln!("warning: {w}");
                    }
                    print!("{}", finsler_cli::study::study_csv(&study.rows));
                    println!("wrote {}", study.csv_path.display());
                    finish(0)
                }
                Err(e) => fail(e),
            };
        }
    };
    match run_files(configs, &cli.out_dir, cli.seed, only) {
        Ok(results) => {
            report(&results);
            finish(exit_code(&results))
        }
        Err(e) => fail(e),
    }
}
