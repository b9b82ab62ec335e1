use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use terrain_ipp::experiment::{self, PlannerKind, RunConfig};

#[derive(Parser)]
#[command(name = "terrain-ipp", version, about = "Simulated informative path planning for terrain mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo trials described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of cmaes,lattice,rig,coverage.
        #[arg(long, value_delimiter = ',')]
        planners: Option<Vec<PlannerKind>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a config file and print derived quantities.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            planners,
            trials,
            out,
            jobs,
        } => RunConfig::load(&config).and_then(|mut cfg| {
            if let Some(p) = planners {
                cfg.planner.planners = p;
            }
            if let Some(n) = trials {
                cfg.environment.trials = n;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            let result = experiment::run(&cfg, jobs)?;
            println!("planner,trials,trace,rmse,wrmse,mll,wmll");
            for r in &result.summary {
                println!(
                    "{},{},{:.3},{:.4},{:.4},{:.3},{:.3}",
                    r.planner, r.trials, r.trace, r.rmse, r.wrmse, r.mll, r.wmll
                );
            }
            println!("wrote {}", result.dir.display());
            Ok(true)
        }),
        Command::Validate { config } => RunConfig::load(&config).map(|cfg| {
            let report = cfg.validate();
            print!("{report}");
            report.is_valid()
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
