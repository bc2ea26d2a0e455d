use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use nlschwarz_cli::{cmd_mesh, cmd_report, cmd_solve, ExperimentConfig, Plan};

#[derive(Parser)]
#[command(name = "nlschwarz", version, about = "Nonlinear Schwarz experiments on perforated domains")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load the fine mesh and describe its partitions.
    Mesh(RunArgs),
    /// Run every method on every partition.
    Solve(RunArgs),
    /// Merge the tables of earlier solve runs.
    Report {
        /// Output directory of a solve run; may be repeated.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Also write the merged tables to `<out>/report.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Run independent combinations concurrently.
    #[arg(long)]
    concurrent: bool,
}

impl RunArgs {
    fn plan(&self) -> Result<Plan> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if self.out.is_some() {
            config.out = self.out.clone();
        }
        if self.seed.is_some() {
            config.seed = self.seed;
        }
        config.concurrent |= self.concurrent;
        Ok(config.validate().with_context(|| format!("in {}", self.config.display()))?)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Mesh(args) => {
            let out = cmd_mesh(&args.plan()?)?;
            println!("{}", std::fs::read_to_string(out.join("mesh.txt"))?);
        }
        Command::Solve(args) => {
            let (out, _) = cmd_solve(&args.plan()?)?;
            print!("{}", std::fs::read_to_string(out.join("summary.txt"))?);
        }
        Command::Report { runs, out } => {
            let text = cmd_report(&runs)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.txt"), &text)?;
            }
            print!("{text}");
        }
    }
    Ok(())
}
