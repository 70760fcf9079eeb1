use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurodecode_cli::{compare, run_experiment, synthesize, CompareMode, ExperimentConfig};

#[derive(Parser)]
#[command(name = "neurodecode", version, about = "Leave-two-out decoding benchmarks for word embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every subject × model × direction of an experiment config.
    Run { config: PathBuf },
    /// Compare two run artifacts (mismatch or voxel predictability CSVs).
    Analyze {
        #[arg(long, value_enum)]
        mode: CompareMode,
        /// Mismatch values above this count as errors.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Voxels per model in voxel-overlap mode.
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        run_a: PathBuf,
        run_b: PathBuf,
    },
    /// Generate a synthetic dataset and a config that runs it.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => ExperimentConfig::load(&config)
            .and_then(|cfg| run_experiment(&cfg))
            .map(|report| println!("{}", report.output.join("summary.csv").display())),
        Command::Analyze { mode, threshold, k, out, run_a, run_b } => {
            compare(mode, &run_a, &run_b, threshold, k, &out)
                .map(|r| println!("{} (jaccard {})", r.csv.display(), r.jaccard))
        }
        Command::Synth { spec, out } => synthesize(&spec, &out).map(|p| println!("{}", p.display())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
