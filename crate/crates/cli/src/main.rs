mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tinyscale::arch::ArchitectureSpec;
use tinyscale::gpr::MeanFunction;

use commands::{Context, SampleArgs};
use error::{CliResult, Failure};

const DEFAULT_BUDGETS: [f64; 5] = [0.9, 0.5, 0.25, 0.13, 0.06];

/// Shrink a mobile CNN to a FLOPs budget: sample scalings, keep the
/// accuracy/FLOPs frontier, fit resolution and depth against the budget and
/// solve for width.
#[derive(Debug, Parser)]
#[command(name = "tinyscale", version)]
struct Cli {
    /// Architecture spec: a JSON file or a bundled name (efficientnet-b0, ghostnet-a).
    #[arg(long, global = true, default_value = "efficientnet-b0")]
    spec: String,
    /// Record store CSV. Defaults to samples.csv inside --out.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for every file the pipeline writes.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mean {
    Zero,
    Constant,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the cost of the spec scaled by (r, d, w) as JSON.
    Estimate {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
    },
    /// Draw scaling triples into the record store.
    Sample {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Lowest accepted FLOPs ratio.
        #[arg(long, default_value_t = 0.03)]
        band_low: f64,
        /// Highest accepted FLOPs ratio.
        #[arg(long, default_value_t = 1.05)]
        band_high: f64,
        /// Sample at a single FLOPs ratio instead of a band.
        #[arg(long, conflicts_with_all = ["band_low", "band_high"])]
        target: Option<f64>,
    },
    /// Merge accuracies (and new records) from a CSV into the store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Label every stored record with the synthetic accuracy oracle.
    Oracle {
        #[arg(long, default_value_t = 0.003)]
        noise_sd: f64,
    },
    /// Select the top fraction of labelled records by nondominated sorting.
    Pareto {
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
    },
    /// Fit the resolution and depth regressors on the frontier.
    Fit {
        #[arg(long, value_enum, default_value_t = Mean::Zero)]
        mean: Mean,
    },
    /// Write one shrunken architecture per reduction factor.
    Solve {
        #[arg(long = "c", value_delimiter = ',', num_args = 1.., default_values_t = DEFAULT_BUDGETS)]
        budgets: Vec<f64>,
    },
    /// Write plot-ready CSVs and the frontier rank correlations.
    Report {
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
    },
}

fn load_spec(arg: &str) -> CliResult<ArchitectureSpec> {
    let path = PathBuf::from(arg);
    if path.exists() {
        return Ok(ArchitectureSpec::from_path(&path)?);
    }
    ArchitectureSpec::bundled(arg).ok_or_else(|| {
        Failure::input(anyhow::anyhow!(
            "`{arg}` is neither a readable file nor a bundled spec (efficientnet-b0, ghostnet-a)"
        ))
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Context {
        spec: load_spec(&cli.spec)?,
        store: cli.store.unwrap_or_else(|| cli.out.join("samples.csv")),
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Estimate { r, d, w } => commands::estimate(&ctx, r, d, w),
        Command::Sample {
            count,
            band_low,
            band_high,
            target,
        } => commands::sample(
            &ctx,
            &SampleArgs {
                count,
                band_low,
                band_high,
                target,
            },
        ),
        Command::Ingest { input } => commands::ingest(&ctx, &input),
        Command::Oracle { noise_sd } => commands::oracle(&ctx, noise_sd),
        Command::Pareto { fraction } => commands::pareto(&ctx, fraction),
        Command::Fit { mean } => commands::fit(
            &ctx,
            match mean {
                Mean::Zero => MeanFunction::Zero,
                Mean::Constant => MeanFunction::Constant,
            },
        ),
        Command::Solve { budgets } => commands::solve(&ctx, &budgets),
        Command::Report { fraction } => commands::report(&ctx, fraction),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}
