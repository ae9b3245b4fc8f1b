use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use joinpoint::closed_form::fit_joinpoint;
use joinpoint::detection::{analyze, subperiod_analyze, Segments};
use joinpoint::gp_limit::{NullSpec, STANDARD_LEVELS};
use joinpoint::io::{
    detection_message, format_quantile_rows, null_distribution, read_series, write_report,
    QuantileCache, ReportFormat, SeriesFileSpec,
};
use joinpoint::series::{
    DetectionConfig, Execution, DEFAULT_DELTA, DEFAULT_GRID_SIZE, DEFAULT_REPLICATES, DEFAULT_SEED,
    TABLE_REPLICATES,
};
use joinpoint::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "joinpoint", version, about = "Detect a single slope change in a time series")]
struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Gp,
    FiniteN,
}

#[derive(clap::Args)]
struct NullArgs {
    /// Monte Carlo replicates.
    #[arg(long)]
    reps: Option<usize>,
    /// Grid points for the limiting process.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Directory for cached null distributions (default: $JOINPOINT_CACHE_DIR).
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl NullArgs {
    fn cache(&self) -> Option<QuantileCache> {
        match &self.cache {
            Some(dir) => Some(QuantileCache::new(dir)),
            None => QuantileCache::from_env(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Test a series for a slope change.
    Analyze {
        file: PathBuf,
        /// Trimming fraction.
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        /// Confidence level of the test.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[command(flatten)]
        null: NullArgs,
        /// First label of a subperiod.
        #[arg(long, requires = "to")]
        from: Option<i64>,
        /// Last label of a subperiod.
        #[arg(long, requires = "from")]
        to: Option<i64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Tabulate null quantiles.
    Quantiles {
        /// Trimming fractions (default 0.01, 0.05, 0.10).
        #[arg(long, value_delimiter = ',')]
        delta: Vec<f64>,
        #[arg(long, value_enum, default_value = "gp")]
        method: Method,
        /// Series length for the finite-n method.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        null: NullArgs,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Print simulated null draws, one per line in ascending order.
    SimulateNull {
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, value_enum, default_value = "gp")]
        method: Method,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        null: NullArgs,
    },
    /// Fit the joinpoint model at a fixed changepoint.
    Fit {
        file: PathBuf,
        /// Changepoint as a time index (1-based).
        #[arg(long)]
        k: usize,
    },
}

fn null_spec(
    method: Method,
    n: Option<usize>,
    delta: f64,
    args: &NullArgs,
    default_reps: usize,
) -> Result<NullSpec, Error> {
    let reps = args.reps.unwrap_or(default_reps);
    Ok(match method {
        Method::Gp => NullSpec::gp(delta, args.grid, reps, args.seed),
        Method::FiniteN => {
            let n = n.ok_or_else(|| Error::InvalidConfig("--method finite-n requires --n".into()))?;
            NullSpec::finite_n(n, delta, reps, args.seed)
        }
    })
}

fn run(cli: Cli, out: &mut impl Write) -> Result<(), Error> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Analyze {
            file,
            delta,
            level,
            null,
            from,
            to,
            format,
        } => {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::InvalidConfig(format!("--level must lie in (0, 1), got {level}")));
            }
            let config = DetectionConfig {
                delta,
                level: 1.0 - level,
                seed: null.seed,
                mc_replicates: null.reps.unwrap_or(DEFAULT_REPLICATES),
                grid_size: null.grid,
            };
            config.validate()?;
            let series = read_series(&SeriesFileSpec::sniff(&file)?)?;
            let spec = NullSpec::gp(delta, config.grid_size, config.mc_replicates, config.seed);
            let dist = null_distribution(&spec, null.cache().as_ref(), exec)?;
            let report = match (from, to) {
                (Some(a), Some(b)) => subperiod_analyze(&series, a, b, &config, &dist)?,
                _ => analyze(&series, &config, &dist)?,
            };
            let format = match format {
                Format::Text => ReportFormat::Text,
                Format::Json => {
                    eprintln!("{}", detection_message(&report));
                    ReportFormat::Json
                }
                Format::Csv => {
                    eprintln!("{}", detection_message(&report));
                    ReportFormat::Csv
                }
            };
            out.write_all(&write_report(&report, format)?)?;
        }
        Command::Quantiles {
            delta,
            method,
            n,
            null,
            json,
        } => {
            let deltas = if delta.is_empty() {
                vec![0.01, 0.05, 0.10]
            } else {
                delta
            };
            let cache = null.cache();
            let mut tables = Vec::new();
            for d in deltas {
                let spec = null_spec(method, n, d, &null, TABLE_REPLICATES)?;
                let dist = null_distribution(&spec, cache.as_ref(), exec)?;
                tables.push(dist.table(&STANDARD_LEVELS)?);
            }
            if json {
                serde_json::to_writer_pretty(&mut *out, &tables)?;
                writeln!(out)?;
            } else {
                write!(out, "{}", format_quantile_rows(&tables))?;
            }
        }
        Command::SimulateNull {
            delta,
            method,
            n,
            null,
        } => {
            let spec = null_spec(method, n, delta, &null, DEFAULT_REPLICATES)?;
            let dist = null_distribution(&spec, null.cache().as_ref(), exec)?;
            for d in &dist.draws {
                writeln!(out, "{d:?}")?;
            }
        }
        Command::Fit { file, k } => {
            let series = read_series(&SeriesFileSpec::sniff(&file)?)?;
            let fit = fit_joinpoint(&series, k)?;
            let doc = serde_json::json!({
                "fit": fit,
                "label": series.label(k),
                "segments": Segments::from_fit(&fit, series.start_label()),
            });
            serde_json::to_writer_pretty(&mut *out, &doc)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
