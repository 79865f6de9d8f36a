use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use beamalign::estimators::Estimator;
use beamalign::harness::{
    export_results, read_stats_json, run_monte_carlo, trace_protocol, AssignmentMode, ExportFormat, RunConfig,
};
use beamalign::patterns::{assign_patterns_lb, assign_patterns_random, PatternAssignment};
use beamalign::rng::{substream, Stream};

#[derive(Parser)]
#[command(name = "beamalign", version, about = "Beam alignment Monte Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign and write detection statistics.
    Run {
        /// TOML configuration; built-in defaults when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Override a configuration value, e.g. `--set run.drops=20`.
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory.
        #[arg(short, long, env = "BEAMALIGN_OUT", default_value = "results")]
        out: PathBuf,
    },
    /// Assign data patterns to APs given their positions.
    AssignPatterns {
        /// JSON array of `[x, y]` AP positions.
        #[arg(short, long)]
        positions: PathBuf,
        /// Number of data patterns D.
        #[arg(short = 'd', long)]
        patterns: usize,
        #[arg(short, long, value_enum, default_value = "lb")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        /// Output JSON file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Convert a statistics JSON file to CSV or JSON.
    Export {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Output format; guessed from the extension when omitted.
        #[arg(short, long, value_enum)]
        format: Option<Format>,
    },
    /// Dump ground truth, UE reports and associations for one drop.
    Truth {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 0)]
        drop: u64,
        #[arg(short, long, value_enum, default_value = "lb")]
        mode: Mode,
        #[arg(short, long, value_enum, default_value = "mco")]
        estimator: EstimatorArg,
        /// Output JSON file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lb,
    Ra,
}

impl From<Mode> for AssignmentMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Lb => AssignmentMode::Lb,
            Mode::Ra => AssignmentMode::Ra,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Sco,
    Mco,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Sco => Estimator::Sco,
            EstimatorArg::Mco => Estimator::Mco,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let config = match path {
        Some(p) => RunConfig::load(p, overrides)?,
        None => RunConfig::from_overrides(overrides)?,
    };
    Ok(config)
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

fn run(config: Option<PathBuf>, overrides: Vec<String>, out: PathBuf) -> Result<()> {
    let config = load_config(config.as_deref(), &overrides)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), config.to_toml_string()?)
        .with_context(|| format!("writing {}", out.join("config.toml").display()))?;

    let start = Instant::now();
    let stats = run_monte_carlo(&config)?;
    log::info!("{} drops in {:.1?}", config.run.drops, start.elapsed());

    export_results(&stats, &out.join("stats.json"), ExportFormat::Json)?;
    export_results(&stats, &out.join("stats.csv"), ExportFormat::Csv)?;
    println!("{:<4} {:<3} {:>3} {:>3} {:>3} {:>7} {:>8}", "est", "asg", "N_D", "T", "D", "prob", "ci95");
    for row in stats.rows() {
        println!(
            "{:<4} {:<3} {:>3} {:>3} {:>3} {:>7.4} {:>8.4}",
            row.estimator, row.assignment, row.n_d, row.t, row.d, row.prob, row.ci95
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn assign(
    positions: PathBuf,
    patterns: usize,
    mode: Mode,
    seed: u64,
    max_iters: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let text = fs::read_to_string(&positions).with_context(|| format!("reading {}", positions.display()))?;
    let points: Vec<[f64; 2]> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", positions.display()))?;
    let assignment: PatternAssignment = match mode {
        Mode::Lb => assign_patterns_lb(&points, patterns, max_iters, &mut substream(seed, Stream::LbAssignment, &[]))?
            .assignment,
        Mode::Ra => assign_patterns_random(points.len(), patterns, &mut substream(seed, Stream::RandomAssignment, &[]))?,
    };
    write_json(&assignment, out.as_deref())
}

fn export(input: PathBuf, out: PathBuf, format: Option<Format>) -> Result<()> {
    let format = match format {
        Some(f) => f.into(),
        None => match ExportFormat::from_path(&out) {
            Some(f) => f,
            None => bail!("cannot tell the format of {}; pass --format", out.display()),
        },
    };
    let stats = read_stats_json(&input)?;
    export_results(&stats, &out, format)?;
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, overrides, out } => run(config, overrides, out),
        Command::AssignPatterns { positions, patterns, mode, seed, max_iters, out } => {
            assign(positions, patterns, mode, seed, max_iters, out)
        }
        Command::Export { input, out, format } => export(input, out, format),
        Command::Truth { config, overrides, drop, mode, estimator, out } => {
            load_config(config.as_deref(), &overrides)
                .and_then(|c| Ok(trace_protocol(&c, drop, mode.into(), estimator.into())?))
                .and_then(|trace| write_json(&trace, out.as_deref()))
        }
        Command::DefaultConfig => RunConfig::default()
            .to_toml_string()
            .map(|s| print!("{s}"))
            .map_err(Into::into),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
