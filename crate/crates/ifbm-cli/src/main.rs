//! Command-line driver for synthesizing integrated-fractional-Brownian
//! first-zero records and estimating the tail slope of their survival
//! distribution.
//!
//! Exit codes: 0 success, 1 io failure, 2 validation error, 3 numerical
//! failure, 4 insufficient in-window data.

mod experiment;
mod figures;
mod records;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ifbm::model::Hurst;
use ifbm::toeplitz::PrecisionMode;

use experiment::{
    build_or_load_table, estimate_windows, resolve_cache_dir, resolve_config, run_campaign,
    PartialConfig, WindowEstimate, DEFAULT_WINDOWS,
};
use figures::ReproduceArgs;
use records::{read_records, write_records, RecordsError, RecordsHeader};

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
    Numerical(String),
    Insufficient(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Insufficient(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(msg)
            | CliError::Validation(msg)
            | CliError::Numerical(msg)
            | CliError::Insufficient(msg) => f.write_str(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<RecordsError> for CliError {
    fn from(e: RecordsError) -> Self {
        match e {
            RecordsError::Io(_) => CliError::Io(e.to_string()),
            RecordsError::Parse(_) => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ifbm",
    version,
    about = "Exact synthesis and tail-slope estimation for the first zero of integrated fractional Brownian motion"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Target {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Table1,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build (or reuse) the cached synthesis coefficient table
    Coeffs {
        /// Self-similarity index, in (0, 1)
        #[arg(long = "H")]
        h: f64,
        /// Grid steps per mean interzero distance
        #[arg(long, default_value_t = experiment::DEFAULT_N0)]
        n0: u32,
        /// Tail mass left beyond the simulated horizon
        #[arg(long = "epsL", default_value_t = experiment::DEFAULT_EPS_L)]
        eps_l: f64,
        /// Arithmetic used for the factorization recursion
        #[arg(long, default_value_t = PrecisionMode::Standard)]
        precision: PrecisionMode,
        /// Cache directory (defaults to $IFBM_CACHE_DIR, then ./ifbm-cache)
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run a first-zero campaign and persist records plus a JSON report
    Simulate {
        /// TOML file with the same keys as the flags below
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "H")]
        h: Option<f64>,
        #[arg(long)]
        n0: Option<u32>,
        #[arg(long = "epsL")]
        eps_l: Option<f64>,
        /// Total number of synthesized series
        #[arg(long = "N")]
        n_total: Option<u64>,
        /// Number of equal serial batches N splits into
        #[arg(long)]
        series: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated window levels
        #[arg(long = "window-eps", value_delimiter = ',')]
        window_eps: Option<Vec<f64>>,
        /// Power-tail hypothesis exponent for expected-slope columns
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        precision: Option<PrecisionMode>,
        /// Output directory for records.txt and report.json
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Re-estimate window slopes from a persisted records file
    Estimate {
        /// Records file produced by `simulate`
        records: PathBuf,
        /// Comma-separated window levels
        #[arg(long = "window-eps", value_delimiter = ',')]
        window_eps: Option<Vec<f64>>,
        /// Power-tail hypothesis exponent for expected-slope columns
        #[arg(long)]
        alpha: Option<f64>,
        /// Override the serial split recorded in the file
        #[arg(long)]
        series: Option<u32>,
        /// Also write the JSON output to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a bundled study dataset (CSV plus JSON provenance)
    Reproduce {
        #[arg(long, value_enum)]
        target: Target,
        /// Fraction of the full-size campaign, in (0, 1]
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = experiment::DEFAULT_SEED)]
        seed: u64,
        /// Output directory for the data files
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        precision: Option<PrecisionMode>,
    },
}

#[derive(Serialize)]
struct EstimateOutput {
    version: String,
    records_file: String,
    config_hash: String,
    h: f64,
    n0: u32,
    seed: u64,
    series: u32,
    n_total: u64,
    estimates: Vec<WindowEstimate>,
}

fn cmd_coeffs(
    h: f64,
    n0: u32,
    eps_l: f64,
    precision: PrecisionMode,
    cache: Option<PathBuf>,
) -> Result<(), CliError> {
    let h = Hurst::new(h).map_err(|e| CliError::Validation(e.to_string()))?;
    let cache_dir = resolve_cache_dir(cache);
    let (table, grid, path, hit) = build_or_load_table(h, n0, eps_l, precision, &cache_dir)?;
    println!(
        "cache file: {} ({})",
        path.display(),
        if hit { "hit" } else { "built" }
    );
    println!(
        "h = {}  n0 = {}  eps_l = {}  precision = {}",
        grid.h.get(),
        grid.n0,
        grid.eps_l,
        precision
    );
    println!(
        "rows = {}  delta = {}  horizon = {:.4}  ops = {}",
        table.n_rows(),
        table.delta,
        table.horizon(),
        table.ops
    );
    let d = &table.diagnostics;
    println!(
        "oscillation score = {:.3e}  max tail coefficient = {:.3e}  flagged rows = {}",
        d.oscillation_score,
        d.max_tail_coefficient,
        d.flagged_rows.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    config: Option<PathBuf>,
    flags: PartialConfig,
    out: PathBuf,
    cache: Option<PathBuf>,
) -> Result<(), CliError> {
    let file_cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(&path)?;
            toml::from_str(&text)
                .map_err(|e| CliError::Validation(format!("config file {}: {e}", path.display())))?
        }
        None => PartialConfig::default(),
    };
    let config = resolve_config(file_cfg, flags)?;
    let cache_dir = resolve_cache_dir(cache);
    let (records_vec, report) = run_campaign(&config, &cache_dir)?;

    std::fs::create_dir_all(&out)?;
    let header = RecordsHeader {
        version: ifbm::VERSION.to_string(),
        h: config.h,
        n0: config.n0,
        eps_l: config.eps_l,
        delta: report.grid.delta,
        n_rows: report.grid.len + 1,
        precision: config.precision,
        seed: config.seed,
        series: config.series,
        n_total: config.n_total,
        config_hash: report.config_hash.clone(),
    };
    let records_path = out.join("records.txt");
    write_records(&records_path, &header, &records_vec)?;

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(out.join("report.json"), &json)?;
    println!("{json}");
    eprintln!(
        "wrote {} and {}",
        records_path.display(),
        out.join("report.json").display()
    );
    Ok(())
}

fn cmd_estimate(
    records_path: PathBuf,
    window_eps: Option<Vec<f64>>,
    alpha: Option<f64>,
    series_override: Option<u32>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let (header, records_vec) = read_records(&records_path)?;
    let h = Hurst::new(header.h).map_err(|e| CliError::Validation(e.to_string()))?;
    let series = series_override.unwrap_or(header.series);
    let windows = window_eps.unwrap_or_else(|| DEFAULT_WINDOWS.to_vec());
    let estimates = estimate_windows(
        &records_vec,
        header.delta,
        header.n_rows,
        header.eps_l,
        h,
        series,
        &windows,
        alpha,
    )?;
    let output = EstimateOutput {
        version: ifbm::VERSION.to_string(),
        records_file: records_path.display().to_string(),
        config_hash: header.config_hash,
        h: header.h,
        n0: header.n0,
        seed: header.seed,
        series,
        n_total: header.n_total,
        estimates,
    };
    let json = serde_json::to_string_pretty(&output).expect("output serializes");
    if let Some(path) = out {
        std::fs::write(&path, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_reproduce(
    target: Target,
    scale: f64,
    seed: u64,
    out: PathBuf,
    cache: Option<PathBuf>,
    precision: Option<PrecisionMode>,
) -> Result<(), CliError> {
    if !(scale.is_finite() && 0.0 < scale && scale <= 1.0) {
        return Err(CliError::Validation(format!(
            "scale must lie in (0, 1], got {scale}"
        )));
    }
    let args = ReproduceArgs {
        scale,
        seed,
        out_dir: out,
        cache_dir: resolve_cache_dir(cache),
        precision: precision.unwrap_or(PrecisionMode::Standard),
    };
    match target {
        Target::Fig1 => figures::fig1(&args),
        Target::Fig2 => figures::fig2(&args),
        Target::Fig3 => figures::fig3(&args),
        Target::Fig4 => figures::fig4(&args),
        Target::Table1 => figures::table1(&args),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Coeffs {
            h,
            n0,
            eps_l,
            precision,
            cache,
        } => cmd_coeffs(h, n0, eps_l, precision, cache),
        Cmd::Simulate {
            config,
            h,
            n0,
            eps_l,
            n_total,
            series,
            seed,
            window_eps,
            alpha,
            precision,
            out,
            cache,
        } => cmd_simulate(
            config,
            PartialConfig {
                h,
                n0,
                eps_l,
                n_total,
                series,
                seed,
                windows: window_eps,
                precision,
                alpha,
            },
            out,
            cache,
        ),
        Cmd::Estimate {
            records,
            window_eps,
            alpha,
            series,
            out,
        } => cmd_estimate(records, window_eps, alpha, series, out),
        Cmd::Reproduce {
            target,
            scale,
            seed,
            out,
            cache,
            precision,
        } => cmd_reproduce(target, scale, seed, out, cache, precision),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
