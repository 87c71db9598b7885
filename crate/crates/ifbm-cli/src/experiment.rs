//! Campaign orchestration: configuration resolution, coefficient-table
//! caching, synthesis runs, and windowed slope estimation shared by the
//! `simulate`, `estimate`, and `reproduce` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use ifbm::cache::{self, CacheKey};
use ifbm::estimate::{
    aggregate_series, expected_slope_power_model, ml_slope, tail_window, EstimateError,
    PowerModel, SlopeEstimate, TailWindow,
};
use ifbm::model::{make_grid, GridSpec, Hurst};
use ifbm::simulate::{
    run_series, run_series_range, survival_estimate, FirstZeroRecord, SurvivalCurve,
};
use ifbm::toeplitz::{
    schur_coefficients, CoeffTable, CorrSamples, PrecisionMode, StabilityReport, ToeplitzError,
};

use crate::records::fnv1a;
use crate::CliError;

pub const DEFAULT_N0: u32 = 50;
pub const DEFAULT_EPS_L: f64 = 1e-4;
pub const DEFAULT_SERIES: u32 = 16;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_WINDOWS: [f64; 3] = [0.01, 0.003, 0.001];

/// Fully resolved experiment description; every run echoes it back so the
/// output is reproducible from the report alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub h: f64,
    pub n0: u32,
    pub eps_l: f64,
    pub n_total: u64,
    pub series: u32,
    pub seed: u64,
    pub windows: Vec<f64>,
    pub precision: PrecisionMode,
    pub alpha: Option<f64>,
}

/// Partial configuration as read from a TOML file or from command-line
/// flags; merged field by field with flags winning.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub h: Option<f64>,
    pub n0: Option<u32>,
    pub eps_l: Option<f64>,
    pub n_total: Option<u64>,
    pub series: Option<u32>,
    pub seed: Option<u64>,
    pub windows: Option<Vec<f64>>,
    pub precision: Option<PrecisionMode>,
    pub alpha: Option<f64>,
}

/// Builds the effective configuration: flag values override file values,
/// remaining holes are filled with defaults. `h` and `n_total` have no
/// defaults and must come from one of the two sources.
pub fn resolve_config(file: PartialConfig, flags: PartialConfig) -> Result<ExperimentConfig, CliError> {
    let h = flags
        .h
        .or(file.h)
        .ok_or_else(|| CliError::Validation("--H is required (flag or config file)".into()))?;
    let n_total = flags
        .n_total
        .or(file.n_total)
        .ok_or_else(|| CliError::Validation("--N is required (flag or config file)".into()))?;
    let config = ExperimentConfig {
        h,
        n0: flags.n0.or(file.n0).unwrap_or(DEFAULT_N0),
        eps_l: flags.eps_l.or(file.eps_l).unwrap_or(DEFAULT_EPS_L),
        n_total,
        series: flags.series.or(file.series).unwrap_or(DEFAULT_SERIES),
        seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        windows: flags.windows.or(file.windows).unwrap_or_else(|| DEFAULT_WINDOWS.to_vec()),
        precision: flags.precision.or(file.precision).unwrap_or(PrecisionMode::Standard),
        alpha: flags.alpha.or(file.alpha),
    };
    validate_config(&config)?;
    Ok(config)
}

/// Checks the cross-field invariants and returns the validated Hurst index.
pub fn validate_config(config: &ExperimentConfig) -> Result<Hurst, CliError> {
    let h = Hurst::new(config.h).map_err(|e| CliError::Validation(e.to_string()))?;
    if config.n0 < 2 {
        return Err(CliError::Validation(format!(
            "n0 must be at least 2 grid steps per interzero distance, got {}",
            config.n0
        )));
    }
    if !(config.eps_l.is_finite() && 0.0 < config.eps_l && config.eps_l < 1.0) {
        return Err(CliError::Validation(format!(
            "epsL must lie in (0, 1), got {}",
            config.eps_l
        )));
    }
    if config.n_total == 0 {
        return Err(CliError::Validation("N must be positive".into()));
    }
    if config.series == 0 {
        return Err(CliError::Validation("series must be positive".into()));
    }
    if !config.n_total.is_multiple_of(u64::from(config.series)) {
        return Err(CliError::Validation(format!(
            "N = {} is not divisible by series = {}",
            config.n_total, config.series
        )));
    }
    if config.windows.is_empty() {
        return Err(CliError::Validation("at least one window eps is required".into()));
    }
    for &eps in &config.windows {
        check_window_eps(eps, config.eps_l)?;
    }
    if let Some(alpha) = config.alpha {
        if !alpha.is_finite() {
            return Err(CliError::Validation(format!("alpha must be finite, got {alpha}")));
        }
    }
    Ok(h)
}

/// A window level is resolvable only when its upper edge stays inside the
/// simulated horizon, which pins eps >= 10 * eps_l.
pub fn check_window_eps(eps: f64, eps_l: f64) -> Result<(), CliError> {
    if !(eps.is_finite() && 0.0 < eps && eps < 1.0) {
        return Err(CliError::Validation(format!(
            "window eps must lie in (0, 1), got {eps}"
        )));
    }
    if eps < 10.0 * eps_l {
        return Err(CliError::Validation(format!(
            "window eps = {eps} is below the resolvable floor 10 * epsL = {}; \
             lower epsL or raise eps",
            10.0 * eps_l
        )));
    }
    Ok(())
}

/// FNV-1a over the canonical JSON encoding of the configuration, printed as
/// 16 hex digits.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    format!("{:016x}", fnv1a(json.as_bytes()))
}

/// Cache directory precedence: explicit flag, then IFBM_CACHE_DIR, then
/// ./ifbm-cache.
pub fn resolve_cache_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("IFBM_CACHE_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ifbm-cache"))
}

fn map_toeplitz(e: ToeplitzError, precision: PrecisionMode) -> CliError {
    match (&e, precision) {
        (
            ToeplitzError::NonPositiveDefinite { .. } | ToeplitzError::PrecisionExhausted { .. },
            PrecisionMode::Standard,
        ) => CliError::Numerical(format!("{e}; hint: retry with --precision extended")),
        _ => CliError::Numerical(e.to_string()),
    }
}

/// Loads the coefficient table from the cache directory, or builds and
/// stores it. Returns the table, the grid, the cache path, and whether the
/// call was a cache hit.
pub fn build_or_load_table(
    h: Hurst,
    n0: u32,
    eps_l: f64,
    precision: PrecisionMode,
    cache_dir: &Path,
) -> Result<(CoeffTable, GridSpec, PathBuf, bool), CliError> {
    let grid = make_grid(h, n0, eps_l).map_err(|e| CliError::Validation(e.to_string()))?;
    let key = CacheKey { h, n0, eps_l };
    let file = cache_dir.join(cache::cache_file_name(&key, precision));
    if file.exists() {
        match cache::load(&file) {
            Ok((table, stored)) if stored == key && table.precision == precision => {
                return Ok((table, grid, file, true));
            }
            Ok(_) => eprintln!(
                "note: cache file {} does not match the requested configuration; rebuilding",
                file.display()
            ),
            Err(e) => eprintln!(
                "note: discarding unreadable cache file {}: {e}",
                file.display()
            ),
        }
    }
    let corr = CorrSamples::from_grid(&grid);
    let table = schur_coefficients(&corr, precision).map_err(|e| map_toeplitz(e, precision))?;
    std::fs::create_dir_all(cache_dir)?;
    cache::save(&file, &table, &key).map_err(|e| CliError::Io(e.to_string()))?;
    Ok((table, grid, file, false))
}

/// One estimated window: the level, its geometry, the aggregated fit, and
/// the expected slope under the power-tail hypothesis when alpha is given.
#[derive(Clone, Debug, Serialize)]
pub struct WindowEstimate {
    pub eps: f64,
    pub window: TailWindow,
    pub estimate: SlopeEstimate,
    pub expected_slope: Option<f64>,
}

fn checked_window(h: Hurst, eps: f64, eps_l: f64, horizon: f64) -> Result<TailWindow, CliError> {
    check_window_eps(eps, eps_l)?;
    let window = tail_window(h, eps);
    // The grid end is ceil-aligned, so equality holds up to rounding when
    // eps == 10 * eps_l; allow that much slack and no more.
    if window.upper > horizon * (1.0 + 1e-9) {
        return Err(CliError::Validation(format!(
            "window eps = {eps} reaches {:.3}, beyond the simulated horizon {horizon:.3}",
            window.upper
        )));
    }
    Ok(window)
}

fn map_estimate(e: EstimateError, eps: f64, series: u32) -> CliError {
    match e {
        EstimateError::InsufficientData { found, need } => {
            let n_min = (need as f64 * f64::from(series) / eps).ceil() as u64;
            CliError::Insufficient(format!(
                "window eps = {eps}: a series holds {found} in-window observations, need {need}; \
                 in-window counts scale like N*eps, so raise total paths to at least {n_min}"
            ))
        }
        EstimateError::Degenerate { z, n } => CliError::Insufficient(format!(
            "window eps = {eps}: all {n} in-window observations collapse to z = {z}; \
             more paths are needed for a usable spread"
        )),
        EstimateError::OutOfRange { m } => CliError::Insufficient(format!(
            "window eps = {eps}: normalized mean excess {m} pinned to the window edge; \
             more paths are needed"
        )),
        EstimateError::Quadrature(q) => CliError::Numerical(q.to_string()),
    }
}

fn expected_for(h: Hurst, alpha: Option<f64>, window: &TailWindow) -> Result<Option<f64>, CliError> {
    let Some(alpha) = alpha else { return Ok(None) };
    let hv = h.get();
    let model = PowerModel { theta0: hv * (1.0 - hv), alpha };
    expected_slope_power_model(&model, window)
        .map(Some)
        .map_err(|e| CliError::Numerical(e.to_string()))
}

fn fit_series(
    serials: &[SlopeEstimate],
    eps: f64,
    series: u32,
) -> Result<SlopeEstimate, CliError> {
    if serials.len() == 1 {
        Ok(serials[0])
    } else {
        aggregate_series(serials).map_err(|e| map_estimate(e, eps, series))
    }
}

/// Windowed estimates over materialized records, split into `series`
/// contiguous equal batches. Censored records never enter a fit; the window
/// floor eps >= 10 * eps_l guarantees their z bound lies at or beyond every
/// admissible upper edge.
#[allow(clippy::too_many_arguments)]
pub fn estimate_windows(
    records: &[FirstZeroRecord],
    delta: f64,
    n_rows: u32,
    eps_l: f64,
    h: Hurst,
    series: u32,
    windows: &[f64],
    alpha: Option<f64>,
) -> Result<Vec<WindowEstimate>, CliError> {
    let n_total = records.len() as u64;
    if series == 0 || !n_total.is_multiple_of(u64::from(series)) {
        return Err(CliError::Validation(format!(
            "{n_total} records do not split into {series} equal series"
        )));
    }
    let horizon = f64::from(n_rows.saturating_sub(1)) * delta;
    let per = (n_total / u64::from(series)) as usize;

    let zs_by_series: Vec<Vec<f64>> = records
        .chunks(per)
        .map(|chunk| {
            chunk
                .iter()
                .filter(|r| !r.censored)
                .map(|r| r.z(delta))
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(windows.len());
    for &eps in windows {
        let window = checked_window(h, eps, eps_l, horizon)?;
        let serials: Vec<SlopeEstimate> = zs_by_series
            .iter()
            .map(|zs| ml_slope(zs, &window).map_err(|e| map_estimate(e, eps, series)))
            .collect::<Result<_, _>>()?;
        out.push(WindowEstimate {
            eps,
            window,
            estimate: fit_series(&serials, eps, series)?,
            expected_slope: expected_for(h, alpha, &window)?,
        });
    }
    Ok(out)
}

/// A campaign run one series at a time, so only a single batch of records is
/// ever resident. Streams are indexed by the global path index, making the
/// result identical to a monolithic run over the same seed.
pub struct StreamedCampaign {
    pub estimates: Vec<WindowEstimate>,
    pub n_total: u64,
    pub censored: u64,
    pub wall_seconds: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn run_windows_streamed(
    table: &CoeffTable,
    h: Hurst,
    eps_l: f64,
    seed: u64,
    series: u32,
    per_series: u64,
    windows: &[f64],
    alpha: Option<f64>,
) -> Result<StreamedCampaign, CliError> {
    if series < 2 {
        return Err(CliError::Validation(format!(
            "streamed campaigns need at least 2 series for an empirical sigma, got {series}"
        )));
    }
    if per_series == 0 {
        return Err(CliError::Validation("series size rounded down to zero paths".into()));
    }
    let horizon = (table.n_rows() as f64 - 1.0) * table.delta;
    let checked: Vec<TailWindow> = windows
        .iter()
        .map(|&eps| checked_window(h, eps, eps_l, horizon))
        .collect::<Result<_, _>>()?;

    let t0 = Instant::now();
    let mut censored = 0u64;
    let mut serials: Vec<Vec<SlopeEstimate>> = vec![Vec::with_capacity(series as usize); windows.len()];
    for s in 0..u64::from(series) {
        let batch = run_series_range(table, seed, s * per_series, per_series);
        censored += batch.iter().filter(|r| r.censored).count() as u64;
        let zs: Vec<f64> = batch
            .iter()
            .filter(|r| !r.censored)
            .map(|r| r.z(table.delta))
            .collect();
        for (wi, window) in checked.iter().enumerate() {
            serials[wi].push(ml_slope(&zs, window).map_err(|e| map_estimate(e, windows[wi], series))?);
        }
    }

    let mut estimates = Vec::with_capacity(windows.len());
    for (wi, window) in checked.iter().enumerate() {
        estimates.push(WindowEstimate {
            eps: windows[wi],
            window: *window,
            estimate: fit_series(&serials[wi], windows[wi], series)?,
            expected_slope: expected_for(h, alpha, window)?,
        });
    }
    Ok(StreamedCampaign {
        estimates,
        n_total: u64::from(series) * per_series,
        censored,
        wall_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Everything a simulation run reports: the effective configuration, grid
/// and factorization provenance, windowed estimates, the survival curve,
/// and throughput.
#[derive(Serialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub grid: GridSpec,
    pub cache_hit: bool,
    pub ops: u64,
    pub stability: StabilityReport,
    pub censored: u64,
    pub estimates: Vec<WindowEstimate>,
    pub survival: SurvivalCurve,
    pub wall_seconds: f64,
    pub paths_per_second: f64,
}

/// Runs the full pipeline for one configuration, materializing the records
/// for persistence.
pub fn run_campaign(
    config: &ExperimentConfig,
    cache_dir: &Path,
) -> Result<(Vec<FirstZeroRecord>, ExperimentReport), CliError> {
    let h = validate_config(config)?;
    let (table, grid, _, cache_hit) =
        build_or_load_table(h, config.n0, config.eps_l, config.precision, cache_dir)?;

    let t0 = Instant::now();
    let records = run_series(&table, config.seed, config.n_total);
    let wall_seconds = t0.elapsed().as_secs_f64();

    let censored = records.iter().filter(|r| r.censored).count() as u64;
    let estimates = estimate_windows(
        &records,
        table.delta,
        table.n_rows() as u32,
        config.eps_l,
        h,
        config.series,
        &config.windows,
        config.alpha,
    )?;
    let survival = survival_estimate(&records, table.delta, table.n_rows());

    let report = ExperimentReport {
        version: ifbm::VERSION.to_string(),
        config: config.clone(),
        config_hash: config_hash(config),
        grid,
        cache_hit,
        ops: table.ops,
        stability: table.diagnostics.clone(),
        censored,
        estimates,
        survival,
        wall_seconds,
        paths_per_second: if wall_seconds > 0.0 {
            config.n_total as f64 / wall_seconds
        } else {
            f64::INFINITY
        },
    };
    Ok((records, report))
}
