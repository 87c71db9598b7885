//! Bundled study targets: each emits a CSV data file plus a JSON provenance
//! sidecar into the output directory. Outputs are data only; plotting is
//! left to external tools.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use ifbm::model::Hurst;
use ifbm::simulate::{run_series, survival_estimate};
use ifbm::toeplitz::PrecisionMode;

use crate::experiment::{
    build_or_load_table, run_windows_streamed, StreamedCampaign, WindowEstimate, DEFAULT_EPS_L,
    DEFAULT_N0,
};
use crate::records::fnv1a;
use crate::CliError;

pub struct ReproduceArgs {
    pub scale: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub precision: PrecisionMode,
}

const FIG1_PATHS: f64 = 100_000.0;
const FIG2_SERIES: u32 = 16;
const FIG2_PER_SERIES: f64 = 300_000.0;
const FIG2_WINDOWS: [f64; 3] = [0.01, 0.003, 0.001];
const FIG34_SERIES: u32 = 25;
const FIG34_PER_SERIES: f64 = 300_000.0;
const FIG34_EPS: f64 = 0.01;
const TABLE1_H: f64 = 0.7;
const TABLE1_PER_SERIES: f64 = 1_000_000.0;
const TABLE1_BLOCKS: [(u32, u32); 2] = [(30, 120), (100, 90)];
const TABLE1_WINDOWS: [f64; 3] = [0.1, 0.01, 0.001];

fn h_grid() -> Vec<f64> {
    (1..=9).map(|k| f64::from(k) / 10.0).collect()
}

/// Rounds a full-size count down to the requested fraction; zero means the
/// scale is too small to produce anything.
fn scaled_count(n_full: f64, scale: f64, what: &str) -> Result<u64, CliError> {
    let n = (n_full * scale).round();
    if n < 1.0 {
        return Err(CliError::Validation(format!(
            "scale {scale} rounds {what} down to zero paths"
        )));
    }
    Ok(n as u64)
}

#[derive(Serialize)]
struct BlockInfo {
    h: f64,
    n0: u32,
    eps_l: f64,
    series: u32,
    n_paths: u64,
    censored: u64,
    seed: u64,
    wall_seconds: f64,
}

#[derive(Serialize)]
struct Provenance {
    version: String,
    target: String,
    scale: f64,
    /// Estimator noise grows like scale^{-1/2} relative to the full-size run.
    sigma_inflation: f64,
    seed: u64,
    config_hash: String,
    windows: Vec<f64>,
    blocks: Vec<BlockInfo>,
}

fn invocation_hash(target: &str, scale: f64, seed: u64) -> String {
    format!("{:016x}", fnv1a(format!("{target}|{scale}|{seed}").as_bytes()))
}

fn write_target_files(
    args: &ReproduceArgs,
    target: &str,
    columns: &str,
    rows: &[String],
    windows: &[f64],
    blocks: Vec<BlockInfo>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out_dir)?;
    let hash = invocation_hash(target, args.scale, args.seed);

    let mut csv = format!(
        "# ifbm {target} v{} seed={} scale={} config={hash}\n{columns}\n",
        ifbm::VERSION,
        args.seed,
        args.scale
    );
    for row in rows {
        csv.push_str(row);
        csv.push('\n');
    }
    let csv_path = args.out_dir.join(format!("{target}.csv"));
    std::fs::write(&csv_path, csv)?;

    let provenance = Provenance {
        version: ifbm::VERSION.to_string(),
        target: target.to_string(),
        scale: args.scale,
        sigma_inflation: 1.0 / args.scale.sqrt(),
        seed: args.seed,
        config_hash: hash,
        windows: windows.to_vec(),
        blocks,
    };
    let json_path = args.out_dir.join(format!("{target}.json"));
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&provenance).expect("provenance serializes"),
    )?;

    println!(
        "wrote {} ({} rows) and {}",
        csv_path.display(),
        rows.len(),
        json_path.display()
    );
    Ok(())
}

/// Survival-curve dataset: -ln S(t) per grid time for each H, with the
/// exponential reference slope theta0 = H(1-H) alongside.
pub fn fig1(args: &ReproduceArgs) -> Result<(), CliError> {
    let n = scaled_count(FIG1_PATHS, args.scale, "the per-H campaign")?;
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for (i, hv) in h_grid().into_iter().enumerate() {
        let h = Hurst::new(hv).expect("grid H valid");
        let (table, grid, _, _) =
            build_or_load_table(h, DEFAULT_N0, DEFAULT_EPS_L, args.precision, &args.cache_dir)?;
        let seed = args.seed.wrapping_add(i as u64);
        let t0 = Instant::now();
        let records = run_series(&table, seed, n);
        let wall = t0.elapsed().as_secs_f64();
        let curve = survival_estimate(&records, table.delta, table.n_rows());
        let theta0 = hv * (1.0 - hv);
        for (t, s) in curve.t.iter().zip(curve.survival.iter()) {
            if *s > 0.0 {
                rows.push(format!("{hv},{t},{},{}", -s.ln(), theta0 * t));
            }
        }
        blocks.push(BlockInfo {
            h: hv,
            n0: grid.n0,
            eps_l: grid.eps_l,
            series: 1,
            n_paths: n,
            censored: records.iter().filter(|r| r.censored).count() as u64,
            seed,
            wall_seconds: wall,
        });
    }
    write_target_files(args, "fig1", "h,t,neg_ln_survival,theta0_t", &rows, &[], blocks)
}

struct HCampaign {
    h: f64,
    estimates: Vec<WindowEstimate>,
    block: BlockInfo,
}

fn per_h_campaigns(
    args: &ReproduceArgs,
    per_series_full: f64,
    series: u32,
    windows: &[f64],
    alpha_of_h: impl Fn(f64) -> Option<f64>,
) -> Result<Vec<HCampaign>, CliError> {
    let per = scaled_count(per_series_full, args.scale, "a series")?;
    let mut out = Vec::new();
    for (i, hv) in h_grid().into_iter().enumerate() {
        let h = Hurst::new(hv).expect("grid H valid");
        let (table, grid, _, _) =
            build_or_load_table(h, DEFAULT_N0, DEFAULT_EPS_L, args.precision, &args.cache_dir)?;
        let seed = args.seed.wrapping_add(i as u64);
        let StreamedCampaign {
            estimates,
            n_total,
            censored,
            wall_seconds,
        } = run_windows_streamed(
            &table,
            h,
            grid.eps_l,
            seed,
            series,
            per,
            windows,
            alpha_of_h(hv),
        )?;
        out.push(HCampaign {
            h: hv,
            estimates,
            block: BlockInfo {
                h: hv,
                n0: grid.n0,
                eps_l: grid.eps_l,
                series,
                n_paths: n_total,
                censored,
                seed,
                wall_seconds,
            },
        });
    }
    Ok(out)
}

fn sigma_or_nan(value: Option<f64>) -> f64 {
    value.unwrap_or(f64::NAN)
}

/// Windowed slope estimates against the reference theta0 = H(1-H) across
/// the H grid, one row per (H, window level).
pub fn fig2(args: &ReproduceArgs) -> Result<(), CliError> {
    let campaigns = per_h_campaigns(args, FIG2_PER_SERIES, FIG2_SERIES, &FIG2_WINDOWS, |_| None)?;
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for c in campaigns {
        let theta0 = c.h * (1.0 - c.h);
        for w in &c.estimates {
            rows.push(format!(
                "{},{},{},{},{theta0}",
                c.h,
                w.eps,
                w.estimate.theta_hat,
                sigma_or_nan(w.estimate.sigma_theoretical)
            ));
        }
        blocks.push(c.block);
    }
    write_target_files(args, "fig2", "h,eps,theta_hat,sigma_tilde,theta0", &rows, &FIG2_WINDOWS, blocks)
}

fn fig34_campaigns(args: &ReproduceArgs) -> Result<Vec<HCampaign>, CliError> {
    per_h_campaigns(args, FIG34_PER_SERIES, FIG34_SERIES, &[FIG34_EPS], |hv| {
        Some(hv - 0.5)
    })
}

/// Interval estimates theta_hat +- sigma_tilde for the deepest common
/// window, with the expected slope under the power-tail hypothesis
/// alpha = H - 1/2 alongside.
pub fn fig3(args: &ReproduceArgs) -> Result<(), CliError> {
    let campaigns = fig34_campaigns(args)?;
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for c in campaigns {
        let theta0 = c.h * (1.0 - c.h);
        let w = &c.estimates[0];
        rows.push(format!(
            "{},{theta0},{},{},{}",
            c.h,
            w.estimate.theta_hat,
            sigma_or_nan(w.estimate.sigma_theoretical),
            w.expected_slope.expect("alpha supplied")
        ));
        blocks.push(c.block);
    }
    write_target_files(args, "fig3", "h,theta0,theta_hat,sigma_tilde,theta_tilde", &rows, &[FIG34_EPS], blocks)
}

/// Residuals between the hypothesis-expected slope and the measured slope,
/// with one and two empirical standard deviations for reference. Shares the
/// fig3 campaign, so at equal seed the two outputs are consistent.
pub fn fig4(args: &ReproduceArgs) -> Result<(), CliError> {
    let campaigns = fig34_campaigns(args)?;
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for c in campaigns {
        let w = &c.estimates[0];
        let residual = w.expected_slope.expect("alpha supplied") - w.estimate.theta_hat;
        let sigma_hat = sigma_or_nan(w.estimate.sigma_empirical);
        rows.push(format!("{},{residual},{sigma_hat},{}", c.h, 2.0 * sigma_hat));
        blocks.push(c.block);
    }
    write_target_files(args, "fig4", "h,residual,sigma_hat,two_sigma_hat", &rows, &[FIG34_EPS], blocks)
}

/// Slope table at H = 0.7 for two grid resolutions and three window levels,
/// with empirical and theoretical standard deviations.
pub fn table1(args: &ReproduceArgs) -> Result<(), CliError> {
    let h = Hurst::new(TABLE1_H).expect("table H valid");
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for (bi, (n0, r)) in TABLE1_BLOCKS.into_iter().enumerate() {
        // The series count shrinks with the scale but never below the two
        // needed for an empirical sigma; the series size absorbs the rest.
        let series = (f64::from(r) * args.scale).round().clamp(2.0, f64::from(r)) as u32;
        let per = scaled_count(
            TABLE1_PER_SERIES * f64::from(r) / f64::from(series),
            args.scale,
            "a series",
        )?;
        let (table, grid, _, _) =
            build_or_load_table(h, n0, DEFAULT_EPS_L, args.precision, &args.cache_dir)?;
        let seed = args.seed.wrapping_add(bi as u64);
        let campaign = run_windows_streamed(
            &table,
            h,
            grid.eps_l,
            seed,
            series,
            per,
            &TABLE1_WINDOWS,
            None,
        )?;
        for w in &campaign.estimates {
            rows.push(format!(
                "{n0},{},{},{},{}",
                w.eps,
                w.estimate.theta_hat,
                sigma_or_nan(w.estimate.sigma_empirical),
                sigma_or_nan(w.estimate.sigma_theoretical)
            ));
        }
        blocks.push(BlockInfo {
            h: TABLE1_H,
            n0,
            eps_l: grid.eps_l,
            series,
            n_paths: campaign.n_total,
            censored: campaign.censored,
            seed,
            wall_seconds: campaign.wall_seconds,
        });
    }
    write_target_files(
        args,
        "table1",
        "n0,eps,theta_hat,sigma_hat,sigma_tilde",
        &rows,
        &TABLE1_WINDOWS,
        blocks,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn tiny_args(out: &Path, cache: &Path, scale: f64) -> ReproduceArgs {
        ReproduceArgs {
            scale,
            seed: 5,
            out_dir: out.to_path_buf(),
            cache_dir: cache.to_path_buf(),
            precision: PrecisionMode::Standard,
        }
    }

    #[test]
    fn fig1_emits_reference_slope_column() {
        let dir = tempfile::tempdir().unwrap();
        let args = tiny_args(&dir.path().join("out"), &dir.path().join("cache"), 2e-3);
        fig1(&args).unwrap();
        let csv = std::fs::read_to_string(args.out_dir.join("fig1.csv")).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# ifbm fig1"));
        assert_eq!(lines.next().unwrap(), "h,t,neg_ln_survival,theta0_t");
        let first = lines.next().unwrap();
        let cols: Vec<f64> = first.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[0], 0.1);
        assert_eq!(cols[1], 0.0);
        assert_eq!(cols[2], 0.0);
        assert_eq!(cols[3], 0.0);
        let json = std::fs::read_to_string(args.out_dir.join("fig1.json")).unwrap();
        assert!(json.contains("\"sigma_inflation\""));
    }

    #[test]
    fn scale_rounding_to_zero_is_rejected() {
        let err = scaled_count(100_000.0, 1e-9, "a run").unwrap_err();
        assert_eq!(err.code(), 2);
    }

    #[test]
    fn table1_series_layout_matches_scale() {
        // At 1/120 the first block drops to the 2-series floor covering
        // 10^6 paths in total; at full scale the layout is untouched.
        let series = (120.0f64 * (1.0 / 120.0)).round().clamp(2.0, 120.0) as u32;
        assert_eq!(series, 2);
        let per = (TABLE1_PER_SERIES * 120.0 / f64::from(series) * (1.0 / 120.0)).round() as u64;
        assert_eq!(per * u64::from(series), 1_000_000);
        let full = (120.0f64 * 1.0).round().clamp(2.0, 120.0) as u32;
        assert_eq!(full, 120);
    }
}
