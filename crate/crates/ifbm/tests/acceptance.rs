//! Acceptance gate: each test prints one PASS/FAIL line with its measured
//! margin against a tolerance pinned right here. The numbered labels keep
//! the lines greppable. Everything except the multi-minute sweep runs in the
//! default suite; include it with
//! `cargo test --test acceptance -- --include-ignored --nocapture`.

use std::sync::OnceLock;

use rand_core::{RngCore, SeedableRng};

use ifbm::estimate::{
    aggregate_series, cramer_rao_paths, expected_slope_power_model, lnz_std_truncated, ml_slope,
    tail_window, PowerModel, SlopeEstimate, TailWindow,
};
use ifbm::model::{ifbm_covariance, make_grid, rice_interzero_distance, Hurst, LampertiModel};
use ifbm::simulate::{run_series, synthesize_full_path, NoiseStream};
use ifbm::toeplitz::{
    cholesky_oracle, reconstruction_error, schur_coefficients, CoeffTable, CorrSamples,
    PrecisionMode,
};

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn table_for(h: f64, n0: u32, eps_l: f64) -> CoeffTable {
    let grid = make_grid(Hurst::new(h).unwrap(), n0, eps_l).unwrap();
    schur_coefficients(&CorrSamples::from_grid(&grid), PrecisionMode::Standard).unwrap()
}

fn window_zs(records: &[ifbm::simulate::FirstZeroRecord], delta: f64) -> Vec<f64> {
    records
        .iter()
        .filter(|r| !r.censored)
        .map(|r| r.z(delta))
        .collect()
}

const C1_COEFF_TOL: f64 = 1e-8;
const C1_RECONSTRUCTION_TOL: f64 = 1e-6;
const C1_MAX_ROWS: usize = 512;
const C1_PAIRS: usize = 1000;

#[test]
fn c1_streaming_factorization_agrees_with_the_dense_oracle() {
    let mut worst_coeff = 0.0f64;
    let mut worst_rec = 0.0f64;
    for &h in &[0.1, 0.3, 0.5, 0.7, 0.9] {
        let grid = make_grid(Hurst::new(h).unwrap(), 50, 1e-4).unwrap();
        let full = CorrSamples::from_grid(&grid);
        let keep = full.values().len().min(C1_MAX_ROWS);
        let corr = CorrSamples::from_values(full.values()[..keep].to_vec(), full.delta()).unwrap();

        let schur = schur_coefficients(&corr, PrecisionMode::Standard).unwrap();
        let dense = cholesky_oracle(&corr).unwrap();
        let diff = schur
            .rows
            .data()
            .iter()
            .zip(dense.rows.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_coeff = worst_coeff.max(diff);

        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(101);
        let pairs: Vec<(usize, usize)> = (0..C1_PAIRS)
            .map(|_| (rng.next_u64() as usize % keep, rng.next_u64() as usize % keep))
            .collect();
        worst_rec = worst_rec.max(reconstruction_error(&schur.rows, corr.values(), &pairs));
    }
    let pass = worst_coeff <= C1_COEFF_TOL && worst_rec <= C1_RECONSTRUCTION_TOL;
    println!(
        "[1] streaming factorization vs dense oracle: {} (coeff diff {worst_coeff:.2e} <= {C1_COEFF_TOL:.0e}, \
         reconstruction {worst_rec:.2e} <= {C1_RECONSTRUCTION_TOL:.0e})",
        verdict(pass)
    );
    assert!(pass);
}

const C2_TOL: f64 = 1e-6;
const C2_TAU_STEP: f64 = 0.15;
const C2_TAU_POINTS: usize = 20;

#[test]
fn c2_stationarized_covariance_reduces_to_the_sampled_correlation() {
    let mut worst = 0.0f64;
    for &h in &[0.1, 0.3, 0.5, 0.7, 0.9] {
        let hurst = Hurst::new(h).unwrap();
        let model = LampertiModel::new(hurst);
        // The stationarized process is normalized to unit variance, so the
        // exact prefactor is 2H + 2 = 1/Var of the integral at time 1.
        let scale = 2.0 * h + 2.0;
        for i in 1..=C2_TAU_POINTS {
            let tau1 = C2_TAU_STEP * i as f64;
            for j in 1..=C2_TAU_POINTS {
                let tau2 = C2_TAU_STEP * j as f64;
                let lhs = scale
                    * (-(1.0 + h) * (tau1 + tau2)).exp()
                    * ifbm_covariance(hurst, tau1.exp(), tau2.exp());
                let rhs = model.correlation(tau1 - tau2);
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    let pass = worst <= C2_TOL;
    println!(
        "[2] stationarized covariance identity: {} (max abs deviation {worst:.2e} <= {C2_TOL:.0e})",
        verdict(pass)
    );
    assert!(pass);
}

const C3_REL_TOL: f64 = 0.03;
const C3_MIN_CROSSINGS: u64 = 20_000;
const C3_N0: u32 = 400;
const C3_SEED: u64 = 333;

#[test]
fn c3_mean_interzero_distance_matches_the_crossing_rate() {
    // Crossing spacing needs its own fine grid: the sampled correlation has
    // an odd |t|^{2H+2} term, so the discrete spacing sits a factor
    // 1 + delta/3 above the continuum value, 2.4% at the production step.
    let table = table_for(0.5, C3_N0, 1e-4);
    let reference = rice_interzero_distance(Hurst::new(0.5).unwrap());

    // Rate form, observed time over observed crossings: summing completed
    // gaps instead would length-bias the window-straddling ones away.
    let mut crossings = 0u64;
    let mut steps = 0u64;
    let mut path_idx = 0u64;
    while crossings < C3_MIN_CROSSINGS {
        let mut noise = NoiseStream::new(C3_SEED, path_idx);
        path_idx += 1;
        let path = synthesize_full_path(&table, &mut noise);
        for k in 1..path.len() {
            steps += 1;
            if (path[k] >= 0.0) != (path[k - 1] >= 0.0) {
                crossings += 1;
            }
        }
    }
    let mean = steps as f64 * table.delta / crossings as f64;
    let rel = (mean / reference - 1.0).abs();
    let pass = rel <= C3_REL_TOL;
    println!(
        "[3] mean interzero distance at H = 0.5: {} (measured {mean:.4} vs {reference:.4}, \
         rel dev {rel:.4} <= {C3_REL_TOL} over {crossings} crossings)",
        verdict(pass)
    );
    assert!(pass);
}

const C4_TOL: f64 = 0.012;
const C4_PATHS: u64 = 1_000_000;
const C4_SEED: u64 = 444;
const C4_TARGET: f64 = 0.25;

#[test]
fn c4_recovers_the_known_exponent_at_h_half() {
    let table = table_for(0.5, 50, 1e-4);
    let records = run_series(&table, C4_SEED, C4_PATHS);
    let zs = window_zs(&records, table.delta);
    let window = tail_window(Hurst::new(0.5).unwrap(), 0.01);
    let est = ml_slope(&zs, &window).unwrap();
    let diff = (est.theta_hat - C4_TARGET).abs();
    let pass = diff <= C4_TOL;
    println!(
        "[4] known exponent at H = 0.5: {} (theta_hat {:.5} vs {C4_TARGET}, diff {diff:.5} <= {C4_TOL}, \
         n = {}, sigma {:.5})",
        verdict(pass),
        est.theta_hat,
        est.n_obs,
        est.sigma_theoretical.unwrap_or(f64::NAN)
    );
    assert!(pass);
}

// Criteria 5 and 9 read the same H = 0.7 campaign; it runs once.
const CAMPAIGN_SEED: u64 = 2026;
const CAMPAIGN_PATHS: u64 = 1_000_000;
const CAMPAIGN_SERIES: usize = 10;
const CAMPAIGN_WINDOWS: [f64; 3] = [0.1, 0.01, 0.001];

struct Campaign {
    windows: Vec<TailWindow>,
    estimates: Vec<SlopeEstimate>,
}

fn campaign() -> &'static Campaign {
    static CAMPAIGN: OnceLock<Campaign> = OnceLock::new();
    CAMPAIGN.get_or_init(|| {
        let h = Hurst::new(0.7).unwrap();
        let table = table_for(0.7, 30, 1e-4);
        let records = run_series(&table, CAMPAIGN_SEED, CAMPAIGN_PATHS);
        let per = CAMPAIGN_PATHS as usize / CAMPAIGN_SERIES;
        let zs_by_series: Vec<Vec<f64>> = records
            .chunks(per)
            .map(|chunk| window_zs(chunk, table.delta))
            .collect();
        let windows: Vec<TailWindow> =
            CAMPAIGN_WINDOWS.iter().map(|&eps| tail_window(h, eps)).collect();
        let estimates = windows
            .iter()
            .map(|window| {
                let serials: Vec<SlopeEstimate> = zs_by_series
                    .iter()
                    .map(|zs| ml_slope(zs, window).unwrap())
                    .collect();
                aggregate_series(&serials).unwrap()
            })
            .collect();
        Campaign { windows, estimates }
    })
}

// Reference for the deepest window at this grid, from the full-size
// 1.2e8-path campaign; a 1/120-size rerun must land within 3 sigma of it
// and significantly below the naive rate H(1-H) = 0.21.
const C5_REFERENCE: f64 = 0.2002;
const C5_NULL: f64 = 0.21;

#[test]
fn c5_deep_window_slope_at_h_07_rejects_the_naive_rate() {
    let est = &campaign().estimates[0];
    let sigma = est.sigma_theoretical.unwrap();
    let near_reference = (est.theta_hat - C5_REFERENCE).abs() <= 3.0 * sigma;
    let below_null = est.theta_hat < C5_NULL - 3.0 * sigma;
    let pass = near_reference && below_null;
    println!(
        "[5] deep-window slope at H = 0.7: {} (theta_hat {:.5} vs reference {C5_REFERENCE} \
         within {:.5}: {near_reference}; below {C5_NULL} - 3 sigma: {below_null}; n = {})",
        verdict(pass),
        est.theta_hat,
        3.0 * sigma,
        est.n_obs
    );
    assert!(pass);
}

const C6_TOL: f64 = 0.015;
const C6_PATHS: u64 = 4_000_000;
const C6_SEED: u64 = 6000;
const C6_EPS: f64 = 0.01;

#[test]
#[ignore = "slow sweep: runs millions of paths per H"]
fn c6_windowed_slopes_track_h_one_minus_h_across_the_sweep() {
    let mut worst_mid = 0.0f64;
    let mut details = Vec::new();
    for (i, k) in (1..=9).enumerate() {
        let h = f64::from(k) / 10.0;
        let table = table_for(h, 50, 1e-4);
        let records = run_series(&table, C6_SEED + i as u64, C6_PATHS);
        let zs = window_zs(&records, table.delta);
        let window = tail_window(Hurst::new(h).unwrap(), C6_EPS);
        let est = ml_slope(&zs, &window).unwrap();
        let theta0 = h * (1.0 - h);
        let diff = (est.theta_hat - theta0).abs();
        // The edge values H = 0.1, 0.9 are reported but not asserted: the
        // correlation there decays an order of magnitude slower, so this
        // path count leaves them visibly noisier.
        let asserted = (0.15..=0.85).contains(&h);
        if asserted {
            worst_mid = worst_mid.max(diff);
        }
        details.push(format!(
            "H {h:.1}: {:.4}{}",
            diff,
            if asserted { "" } else { " (info)" }
        ));
    }
    let pass = worst_mid <= C6_TOL;
    println!(
        "[6] slope sweep vs H(1-H): {} (max asserted diff {worst_mid:.4} <= {C6_TOL}; {})",
        verdict(pass),
        details.join(", ")
    );
    assert!(pass);
}

const C7_DATASETS: usize = 10_000;
const C7_SAMPLES: usize = 10_000;
const C7_SEED: u64 = 777;
const C7_THETA: f64 = 0.25;
const C7_MEAN_BAND: f64 = 0.05;
const C7_STD_BAND: (f64, f64) = (0.95, 1.05);

fn uniform_open(rng: &mut rand_chacha::ChaCha12Rng) -> f64 {
    (((rng.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
}

#[test]
fn c7_normalized_errors_are_standard_normal_on_synthetic_tails() {
    let window = tail_window(Hurst::new(0.5).unwrap(), 0.01);
    let lambda = C7_THETA * window.length();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(C7_SEED);

    let mut ts = Vec::with_capacity(C7_DATASETS);
    let mut zs = Vec::with_capacity(C7_SAMPLES);
    for _ in 0..C7_DATASETS {
        zs.clear();
        for _ in 0..C7_SAMPLES {
            let u = uniform_open(&mut rng);
            // inverse CDF of the exponential truncated to the window
            let y = -(u * (-lambda).exp_m1()).ln_1p() / C7_THETA;
            zs.push(window.lower + y);
        }
        let est = ml_slope(&zs, &window).unwrap();
        ts.push((est.theta_hat - C7_THETA) / est.sigma_theoretical.unwrap());
    }
    let n = ts.len() as f64;
    let mean = ts.iter().sum::<f64>() / n;
    let var = ts.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    let pass = mean.abs() < C7_MEAN_BAND && std > C7_STD_BAND.0 && std < C7_STD_BAND.1;
    println!(
        "[7] normalized estimator errors on synthetic tails: {} (mean {mean:.4} in (-{C7_MEAN_BAND}, {C7_MEAN_BAND}), \
         std {std:.4} in ({}, {}))",
        verdict(pass),
        C7_STD_BAND.0,
        C7_STD_BAND.1
    );
    assert!(pass);
}

const C8_THETA0: f64 = 0.21;
const C8_TRUNCATION: f64 = 20.0;
const C8_STD_REFS: [(f64, f64); 2] = [(0.01, 0.15883), (0.001, 0.11536)];
const C8_STD_TOL: f64 = 5e-4;
const C8_SIGMA_OPT: f64 = 0.01;
const C8_PATH_REFS: [(f64, f64); 2] = [(0.01, 40e6), (0.001, 750e6)];
const C8_PATH_REL_TOL: f64 = 0.05;

#[test]
fn c8_log_tail_spread_and_path_requirements_match_the_references() {
    let mut pass = true;
    let mut details = Vec::new();
    for (eps, reference) in C8_STD_REFS {
        let s = lnz_std_truncated(C8_THETA0, eps, C8_TRUNCATION, 0.0).unwrap();
        let diff = (s - reference).abs();
        pass &= diff <= C8_STD_TOL;
        details.push(format!("std(ln Z) eps {eps}: {s:.5} vs {reference} (diff {diff:.1e})"));
    }
    for (eps, reference) in C8_PATH_REFS {
        let n = cramer_rao_paths(C8_SIGMA_OPT, eps, C8_TRUNCATION, C8_THETA0, 0.0).unwrap() as f64;
        let rel = (n - reference).abs() / reference;
        pass &= rel <= C8_PATH_REL_TOL;
        details.push(format!("paths eps {eps}: {n:.3e} vs {reference:.0e} (rel {rel:.3})"));
    }
    println!(
        "[8] log-tail spread and required path counts: {} ({}; tol {C8_STD_TOL:.0e} / {C8_PATH_REL_TOL})",
        verdict(pass),
        details.join("; ")
    );
    assert!(pass);
}

const C9_ALPHA: f64 = 0.2;
const C9_NULL: f64 = 0.21;

#[test]
fn c9_power_tail_forward_slopes_agree_with_the_measured_slopes() {
    let campaign = campaign();
    let model = PowerModel {
        theta0: C9_NULL,
        alpha: C9_ALPHA,
    };
    let mut pass = true;
    let mut details = Vec::new();
    for (window, est) in campaign.windows.iter().zip(&campaign.estimates) {
        let tilde = expected_slope_power_model(&model, window).unwrap();
        let sigma_hat = est.sigma_empirical.unwrap();
        let below_null = tilde < C9_NULL;
        let within = (tilde - est.theta_hat).abs() <= 2.0 * sigma_hat;
        pass &= below_null && within;
        details.push(format!(
            "eps {}: tilde {tilde:.5} vs hat {:.5} (2 sigma_hat {:.5}{})",
            window.eps,
            est.theta_hat,
            2.0 * sigma_hat,
            if below_null && within { "" } else { "; OUT" }
        ));
    }
    println!(
        "[9] forward slopes under the power tail: {} ({})",
        verdict(pass),
        details.join("; ")
    );
    assert!(pass);
}
