//! Exact synthesis of the stationary sequence and first-zero sampling.
//!
//! Each series draws standard Gaussian noise from its own counter-mode
//! stream and accumulates x(k delta) = sum_{i<=k} a(i|k) e_i row by row.
//! Because the coefficient rows are exact (up to factorization rounding),
//! the sampled vector has exactly the target finite-dimensional law: there
//! is no spectral truncation or circulant embedding bias. The first-zero
//! search stops at the first sign change, which keeps the expected cost per
//! series at O((Z/delta)^2) rather than O(L^2).

use crate::model::{ifbm_covariance, Hurst};
use crate::toeplitz::{cholesky_rows, CoeffTable, ToeplitzError};
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Deterministic Gaussian noise source. A (seed, stream) pair names the
/// sequence; replays from the same pair are bit-identical, distinct streams
/// are independent. Deviates come from Box-Muller over uniforms in (0, 1].
pub struct NoiseStream {
    rng: ChaCha12Rng,
    spare: Option<f64>,
    drawn: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            spare: None,
            drawn: 0,
        }
    }

    /// Uniform on (0, 1], 53-bit resolution; never 0, so ln() stays finite.
    #[inline]
    fn uniform_open(&mut self) -> f64 {
        (((self.rng.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        self.drawn += 1;
        if let Some(s) = self.spare.take() {
            return s;
        }
        let u = self.uniform_open();
        let v = self.uniform_open();
        let r = (-2.0 * u.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * v).sin_cos();
        self.spare = Some(r * sin);
        r * cos
    }

    /// Count of deviates handed out so far.
    pub fn drawn(&self) -> u64 {
        self.drawn
    }
}

/// Outcome of one first-zero search along a synthesized series.
///
/// z marks the first grid time with x >= 0, so series that start nonnegative
/// record z = 0 immediately; the persistence statistics condition on the
/// z > 0 half (negative starts), whose z is the first return to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstZeroRecord {
    /// Smallest k with x(k delta) >= 0; when censored, the last row index L.
    pub z_index: u32,
    /// True when the series stayed negative through the whole table horizon.
    pub censored: bool,
}

impl FirstZeroRecord {
    /// First-zero time (or the censoring bound) in process time.
    pub fn z(&self, delta: f64) -> f64 {
        f64::from(self.z_index) * delta
    }
}

/// Synthesizes rows until the value reaches zero from below, reusing
/// `noise_buf` for the drawn deviates.
pub fn synthesize_first_zero(
    table: &CoeffTable,
    noise: &mut NoiseStream,
    noise_buf: &mut Vec<f64>,
) -> FirstZeroRecord {
    let n = table.n_rows();
    noise_buf.clear();
    let e0 = noise.next_gaussian();
    noise_buf.push(e0);
    if e0 >= 0.0 {
        return FirstZeroRecord {
            z_index: 0,
            censored: false,
        };
    }
    for k in 1..n {
        noise_buf.push(noise.next_gaussian());
        let row = table.rows.row(k);
        let mut x = 0.0;
        for (a, e) in row.iter().zip(noise_buf.iter()) {
            x += a * e;
        }
        if x >= 0.0 {
            return FirstZeroRecord {
                z_index: k as u32,
                censored: false,
            };
        }
    }
    FirstZeroRecord {
        z_index: (n - 1) as u32,
        censored: true,
    }
}

/// Synthesizes the whole series x(0), x(delta), ..., x(L delta).
pub fn synthesize_full_path(table: &CoeffTable, noise: &mut NoiseStream) -> Vec<f64> {
    let n = table.n_rows();
    let mut eps = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        eps.push(noise.next_gaussian());
        let row = table.rows.row(k);
        let mut x = 0.0;
        for (a, e) in row.iter().zip(eps.iter()) {
            x += a * e;
        }
        out.push(x);
    }
    out
}

/// Runs `n_series` independent first-zero searches. Series s draws from
/// stream s of `seed`, so the result is independent of scheduling and of the
/// number of worker threads.
pub fn run_series(table: &CoeffTable, seed: u64, n_series: u64) -> Vec<FirstZeroRecord> {
    run_series_range(table, seed, 0, n_series)
}

/// Like `run_series` but over streams `first_stream..first_stream + n_series`,
/// so a long campaign can be produced in batches: concatenating the batches
/// reproduces the single-call result exactly.
pub fn run_series_range(
    table: &CoeffTable,
    seed: u64,
    first_stream: u64,
    n_series: u64,
) -> Vec<FirstZeroRecord> {
    let n = table.n_rows();
    (first_stream..first_stream + n_series)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf, s| {
                let mut noise = NoiseStream::new(seed, s);
                synthesize_first_zero(table, &mut noise, buf)
            },
        )
        .collect()
}

/// Empirical survival curve of the first-zero time, conditional on a
/// negative start. Series with z = 0 are excluded from the curve but still
/// counted in `n_series`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurvivalCurve {
    /// Grid times k delta.
    pub t: Vec<f64>,
    /// S(k) = fraction of negative-start series with Z strictly beyond
    /// k delta; S(0) = 1.
    pub survival: Vec<f64>,
    /// All series, immediate-zero ones included.
    pub n_series: u64,
    /// Negative-start series the curve conditions on.
    pub n_conditioned: u64,
}

pub fn survival_estimate(records: &[FirstZeroRecord], delta: f64, n_rows: usize) -> SurvivalCurve {
    let mut died = vec![0u64; n_rows];
    let mut conditioned = 0u64;
    for r in records {
        if r.z_index == 0 {
            continue;
        }
        conditioned += 1;
        if !r.censored {
            died[r.z_index as usize] += 1;
        }
    }
    let mut t = Vec::with_capacity(n_rows);
    let mut survival = Vec::with_capacity(n_rows);
    let mut alive = conditioned;
    for (k, d) in died.iter().enumerate() {
        alive -= d;
        t.push(k as f64 * delta);
        survival.push(if conditioned == 0 {
            0.0
        } else {
            alive as f64 / conditioned as f64
        });
    }
    SurvivalCurve {
        t,
        survival,
        n_series: records.len() as u64,
        n_conditioned: conditioned,
    }
}

/// Samples paths of the integrated process directly from its covariance on
/// arbitrary positive times via dense factorization. Quadratic memory and
/// cubic setup make this a cross-check tool, not the production sampler.
pub fn direct_ifbm_paths(
    h: Hurst,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, ToeplitzError> {
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ToeplitzError::InvalidSamples(
            "times must be strictly increasing and positive".into(),
        ));
    }
    let n = times.len();
    let factor = cholesky_rows(|j, k| ifbm_covariance(h, times[j], times[k]), n)?;
    let mut paths = Vec::with_capacity(n_paths);
    let mut eps = vec![0.0; n];
    for p in 0..n_paths {
        let mut noise = NoiseStream::new(seed, p as u64);
        for e in eps.iter_mut() {
            *e = noise.next_gaussian();
        }
        let mut path = Vec::with_capacity(n);
        for k in 0..n {
            let row = factor.row(k);
            let mut x = 0.0;
            for (a, e) in row.iter().zip(eps.iter()) {
                x += a * e;
            }
            path.push(x);
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Path functionals: running maximum, first time it is attained, and
/// occupation time above zero. Each sample owns half the gap to each
/// neighbor, so the occupation weights sum to the span plus one boundary
/// cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStatistics {
    pub maximum: f64,
    pub argmax: f64,
    pub occupation_above: f64,
}

pub fn path_statistics(times: &[f64], values: &[f64]) -> PathStatistics {
    assert_eq!(times.len(), values.len());
    assert!(!times.is_empty());
    let n = times.len();
    let mut maximum = f64::NEG_INFINITY;
    let mut argmax = times[0];
    let mut occupation = 0.0;
    for i in 0..n {
        if values[i] > maximum {
            maximum = values[i];
            argmax = times[i];
        }
        if values[i] > 0.0 {
            let left = if i == 0 { times[0] } else { (times[i] + times[i - 1]) / 2.0 };
            let right = if i == n - 1 {
                times[n - 1]
            } else {
                (times[i] + times[i + 1]) / 2.0
            };
            occupation += right - left;
        }
    }
    PathStatistics {
        maximum,
        argmax,
        occupation_above: occupation,
    }
}
