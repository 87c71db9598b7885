//! Windowed maximum-likelihood estimation of the tail exponent.
//!
//! The survival tail is locally exponential, so the slope is fitted on
//! quantile decades: the window for level eps runs from the eps-quantile to
//! the eps/10-quantile of the reference exponential. Within a window the
//! conditional law is a truncated exponential whose rate has a one-parameter
//! ML equation; everything here reduces to inverting that equation and to
//! quadrature over hypothesized tail densities.

use crate::model::Hurst;
use crate::quad::{integrate, QuadError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fisher factor of the decade window: sigma(theta_hat) is this constant
/// times theta/sqrt(n) when the window spans one decade of survival,
/// [1 - x^2 e^{-x}/(1-e^{-x})^2]^{-1/2} at x = ln 10.
pub const SIGMA_DECADE_FACTOR: f64 = 1.701_416_918_680_804_3;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("mean excess {m} outside (0, 1)")]
    OutOfRange { m: f64 },
    #[error("need at least {need} in-window observations, found {found}")]
    InsufficientData { found: usize, need: usize },
    #[error("all {n} in-window observations are identical (z = {z})")]
    Degenerate { z: f64, n: usize },
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
}

/// Estimation window (lower, upper]: one decade of survival of the
/// reference exponential with rate theta0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailWindow {
    pub eps: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TailWindow {
    /// Window between the eps- and eps/10-quantiles of Exp(theta0). The
    /// upper edge is built as lower + ln(10)/theta0 so the decade length is
    /// exact by construction.
    pub fn from_rate(theta0: f64, eps: f64) -> Self {
        assert!(theta0 > 0.0 && theta0.is_finite(), "rate must be positive");
        assert!(eps > 0.0 && eps < 1.0, "quantile level must be in (0, 1)");
        let lower = -eps.ln() / theta0;
        Self {
            eps,
            lower,
            upper: lower + std::f64::consts::LN_10 / theta0,
        }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, z: f64) -> bool {
        z > self.lower && z <= self.upper
    }
}

/// Window under the null rate theta0 = H(1-H).
pub fn tail_window(h: Hurst, eps: f64) -> TailWindow {
    let hv = h.get();
    TailWindow::from_rate(hv * (1.0 - hv), eps)
}

/// Windowed ML fit: slope, sample size, normalized mean excess, and the
/// attached uncertainties. `sigma_theoretical` is present for positive
/// slopes; `sigma_empirical` only after serial aggregation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub theta_hat: f64,
    pub n_obs: u64,
    pub mean_excess: f64,
    pub sigma_theoretical: Option<f64>,
    pub sigma_empirical: Option<f64>,
}

/// Mean of the unit truncated exponential: for rate x on a unit window the
/// expected position is f(x) = 1/x - 1/(e^x - 1), strictly decreasing from 1
/// (x -> -inf) through 1/2 (x = 0) to 0 (x -> +inf).
pub fn window_mean_fraction(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        // series around 0; the direct form loses all digits here
        0.5 - x / 12.0 + x * x * x / 720.0
    } else {
        1.0 / x - 1.0 / x.exp_m1()
    }
}

fn window_mean_fraction_deriv(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        -1.0 / 12.0 + x * x / 240.0
    } else if x.abs() > 500.0 {
        // the e^x/(e^x-1)^2 term underflows (or overflows en route)
        -1.0 / (x * x)
    } else {
        let e = x.exp_m1();
        -1.0 / (x * x) + (e + 1.0) / (e * e)
    }
}

/// Inverts the window-mean equation: the unique x with
/// window_mean_fraction(x) = m. Negative excess (m > 1/2) maps to the
/// negative root by the antisymmetry f(-x) = 1 - f(x).
pub fn ml_root(m: f64) -> Result<f64, EstimateError> {
    if !(m > 0.0 && m < 1.0) {
        return Err(EstimateError::OutOfRange { m });
    }
    if m == 0.5 {
        return Ok(0.0);
    }
    if m > 0.5 {
        return Ok(-ml_root(1.0 - m)?);
    }
    // Root lies in (0, ~1/m): f(x) > m near 0 and f(x) < 1/x everywhere,
    // with a doubling guard against the boundary rounding to equality.
    let mut lo = 0.0;
    let mut hi = 1.0 / m;
    while window_mean_fraction(hi) >= m {
        hi *= 2.0;
    }
    let mut x = (12.0 * (0.5 - m)).min(0.5 / m);
    for _ in 0..200 {
        let fx = window_mean_fraction(x) - m;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = fx / window_mean_fraction_deriv(x);
        let newton = x - step;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-13 * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Fits the slope from first-zero times falling inside the window.
///
/// Censored observations must not be passed here: with the table horizon
/// beyond the window's upper edge they can never fall inside it, which is
/// the caller's configuration obligation.
pub fn ml_slope(zs: &[f64], window: &TailWindow) -> Result<SlopeEstimate, EstimateError> {
    let mut n = 0u64;
    let mut sum = 0.0f64;
    let mut first = f64::NAN;
    let mut all_equal = true;
    for &z in zs {
        if !window.contains(z) {
            continue;
        }
        if n == 0 {
            first = z;
        } else if z != first {
            all_equal = false;
        }
        n += 1;
        sum += z - window.lower;
    }
    if n < 2 {
        return Err(EstimateError::InsufficientData {
            found: n as usize,
            need: 2,
        });
    }
    if all_equal {
        return Err(EstimateError::Degenerate {
            z: first,
            n: n as usize,
        });
    }
    let mean_excess = sum / n as f64 / window.length();
    let x = ml_root(mean_excess)?;
    let theta_hat = x / window.length();
    Ok(SlopeEstimate {
        theta_hat,
        n_obs: n,
        mean_excess,
        sigma_theoretical: (theta_hat > 0.0)
            .then(|| SIGMA_DECADE_FACTOR * theta_hat / (n as f64).sqrt()),
        sigma_empirical: None,
    })
}

/// Combines serial estimates: plain mean of the slopes, empirical sigma from
/// their scatter, theoretical sigma from the pooled count. Sums run over
/// sorted values so the result is independent of series order.
pub fn aggregate_series(serials: &[SlopeEstimate]) -> Result<SlopeEstimate, EstimateError> {
    if serials.len() < 2 {
        return Err(EstimateError::InsufficientData {
            found: serials.len(),
            need: 2,
        });
    }
    let s = serials.len() as f64;
    let mut thetas: Vec<f64> = serials.iter().map(|e| e.theta_hat).collect();
    thetas.sort_by(f64::total_cmp);
    let theta_hat = thetas.iter().sum::<f64>() / s;
    let mut sq: Vec<f64> = thetas.iter().map(|t| (t - theta_hat) * (t - theta_hat)).collect();
    sq.sort_by(f64::total_cmp);
    let sigma_empirical = (sq.iter().sum::<f64>() / (s - 1.0)).sqrt() / s.sqrt();

    let n_total: u64 = serials.iter().map(|e| e.n_obs).sum();
    let mut weighted: Vec<f64> = serials
        .iter()
        .map(|e| e.mean_excess * e.n_obs as f64)
        .collect();
    weighted.sort_by(f64::total_cmp);
    let mean_excess = weighted.iter().sum::<f64>() / n_total as f64;
    Ok(SlopeEstimate {
        theta_hat,
        n_obs: n_total,
        mean_excess,
        sigma_theoretical: (theta_hat > 0.0)
            .then(|| SIGMA_DECADE_FACTOR * theta_hat / (n_total as f64).sqrt()),
        sigma_empirical: Some(sigma_empirical),
    })
}

/// Tail hypothesis with a power-law prefactor: survival ~ c t^alpha
/// e^{-theta0 t}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub theta0: f64,
    pub alpha: f64,
}

const THEORY_REL_TOL: f64 = 1e-10;

/// What the windowed ML slope converges to when the tail actually follows
/// `model`: the window mean under density ~ t^alpha e^{-theta0 t} pushed
/// through the ML equation.
pub fn expected_slope_power_model(
    model: &PowerModel,
    window: &TailWindow,
) -> Result<f64, EstimateError> {
    assert!(model.theta0 > 0.0, "power model needs a positive rate");
    let (theta0, alpha) = (model.theta0, model.alpha);
    // Peel a constant scale off the density to keep the quadrature away from
    // underflow for far windows.
    let t0 = window.lower;
    let w = move |t: f64| (alpha * (t / t0).ln() - theta0 * (t - t0)).exp();
    let den = integrate(w, window.lower, window.upper, THEORY_REL_TOL, 0.0)?;
    let num = integrate(|t| t * w(t), window.lower, window.upper, THEORY_REL_TOL, 0.0)?;
    let mean = num.value / den.value;
    let m = (mean - window.lower) / window.length();
    Ok(ml_root(m)? / window.length())
}

/// Standard deviation of ln Z under the power-model density truncated to
/// (Z_eps, A/theta0). Central moments are accumulated in two passes so the
/// variance never goes through a large-mean cancellation.
pub fn lnz_std_truncated(
    theta0: f64,
    eps: f64,
    a_trunc: f64,
    alpha: f64,
) -> Result<f64, EstimateError> {
    assert!(theta0 > 0.0 && eps > 0.0 && eps < 1.0);
    let lower = -eps.ln() / theta0;
    let upper = a_trunc / theta0;
    assert!(
        lower < upper,
        "truncation A = {a_trunc} puts the upper edge below Z_eps = {lower}"
    );
    let t0 = lower;
    let w = move |t: f64| (alpha * (t / t0).ln() - theta0 * (t - t0)).exp();
    let den = integrate(w, lower, upper, THEORY_REL_TOL, 0.0)?.value;
    let m1 = integrate(|t| t.ln() * w(t), lower, upper, THEORY_REL_TOL, 0.0)?.value / den;
    let var = integrate(
        |t| {
            let d = t.ln() - m1;
            d * d * w(t)
        },
        lower,
        upper,
        THEORY_REL_TOL,
        0.0,
    )?
    .value
        / den;
    Ok(var.max(0.0).sqrt())
}

/// Sample size needed to resolve the exponent to sigma_opt from
/// observations in the truncated tail: N = ceil([sigma_opt sigma(ln Z)]^-2
/// / eps).
pub fn cramer_rao_paths(
    sigma_opt: f64,
    eps: f64,
    a_trunc: f64,
    theta0: f64,
    alpha: f64,
) -> Result<u64, EstimateError> {
    assert!(sigma_opt > 0.0);
    let s = lnz_std_truncated(theta0, eps, a_trunc, alpha)?;
    Ok(((sigma_opt * s).powi(-2) / eps).ceil() as u64)
}
