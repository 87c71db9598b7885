//! Closed-form layer: the stationarized correlation function, Rice's mean
//! interzero distance, the process covariance used for cross-validation, and
//! uniform grid construction.
//!
//! The stationary form arises from x(tau) = c e^{-(1+H)tau} Y(e^tau) where Y
//! is the integrated fractional process with unit structure-function scale;
//! its correlation is
//!
//!   r(t) = c^2 [ 2(1+H) cosh(Ht) - cosh((1+H)t) + (1/2)|2 sinh(t/2)|^{2H+2} ]
//!
//! with c^2 = 1/(1+2H). The three terms individually grow like e^{(1+H)t}
//! while the sum decays like e^{-rho t}, rho = min(H, 1-H), so large lags are
//! evaluated through an exact series rearrangement (see `correlation_in`).

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("self-similarity parameter must lie strictly inside (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("grid resolution n0 must be at least 2, got {0}")]
    InvalidResolution(u32),
    #[error("tail cutoff eps_L must lie in (0, 1), got {0}")]
    InvalidTailCutoff(f64),
    #[error("correlation underflowed to zero on the entire lag grid")]
    AllUnderflowed,
    #[error("decay fit needs at least 2 usable lags, got {0}")]
    TooFewLags(usize),
}

/// Self-similarity parameter, strictly inside (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self, ModelError> {
        if h.is_finite() && 0.0 < h && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(ModelError::InvalidHurst(h))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Hurst {
    type Error = ModelError;
    fn try_from(h: f64) -> Result<Self, ModelError> {
        Self::new(h)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

/// The stationarized process: H together with its derived constants.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LampertiModel {
    h: Hurst,
}

impl LampertiModel {
    pub fn new(h: Hurst) -> Self {
        Self { h }
    }

    #[inline]
    pub fn hurst(&self) -> Hurst {
        self.h
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h.get()
    }

    /// Normalization constant c = (1+2H)^{-1/2} of the stationarizing map.
    pub fn c(&self) -> f64 {
        (1.0 + 2.0 * self.h()).powf(-0.5)
    }

    /// Asymptotic decay rate of r: rho = min(H, 1-H).
    pub fn rho(&self) -> f64 {
        self.h().min(1.0 - self.h())
    }

    /// Hypothesized persistence exponent H(1-H).
    pub fn theta0(&self) -> f64 {
        let h = self.h();
        h * (1.0 - h)
    }

    /// Stationary correlation r(t); even in t, |r| <= 1, r(0) = 1.
    pub fn correlation(&self, t: f64) -> f64 {
        assert!(t.is_finite(), "correlation lag must be finite, got {t}");
        correlation_in::<f64>(self.h(), t)
    }

    /// Least-squares fit of the decay rate of ln|r| over large lags, compared
    /// with the predicted rate -rho.
    pub fn decay_check(&self, lags: &[f64]) -> Result<DecayReport, ModelError> {
        for &t in lags {
            assert!(t >= 10.0, "decay fit requires lags >= 10, got {t}");
        }
        let pts: Vec<(f64, f64)> = lags
            .iter()
            .filter_map(|&t| {
                let r = self.correlation(t);
                (r != 0.0).then(|| (t, r.abs().ln()))
            })
            .collect();
        if pts.is_empty() {
            return Err(ModelError::AllUnderflowed);
        }
        if pts.len() < 2 {
            return Err(ModelError::TooFewLags(pts.len()));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for &(x, y) in &pts {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
        let rate = sxy / sxx;
        let intercept = my - rate * mx;
        let residual_rms = (pts
            .iter()
            .map(|&(x, y)| (y - rate * x - intercept).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        Ok(DecayReport {
            rate,
            deviation_from_rho: rate + self.rho(),
            residual_rms,
            points_used: pts.len(),
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecayReport {
    pub rate: f64,
    pub deviation_from_rho: f64,
    pub residual_rms: f64,
    pub points_used: usize,
}

/// Series cutoff for the large-lag branch; terms shrink by e^{-t} <= e^{-1}
/// per step, so this bounds the tail below any supported epsilon.
const SERIES_MAX_TERMS: usize = 300;

/// r(t) in any supported scalar type.
///
/// For |t| < 1 the defining combination is evaluated directly (its condition
/// number stays below ~10). For |t| >= 1 the binomial expansion of
/// |2 sinh(t/2)|^{2H+2} = e^{(1+H)t}(1-e^{-t})^{2H+2} cancels the two growing
/// exponentials exactly, leaving
///
///   r(t)/c^2 = (1+H)e^{-Ht} - (1/2)e^{-(1+H)t}
///            + (1/2) sum_{n>=2} d_n e^{(1+H-n)t},
///
/// where d_n = (-1)^n binom(2H+2, n); every term decays, so the sum is
/// well conditioned down to the underflow threshold.
pub fn correlation_in<T: Scalar>(h: f64, t: T) -> T {
    let t = t.abs();
    let one = T::one();
    let half = T::of(0.5);
    let hh = T::of(h);
    let h1 = hh + one;
    let c2 = T::of(1.0 / (1.0 + 2.0 * h));
    if t < one {
        let beta = T::of(2.0 * h + 2.0);
        let cosh_h = half * ((hh * t).exp() + (-(hh * t)).exp());
        let cosh_h1 = half * ((h1 * t).exp() + (-(h1 * t)).exp());
        let sinh2 = (half * t).exp() - (-(half * t)).exp();
        let power = if sinh2 > T::zero() {
            sinh2.powf_s(beta)
        } else {
            T::zero()
        };
        return c2 * ((one + one) * h1 * cosh_h - cosh_h1 + half * power);
    }

    let beta = 2.0 * h + 2.0;
    let u = (-t).exp();
    let mut acc = h1 * (-(hh * t)).exp() - half * (-(h1 * t)).exp();
    // d_2 = beta(beta-1)/2; thereafter d_n = d_{n-1} (n-1-beta)/n.
    let mut d = T::of(beta * (beta - 1.0) / 2.0);
    let mut q = ((hh - one) * t).exp();
    for n in 3..=SERIES_MAX_TERMS {
        let term = half * d * q;
        acc += term;
        if term.abs() <= acc.abs() * T::eps() {
            break;
        }
        d *= T::of(n as f64 - 1.0 - beta) / T::of(n as f64);
        q *= u;
    }
    c2 * acc
}

/// Mean interzero distance pi (1-H^2)^{-1/2}: the curvature -r''(0) equals
/// 1-H^2, and the mean zero spacing of a smooth stationary Gaussian process
/// is pi / sqrt(-r''(0)).
pub fn rice_interzero_distance(h: Hurst) -> f64 {
    let h = h.get();
    std::f64::consts::PI / (1.0 - h * h).sqrt()
}

/// Covariance of the integrated process at (t, s), unit structure-function
/// scale: double integration of (u^{2H} + v^{2H} - |u-v|^{2H})/2 over
/// [0,t] x [0,s] in closed form.
pub fn ifbm_covariance(h: Hurst, t: f64, s: f64) -> f64 {
    assert!(
        t >= 0.0 && s >= 0.0 && t.is_finite() && s.is_finite(),
        "covariance arguments must be finite and nonnegative, got ({t}, {s})"
    );
    let a = 2.0 * h.get();
    let b = a + 1.0;
    let g = a + 2.0;
    0.5 * ((s * t.powf(b) + t * s.powf(b)) / b
        - (t.powf(g) + s.powf(g) - (t - s).abs().powf(g)) / (b * g))
}

/// (1-eps)-quantile of the exponential law with rate theta0: -ln(eps)/theta0.
pub fn tail_quantile(theta0: f64, eps: f64) -> f64 {
    -eps.ln() / theta0
}

/// Uniform simulation grid: step delta = Delta0/n0, length L sized so the
/// grid end exceeds the (1-eps_L) tail quantile.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: Hurst,
    pub n0: u32,
    pub delta: f64,
    pub len: u32,
    pub eps_l: f64,
}

impl GridSpec {
    /// Grid end L*delta in stationary time units.
    pub fn horizon(&self) -> f64 {
        f64::from(self.len) * self.delta
    }
}

pub fn make_grid(h: Hurst, n0: u32, eps_l: f64) -> Result<GridSpec, ModelError> {
    if n0 < 2 {
        return Err(ModelError::InvalidResolution(n0));
    }
    if !(eps_l.is_finite() && 0.0 < eps_l && eps_l < 1.0) {
        return Err(ModelError::InvalidTailCutoff(eps_l));
    }
    let delta = rice_interzero_distance(h) / f64::from(n0);
    let model = LampertiModel::new(h);
    let z = tail_quantile(model.theta0(), eps_l);
    let len = (z / delta).ceil() as u32;
    Ok(GridSpec {
        h,
        n0,
        delta,
        len,
        eps_l,
    })
}
