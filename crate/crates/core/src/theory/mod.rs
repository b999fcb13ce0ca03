//! Closed-form and semi-analytic predictions.

mod curves;
pub mod gmm;

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

pub use curves::{curve_g1, curve_g2, curve_g_single, gate_moment, gate_moments_2d, gate_coefficients};

use crate::error::{Error, Result};
use crate::numerics::{chi2_inverse_survival, chi2_survival, integrate_tail};
use crate::seed::rng_for;

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0).max(1.0);
        Self { mean, stderr: (var / m).sqrt() }
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// `E‖g₊‖²` for `g ~ N(0, I_n)`.
pub fn orthant_statdim_mc(n: usize, samples: usize, seed: u64) -> Result<Estimate> {
    if samples < 100 {
        return Err(Error::InvalidInput("need at least 100 samples".into()));
    }
    let mut rng = rng_for(seed, "statdim", &[n as u64]);
    let xs: Vec<f64> = (0..samples)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let g: f64 = rng.sample(StandardNormal);
                    let p = g.max(0.0);
                    p * p
                })
                .sum()
        })
        .collect();
    Ok(Estimate::from_samples(&xs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    SuccessWhp,
    FailureWhp,
    Critical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::SuccessWhp => "success_whp",
            Regime::FailureWhp => "failure_whp",
            Regime::Critical => "critical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicEstimate {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub regime: Regime,
    /// `4e^{−nα}`
    pub bound: f64,
}

/// Two-sided kinematic estimate for a random `d`-dimensional subspace
/// meeting the nonnegative orthant of `R^n`.
pub fn kinematic_bound(n: usize, d: usize) -> Result<KinematicEstimate> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("n and d must be positive".into()));
    }
    let (nf, df) = (n as f64, d as f64);
    let alpha = (nf / 2.0 - df).powi(2) / (64.0 * nf * nf);
    let regime = match n.cmp(&(2 * d)) {
        std::cmp::Ordering::Greater => Regime::SuccessWhp,
        std::cmp::Ordering::Less => Regime::FailureWhp,
        std::cmp::Ordering::Equal => Regime::Critical,
    };
    Ok(KinematicEstimate { n, d, alpha, regime, bound: 4.0 * (-nf * alpha).exp() })
}

/// `g(θ) = ½ + θ + qθ + ½∫_q^∞ S(r) dr` with `q` the upper `2θ` quantile of
/// χ²₁ and `S` its survival function.
pub fn g_theta(theta: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&theta) {
        return Err(Error::InvalidInput("theta must lie in [0, 0.5]".into()));
    }
    if theta == 0.0 {
        return Ok(0.5);
    }
    let q = chi2_inverse_survival(2.0 * theta)?;
    let tail = integrate_tail(|r| chi2_survival(r).unwrap_or(0.0), q)?;
    Ok(0.5 + theta + q * theta + 0.5 * tail)
}

/// Root of `g(θ) = 1` by bisection on `(1e-4, 0.4999)`.
pub fn solve_theta_star(tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let (mut lo, mut hi) = (1e-4, 0.4999);
    if g_theta(lo)? >= 1.0 || g_theta(hi)? <= 1.0 {
        return Err(Error::Inconsistent("g - 1 does not change sign on the bracket".into()));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g_theta(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaInterval {
    pub lo: f64,
    pub hi: f64,
    pub gamma: f64,
    pub eta: f64,
    pub noise_norm: f64,
    /// Set when the noise hypothesis fails; the interval is then empty.
    pub empty_reason: Option<String>,
}

impl BetaInterval {
    pub fn is_empty(&self) -> bool {
        self.empty_reason.is_some() || self.lo > self.hi
    }

    pub fn contains(&self, beta: f64) -> bool {
        !self.is_empty() && self.lo <= beta && beta <= self.hi
    }

    /// Distance bound `β·η/(η − ‖z‖) + ‖z‖` at a given β.
    pub fn distance_bound(&self, beta: f64) -> f64 {
        beta * self.eta / (self.eta - self.noise_norm) + self.noise_norm
    }
}

/// Regularization range for recovering the linear neuron alone from noisy
/// labels, given the plant norm `eta`, noise norm and condition constant γ.
pub fn noisy_beta_interval(eta: f64, noise_norm: f64, gamma: f64) -> Result<BetaInterval> {
    if !(eta > 0.0) || !(noise_norm >= 0.0) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput("need eta > 0, noise_norm >= 0, gamma in (0, 1]".into()));
    }
    let mut out = BetaInterval { lo: f64::NAN, hi: eta - noise_norm, gamma, eta, noise_norm, empty_reason: None };
    if noise_norm > gamma * eta / 2.0 {
        out.empty_reason = Some(format!("noise norm {noise_norm} exceeds gamma*eta/2 = {}", gamma * eta / 2.0));
        return Ok(out);
    }
    let lo = noise_norm * (eta - noise_norm) / (gamma * eta - noise_norm);
    // lo ≤ hi is equivalent to the hypothesis; clamp rounding at equality
    out.lo = lo.min(out.hi);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub satisfied: bool,
    /// `4000 σ² d ln(54 n)`
    pub log_term: f64,
    /// `1024 d`
    pub linear_term: f64,
    /// The larger of the two terms.
    pub binding: Binding,
}

/// Sample-size condition `n ≥ max{4000σ²d ln(54n), 1024d}`.
pub fn threshold_check(n: usize, d: usize, sigma2: f64) -> ThresholdReport {
    let (nf, df) = (n as f64, d as f64);
    let log_term = 4000.0 * sigma2 * df * (54.0 * nf).ln();
    let linear_term = 1024.0 * df;
    let binding = if log_term >= linear_term { Binding::Log } else { Binding::Linear };
    ThresholdReport { satisfied: nf >= log_term.max(linear_term), log_term, linear_term, binding }
}
