//! Large-sample limits of the isometry quantities for Gaussian data.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{dot, integrate_tail, norm, norm_cdf, norm_pdf};
use crate::Mat;

const DEGENERATE: f64 = 1e-14;

/// `[E σ′σ′x₁², E σ′σ′x₁x₂, E σ′σ′x₂²]` with gates `x₁ ≥ 0` and
/// `γx₁ + √(1−γ²)x₂ ≥ 0`, `x ~ N(0, I₂)`.
pub fn gate_moments_2d(gamma: f64) -> Result<[f64; 3]> {
    if !(-1.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput("gamma must lie in [-1, 1]".into()));
    }
    let s2 = 1.0 - gamma * gamma;
    if s2 <= DEGENERATE {
        return Ok(if gamma > 0.0 { [0.5, 0.0, 0.5] } else { [0.0; 3] });
    }
    let a = gamma / s2.sqrt();
    let m11 = integrate_tail(|x| x * x * norm_pdf(x) * norm_cdf(a * x), 0.0)?;
    let m12 = integrate_tail(|x| x * norm_pdf(x) * norm_pdf(a * x), 0.0)?;
    let m22 = integrate_tail(|x| norm_pdf(x) * (norm_cdf(a * x) - a * x * norm_pdf(a * x)), 0.0)?;
    Ok([m11, m12, m22])
}

/// Probability that both gates are open: `(π − arccos γ)/(2π)`.
fn both_open(gamma: f64) -> f64 {
    (PI - gamma.clamp(-1.0, 1.0).acos()) / (2.0 * PI)
}

/// `E[xxᵀ 1(xᵀh_i ≥ 0) 1(xᵀh_j ≥ 0)]` for unit `h_i, h_j`, `x ~ N(0, I_d)`.
pub fn gate_moment(hi: &[f64], hj: &[f64]) -> Result<Mat> {
    let d = hi.len();
    if hj.len() != d || (norm(hi) - 1.0).abs() > 1e-9 || (norm(hj) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("gate directions must be unit vectors of equal length".into()));
    }
    let gamma = dot(hi, hj).clamp(-1.0, 1.0);
    let s2 = 1.0 - gamma * gamma;
    if s2 <= DEGENERATE {
        let c = if gamma > 0.0 { 0.5 } else { 0.0 };
        return Ok(Mat::identity(d).scale(c));
    }
    let s = s2.sqrt();
    let u: Vec<f64> = hj.iter().zip(hi).map(|(b, a)| (b - gamma * a) / s).collect();
    let [m11, m12, m22] = gate_moments_2d(gamma)?;
    let p = both_open(gamma);
    Ok(Mat::from_fn(d, d, |r, c| {
        let id = if r == c { p } else { 0.0 };
        id + (m11 - p) * hi[r] * hi[c] + m12 * (hi[r] * u[c] + u[r] * hi[c]) + (m22 - p) * u[r] * u[c]
    }))
}

/// Coefficients of `M = c₁I + c₂(h_ih_jᵀ + h_jh_iᵀ) + c₃(h_ih_iᵀ + h_jh_jᵀ)`
/// at `γ = h_iᵀh_j`, `|γ| < 1`.
pub fn gate_coefficients(gamma: f64) -> Result<(f64, f64, f64)> {
    if !(gamma.abs() < 1.0) {
        return Err(Error::InvalidInput("coefficients are defined for |gamma| < 1".into()));
    }
    let [_, m12, m22] = gate_moments_2d(gamma)?;
    let s2 = 1.0 - gamma * gamma;
    let c1 = both_open(gamma);
    let c3 = (m22 - c1) / s2;
    let c2 = m12 / s2.sqrt() - gamma * c3;
    Ok((c1, c2, c3))
}

/// Limit of the single-neuron isometry quantity at correlation γ.
pub fn curve_g_single(gamma: f64) -> Result<f64> {
    let [m11, _, _] = gate_moments_2d(gamma)?;
    let m12 = (1.0 - gamma * gamma) / (2.0 * PI);
    Ok(2.0 * (m11 * m11 + m12 * m12).sqrt())
}

/// Limit for two opposite planted neurons at correlation γ.
pub fn curve_g1(gamma: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput("gamma must lie in [-1, 1]".into()));
    }
    let s2 = 1.0 - gamma * gamma;
    if s2 <= DEGENERATE {
        return Ok(1.0);
    }
    let a = gamma / s2.sqrt();
    let v = integrate_tail(|x| (norm_cdf(a * x) - norm_cdf(-a * x)) * norm_pdf(x) * x * x, 0.0)?;
    Ok(2.0 * v.abs())
}

/// Limit for two orthogonal planted neurons `e₁, e₂` and a third gate
/// `h = (γ₁, γ₂, √(1 − γ₁² − γ₂²))`.
pub fn curve_g2(gamma1: f64, gamma2: f64) -> Result<f64> {
    let r2 = gamma1 * gamma1 + gamma2 * gamma2;
    if r2 > 1.0 + 1e-12 || !r2.is_finite() {
        return Err(Error::InvalidInput("(gamma1, gamma2) must lie in the unit disk".into()));
    }
    let h = [gamma1, gamma2, (1.0 - r2).max(0.0).sqrt()];
    let hn = norm(&h);
    let h: Vec<f64> = h.iter().map(|v| v / hn).collect();
    // inverse of [[1 + 1/π, 1/2], [1/2, 1 + 1/π]]
    let diag = 1.0 + 1.0 / PI;
    let det = diag * diag - 0.25;
    let (a, b) = (diag / det, -0.5 / det);
    let m1 = gate_moment(&[1.0, 0.0, 0.0], &h)?;
    let m2 = gate_moment(&[0.0, 1.0, 0.0], &h)?;
    let v1 = m1.matvec(&[a, b, 0.0]);
    let v2 = m2.matvec(&[b, a, 0.0]);
    let v: Vec<f64> = v1.iter().zip(&v2).map(|(p, q)| p + q).collect();
    Ok(2.0 * norm(&v))
}
