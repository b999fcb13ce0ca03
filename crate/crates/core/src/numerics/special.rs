use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 − Φ(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Survival function of the chi-square law with one degree of freedom.
pub fn chi2_survival(r: f64) -> Result<f64> {
    if !(r >= 0.0) || r.is_infinite() && r < 0.0 {
        return Err(Error::InvalidInput(format!("chi2 survival needs r >= 0, got {r}")));
    }
    Ok(libm::erfc((0.5 * r).sqrt()))
}

/// CDF of the chi-square law with one degree of freedom.
pub fn chi2_cdf(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidInput(format!("chi2 cdf needs r >= 0, got {r}")));
    }
    Ok(libm::erf((0.5 * r).sqrt()))
}

/// Inverse CDF (`F⁻¹(p)`) of the one-degree chi-square law.
pub fn chi2_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("chi2 quantile needs p in (0,1), got {p}")));
    }
    // F is increasing; solve F(r) = p
    Ok(bisect_decreasing(|r| 1.0 - libm::erf((0.5 * r).sqrt()), 1.0 - p, |r| {
        libm::erf((0.5 * r).sqrt()) - p
    }))
}

/// Inverse survival function: the `r` with `chi2_survival(r) = s`.
pub fn chi2_inverse_survival(s: f64) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidInput(format!("chi2 inverse survival needs s in (0,1], got {s}")));
    }
    if s == 1.0 {
        return Ok(0.0);
    }
    Ok(bisect_decreasing(|r| libm::erfc((0.5 * r).sqrt()), s, |r| s - libm::erfc((0.5 * r).sqrt())))
}

/// Bisection for the root of the increasing function `g` on `[0, ∞)`, with
/// the bracket grown until the decreasing `tail` drops below `level`.
fn bisect_decreasing(tail: impl Fn(f64) -> f64, level: f64, g: impl Fn(f64) -> f64) -> f64 {
    let mut hi = 1.0;
    while tail(hi) > level && hi < 1e4 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1e-3) {
            break;
        }
    }
    0.5 * (lo + hi)
}
