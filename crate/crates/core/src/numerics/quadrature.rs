use crate::error::{Error, Result};

// 15-point Kronrod nodes (non-negative half) and weights; odd indices are the
// embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_PANELS: usize = 4000;
const TAIL_CUTOFF: f64 = 1e-14;

fn kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature of `f` on `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut panels = vec![(a, b, kronrod(&f, a, b))];
    loop {
        let total_err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if total_err <= abs_tol {
            break;
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::AccuracyNotReached { achieved: total_err });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.2 .1 > best.1 { (i, p.2 .1) } else { best });
        let (lo, hi, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        panels.push((lo, mid, kronrod(&f, lo, mid)));
        panels.push((mid, hi, kronrod(&f, mid, hi)));
    }
    let mut vals: Vec<f64> = panels.iter().map(|p| p.2 .0).collect();
    vals.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());
    Ok(vals.iter().sum())
}

/// `∫_a^∞ f` for an integrand with at least exponential decay.
///
/// The range is truncated at the first doubling point where `|f|` falls
/// below 1e-14 and stays there at the next probe.
pub fn integrate_tail(f: impl Fn(f64) -> f64, a: f64) -> Result<f64> {
    let mut w = 1.0;
    loop {
        let b = a + w;
        if f(b).abs() < TAIL_CUTOFF && f(b + w).abs() < TAIL_CUTOFF {
            break;
        }
        w *= 2.0;
        if w > 1e6 {
            return Err(Error::AccuracyNotReached { achieved: f(a + w).abs() });
        }
    }
    integrate(f, a, a + w, 1e-11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::norm_pdf;
    use std::f64::consts::PI;

    #[test]
    fn exponential_tail() {
        let v = integrate_tail(|x| (-x).exp(), 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normal_moments() {
        let m1 = integrate_tail(|x| x * norm_pdf(x), 0.0).unwrap();
        assert!((m1 - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-9);
        let m2 = integrate_tail(|x| x * x * norm_pdf(x), 0.0).unwrap();
        assert!((m2 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn finite_interval_polynomial_is_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x, -1.0, 2.0, 1e-12).unwrap();
        assert!((v - (64.0 / 6.0 - 1.0 / 6.0 - 4.5)).abs() < 1e-12);
    }

    #[test]
    fn kink_needs_refinement() {
        let v = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-10).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn non_convergence_reports_bound() {
        let r = integrate(|x: f64| if x > 0.3 { 1e6 } else { 0.0 } * (1.0 / x).sin(), 0.0, 1.0, 1e-300);
        assert!(matches!(r, Err(Error::AccuracyNotReached { .. })));
    }
}
