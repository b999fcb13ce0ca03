//! Two-component Gaussian mixtures: label-pattern probability bound and
//! the maximal condition for the label mask.

use crate::arrangements::max_min_margin;
use crate::ensembles::gen_gmm;
use crate::error::{Error, Result};
use crate::numerics::{dot, norm};
use crate::seed::derive_seed;
use crate::Mat;

/// Margins at or below this count as "no open cell".
pub const MARGIN_EPS: f64 = 1e-9;

/// Lower bound on the probability that the label mask is an arrangement
/// pattern, `1 − n₁e^{−(1−b)‖μ₁‖²/(4σ²)} − n₂e^{−(1−b)‖μ₂‖²/(4σ²)}` with
/// `b = cos∠(μ₁, μ₂)`, clamped to `[0, 1]`.
pub fn indicator_bound(n1: usize, n2: usize, mu1: &[f64], mu2: &[f64], sigma: f64) -> Result<f64> {
    if mu1.len() != mu2.len() {
        return Err(Error::InvalidShape("means differ in length".into()));
    }
    let (a, b) = (norm(mu1), norm(mu2));
    if a == 0.0 || b == 0.0 {
        return Err(Error::InvalidInput("means must be nonzero".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput("sigma must be positive".into()));
    }
    let cos = dot(mu1, mu2) / (a * b);
    if cos >= 1.0 {
        return Err(Error::InvalidInput("means must not be aligned".into()));
    }
    let s2 = 4.0 * sigma * sigma;
    let fail = n1 as f64 * (-(1.0 - cos) * a * a / s2).exp() + n2 as f64 * (-(1.0 - cos) * b * b / s2).exp();
    Ok((1.0 - fail).clamp(0.0, 1.0))
}

fn check_mask(x: &Mat, mask: &[bool]) -> Result<()> {
    if mask.len() != x.rows() {
        return Err(Error::InvalidShape(format!("mask has {} entries, data has {} rows", mask.len(), x.rows())));
    }
    Ok(())
}

/// Whether some direction puts every masked row strictly on the positive
/// side and every other row strictly on the negative side.
pub fn mask_is_realizable(x: &Mat, mask: &[bool]) -> Result<bool> {
    check_mask(x, mask)?;
    let signed = Mat::from_fn(x.rows(), x.cols(), |i, j| if mask[i] { x[(i, j)] } else { -x[(i, j)] });
    Ok(max_min_margin(&signed).t_star > MARGIN_EPS)
}

/// Maximal condition for `mask`: no open cell has a mask strictly containing
/// it. Checked row by row: adding any unmasked row to the masked rows must
/// leave no direction that is strictly positive on all of them.
pub fn mask_is_maximal_exact(x: &Mat, mask: &[bool]) -> Result<bool> {
    check_mask(x, mask)?;
    let base: Vec<usize> = (0..x.rows()).filter(|&i| mask[i]).collect();
    for k in (0..x.rows()).filter(|&i| !mask[i]) {
        let mut rows = base.clone();
        rows.push(k);
        let sub = Mat::from_fn(rows.len(), x.cols(), |i, j| x[(rows[i], j)]);
        if max_min_margin(&sub).t_star > MARGIN_EPS {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Empirical rates over independent mixture draws at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSweepRow {
    pub sigma: f64,
    pub trials: usize,
    pub realizable_rate: f64,
    /// Fraction of all trials where the label mask is realizable and maximal.
    pub maximal_rate: f64,
    pub bound: f64,
}

/// For each `σ`, draw `trials` mixtures and record how often the label mask
/// is an arrangement pattern and how often it is also maximal.
pub fn gmm_sweep(
    n1: usize,
    n2: usize,
    mu1: &[f64],
    mu2: &[f64],
    sigmas: &[f64],
    trials: usize,
    check_maximal: bool,
    seed: u64,
) -> Result<Vec<GmmSweepRow>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    let mut out = Vec::with_capacity(sigmas.len());
    for (si, &sigma) in sigmas.iter().enumerate() {
        let bound = indicator_bound(n1, n2, mu1, mu2, sigma)?;
        let (mut real, mut maxi) = (0usize, 0usize);
        for t in 0..trials {
            let s = derive_seed(seed, "gmm", &[si as u64, t as u64]);
            let (x, q) = gen_gmm(n1, n2, mu1, mu2, sigma, s)?;
            if mask_is_realizable(&x.mat, &q)? {
                real += 1;
                if check_maximal && mask_is_maximal_exact(&x.mat, &q)? {
                    maxi += 1;
                }
            }
        }
        let m = trials as f64;
        out.push(GmmSweepRow {
            sigma,
            trials,
            realizable_rate: real as f64 / m,
            maximal_rate: if check_maximal { maxi as f64 / m } else { f64::NAN },
            bound,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_limits() {
        let mu1 = vec![1.0; 4];
        let mu2 = vec![-1.0; 4];
        assert!(indicator_bound(5, 5, &mu1, &mu2, 1e-3).unwrap() > 0.999_999);
        assert_eq!(indicator_bound(5, 5, &mu1, &mu2, 100.0).unwrap(), 0.0);
        assert!(indicator_bound(5, 5, &mu1, &mu1, 1.0).is_err());
    }

    #[test]
    fn label_mask_of_clean_mixture() {
        let (x, q) = gen_gmm(3, 2, &[1.0, 0.0], &[0.0, 1.0], 0.0, 1).unwrap();
        assert!(mask_is_realizable(&x.mat, &q).unwrap());
        // orthogonal means: both clusters fit in an open halfspace, so the
        // label mask is dominated by the all-ones cell
        assert!(!mask_is_maximal_exact(&x.mat, &q).unwrap());
        let (x, q) = gen_gmm(3, 2, &[1.0, 0.0], &[-1.0, 0.0], 0.0, 1).unwrap();
        assert!(mask_is_maximal_exact(&x.mat, &q).unwrap());
    }

    #[test]
    fn all_ones_is_maximal() {
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(mask_is_maximal_exact(&x, &[true, true]).unwrap());
        assert!(mask_is_maximal_exact(&x, &[true]).is_err());
    }
}
