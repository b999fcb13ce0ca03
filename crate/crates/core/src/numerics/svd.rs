use super::matrix::{dot, Matrix, Real};
use crate::error::{Error, Result};

/// Default relative rank threshold.
pub const RANK_TOL: f64 = 1e-10;

/// Thin SVD `m = u · diag(sigma) · vᵀ` restricted to the numerical rank.
#[derive(Debug, Clone)]
pub struct CompactSvd<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> CompactSvd<T> {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        let us = Matrix::from_fn(self.u.rows(), self.rank(), |i, j| self.u[(i, j)] * self.sigma[j]);
        us.matmul(&self.v.transpose())
    }
}

/// One-sided Jacobi SVD, dropping singular values `≤ rank_tol · σ_max`.
///
/// Deterministic: fixed sweep order, singular values sorted in decreasing
/// order, and each right singular vector has its largest-magnitude entry
/// positive.
pub fn compact_svd<T: Real>(m: &Matrix<T>, rank_tol: T) -> Result<CompactSvd<T>> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    if !(rank_tol > T::zero()) {
        return Err(Error::InvalidInput("rank_tol must be positive".into()));
    }
    if m.rows() >= m.cols() {
        jacobi(m, rank_tol)
    } else {
        let t = jacobi(&m.transpose(), rank_tol)?;
        let mut out = CompactSvd { u: t.v, sigma: t.sigma, v: t.u };
        fix_signs(&mut out);
        Ok(out)
    }
}

fn jacobi<T: Real>(m: &Matrix<T>, rank_tol: T) -> Result<CompactSvd<T>> {
    let (n, d) = m.shape();
    // work on columns stored as rows for contiguous access
    let mut w: Vec<Vec<T>> = (0..d).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<T>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(T, usize)> = w.iter().enumerate().map(|(j, c)| (super::matrix::norm(c), j)).collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let smax = order.first().map_or(T::zero(), |x| x.0);
    let keep: Vec<(T, usize)> =
        order.into_iter().filter(|&(s, _)| s > T::zero() && s > rank_tol * smax).collect();
    let r = keep.len();
    let mut u = Matrix::zeros(n, r);
    let mut vm = Matrix::zeros(d, r);
    let mut sigma = Vec::with_capacity(r);
    for (k, &(s, j)) in keep.iter().enumerate() {
        sigma.push(s);
        for i in 0..n {
            u[(i, k)] = w[j][i] / s;
        }
        for i in 0..d {
            vm[(i, k)] = v[j][i];
        }
    }
    let mut out = CompactSvd { u, sigma, v: vm };
    fix_signs(&mut out);
    Ok(out)
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (a, b) = cols.split_at_mut(q);
    let (cp, cq) = (&mut a[p], &mut b[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

fn fix_signs<T: Real>(s: &mut CompactSvd<T>) {
    for k in 0..s.rank() {
        let mut best = T::zero();
        let mut sign = T::one();
        for i in 0..s.v.rows() {
            let x = s.v[(i, k)];
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < T::zero() {
            for i in 0..s.v.rows() {
                s.v[(i, k)] = -s.v[(i, k)];
            }
            for i in 0..s.u.rows() {
                s.u[(i, k)] = -s.u[(i, k)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    fn orth_err(m: &Matrix<f64>) -> f64 {
        m.gram().max_abs_diff(&Matrix::identity(m.cols()))
    }

    #[test]
    fn identity_input() {
        let s = compact_svd(&Matrix::<f64>::identity(2), 1e-10).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0]);
        assert_eq!(s.u, Matrix::identity(2));
        assert_eq!(s.v, Matrix::identity(2));
    }

    #[test]
    fn zero_input_has_rank_zero() {
        let s = compact_svd(&Matrix::<f64>::zeros(3, 2), 1e-10).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.u.shape(), (3, 0));
        assert_eq!(s.v.shape(), (2, 0));
    }

    #[test]
    fn wide_and_tall_reconstruct() {
        for &(r, c) in &[(5usize, 3usize), (3, 5), (7, 7), (1, 4)] {
            let m = Matrix::from_vec(r, c, lcg(r as u64 * 31 + c as u64, r * c)).unwrap();
            let s = compact_svd(&m, 1e-10).unwrap();
            let rel = s.reconstruct().sub(&m).frobenius() / m.frobenius();
            assert!(rel < 1e-12, "{rel}");
            assert!(orth_err(&s.u) < 1e-12);
            assert!(orth_err(&s.v) < 1e-12);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficiency_is_detected() {
        let a = Matrix::from_vec(6, 2, lcg(3, 12)).unwrap();
        let b = Matrix::from_vec(2, 4, lcg(4, 8)).unwrap();
        let s = compact_svd(&a.matmul(&b), 1e-10).unwrap();
        assert_eq!(s.rank(), 2);
    }

    #[test]
    fn non_finite_rejected() {
        let m = Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(matches!(compact_svd(&m, 1e-10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn single_precision_works() {
        let m = Matrix::<f32>::from_fn(4, 3, |i, j| ((i * 3 + j) as f32).sin());
        let s = compact_svd(&m, 1e-5).unwrap();
        let rel = s.reconstruct().sub(&m).frobenius() / m.frobenius();
        assert!(rel < 1e-5);
    }
}
