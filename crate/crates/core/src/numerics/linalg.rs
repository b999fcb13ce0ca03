use super::matrix::{Matrix, Real};
use super::svd::{compact_svd, CompactSvd, RANK_TOL};
use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::InvalidShape("cholesky needs a square matrix".into()));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) {
                return Err(Error::Rank(format!("matrix not positive definite at pivot {j}")));
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }
}

/// Solve a square system by LU with partial pivoting.
pub fn lu_solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::InvalidShape("lu_solve needs a square system".into()));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs();
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if m[(i, k)].abs() > m[(piv, k)].abs() {
                piv = i;
            }
        }
        if m[(piv, k)].abs() <= T::epsilon() * scale * T::lit(n as f64) {
            return Err(Error::Rank(format!("singular system at column {k}")));
        }
        if piv != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == T::zero() {
                continue;
            }
            for j in k..n {
                let t = m[(k, j)];
                m[(i, j)] -= f * t;
            }
            let t = x[k];
            x[i] -= f * t;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

/// Solve `a · x = b` for several right-hand sides (columns of `b`).
pub fn solve_many<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let cols: Result<Vec<Vec<T>>> = (0..b.cols()).map(|j| lu_solve(a, &b.col(j))).collect();
    Ok(Matrix::from_cols(&cols?, a.rows()))
}

pub fn inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    solve_many(a, &Matrix::identity(a.rows()))
}

/// Apply the Moore-Penrose pseudoinverse represented by an SVD.
pub fn svd_pinv_apply<T: Real>(s: &CompactSvd<T>, b: &[T]) -> Vec<T> {
    let mut c = s.u.tmatvec(b);
    for (ci, &si) in c.iter_mut().zip(&s.sigma) {
        *ci /= si;
    }
    s.v.matvec(&c)
}

/// Minimum-norm least-squares solution of `a · x ≈ b`.
pub fn lstsq<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let s = compact_svd(a, T::lit(RANK_TOL))?;
    Ok(svd_pinv_apply(&s, b))
}

pub fn pinv<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let s = compact_svd(a, T::lit(RANK_TOL))?;
    let vs = Matrix::from_fn(s.v.rows(), s.rank(), |i, j| s.v[(i, j)] / s.sigma[j]);
    Ok(vs.matmul(&s.u.transpose()))
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let m = a.cols();
    let s = compact_svd(a, T::lit(RANK_TOL))?;
    if s.rank() == m {
        return Ok(Matrix::zeros(m, 0));
    }
    let proj = Matrix::identity(m).sub(&s.v.matmul(&s.v.transpose()));
    let p = compact_svd(&proj, T::lit(1e-6))?;
    Ok(p.u)
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(a: &Matrix<T>) -> Result<T> {
    let s = compact_svd(a, T::lit(RANK_TOL))?;
    Ok(s.sigma.first().copied().unwrap_or_else(T::zero))
}

/// Minimum-norm solution of `[B₁; …; B_k] · λ = target` for a vertically
/// stacked system with full row rank.
pub fn stacked_pinv_apply<T: Real>(blocks: &[Matrix<T>], target: &[T]) -> Result<Vec<T>> {
    let refs: Vec<&Matrix<T>> = blocks.iter().collect();
    let stack = Matrix::vstack(&refs)?;
    if stack.rows() != target.len() {
        return Err(Error::InvalidShape(format!(
            "stack has {} rows, target has {}",
            stack.rows(),
            target.len()
        )));
    }
    let s = compact_svd(&stack, T::lit(RANK_TOL))?;
    if s.rank() < stack.rows() {
        return Err(Error::DegenerateStack { rank: s.rank(), rows: stack.rows() });
    }
    Ok(svd_pinv_apply(&s, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::{norm, sub_vec};

    fn pseudo(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s % 10_000) as f64 / 5_000.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn cholesky_solves_spd() {
        let b = Matrix::from_vec(5, 3, pseudo(9, 15)).unwrap();
        let a = b.gram().add(&Matrix::identity(3));
        let rhs = vec![1.0, -2.0, 0.5];
        let x = Cholesky::new(&a).unwrap().solve(&rhs);
        assert!(norm(&sub_vec(&a.matvec(&x), &rhs)) < 1e-12);
        assert!(Cholesky::new(&Matrix::<f64>::zeros(2, 2)).is_err());
    }

    #[test]
    fn lu_matches_inverse() {
        let a = Matrix::from_vec(4, 4, pseudo(5, 16)).unwrap();
        let inv = inverse(&a).unwrap();
        assert!(a.matmul(&inv).max_abs_diff(&Matrix::identity(4)) < 1e-10);
        let sing = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(lu_solve(&sing, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn stacked_identity_and_scaling() {
        let e1: Vec<f64> = vec![1.0, 0.0, 0.0];
        assert_eq!(stacked_pinv_apply(&[Matrix::identity(3)], &e1).unwrap(), e1);
        let x: Vec<f64> = stacked_pinv_apply(&[Matrix::identity(3).scale(2.0)], &e1).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1] == 0.0 && x[2] == 0.0);
    }

    #[test]
    fn stacked_residual_and_min_norm() {
        let b1 = Matrix::from_vec(2, 7, pseudo(11, 14)).unwrap();
        let b2 = Matrix::from_vec(3, 7, pseudo(12, 21)).unwrap();
        let t = pseudo(13, 5);
        let x = stacked_pinv_apply(&[b1.clone(), b2.clone()], &t).unwrap();
        let st = Matrix::vstack(&[&b1, &b2]).unwrap();
        assert!(norm(&sub_vec(&st.matvec(&x), &t)) < 1e-9);
        let ns = null_space(&st).unwrap();
        assert_eq!(ns.cols(), 2);
        for j in 0..ns.cols() {
            let moved: Vec<f64> = x.iter().zip(ns.col(j)).map(|(a, b)| a + 0.1 * b).collect();
            assert!(norm(&moved) > norm(&x));
        }
    }

    #[test]
    fn degenerate_stack_is_reported() {
        let b = Matrix::from_vec(2, 4, pseudo(3, 8)).unwrap();
        let r = stacked_pinv_apply(&[b.clone(), b], &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(r, Err(Error::DegenerateStack { rank: 2, rows: 4 })));
    }

    #[test]
    fn lstsq_and_pinv_agree() {
        let a = Matrix::from_vec(6, 3, pseudo(21, 18)).unwrap();
        let b = pseudo(22, 6);
        let x1 = lstsq(&a, &b).unwrap();
        let x2 = pinv(&a).unwrap().matvec(&b);
        assert!(norm(&sub_vec(&x1, &x2)) < 1e-12);
        // normal equations
        let r = sub_vec(&a.matvec(&x1), &b);
        assert!(norm(&a.tmatvec(&r)) < 1e-10);
    }
}
