//! Active-set Newton refinement. Given a guess of the support, solve the
//! smooth reduced problem to high accuracy and hand back a dual candidate;
//! the caller decides acceptance through the full optimality check.

use crate::numerics::{compact_svd, dot, norm, Cholesky, CompactSvd, Matrix, Real};

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns of `v`, by Householder reflections.
pub(crate) fn complement_basis<T: Real>(v: &Matrix<T>) -> Matrix<T> {
    let (m, r) = v.shape();
    let mut a = v.clone();
    let mut hs: Vec<Vec<T>> = Vec::with_capacity(r);
    for k in 0..r.min(m) {
        let x: Vec<T> = (k..m).map(|i| a[(i, k)]).collect();
        let nx = norm(&x);
        let mut h = x;
        let sign = if h[0] >= T::zero() { T::one() } else { -T::one() };
        h[0] += sign * nx;
        let nh = norm(&h);
        if nh > T::zero() {
            h.iter_mut().for_each(|e| *e /= nh);
        }
        for j in k..r {
            let s: T = (k..m).map(|i| h[i - k] * a[(i, j)]).sum();
            for i in k..m {
                a[(i, j)] -= T::lit(2.0) * h[i - k] * s;
            }
        }
        hs.push(h);
    }
    // Q = H_1 ⋯ H_r; columns r..m of Q span the complement
    let k = m - r.min(m);
    let mut q = Matrix::from_fn(m, k, |i, j| if i == j + r { T::one() } else { T::zero() });
    for (kk, h) in hs.iter().enumerate().rev() {
        for j in 0..k {
            let s: T = (kk..m).map(|i| h[i - kk] * q[(i, j)]).sum();
            for i in kk..m {
                q[(i, j)] -= T::lit(2.0) * h[i - kk] * s;
            }
        }
    }
    q
}

fn block_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for s in sizes {
        off.push(off.last().unwrap() + s);
    }
    off
}

/// Value, gradient and Hessian of `β·Σ‖w_j‖`, or `None` if a block is
/// numerically zero.
fn group_terms<T: Real>(w: &[T], sizes: &[usize], beta: T, floor: T) -> Option<(T, Vec<T>, Matrix<T>)> {
    let off = block_offsets(sizes);
    let m = w.len();
    let mut val = T::zero();
    let mut grad = vec![T::zero(); m];
    let mut hess = Matrix::zeros(m, m);
    for (j, _) in sizes.iter().enumerate() {
        let blk = &w[off[j]..off[j + 1]];
        let nb = norm(blk);
        if !(nb > floor) {
            return None;
        }
        val += beta * nb;
        for (a, i) in (off[j]..off[j + 1]).enumerate() {
            grad[i] = beta * blk[a] / nb;
            for (b, k) in (off[j]..off[j + 1]).enumerate() {
                let id = if a == b { T::one() } else { T::zero() };
                hess[(i, k)] = beta * (id - blk[a] * blk[b] / (nb * nb)) / nb;
            }
        }
    }
    Some((val, grad, hess))
}

/// Damped Newton on a smooth convex function of `z`, given closures for value
/// and (gradient, Hessian). Returns `None` on breakdown.
fn newton<T: Real>(
    mut z: Vec<T>,
    f: impl Fn(&[T]) -> Option<T>,
    fgh: impl Fn(&[T]) -> Option<(Vec<T>, Matrix<T>)>,
    grad_tol: T,
) -> Option<Vec<T>> {
    let k = z.len();
    if k == 0 {
        return Some(z);
    }
    let mut fz = f(&z)?;
    for _ in 0..60 {
        let (g, mut h) = fgh(&z)?;
        if norm(&g) <= grad_tol {
            return Some(z);
        }
        let tr: T = (0..k).map(|i| h[(i, i)]).sum();
        let reg = T::lit(1e-14) * (tr / T::from_usize(k).unwrap()).max(T::lit(1e-300));
        for i in 0..k {
            h[(i, i)] += reg;
        }
        let step = Cholesky::new(&h).ok()?.solve(&g);
        let slope = dot(&g, &step);
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<T> = z.iter().zip(&step).map(|(&a, &b)| a - t * b).collect();
            if let Some(fc) = f(&cand) {
                if fc <= fz - T::lit(1e-4) * t * slope || (fz - fc).abs() <= T::epsilon() * fz.abs() * T::lit(4.0) {
                    z = cand;
                    fz = fc;
                    accepted = true;
                    break;
                }
            }
            t *= T::lit(0.5);
        }
        if !accepted {
            let (g, _) = fgh(&z)?;
            return if norm(&g) <= grad_tol * T::lit(1e3) { Some(z) } else { None };
        }
    }
    let (g, _) = fgh(&z)?;
    (norm(&g) <= grad_tol * T::lit(1e3)).then_some(z)
}

pub(crate) struct Reduced<T> {
    /// Weights of the supported blocks, concatenated.
    pub w: Vec<T>,
    /// `w_j/‖w_j‖` concatenated (times β for the lasso).
    pub subgrad: Vec<T>,
    pub svd: CompactSvd<T>,
}

/// Minimum of `Σ_{j∈S} ‖w_j‖` subject to `A_S w = y`, warm-started from `w0`.
pub(crate) fn min_norm_on_support<T: Real>(a_s: &Matrix<T>, sizes: &[usize], y: &[T], w0: &[T]) -> Option<Reduced<T>> {
    let svd = compact_svd(a_s, T::lit(1e-10)).ok()?;
    let wp = crate::numerics::linalg::svd_pinv_apply(&svd, y);
    let fit = a_s.matvec(&wp);
    let scale = norm(y).max(T::one());
    let res: Vec<T> = fit.iter().zip(y).map(|(&a, &b)| a - b).collect();
    if norm(&res) > T::lit(1e-9) * scale {
        return None;
    }
    let nb = complement_basis(&svd.v);
    let scale_w = norm(w0).max(norm(&wp)).max(T::lit(1e-300));
    let floor = T::lit(1e-9) * scale_w;
    let wof = |z: &[T]| -> Vec<T> {
        let mut w = wp.clone();
        if !z.is_empty() {
            for (wi, v) in w.iter_mut().zip(nb.matvec(z)) {
                *wi += v;
            }
        }
        w
    };
    let z0 = if nb.cols() > 0 {
        let diff: Vec<T> = w0.iter().zip(&wp).map(|(&a, &b)| a - b).collect();
        nb.tmatvec(&diff)
    } else {
        vec![]
    };
    let z = newton(
        z0,
        |z| group_terms(&wof(z), sizes, T::one(), floor).map(|t| t.0),
        |z| {
            let (_, g, h) = group_terms(&wof(z), sizes, T::one(), floor)?;
            let gz = nb.tmatvec(&g);
            let hn = h.matmul(&nb);
            Some((gz, nb.tmatmul(&hn)))
        },
        T::lit(1e-12),
    )?;
    let w = wof(&z);
    let (_, subgrad, _) = group_terms(&w, sizes, T::one(), floor)?;
    Some(Reduced { w, subgrad, svd })
}

/// Minimum of `½‖A_S w − y‖² + β Σ_{j∈S} ‖w_j‖`, warm-started from `w0`.
pub(crate) fn lasso_on_support<T: Real>(
    a_s: &Matrix<T>,
    sizes: &[usize],
    y: &[T],
    beta: T,
    w0: &[T],
) -> Option<Reduced<T>> {
    let svd = compact_svd(a_s, T::lit(1e-10)).ok()?;
    let gram = a_s.gram();
    let aty = a_s.tmatvec(y);
    let floor = T::lit(1e-9) * norm(w0).max(T::lit(1e-300));
    let value = |w: &[T]| -> Option<T> {
        let r: Vec<T> = a_s.matvec(w).iter().zip(y).map(|(&a, &b)| a - b).collect();
        group_terms(w, sizes, beta, floor).map(|t| T::lit(0.5) * dot(&r, &r) + t.0)
    };
    let w = newton(
        w0.to_vec(),
        value,
        |w| {
            let (_, g, h) = group_terms(w, sizes, beta, floor)?;
            let gw = gram.matvec(w);
            let grad: Vec<T> = gw.iter().zip(&aty).zip(&g).map(|((&a, &b), &c)| a - b + c).collect();
            Some((grad, h.add(&gram)))
        },
        T::lit(1e-12) * beta.max(T::lit(1e-300)),
    )?;
    let (_, subgrad, _) = group_terms(&w, sizes, beta, floor)?;
    Some(Reduced { w, subgrad, svd })
}

/// Dual vectors `λ` with `A_Sᵀλ = g`: the minimum-norm one and, if a hint
/// is given, the one closest to the hint. `None` if `g ∉ range(A_Sᵀ)`.
pub(crate) fn dual_candidates<T: Real>(red: &Reduced<T>, a_s: &Matrix<T>, hint: Option<&[T]>) -> Option<Vec<Vec<T>>> {
    let svd = &red.svd;
    let mut c = svd.v.tmatvec(&red.subgrad);
    for (ci, &si) in c.iter_mut().zip(&svd.sigma) {
        *ci /= si;
    }
    let lmin = svd.u.matvec(&c);
    let chk: Vec<T> = a_s.tmatvec(&lmin).iter().zip(&red.subgrad).map(|(&a, &b)| a - b).collect();
    if norm(&chk) > T::lit(1e-8) * norm(&red.subgrad).max(T::one()) {
        return None;
    }
    let mut out = vec![];
    if let Some(h) = hint {
        let uh = svd.u.tmatvec(h);
        let proj = svd.u.matvec(&uh);
        out.push(lmin.iter().zip(h).zip(&proj).map(|((&l, &hh), &p)| l + hh - p).collect());
    }
    out.push(lmin);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let a = Matrix::<f64>::from_rows(&[vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, -1.0]]).unwrap();
        let s = compact_svd(&a, 1e-12).unwrap();
        let n = complement_basis(&s.v);
        assert_eq!(n.shape(), (4, 2));
        let g = n.gram();
        assert!(g.max_abs_diff(&Matrix::identity(2)) < 1e-13);
        assert!(a.matmul(&n).max_abs() < 1e-13);
    }

    #[test]
    fn min_norm_single_block_is_pinv() {
        // one block: min ‖w‖ s.t. Aw = y is the pseudoinverse solution
        let a = Matrix::<f64>::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let y = vec![1.0, 2.0];
        let r = min_norm_on_support(&a, &[3], &y, &[1.0, 1.0, 1.0]).unwrap();
        let expect = crate::numerics::linalg::lstsq(&a, &y).unwrap();
        for (u, v) in r.w.iter().zip(&expect) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
