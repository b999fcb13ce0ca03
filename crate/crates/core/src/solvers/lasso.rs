use std::time::Instant;

use super::admm::finish;
use super::polish::lasso_on_support;
use super::{active_set, block_shrink, split_blocks, BlockSolution, GroupProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix, Real};

/// Largest eigenvalue of `AᵀA` by power iteration.
pub(crate) fn power_lipschitz<T: Real>(a: &Matrix<T>) -> T {
    let n = a.cols();
    if n == 0 {
        return T::zero();
    }
    let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.01) * T::from_usize(i % 7).unwrap()).collect();
    let mut est = T::zero();
    for _ in 0..200 {
        let nv = norm(&v);
        if nv == T::zero() {
            return T::zero();
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = a.tmatvec(&a.matvec(&v));
        let new = dot(&v, &w);
        v = w;
        if (new - est).abs() <= T::lit(1e-10) * new {
            est = new;
            break;
        }
        est = new;
    }
    est
}

fn try_polish<T: Real>(p: &GroupProblem<T>, z: &[Vec<T>], it: usize) -> Option<BlockSolution<T>> {
    let support = active_set(z);
    let mut weights: Vec<Vec<T>> = p.blocks.iter().map(|b| vec![T::zero(); b.cols()]).collect();
    if !support.is_empty() {
        let sizes: Vec<usize> = support.iter().map(|&j| p.blocks[j].cols()).collect();
        let refs: Vec<&Matrix<T>> = support.iter().map(|&j| &p.blocks[j]).collect();
        let a_s = Matrix::hstack(&refs).ok()?;
        let w0: Vec<T> = support.iter().flat_map(|&j| z[j].iter().copied()).collect();
        let red = lasso_on_support(&a_s, &sizes, &p.target, p.beta, &w0)?;
        for (&j, wj) in support.iter().zip(split_blocks(&red.w, &sizes)) {
            weights[j] = wj;
        }
    }
    let resid: Vec<T> = p.target.iter().zip(p.apply(&weights)).map(|(&y, f)| y - f).collect();
    let s = finish(p, weights, resid, vec![], it, true);
    (s.dual_residual.to_f64().unwrap() <= 1e-9).then_some(s)
}

/// `min ½‖Σ A_j w_j − y‖² + β Σ‖w_j‖` by accelerated proximal gradient with
/// step `1/L`, `L` from power iteration, and adaptive restart.
pub fn solve_group_lasso<T: Real>(p: &GroupProblem<T>, opts: &SolverOptions) -> Result<BlockSolution<T>> {
    p.validate()?;
    if !(p.beta > T::zero()) {
        return Err(Error::InvalidInput("group lasso needs beta > 0".into()));
    }
    let sizes = p.block_sizes();
    let a = p.concatenated();
    let y = &p.target;
    let lip = power_lipschitz(&a) * T::lit(1.0 + 1e-6);
    let nv = a.cols();
    if lip == T::zero() {
        let w = split_blocks(&vec![T::zero(); nv], &sizes);
        let mut s = finish(p, w, y.clone(), vec![], 0, false);
        s.converged = true;
        return Ok(s);
    }
    let step = T::one() / lip;
    let grad = |v: &[T]| -> Vec<T> {
        let r: Vec<T> = a.matvec(v).iter().zip(y).map(|(&x, &t)| x - t).collect();
        a.tmatvec(&r)
    };
    let mut x = vec![T::zero(); nv];
    let mut v = x.clone();
    let mut t = T::one();
    let start = Instant::now();
    let mut last_set: Vec<usize> = vec![];
    let mut next_polish = 100;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let g = grad(&v);
        let mut xn: Vec<T> = v.iter().zip(&g).map(|(&a, &b)| a - step * b).collect();
        block_shrink(&mut xn, &sizes, step * p.beta);
        let dx: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        // gradient-based restart: momentum pointing uphill
        let uphill = dot(&v.iter().zip(&xn).map(|(&a, &b)| a - b).collect::<Vec<T>>(), &dx) > T::zero();
        if opts.accel && !uphill {
            let tn = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
            let mom = (t - T::one()) / tn;
            v = xn.iter().zip(&dx).map(|(&a, &b)| a + mom * b).collect();
            t = tn;
        } else {
            v = xn.clone();
            t = T::one();
        }
        x = xn;
        if it % 25 != 0 {
            continue;
        }
        let xb = split_blocks(&x, &sizes);
        let resid: Vec<T> = y.iter().zip(a.matvec(&x)).map(|(&yy, f)| yy - f).collect();
        let s = finish(p, xb.clone(), resid, vec![], it, false);
        if s.dual_residual.to_f64().unwrap() <= opts.tol {
            let mut s = s;
            s.converged = true;
            return Ok(s);
        }
        if opts.polish {
            let set = active_set(&xb);
            if set == last_set && it >= next_polish {
                if let Some(mut s) = try_polish(p, &xb, it) {
                    s.converged = true;
                    return Ok(s);
                }
                next_polish = (it * 3 / 2).max(it + 100);
            }
            last_set = set;
        }
        if opts.time_budget.is_some_and(|b| start.elapsed() > b) {
            break;
        }
    }
    let xb = split_blocks(&x, &sizes);
    if opts.polish {
        if let Some(mut s) = try_polish(p, &xb, it) {
            s.converged = true;
            return Ok(s);
        }
    }
    let resid: Vec<T> = y.iter().zip(a.matvec(&x)).map(|(&yy, f)| yy - f).collect();
    let mut s = finish(p, xb, resid, vec![], it, false);
    s.converged = s.dual_residual.to_f64().unwrap() <= 10.0 * opts.tol;
    Ok(s)
}
