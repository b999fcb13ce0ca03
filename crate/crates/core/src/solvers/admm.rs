use std::time::Instant;

use super::polish::{dual_candidates, min_norm_on_support};
use super::{active_set, block_shrink, split_blocks, verify_kkt, BlockSolution, GroupProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::numerics::{compact_svd, norm, Matrix, Real};

/// Pseudoinverse of a symmetric positive semidefinite matrix.
pub(crate) fn psd_pinv<T: Real>(k: &Matrix<T>) -> Result<Matrix<T>> {
    let s = compact_svd(k, T::lit(1e-13))?;
    let us = Matrix::from_fn(s.u.rows(), s.rank(), |i, j| s.u[(i, j)] / s.sigma[j]);
    Ok(us.matmul(&s.u.transpose()))
}

/// Reject targets outside the range of a PSD matrix `k` with pseudoinverse `kp`.
pub(crate) fn check_range<T: Real>(k: &Matrix<T>, kp: &Matrix<T>, y: &[T]) -> Result<()> {
    let proj = k.matvec(&kp.matvec(y));
    let gap: Vec<T> = proj.iter().zip(y).map(|(&a, &b)| a - b).collect();
    let rel = norm(&gap) / norm(y).max(T::lit(1e-300));
    if rel > T::lit(1e-7) {
        return Err(Error::Infeasible(rel.to_f64().unwrap()));
    }
    Ok(())
}

pub(crate) struct Checkpoint {
    pub next_polish: usize,
    pub last_set: Vec<usize>,
}

/// Try to finish from the support of `z`: reduced Newton solve plus a dual
/// that certifies every inactive block.
pub(crate) fn try_polish<T: Real>(
    p: &GroupProblem<T>,
    z: &[Vec<T>],
    lambda_hint: &[T],
    iterations: usize,
) -> Option<BlockSolution<T>> {
    let support = active_set(z);
    if support.is_empty() {
        return None;
    }
    let sizes: Vec<usize> = support.iter().map(|&j| p.blocks[j].cols()).collect();
    if sizes.iter().sum::<usize>() > 1500 {
        return None;
    }
    let refs: Vec<&Matrix<T>> = support.iter().map(|&j| &p.blocks[j]).collect();
    let a_s = Matrix::hstack(&refs).ok()?;
    let w0: Vec<T> = support.iter().flat_map(|&j| z[j].iter().copied()).collect();
    let red = min_norm_on_support(&a_s, &sizes, &p.target, &w0)?;
    let cands = dual_candidates(&red, &a_s, Some(lambda_hint))?;
    let parts = split_blocks(&red.w, &sizes);
    let mut weights: Vec<Vec<T>> = p.blocks.iter().map(|b| vec![T::zero(); b.cols()]).collect();
    for (&j, wj) in support.iter().zip(parts) {
        weights[j] = wj;
    }
    let mut best: Option<BlockSolution<T>> = None;
    for lambda in cands {
        let sol = finish(p, weights.clone(), lambda, vec![], iterations, true);
        if sol.dual_residual.to_f64().unwrap() <= 1e-9
            && best.as_ref().is_none_or(|b| sol.dual_residual < b.dual_residual)
        {
            best = Some(sol);
        }
    }
    best
}

pub(crate) fn finish<T: Real>(
    p: &GroupProblem<T>,
    weights: Vec<Vec<T>>,
    dual: Vec<T>,
    cone_duals: Vec<Vec<T>>,
    iterations: usize,
    polished: bool,
) -> BlockSolution<T> {
    let mut s = BlockSolution {
        objective: p.objective(&weights),
        active_blocks: active_set(&weights),
        weights,
        dual,
        cone_duals,
        primal_residual: T::zero(),
        dual_residual: T::zero(),
        cone_violation: T::zero(),
        iterations,
        converged: false,
        polished,
    };
    let k = verify_kkt(p, &s);
    s.primal_residual = T::lit(k.primal_feasibility);
    s.dual_residual = T::lit(k.stationarity.max(k.dual_feasibility));
    s.cone_violation = T::lit(k.cone_feasibility);
    s
}

/// `min Σ‖w_j‖ s.t. Σ A_j w_j = y` by ADMM on the splitting `w = z`, with the
/// `w`-step an exact projection onto the affine constraint and the `z`-step a
/// block shrinkage. Residual balancing adapts ρ; an active-set Newton polish
/// with a full optimality check ends the run early when it succeeds.
pub fn solve_group_min_norm<T: Real>(p: &GroupProblem<T>, opts: &SolverOptions) -> Result<BlockSolution<T>> {
    p.validate()?;
    if p.beta != T::zero() {
        return Err(Error::InvalidInput("min-norm solver needs beta = 0".into()));
    }
    if p.cones.as_ref().is_some_and(|c| c.iter().any(Option::is_some)) {
        return Err(Error::InvalidInput("use the cone-constrained solver for cone programs".into()));
    }
    let sizes = p.block_sizes();
    let a = p.concatenated();
    let y = &p.target;
    let k = a.matmul(&a.transpose());
    let kp = psd_pinv(&k)?;
    check_range(&k, &kp, y)?;
    let nv = a.cols();
    let tol = T::lit(opts.tol);
    let project = |v: &[T]| -> Vec<T> {
        let r: Vec<T> = a.matvec(v).iter().zip(y).map(|(&x, &t)| x - t).collect();
        let c = a.tmatvec(&kp.matvec(&r));
        v.iter().zip(&c).map(|(&x, &d)| x - d).collect()
    };
    let dual_of = |g: &[T]| kp.matvec(&a.matvec(g));

    let mut w = project(&vec![T::zero(); nv]);
    let mut z = w.clone();
    let mut u = vec![T::zero(); nv];
    let mut rho = T::lit(opts.rho_init);
    let start = Instant::now();
    let mut cp = Checkpoint { next_polish: 50, last_set: vec![] };
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let v: Vec<T> = z.iter().zip(&u).map(|(&a, &b)| a - b).collect();
        w = project(&v);
        let z_old = std::mem::replace(&mut z, w.iter().zip(&u).map(|(&a, &b)| a + b).collect());
        block_shrink(&mut z, &sizes, T::one() / rho);
        for ((ui, &wi), &zi) in u.iter_mut().zip(&w).zip(&z) {
            *ui += wi - zi;
        }
        if it % 10 != 0 {
            continue;
        }
        let r: Vec<T> = w.iter().zip(&z).map(|(&a, &b)| a - b).collect();
        let rp = norm(&r);
        let dz: Vec<T> = z.iter().zip(&z_old).map(|(&a, &b)| a - b).collect();
        let rd = rho * norm(&dz);
        let scale_p = norm(&w).max(norm(&z)).max(T::lit(1e-12));
        let scale_d = (rho * norm(&u)).max(T::lit(1e-12));
        if rp <= tol * scale_p && rd <= tol * scale_d {
            break;
        }
        if it % 50 == 0 {
            if rp > T::lit(10.0) * rd / scale_d * scale_p {
                rho *= T::lit(2.0);
                u.iter_mut().for_each(|x| *x /= T::lit(2.0));
            } else if rd / scale_d * scale_p > T::lit(10.0) * rp {
                rho /= T::lit(2.0);
                u.iter_mut().for_each(|x| *x *= T::lit(2.0));
            }
            if opts.polish {
                let zb = split_blocks(&z, &sizes);
                let set = active_set(&zb);
                if set == cp.last_set && it >= cp.next_polish {
                    let g: Vec<T> = u.iter().map(|&x| x * rho).collect();
                    if let Some(mut s) = try_polish(p, &zb, &dual_of(&g), it) {
                        s.converged = true;
                        return Ok(s);
                    }
                    cp.next_polish = (it * 3 / 2).max(it + 100);
                }
                cp.last_set = set;
            }
            if opts.time_budget.is_some_and(|b| start.elapsed() > b) {
                break;
            }
        }
    }
    let zb = split_blocks(&z, &sizes);
    let g: Vec<T> = u.iter().map(|&x| x * rho).collect();
    let lambda = dual_of(&g);
    if opts.polish {
        if let Some(mut s) = try_polish(p, &zb, &lambda, it) {
            s.converged = true;
            return Ok(s);
        }
    }
    let mut s = finish(p, zb, lambda, vec![], it, false);
    let lim = 10.0 * opts.tol;
    s.converged = s.primal_residual.to_f64().unwrap() <= lim && s.dual_residual.to_f64().unwrap() <= lim;
    Ok(s)
}
