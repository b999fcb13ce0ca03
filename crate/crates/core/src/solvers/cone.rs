use std::time::Instant;

use super::admm::{check_range, finish, psd_pinv};
use super::{block_shrink, split_blocks, BlockSolution, GroupProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::numerics::linalg::inverse;
use crate::numerics::{norm, Matrix, Real};

/// `min Σ‖w_j‖ s.t. Σ A_j w_j = y, C_j w_j ≥ 0` by ADMM with the splittings
/// `w = z` and `C w = s ≥ 0`. The `w`-step is an equality-constrained
/// quadratic solved through the Schur complement `Σ A_j (I + C_jᵀC_j)⁻¹ A_jᵀ`.
pub fn solve_cone_constrained<T: Real>(p: &GroupProblem<T>, opts: &SolverOptions) -> Result<BlockSolution<T>> {
    p.validate()?;
    if p.beta != T::zero() {
        return Err(Error::InvalidInput("cone solver handles the interpolation program only".into()));
    }
    let nb = p.num_blocks();
    let n = p.n();
    let cones: Vec<Option<Matrix<T>>> = p.cones.clone().unwrap_or_else(|| vec![None; nb]);
    let mut minv = Vec::with_capacity(nb);
    let mut schur = Matrix::zeros(n, n);
    for (a, c) in p.blocks.iter().zip(&cones) {
        let d = a.cols();
        let m = match c {
            Some(c) => Matrix::identity(d).add(&c.gram()),
            None => Matrix::identity(d),
        };
        let mi = inverse(&m)?;
        schur = schur.add(&a.matmul(&mi).matmul(&a.transpose()));
        minv.push(mi);
    }
    let sp = psd_pinv(&schur)?;
    check_range(&schur, &sp, &p.target)?;
    let a_all = p.concatenated();
    let k = a_all.matmul(&a_all.transpose());
    let kp = psd_pinv(&k)?;

    let zero_w: Vec<Vec<T>> = p.blocks.iter().map(|a| vec![T::zero(); a.cols()]).collect();
    let zero_s: Vec<Vec<T>> = cones.iter().map(|c| vec![T::zero(); c.as_ref().map_or(0, |c| c.rows())]).collect();
    let mut w = zero_w.clone();
    let mut z = zero_w.clone();
    let mut u = zero_w.clone();
    let mut s = zero_s.clone();
    let mut v = zero_s;
    let mut rho = T::lit(opts.rho_init);
    let sizes = p.block_sizes();
    let tol = T::lit(opts.tol);
    let start = Instant::now();
    let mut it = 0;
    let ct = |j: usize, x: &[T]| -> Vec<T> { cones[j].as_ref().map_or_else(Vec::new, |c| c.tmatvec(x)) };
    let cw = |j: usize, x: &[T]| -> Vec<T> { cones[j].as_ref().map_or_else(Vec::new, |c| c.matvec(x)) };
    while it < opts.max_iter {
        it += 1;
        // q_j = z_j − u_j + C_jᵀ(s_j − v_j)
        let q: Vec<Vec<T>> = (0..nb)
            .map(|j| {
                let mut qj: Vec<T> = z[j].iter().zip(&u[j]).map(|(&a, &b)| a - b).collect();
                if cones[j].is_some() {
                    let sv: Vec<T> = s[j].iter().zip(&v[j]).map(|(&a, &b)| a - b).collect();
                    for (x, y) in qj.iter_mut().zip(ct(j, &sv)) {
                        *x += y;
                    }
                }
                qj
            })
            .collect();
        let mq: Vec<Vec<T>> = (0..nb).map(|j| minv[j].matvec(&q[j])).collect();
        let amq = p.apply(&mq);
        let rhs: Vec<T> = p.target.iter().zip(&amq).map(|(&a, &b)| a - b).collect();
        let nu = sp.matvec(&rhs);
        for j in 0..nb {
            let atn = p.blocks[j].tmatvec(&nu);
            let t: Vec<T> = q[j].iter().zip(&atn).map(|(&a, &b)| a + b).collect();
            w[j] = minv[j].matvec(&t);
        }
        let z_old = z.clone();
        let s_old = s.clone();
        let mut flat: Vec<T> = w.iter().zip(&u).flat_map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x + y)).collect();
        block_shrink(&mut flat, &sizes, T::one() / rho);
        z = split_blocks(&flat, &sizes);
        let mut rp2 = T::zero();
        let mut rd2 = T::zero();
        for j in 0..nb {
            if cones[j].is_some() {
                let c = cw(j, &w[j]);
                s[j] = c.iter().zip(&v[j]).map(|(&a, &b)| (a + b).max(T::zero())).collect();
                for ((vi, &ci), &si) in v[j].iter_mut().zip(&c).zip(&s[j]) {
                    *vi += ci - si;
                    rp2 += (ci - si) * (ci - si);
                }
                let ds: Vec<T> = s[j].iter().zip(&s_old[j]).map(|(&a, &b)| a - b).collect();
                let cds = ct(j, &ds);
                rd2 += cds.iter().map(|&x| x * x).sum::<T>();
            }
            for ((ui, &wi), &zi) in u[j].iter_mut().zip(&w[j]).zip(&z[j]) {
                *ui += wi - zi;
                rp2 += (wi - zi) * (wi - zi);
            }
            rd2 += z[j].iter().zip(&z_old[j]).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
        }
        if it % 10 != 0 {
            continue;
        }
        let rp = rp2.sqrt();
        let rd = rho * rd2.sqrt();
        let wn: T = w.iter().map(|x| norm(x)).sum::<T>().max(T::lit(1e-12));
        let un: T = (rho * u.iter().chain(&v).map(|x| norm(x)).sum::<T>()).max(T::lit(1e-12));
        let (ep, ed) = (rp / wn, rd / un);
        if ep <= tol && ed <= tol {
            break;
        }
        if it % 50 == 0 {
            if ep > T::lit(10.0) * ed {
                rho *= T::lit(2.0);
                u.iter_mut().chain(v.iter_mut()).flatten().for_each(|x| *x /= T::lit(2.0));
            } else if ed > T::lit(10.0) * ep {
                rho /= T::lit(2.0);
                u.iter_mut().chain(v.iter_mut()).flatten().for_each(|x| *x *= T::lit(2.0));
            }
            if opts.time_budget.is_some_and(|b| start.elapsed() > b) {
                break;
            }
        }
    }
    // λ from ρ(u + Cᵀv) = Aᵀλ, μ_j = −ρ v_j
    let g: Vec<T> = (0..nb)
        .flat_map(|j| {
            let mut gj: Vec<T> = u[j].iter().map(|&x| rho * x).collect();
            if cones[j].is_some() {
                for (x, y) in gj.iter_mut().zip(ct(j, &v[j])) {
                    *x += rho * y;
                }
            }
            gj
        })
        .collect();
    let lambda = kp.matvec(&a_all.matvec(&g));
    let mu: Vec<Vec<T>> = v.iter().map(|vj| vj.iter().map(|&x| -rho * x).collect()).collect();
    let mut out = finish(p, z, lambda, mu, it, false);
    let lim = T::lit(10.0 * opts.tol);
    out.converged = out.primal_residual <= lim && out.dual_residual <= T::lit(1e-5) && out.cone_violation <= T::lit(1e-6);
    Ok(out)
}
