//! Group-ℓ1 programs: minimum-norm interpolation, group lasso and
//! cone-constrained variants, plus dual certificates.

mod admm;
mod certificate;
mod cone;
mod lasso;
mod polish;
pub mod programs;

use std::time::Duration;

pub use admm::solve_group_min_norm;
pub use certificate::{build_certificate, CertificateKind, DualCertificate};
pub use cone::solve_cone_constrained;
pub use lasso::solve_group_lasso;

use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix, Real};

/// Relative threshold below which a block counts as inactive.
pub const ZERO_THRESHOLD: f64 = 1e-6;

/// `min Σ‖w_j‖ (+ data fit)` over ordered blocks `A_j`.
#[derive(Debug, Clone)]
pub struct GroupProblem<T> {
    pub blocks: Vec<Matrix<T>>,
    pub target: Vec<T>,
    /// 0 selects exact interpolation.
    pub beta: T,
    /// Optional per-block constraint `C_j w_j ≥ 0`.
    pub cones: Option<Vec<Option<Matrix<T>>>>,
}

impl<T: Real> GroupProblem<T> {
    pub fn new(blocks: Vec<Matrix<T>>, target: Vec<T>, beta: T) -> Result<Self> {
        let p = Self { blocks, target, beta, cones: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_cones(mut self, cones: Vec<Option<Matrix<T>>>) -> Result<Self> {
        self.cones = Some(cones);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.target.len();
        if self.blocks.iter().any(|b| b.rows() != n) {
            return Err(Error::InvalidShape("every block needs one row per target entry".into()));
        }
        if !self.beta.is_finite() || self.beta < T::zero() {
            return Err(Error::InvalidInput("beta must be finite and >= 0".into()));
        }
        if let Some(c) = &self.cones {
            if c.len() != self.blocks.len() {
                return Err(Error::InvalidShape("one cone entry per block".into()));
            }
            for (cj, aj) in c.iter().zip(&self.blocks) {
                if let Some(cj) = cj {
                    if cj.cols() != aj.cols() || cj.rows() != n {
                        return Err(Error::InvalidShape("cone matrix shape mismatch".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.cols()).collect()
    }

    /// `Σ A_j w_j`
    pub fn apply(&self, w: &[Vec<T>]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n()];
        for (a, wj) in self.blocks.iter().zip(w) {
            for (o, v) in out.iter_mut().zip(a.matvec(wj)) {
                *o += v;
            }
        }
        out
    }

    /// `Σ‖w_j‖`
    pub fn penalty(&self, w: &[Vec<T>]) -> T {
        w.iter().map(|wj| norm(wj)).sum()
    }

    pub fn objective(&self, w: &[Vec<T>]) -> T {
        if self.beta == T::zero() {
            self.penalty(w)
        } else {
            let r: Vec<T> = self.apply(w).iter().zip(&self.target).map(|(&a, &b)| a - b).collect();
            T::lit(0.5) * crate::numerics::dot(&r, &r) + self.beta * self.penalty(w)
        }
    }

    pub(crate) fn concatenated(&self) -> Matrix<T> {
        let refs: Vec<&Matrix<T>> = self.blocks.iter().collect();
        Matrix::hstack(&refs).expect("validated shapes")
    }
}

#[derive(Debug, Clone)]
pub struct BlockSolution<T> {
    pub weights: Vec<Vec<T>>,
    pub dual: Vec<T>,
    /// Multipliers of `C_j w_j ≥ 0` (empty without cones).
    pub cone_duals: Vec<Vec<T>>,
    pub objective: T,
    pub primal_residual: T,
    pub dual_residual: T,
    pub cone_violation: T,
    pub iterations: usize,
    pub active_blocks: Vec<usize>,
    pub converged: bool,
    pub polished: bool,
}

impl<T: Real> BlockSolution<T> {
    pub fn block_norms(&self) -> Vec<T> {
        self.weights.iter().map(|w| norm(w)).collect()
    }

    /// Block index, norm and active flag per line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("block,norm,active\n");
        for (j, nj) in self.block_norms().iter().enumerate() {
            s.push_str(&format!("{},{:.12e},{}\n", j, nj.to_f64().unwrap_or(f64::NAN), u8::from(self.active_blocks.contains(&j))));
        }
        s
    }

    /// Little-endian dump: block count, then per block its length and entries
    /// as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&(w.len() as u64).to_le_bytes());
            for v in w {
                out.extend_from_slice(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes());
            }
        }
        out
    }

    pub fn weights_from_bytes(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
        let mut pos = 0;
        let mut take = || -> Result<[u8; 8]> {
            let s = bytes.get(pos..pos + 8).ok_or_else(|| Error::Parse(format!("truncated dump at byte {pos}")))?;
            pos += 8;
            Ok(s.try_into().expect("eight bytes"))
        };
        let nb = u64::from_le_bytes(take()?) as usize;
        let mut out = Vec::with_capacity(nb);
        for _ in 0..nb {
            let len = u64::from_le_bytes(take()?) as usize;
            let mut w = Vec::with_capacity(len);
            for _ in 0..len {
                w.push(f64::from_le_bytes(take()?));
            }
            out.push(w);
        }
        Ok(out)
    }
}

pub fn active_set<T: Real>(w: &[Vec<T>]) -> Vec<usize> {
    let norms: Vec<T> = w.iter().map(|x| norm(x)).collect();
    let mx = norms.iter().fold(T::zero(), |m, &v| m.max(v));
    if mx == T::zero() {
        return vec![];
    }
    let thr = T::lit(ZERO_THRESHOLD) * mx;
    norms.iter().enumerate().filter(|(_, &v)| v > thr).map(|(j, _)| j).collect()
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rho_init: f64,
    /// Nesterov acceleration in the proximal-gradient solver.
    pub accel: bool,
    /// Active-set Newton refinement with KKT verification.
    pub polish: bool,
    pub time_budget: Option<Duration>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200_000, rho_init: 1.0, accel: true, polish: true, time_budget: None }
    }
}

/// Maximum violations of the optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `‖A_jᵀλ − w_j/‖w_j‖‖` on active blocks (scaled by β when β > 0).
    pub stationarity: f64,
    /// `(‖A_jᵀλ‖ − 1)₊` on inactive blocks (scaled by β when β > 0).
    pub dual_feasibility: f64,
    /// `‖Σ A_j w_j − y‖ / max(1, ‖y‖)` for interpolation problems.
    pub primal_feasibility: f64,
    /// `max_j ‖(C_j w_j)₋‖_∞`
    pub cone_feasibility: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.dual_feasibility).max(self.primal_feasibility).max(self.cone_feasibility)
    }
}

/// Check the block optimality conditions for a candidate solution.
///
/// For β = 0 the solution's own dual is used; for β > 0 the dual is the
/// residual `y − Σ A_j w_j`. Cone multipliers, when present, enter the
/// stationarity condition as `A_jᵀλ + C_jᵀμ_j`.
pub fn verify_kkt<T: Real>(p: &GroupProblem<T>, s: &BlockSolution<T>) -> KktReport {
    let fit = p.apply(&s.weights);
    let resid: Vec<T> = p.target.iter().zip(&fit).map(|(&y, &f)| y - f).collect();
    let (lambda, scale) = if p.beta > T::zero() { (resid.clone(), p.beta) } else { (s.dual.clone(), T::one()) };
    let active = active_set(&s.weights);
    let mut stat = 0.0f64;
    let mut dfeas = 0.0f64;
    let mut cone_v = 0.0f64;
    for (j, a) in p.blocks.iter().enumerate() {
        let mut g = a.tmatvec(&lambda);
        if let Some(c) = p.cones.as_ref().and_then(|c| c[j].as_ref()) {
            if let Some(mu) = s.cone_duals.get(j).filter(|m| !m.is_empty()) {
                for (gi, v) in g.iter_mut().zip(c.tmatvec(mu)) {
                    *gi += v;
                }
            }
            let cw = c.matvec(&s.weights[j]);
            let neg = cw.iter().fold(T::zero(), |m, &v| m.max(-v));
            cone_v = cone_v.max(neg.to_f64().unwrap());
        }
        let g: Vec<T> = g.iter().map(|&v| v / scale).collect();
        let wj = &s.weights[j];
        if active.contains(&j) {
            let nw = norm(wj);
            let diff: Vec<T> = g.iter().zip(wj).map(|(&gi, &wi)| gi - wi / nw).collect();
            stat = stat.max(norm(&diff).to_f64().unwrap());
        } else {
            dfeas = dfeas.max((norm(&g) - T::one()).to_f64().unwrap().max(0.0));
        }
    }
    let primal = if p.beta > T::zero() {
        0.0
    } else {
        (norm(&resid) / norm(&p.target).max(T::one())).to_f64().unwrap()
    };
    KktReport { stationarity: stat, dual_feasibility: dfeas, primal_feasibility: primal, cone_feasibility: cone_v }
}

pub(crate) fn split_blocks<T: Real>(flat: &[T], sizes: &[usize]) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut off = 0;
    for &s in sizes {
        out.push(flat[off..off + s].to_vec());
        off += s;
    }
    out
}

/// Block soft-thresholding `(1 − t/‖v_j‖)₊ v_j` in place.
pub(crate) fn block_shrink<T: Real>(v: &mut [T], sizes: &[usize], t: T) {
    let mut off = 0;
    for &s in sizes {
        let blk = &mut v[off..off + s];
        let nv = norm(blk);
        let f = if nv > t { T::one() - t / nv } else { T::zero() };
        blk.iter_mut().for_each(|x| *x *= f);
        off += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_validation() {
        let a = Matrix::<f64>::identity(3);
        assert!(GroupProblem::new(vec![a.clone()], vec![1.0, 2.0], 0.0).is_err());
        assert!(GroupProblem::new(vec![a.clone()], vec![1.0, 2.0, 3.0], -1.0).is_err());
        let p = GroupProblem::new(vec![a.clone()], vec![1.0, 2.0, 3.0], 0.0).unwrap();
        assert!(p.clone().with_cones(vec![Some(Matrix::zeros(3, 2))]).is_err());
        assert!(p.with_cones(vec![Some(a)]).is_ok());
    }

    #[test]
    fn shrink_and_split() {
        let mut v: Vec<f64> = vec![3.0, 4.0, 0.1, 0.0];
        block_shrink(&mut v, &[2, 2], 1.0);
        assert!((v[0] - 2.4).abs() < 1e-15 && (v[1] - 3.2).abs() < 1e-15);
        assert_eq!(&v[2..], &[0.0, 0.0]);
        assert_eq!(split_blocks(&[1.0, 2.0, 3.0], &[1, 2]), vec![vec![1.0], vec![2.0, 3.0]]);
    }

    #[test]
    fn active_set_is_relative() {
        let w = vec![vec![1e-3, 0.0], vec![1e-10, 0.0], vec![0.0, 0.0]];
        assert_eq!(active_set(&w), vec![0]);
        assert!(active_set::<f64>(&[vec![0.0]]).is_empty());
    }

    #[test]
    fn weight_dump_round_trip() {
        let s = BlockSolution {
            weights: vec![vec![1.0, -2.5], vec![0.0]],
            dual: vec![],
            cone_duals: vec![],
            objective: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            cone_violation: 0.0,
            iterations: 0,
            active_blocks: vec![0],
            converged: true,
            polished: false,
        };
        let back = BlockSolution::<f64>::weights_from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back, s.weights);
        assert!(BlockSolution::<f64>::weights_from_bytes(&s.to_bytes()[..10]).is_err());
        assert!(s.to_csv().starts_with("block,norm,active\n0,"));
    }
}
