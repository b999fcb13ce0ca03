//! Neural isometry conditions.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::arrangements::{mask_string, pattern_of, ArrangementPattern, Mask, PatternSet};
use crate::error::{Error, Result};
use crate::numerics::{compact_svd, norm, stacked_pinv_apply, Cholesky, CompactSvd, RANK_TOL};
use crate::Mat;

/// Strictness margin for declaring a condition satisfied.
pub const STRICT_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NicKind {
    NicL,
    Nic1,
    Nnic1,
    NicK,
    NnicK,
    SnicOrth,
}

impl fmt::Display for NicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NicKind::NicL => "nic-l",
            NicKind::Nic1 => "nic-1",
            NicKind::Nnic1 => "nnic-1",
            NicKind::NicK => "nic-k",
            NicKind::NnicK => "nnic-k",
            NicKind::SnicOrth => "snic-orth",
        })
    }
}

impl FromStr for NicKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nic-l" => Ok(NicKind::NicL),
            "nic-1" => Ok(NicKind::Nic1),
            "nnic-1" => Ok(NicKind::Nnic1),
            "nic-k" => Ok(NicKind::NicK),
            "nnic-k" => Ok(NicKind::NnicK),
            "snic-orth" => Ok(NicKind::SnicOrth),
            _ => Err(Error::Parse(format!("unknown condition {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NicReport {
    pub kind: NicKind,
    pub per_pattern: Vec<(Mask, f64)>,
    /// Maximum over non-planted patterns.
    pub max_lhs: f64,
    pub holds: bool,
    /// The maximum sits within the strictness margin of 1.
    pub marginal: bool,
    pub planted_indices: Vec<usize>,
}

impl NicReport {
    fn assemble(kind: NicKind, per_pattern: Vec<(Mask, f64)>, planted_indices: Vec<usize>) -> Self {
        let max_lhs = per_pattern
            .iter()
            .enumerate()
            .filter(|(j, _)| !planted_indices.contains(j))
            .map(|(_, p)| p.1)
            .fold(0.0, f64::max);
        let holds = max_lhs < 1.0 - STRICT_MARGIN;
        let marginal = (max_lhs - 1.0).abs() <= STRICT_MARGIN;
        Self { kind, per_pattern, max_lhs, holds, marginal, planted_indices }
    }

    /// `kind,mask,lhs,holds` rows; `holds` is per pattern (planted rows are
    /// marked `planted`).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,mask,lhs,holds\n");
        for (j, (mask, lhs)) in self.per_pattern.iter().enumerate() {
            let flag = if self.planted_indices.contains(&j) {
                "planted".to_string()
            } else if self.kind == NicKind::SnicOrth {
                (*lhs <= 1.0).to_string()
            } else {
                (*lhs < 1.0 - STRICT_MARGIN).to_string()
            };
            s.push_str(&format!("{},{},{:.12e},{}\n", self.kind, mask_string(mask), lhs, flag));
        }
        s
    }
}

fn unit(w: &[f64]) -> Result<Vec<f64>> {
    let s = norm(w);
    if s == 0.0 {
        return Err(Error::InvalidInput("planted neuron is zero".into()));
    }
    Ok(w.iter().map(|v| v / s).collect())
}

/// `‖Xᵀ D u‖` for a mask `D` and an n-vector `u`.
fn masked_tnorm(x: &Mat, mask: &[bool], u: &[f64]) -> f64 {
    let masked: Vec<f64> = u.iter().zip(mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
    norm(&x.tmatvec(&masked))
}

fn per_pattern(patterns: &PatternSet, f: impl Fn(&Mask) -> f64 + Sync) -> Vec<(Mask, f64)> {
    patterns.patterns().par_iter().map(|p| (p.mask.clone(), f(&p.mask))).collect()
}

/// Planted mask `1[Xw ≥ 0]`.
pub fn planted_mask(x: &Mat, w: &[f64]) -> Result<Mask> {
    Ok(pattern_of(x, w)?.mask)
}

/// Copy of `patterns` with each planted neuron's mask inserted (witness =
/// planted direction) when absent.
pub fn with_planted(patterns: &PatternSet, x: &Mat, neurons: &[Vec<f64>]) -> Result<PatternSet> {
    let mut out = patterns.clone();
    for w in neurons {
        let p = pattern_of(x, w)?;
        if p.mask.iter().any(|&b| b) {
            out.insert(ArrangementPattern::new(p.mask, Some(w.clone())));
        }
    }
    Ok(out)
}

/// Compact SVD of `D X`.
pub fn masked_svd(x: &Mat, mask: &[bool]) -> Result<CompactSvd<f64>> {
    compact_svd(&x.mask_rows(mask), RANK_TOL)
}

/// `(XᵀX)⁻¹ ŵ` mapped through `X`: the skip-block certificate direction.
fn linear_dual(x: &Mat, w_star: &[f64]) -> Result<Vec<f64>> {
    let chol = Cholesky::new(&x.gram()).map_err(|_| Error::Rank("XᵀX is singular".into()))?;
    Ok(x.matvec(&chol.solve(&unit(w_star)?)))
}

pub fn nic_linear_lhs(x: &Mat, w_star: &[f64], mask: &[bool]) -> Result<f64> {
    Ok(masked_tnorm(x, mask, &linear_dual(x, w_star)?))
}

/// Linear-plant condition: `‖XᵀD_jX(XᵀX)⁻¹ŵ‖ < 1` for every pattern.
pub fn nic_linear(x: &Mat, w_star: &[f64], patterns: &PatternSet) -> Result<NicReport> {
    if x.rows() <= x.cols() {
        return Err(Error::Rank(format!("need n > d (n = {}, d = {})", x.rows(), x.cols())));
    }
    let u = linear_dual(x, w_star)?;
    let pp = per_pattern(patterns, |m| masked_tnorm(x, m, &u));
    Ok(NicReport::assemble(NicKind::NicL, pp, vec![]))
}

/// Single ReLU neuron: `‖XᵀD_jD_iX(XᵀD_iX)⁻¹ŵ‖ < 1` off the planted pattern.
pub fn nic_relu_single(x: &Mat, w_star: &[f64], patterns: &PatternSet) -> Result<NicReport> {
    let mi = planted_mask(x, w_star)?;
    let istar = patterns.index_of(&mi).ok_or(Error::MissingPlant)?;
    let xi = x.mask_rows(&mi);
    let chol = Cholesky::new(&xi.gram()).map_err(|_| Error::Rank("XᵀD_iX is singular".into()))?;
    let u = xi.matvec(&chol.solve(&unit(w_star)?));
    let pp = per_pattern(patterns, |m| masked_tnorm(x, m, &u));
    Ok(NicReport::assemble(NicKind::Nic1, pp, vec![istar]))
}

/// `Σ Vᵀ w / ‖Σ Vᵀ w‖` in the coordinates of the compact factor.
pub fn normalized_coords(svd: &CompactSvd<f64>, w: &[f64]) -> Result<Vec<f64>> {
    let c: Vec<f64> = svd.v.tmatvec(w).iter().zip(&svd.sigma).map(|(a, s)| a * s).collect();
    unit(&c).map_err(|_| Error::DegeneratePlant("planted neuron is dead on X".into()))
}

/// Normalized single neuron: `‖U_jᵀU_i w̃‖ < 1` off the planted pattern.
pub fn nnic_single(x: &Mat, w_star: &[f64], patterns: &PatternSet) -> Result<NicReport> {
    let mi = planted_mask(x, w_star)?;
    let istar = patterns.index_of(&mi).ok_or(Error::MissingPlant)?;
    let si = masked_svd(x, &mi)?;
    if si.rank() == 0 {
        return Err(Error::Rank("D_iX has rank 0".into()));
    }
    let u = si.u.matvec(&normalized_coords(&si, w_star)?);
    let pp = per_pattern(patterns, |m| {
        masked_svd(x, m).map(|sj| norm(&sj.u.tmatvec(&u))).unwrap_or(f64::NAN)
    });
    Ok(NicReport::assemble(NicKind::Nnic1, pp, vec![istar]))
}

/// Multi-neuron condition (plain or normalized) via the stacked pseudoinverse.
/// Planted targets are `sign(r_i)·ŵ_i`, the subgradient of the planted block.
pub fn nic_multi(
    x: &Mat,
    plant: &[(Vec<f64>, f64)],
    patterns: &PatternSet,
    normalized: bool,
) -> Result<NicReport> {
    let mut planted = Vec::with_capacity(plant.len());
    let mut blocks = Vec::with_capacity(plant.len());
    let mut target = Vec::new();
    for (w, r) in plant {
        if *r == 0.0 || !r.is_finite() {
            return Err(Error::DegeneratePlant("output weight must be finite and nonzero".into()));
        }
        let sgn = r.signum();
        let m = planted_mask(x, w)?;
        let idx = patterns.index_of(&m).ok_or(Error::MissingPlant)?;
        if planted.contains(&idx) {
            return Err(Error::DegeneratePlant("planted masks coincide".into()));
        }
        planted.push(idx);
        if normalized {
            let s = masked_svd(x, &m)?;
            target.extend(normalized_coords(&s, w)?.iter().map(|v| sgn * v));
            blocks.push(s.u.transpose());
        } else {
            target.extend(unit(w)?.iter().map(|v| sgn * v));
            blocks.push(x.mask_rows(&m).transpose());
        }
    }
    let lambda = stacked_pinv_apply(&blocks, &target)?;
    let pp = if normalized {
        per_pattern(patterns, |m| masked_svd(x, m).map(|sj| norm(&sj.u.tmatvec(&lambda))).unwrap_or(f64::NAN))
    } else {
        per_pattern(patterns, |m| masked_tnorm(x, m, &lambda))
    };
    let kind = if normalized { NicKind::NnicK } else { NicKind::NicK };
    Ok(NicReport::assemble(kind, pp, planted))
}

/// Column-orthonormal simplification: `tr(D_j) ≤ n − d` for every pattern.
pub fn snic_orth(x: &Mat, patterns: &PatternSet) -> Result<NicReport> {
    let (n, d) = x.shape();
    if x.gram().max_abs_diff(&Mat::identity(d)) > 1e-6 {
        return Err(Error::InvalidInput("X is not column orthonormal".into()));
    }
    let room = n as f64 - d as f64;
    let pp: Vec<(Mask, f64)> = patterns
        .patterns()
        .iter()
        .map(|p| {
            let tr = p.trace() as f64;
            let lhs = if room > 0.0 { tr / room } else { f64::INFINITY };
            (p.mask.clone(), lhs)
        })
        .collect();
    let max_tr = patterns.patterns().iter().map(|p| p.trace()).max().unwrap_or(0) as f64;
    let max_lhs = pp.iter().map(|p| p.1).fold(0.0, f64::max);
    let holds = max_tr <= room;
    Ok(NicReport {
        kind: NicKind::SnicOrth,
        per_pattern: pp,
        max_lhs,
        holds,
        marginal: max_tr == room,
        planted_indices: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrangements::sample_patterns;
    use crate::ensembles::{gen_matrix, Ensemble};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_on_haar_extremes() {
        let x = gen_matrix(Ensemble::Haar, 30, 5, 2).unwrap().mat;
        let w = vec![0.3, -0.1, 0.8, 0.2, -0.5];
        assert_eq!(nic_linear_lhs(&x, &w, &vec![false; 30]).unwrap(), 0.0);
        let ones = nic_linear_lhs(&x, &w, &vec![true; 30]).unwrap();
        assert!((ones - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_relu_self_and_disjoint() {
        let x = gen_matrix(Ensemble::Gaussian, 40, 4, 5).unwrap().mat;
        let w = vec![1.0, 0.5, -0.2, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pats = with_planted(&sample_patterns(&x, 60, &mut rng), &x, &[w.clone()]).unwrap();
        let r = nic_relu_single(&x, &w, &pats).unwrap();
        let i = r.planted_indices[0];
        assert!((r.per_pattern[i].1 - 1.0).abs() < 1e-9);
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        let mneg = planted_mask(&x, &neg).unwrap();
        if let Some(j) = pats.index_of(&mneg) {
            assert!(r.per_pattern[j].1 < 1e-12);
        }
        let n = nnic_single(&x, &w, &pats).unwrap();
        assert!((n.per_pattern[n.planted_indices[0]].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn multi_with_one_neuron_matches_single() {
        let x = gen_matrix(Ensemble::Gaussian, 40, 4, 9).unwrap().mat;
        let w = vec![0.2, 1.0, -0.4, 0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pats = with_planted(&sample_patterns(&x, 60, &mut rng), &x, &[w.clone()]).unwrap();
        let a = nic_relu_single(&x, &w, &pats).unwrap();
        let b = nic_multi(&x, &[(w.clone(), 1.0)], &pats, false).unwrap();
        let c = nnic_single(&x, &w, &pats).unwrap();
        let e = nic_multi(&x, &[(w.clone(), 1.0)], &pats, true).unwrap();
        for j in 0..pats.len() {
            assert!((a.per_pattern[j].1 - b.per_pattern[j].1).abs() < 1e-9);
            assert!((c.per_pattern[j].1 - e.per_pattern[j].1).abs() < 1e-9);
        }
        assert_eq!(a.holds, b.holds);
        assert_eq!(c.holds, e.holds);
    }

    #[test]
    fn missing_plant_is_reported() {
        let x = gen_matrix(Ensemble::Gaussian, 10, 3, 1).unwrap().mat;
        let empty = PatternSet::default();
        assert!(matches!(nic_relu_single(&x, &[1.0, 0.0, 0.0], &empty), Err(Error::MissingPlant)));
    }

    #[test]
    fn snic_requires_orthonormal() {
        let x = gen_matrix(Ensemble::Gaussian, 10, 3, 1).unwrap().mat;
        assert!(snic_orth(&x, &PatternSet::default()).is_err());
    }

    #[test]
    fn kind_round_trip() {
        for k in [NicKind::NicL, NicKind::Nic1, NicKind::Nnic1, NicKind::NicK, NicKind::NnicK, NicKind::SnicOrth] {
            assert_eq!(k.to_string().parse::<NicKind>().unwrap(), k);
        }
    }
}
