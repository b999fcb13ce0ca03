//! Assembly of the convex network programs as group problems.

use std::fmt;
use std::str::FromStr;

use super::GroupProblem;
use crate::arrangements::PatternSet;
use crate::error::{Error, Result};
use crate::isometry::masked_svd;
use crate::numerics::CompactSvd;
use crate::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProgramKind {
    /// Skip block `X` plus gated blocks `D_jX`.
    GreluSkip,
    /// Gated blocks `D_jX`.
    Grelu,
    /// Blocks `U_j` from the compact SVD of `D_jX`.
    GreluNormal,
    /// Skip block plus sign-split pairs `±D_jX` with cones `(2D_j − I)X`.
    ReluSkipCone,
    /// Sign-split pairs with cones, no skip block.
    ReluCone,
    /// Sign-split pairs `±U_j` with cones `(2D_j − I)XV_jΣ_j⁻¹`.
    ReluNormalCone,
    /// Regularized skip program; pass orthonormalized data for the
    /// normalize-before-activation model.
    RegGreluSkip,
}

impl ProgramKind {
    pub const ALL: [ProgramKind; 7] = [
        ProgramKind::GreluSkip,
        ProgramKind::Grelu,
        ProgramKind::GreluNormal,
        ProgramKind::ReluSkipCone,
        ProgramKind::ReluCone,
        ProgramKind::ReluNormalCone,
        ProgramKind::RegGreluSkip,
    ];

    pub fn has_skip(self) -> bool {
        matches!(self, ProgramKind::GreluSkip | ProgramKind::ReluSkipCone | ProgramKind::RegGreluSkip)
    }

    pub fn has_cones(self) -> bool {
        matches!(self, ProgramKind::ReluSkipCone | ProgramKind::ReluCone | ProgramKind::ReluNormalCone)
    }

    pub fn is_normalized(self) -> bool {
        matches!(self, ProgramKind::GreluNormal | ProgramKind::ReluNormalCone)
    }

    pub fn is_regularized(self) -> bool {
        self == ProgramKind::RegGreluSkip
    }
}

impl fmt::Display for ProgramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProgramKind::GreluSkip => "grelu_skip",
            ProgramKind::Grelu => "grelu",
            ProgramKind::GreluNormal => "grelu_normal",
            ProgramKind::ReluSkipCone => "relu_skip_cone",
            ProgramKind::ReluCone => "relu_cone",
            ProgramKind::ReluNormalCone => "relu_normal_cone",
            ProgramKind::RegGreluSkip => "reg_grelu_skip",
        })
    }
}

impl FromStr for ProgramKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == key)
            .ok_or_else(|| Error::Parse(format!("unknown program {s:?}")))
    }
}

/// What a block of an assembled program stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRole {
    Skip,
    /// Pattern index in the set, and the sign of the split pair.
    Pattern { index: usize, negated: bool },
}

#[derive(Debug, Clone)]
pub struct Program {
    pub kind: ProgramKind,
    pub problem: GroupProblem<f64>,
    pub roles: Vec<BlockRole>,
    /// Compact SVD of `D_jX` per pattern, for the normalized programs.
    pub factors: Vec<Option<CompactSvd<f64>>>,
}

impl Program {
    /// Block index of pattern `j` (positive half for split programs).
    pub fn block_of_pattern(&self, j: usize) -> Option<usize> {
        self.roles.iter().position(|r| *r == BlockRole::Pattern { index: j, negated: false })
    }

    pub fn skip_block(&self) -> Option<usize> {
        self.roles.iter().position(|r| *r == BlockRole::Skip)
    }

    /// Map block weights back to first-layer coordinates (`VΣ⁻¹w` for the
    /// normalized programs).
    pub fn original_coords(&self, block: usize, w: &[f64]) -> Vec<f64> {
        match self.roles[block] {
            BlockRole::Pattern { index, .. } if self.kind.is_normalized() => {
                let f = self.factors[index].as_ref().expect("normalized factors present");
                let scaled: Vec<f64> = w.iter().zip(&f.sigma).map(|(a, s)| a / s).collect();
                f.v.matvec(&scaled)
            }
            _ => w.to_vec(),
        }
    }
}

fn sign_rows(x: &Mat, mask: &[bool]) -> Mat {
    let s: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    x.scale_rows(&s)
}

/// Assemble `kind` on data `x`, pattern set and target `y`.
pub fn build_program(kind: ProgramKind, x: &Mat, patterns: &PatternSet, y: &[f64], beta: f64) -> Result<Program> {
    if y.len() != x.rows() {
        return Err(Error::InvalidShape(format!("target has {} entries, X has {} rows", y.len(), x.rows())));
    }
    if kind.is_regularized() != (beta > 0.0) {
        return Err(Error::InvalidInput(format!("program {kind} with beta = {beta}")));
    }
    let mut blocks = Vec::new();
    let mut roles = Vec::new();
    let mut cones: Vec<Option<Mat>> = Vec::new();
    let mut factors = vec![None; patterns.len()];
    if kind.has_skip() {
        blocks.push(x.clone());
        roles.push(BlockRole::Skip);
        cones.push(None);
    }
    for (j, p) in patterns.patterns().iter().enumerate() {
        let (a, c) = if kind.is_normalized() {
            let s = masked_svd(x, &p.mask)?;
            if s.rank() == 0 {
                continue;
            }
            let c = if kind.has_cones() {
                let vs = Mat::from_fn(s.v.rows(), s.rank(), |i, k| s.v[(i, k)] / s.sigma[k]);
                Some(sign_rows(x, &p.mask).matmul(&vs))
            } else {
                None
            };
            let u = s.u.clone();
            factors[j] = Some(s);
            (u, c)
        } else {
            let c = kind.has_cones().then(|| sign_rows(x, &p.mask));
            (x.mask_rows(&p.mask), c)
        };
        if kind.has_cones() {
            blocks.push(a.clone());
            roles.push(BlockRole::Pattern { index: j, negated: false });
            cones.push(c.clone());
            blocks.push(a.scale(-1.0));
            roles.push(BlockRole::Pattern { index: j, negated: true });
            cones.push(c);
        } else {
            blocks.push(a);
            roles.push(BlockRole::Pattern { index: j, negated: false });
            cones.push(None);
        }
    }
    let mut problem = GroupProblem::new(blocks, y.to_vec(), beta)?;
    if kind.has_cones() {
        problem = problem.with_cones(cones)?;
    }
    Ok(Program { kind, problem, roles, factors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrangements::enumerate_exact;

    fn data() -> Mat {
        Mat::from_rows(&[vec![1.0, 0.2], vec![-0.3, 1.0], vec![0.5, -0.7]]).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in ProgramKind::ALL {
            assert_eq!(k.to_string().parse::<ProgramKind>().unwrap(), k);
        }
        assert!("nope".parse::<ProgramKind>().is_err());
    }

    #[test]
    fn block_layouts() {
        let x = data();
        let ps = enumerate_exact(&x, 12).unwrap();
        let y = vec![1.0, 0.0, 0.5];
        let p = build_program(ProgramKind::GreluSkip, &x, &ps, &y, 0.0).unwrap();
        assert_eq!(p.problem.num_blocks(), ps.len() + 1);
        assert_eq!(p.skip_block(), Some(0));
        let c = build_program(ProgramKind::ReluSkipCone, &x, &ps, &y, 0.0).unwrap();
        assert_eq!(c.problem.num_blocks(), 2 * ps.len() + 1);
        let b = c.block_of_pattern(1).unwrap();
        assert_eq!(c.problem.blocks[b + 1], c.problem.blocks[b].scale(-1.0));
        assert!(build_program(ProgramKind::RegGreluSkip, &x, &ps, &y, 0.0).is_err());
        assert!(build_program(ProgramKind::Grelu, &x, &ps, &y, 0.1).is_err());
    }

    #[test]
    fn cone_holds_on_witness() {
        // the witness of each pattern lies in its cone
        let x = data();
        let ps = enumerate_exact(&x, 12).unwrap();
        let c = build_program(ProgramKind::ReluCone, &x, &ps, &[0.0; 3], 0.0).unwrap();
        let cones = c.problem.cones.as_ref().unwrap();
        for (j, p) in ps.patterns().iter().enumerate() {
            let b = c.block_of_pattern(j).unwrap();
            let h = p.witness.as_ref().unwrap();
            assert!(cones[b].as_ref().unwrap().matvec(h).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn normalized_coords_invert_factor() {
        let x = data();
        let ps = enumerate_exact(&x, 12).unwrap();
        let p = build_program(ProgramKind::GreluNormal, &x, &ps, &[0.0; 3], 0.0).unwrap();
        let j = ps.len() - 1;
        let b = p.block_of_pattern(j).unwrap();
        let w = vec![0.3; p.problem.blocks[b].cols()];
        let orig = p.original_coords(b, &w);
        let lhs = x.mask_rows(&ps.get(j).mask).matvec(&orig);
        let rhs = p.problem.blocks[b].matvec(&w);
        for (a, c) in lhs.iter().zip(&rhs) {
            assert!((a - c).abs() < 1e-12);
        }
    }
}
