use super::programs::{build_program, ProgramKind};
use crate::arrangements::PatternSet;
use crate::ensembles::{Plant, PlantedModel};
use crate::error::{Error, Result};
use crate::isometry::{masked_svd, normalized_coords, planted_mask, STRICT_MARGIN};
use crate::numerics::{norm, stacked_pinv_apply};
use crate::Mat;

/// Programs whose dual a certificate is built for; cone programs use their
/// relaxations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    GreluSkip,
    Grelu,
    GreluNormal,
}

impl CertificateKind {
    pub fn for_program(kind: ProgramKind) -> Self {
        match kind {
            ProgramKind::GreluSkip | ProgramKind::ReluSkipCone | ProgramKind::RegGreluSkip => Self::GreluSkip,
            ProgramKind::Grelu | ProgramKind::ReluCone => Self::Grelu,
            ProgramKind::GreluNormal | ProgramKind::ReluNormalCone => Self::GreluNormal,
        }
    }

    fn program(self) -> ProgramKind {
        match self {
            Self::GreluSkip => ProgramKind::GreluSkip,
            Self::Grelu => ProgramKind::Grelu,
            Self::GreluNormal => ProgramKind::GreluNormal,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub lambda: Vec<f64>,
    /// `‖A_jᵀλ‖` for every block of the program, in block order.
    pub block_norms: Vec<f64>,
    /// Block indices of the planted neurons.
    pub planted_indices: Vec<usize>,
    pub is_strict: bool,
}

impl DualCertificate {
    /// Largest block norm off the planted set.
    pub fn max_off_plant(&self) -> f64 {
        self.block_norms
            .iter()
            .enumerate()
            .filter(|(j, _)| !self.planted_indices.contains(j))
            .map(|(_, &v)| v)
            .fold(0.0, f64::max)
    }
}

/// Least-norm dual vector satisfying `A_iᵀλ = sign(r_i)·ŵ_i` on the planted
/// blocks, with every block norm evaluated.
pub fn build_certificate(
    x: &Mat,
    patterns: &PatternSet,
    plant: &PlantedModel,
    kind: CertificateKind,
) -> Result<DualCertificate> {
    let prog = build_program(kind.program(), x, patterns, &vec![0.0; x.rows()], 0.0)?;
    let mut planted = Vec::new();
    let mut stack = Vec::new();
    let mut target = Vec::new();
    if let Plant::Linear(w) = &plant.plant {
        let b = prog.skip_block().ok_or_else(|| Error::InvalidInput("linear plant needs the skip program".into()))?;
        let nw = norm(w);
        if nw == 0.0 {
            return Err(Error::DegeneratePlant("zero planted neuron".into()));
        }
        planted.push(b);
        stack.push(prog.problem.blocks[b].transpose());
        target.extend(w.iter().map(|v| v / nw));
    } else {
        for (w, r) in plant.neurons() {
            if r == 0.0 || !r.is_finite() {
                return Err(Error::DegeneratePlant("output weight must be finite and nonzero".into()));
            }
            let m = planted_mask(x, &w)?;
            let j = patterns.index_of(&m).ok_or(Error::MissingPlant)?;
            let b = prog.block_of_pattern(j).ok_or(Error::MissingPlant)?;
            if planted.contains(&b) {
                return Err(Error::DegeneratePlant("planted masks coincide".into()));
            }
            let dir = if kind == CertificateKind::GreluNormal {
                normalized_coords(&masked_svd(x, &m)?, &w)?
            } else {
                let nw = norm(&w);
                if nw == 0.0 {
                    return Err(Error::DegeneratePlant("zero planted neuron".into()));
                }
                w.iter().map(|v| v / nw).collect()
            };
            planted.push(b);
            stack.push(prog.problem.blocks[b].transpose());
            target.extend(dir.iter().map(|v| r.signum() * v));
        }
    }
    let lambda = stacked_pinv_apply(&stack, &target)?;
    let block_norms: Vec<f64> = prog.problem.blocks.iter().map(|a| norm(&a.tmatvec(&lambda))).collect();
    let is_strict = block_norms.iter().enumerate().all(|(j, &v)| {
        if planted.contains(&j) {
            (v - 1.0).abs() <= STRICT_MARGIN
        } else {
            v < 1.0 - STRICT_MARGIN
        }
    });
    Ok(DualCertificate { lambda, block_norms, planted_indices: planted, is_strict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{gen_matrix, Ensemble};
    use crate::isometry::{nic_linear, nic_relu_single, with_planted};

    #[test]
    fn linear_certificate_matches_nic() {
        let x = gen_matrix(Ensemble::Gaussian, 40, 4, 3).unwrap().mat;
        let mut rng = crate::seed::rng_for(3, "patterns", &[]);
        let ps = crate::arrangements::sample_patterns(&x, 60, &mut rng);
        let w = vec![1.0, -0.5, 0.2, 0.3];
        let c = build_certificate(&x, &ps, &PlantedModel::new(Plant::Linear(w.clone()), 0.0), CertificateKind::GreluSkip)
            .unwrap();
        let r = nic_linear(&x, &w, &ps).unwrap();
        assert_eq!(c.is_strict, r.holds);
        assert!((c.max_off_plant() - r.max_lhs).abs() < 1e-9);
        let g = x.tmatvec(&c.lambda);
        let nw = norm(&w);
        for (a, b) in g.iter().zip(&w) {
            assert!((a - b / nw).abs() < 1e-9);
        }
    }

    #[test]
    fn relu_certificate_matches_nic() {
        let x = gen_matrix(Ensemble::Gaussian, 30, 3, 5).unwrap().mat;
        let w = vec![0.4, 1.0, -0.3];
        let mut rng = crate::seed::rng_for(5, "patterns", &[]);
        let ps = with_planted(&crate::arrangements::sample_patterns(&x, 50, &mut rng), &x, &[w.clone()]).unwrap();
        let c = build_certificate(&x, &ps, &PlantedModel::new(Plant::Relu(w.clone()), 0.0), CertificateKind::Grelu)
            .unwrap();
        let r = nic_relu_single(&x, &w, &ps).unwrap();
        assert_eq!(c.is_strict, r.holds);
        assert!((c.max_off_plant() - r.max_lhs).abs() < 1e-9);
    }

    #[test]
    fn missing_plant_is_reported() {
        let x = gen_matrix(Ensemble::Gaussian, 10, 2, 1).unwrap().mat;
        let ps = PatternSet::default();
        let e = build_certificate(&x, &ps, &PlantedModel::new(Plant::Relu(vec![1.0, 0.0]), 0.0), CertificateKind::Grelu);
        assert!(matches!(e, Err(Error::MissingPlant)));
    }
}
