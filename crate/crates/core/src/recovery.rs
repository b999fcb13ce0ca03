//! Recovery verdicts, distances and explicit networks from convex solutions.

use std::fmt;
use std::str::FromStr;

use crate::arrangements::PatternSet;
use crate::ensembles::{relu, Plant, PlantedModel};
use crate::error::{Error, Result};
use crate::isometry::{masked_svd, normalized_coords, planted_mask};
use crate::numerics::{dot, norm};
use crate::solvers::programs::{BlockRole, Program};
use crate::{Mat, Solution};

/// Default relative distance below which recovery counts as exact.
pub const SUCCESS_TOL: f64 = 1e-4;
/// Cosine above which two neurons are merged.
const MERGE_COS: f64 = 1.0 - 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Plain,
    Skip,
    Normalized,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Plain => "plain",
            Arch::Skip => "skip",
            Arch::Normalized => "normalized",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plain" => Ok(Arch::Plain),
            "skip" => Ok(Arch::Skip),
            "normalized" => Ok(Arch::Normalized),
            _ => Err(Error::Parse(format!("unknown architecture {s:?}"))),
        }
    }
}

/// Two-layer network `Xw₀ + Σ (Xw_{1,i})₊ w_{2,i}`; the normalized
/// architecture replaces each activation `a` by `α_i a/‖a‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub arch: Arch,
    /// Linear term, skip architecture only.
    pub linear: Option<Vec<f64>>,
    pub first_layer: Vec<Vec<f64>>,
    pub second_layer: Vec<f64>,
    pub alphas: Option<Vec<f64>>,
}

impl NetworkWeights {
    pub fn validate(&self) -> Result<()> {
        let m = self.first_layer.len();
        if self.second_layer.len() != m {
            return Err(Error::InvalidShape("layer lengths differ".into()));
        }
        match (self.arch, &self.alphas) {
            (Arch::Normalized, Some(a)) if a.len() == m => {}
            (Arch::Normalized, _) => return Err(Error::InvalidShape("normalized net needs one alpha per neuron".into())),
            (_, Some(_)) => return Err(Error::InvalidShape("alphas belong to the normalized net".into())),
            _ => {}
        }
        if self.linear.is_some() != (self.arch == Arch::Skip) {
            return Err(Error::InvalidShape("linear term belongs to the skip net".into()));
        }
        let d = self.input_dim();
        if self.first_layer.iter().chain(self.linear.iter()).any(|w| Some(w.len()) != d) {
            return Err(Error::InvalidShape("inconsistent input dimension".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.linear.as_ref().or(self.first_layer.first()).map(Vec::len)
    }

    pub fn neurons(&self) -> usize {
        self.first_layer.len()
    }

    pub fn forward(&self, x: &Mat) -> Result<Vec<f64>> {
        self.validate()?;
        if self.input_dim().is_some_and(|d| d != x.cols()) {
            return Err(Error::InvalidShape("input dimension mismatch".into()));
        }
        let mut out = match &self.linear {
            Some(w0) => x.matvec(w0),
            None => vec![0.0; x.rows()],
        };
        for (i, (w1, &w2)) in self.first_layer.iter().zip(&self.second_layer).enumerate() {
            let mut a = relu(&x.matvec(w1));
            if let Some(al) = &self.alphas {
                let s = norm(&a);
                let f = if s > 0.0 { al[i] / s } else { 0.0 };
                a.iter_mut().for_each(|v| *v *= f);
            }
            for (o, v) in out.iter_mut().zip(a) {
                *o += w2 * v;
            }
        }
        Ok(out)
    }

    /// Versioned text form: header, arch, optional linear row, one row per
    /// neuron (`w2 alpha|- w1…`).
    pub fn to_text(&self) -> String {
        let mut s = format!("relu-network v1\narch {}\n", self.arch);
        if let Some(w0) = &self.linear {
            s.push_str("linear");
            for v in w0 {
                s.push_str(&format!(" {v:e}"));
            }
            s.push('\n');
        }
        for (i, (w1, w2)) in self.first_layer.iter().zip(&self.second_layer).enumerate() {
            s.push_str(&format!("neuron {w2:e} "));
            match &self.alphas {
                Some(a) => s.push_str(&format!("{:e}", a[i])),
                None => s.push('-'),
            }
            for v in w1 {
                s.push_str(&format!(" {v:e}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some("relu-network v1") {
            return Err(Error::Parse("missing 'relu-network v1' header".into()));
        }
        let arch: Arch = lines
            .next()
            .and_then(|l| l.strip_prefix("arch "))
            .ok_or_else(|| Error::Parse("missing arch line".into()))?
            .parse()?;
        let nums = |it: &mut dyn Iterator<Item = &str>| -> Result<Vec<f64>> {
            it.map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}")))).collect()
        };
        let mut net = NetworkWeights {
            arch,
            linear: None,
            first_layer: vec![],
            second_layer: vec![],
            alphas: (arch == Arch::Normalized).then(Vec::new),
        };
        for line in lines {
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("linear") => net.linear = Some(nums(&mut toks)?),
                Some("neuron") => {
                    let w2 = nums(&mut toks.next().into_iter())?;
                    let alpha = toks.next().ok_or_else(|| Error::Parse("truncated neuron row".into()))?;
                    if let Some(a) = net.alphas.as_mut() {
                        a.extend(nums(&mut std::iter::once(alpha))?);
                    } else if alpha != "-" {
                        return Err(Error::Parse("alpha given for a non-normalized net".into()));
                    }
                    net.second_layer.extend(w2);
                    net.first_layer.push(nums(&mut toks)?);
                }
                _ => return Err(Error::Parse(format!("unexpected line {line:?}"))),
            }
        }
        net.validate()?;
        Ok(net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryVerdict {
    pub success: bool,
    pub abs_distance: f64,
    /// `abs_distance` divided by the norm of the planted weights.
    pub rel_distance: f64,
    pub support_match: bool,
    /// Active blocks outside the planted set.
    pub extras: usize,
}

/// Planted block indices and weights in the program's coordinates.
pub fn planted_blocks(prog: &Program, plant: &PlantedModel, x: &Mat, patterns: &PatternSet) -> Result<Vec<(usize, Vec<f64>)>> {
    if let Plant::Linear(w) = &plant.plant {
        let b = prog.skip_block().ok_or_else(|| Error::InvalidInput("linear plant needs a skip block".into()))?;
        return Ok(vec![(b, w.clone())]);
    }
    let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
    for (w, r) in plant.neurons() {
        let m = planted_mask(x, &w)?;
        let j = patterns.index_of(&m).ok_or(Error::MissingPlant)?;
        let mut b = prog.block_of_pattern(j).ok_or(Error::MissingPlant)?;
        if prog.kind.has_cones() && r < 0.0 {
            b += 1;
        }
        let coef = if prog.kind.has_cones() { r.abs() } else { r };
        let v: Vec<f64> = if prog.kind.is_normalized() {
            let s = masked_svd(x, &m)?;
            if plant.is_normalized() {
                normalized_coords(&s, &w)?.iter().map(|c| coef * c).collect()
            } else {
                s.v.tmatvec(&w).iter().zip(&s.sigma).map(|(a, sg)| coef * a * sg).collect()
            }
        } else {
            w.iter().map(|c| coef * c).collect()
        };
        if out.iter().any(|(ob, _)| *ob == b) {
            return Err(Error::DegeneratePlant("planted masks coincide".into()));
        }
        out.push((b, v));
    }
    Ok(out)
}

/// Compare a solution against the plant mapped into its coordinates.
pub fn assess_recovery(
    sol: &Solution,
    prog: &Program,
    plant: &PlantedModel,
    x: &Mat,
    patterns: &PatternSet,
    tol: f64,
) -> Result<RecoveryVerdict> {
    let planted = planted_blocks(prog, plant, x, patterns)?;
    let mut d2 = 0.0;
    let mut p2 = 0.0;
    for (b, v) in &planted {
        let w = sol.weights.get(*b).ok_or_else(|| Error::InvalidShape("solution has too few blocks".into()))?;
        d2 += w.iter().zip(v).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
        p2 += dot(v, v);
    }
    let idx: Vec<usize> = planted.iter().map(|p| p.0).collect();
    let extras = sol.active_blocks.iter().filter(|b| !idx.contains(b)).count();
    let mut sorted = idx.clone();
    sorted.sort_unstable();
    let support_match = sol.active_blocks == sorted;
    let abs_distance = d2.sqrt();
    let rel_distance = if p2 > 0.0 { abs_distance / p2.sqrt() } else { abs_distance };
    Ok(RecoveryVerdict { success: support_match && rel_distance < tol, abs_distance, rel_distance, support_match, extras })
}

/// `‖ỹ − y*‖` on fresh data, with `ỹ` the signed prediction of every block
/// (`X̃w₀ + Σ (X̃w_j)₊ − (X̃w_j′)₊`; normalized blocks rescaled to their norm).
pub fn test_distance(sol: &Solution, prog: &Program, plant: &PlantedModel, x_test: &Mat) -> Result<f64> {
    let y_star = plant.predict(x_test)?;
    let mut y = vec![0.0; x_test.rows()];
    for (b, w) in sol.weights.iter().enumerate() {
        if norm(w) == 0.0 {
            continue;
        }
        let v = prog.original_coords(b, w);
        if v.len() != x_test.cols() {
            return Err(Error::InvalidShape("test data dimension mismatch".into()));
        }
        let contrib = match prog.roles[b] {
            BlockRole::Skip => x_test.matvec(&v),
            BlockRole::Pattern { negated, .. } => {
                let mut a = relu(&x_test.matvec(&v));
                if prog.kind.is_normalized() {
                    let s = norm(&a);
                    let f = if s > 0.0 { norm(w) / s } else { 0.0 };
                    a.iter_mut().for_each(|t| *t *= f);
                }
                if negated {
                    a.iter_mut().for_each(|t| *t = -*t);
                }
                a
            }
        };
        for (yi, c) in y.iter_mut().zip(contrib) {
            *yi += c;
        }
    }
    Ok(y.iter().zip(&y_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Explicit network from a convex solution: one neuron per active pattern
/// block with balanced layer scales.
pub fn reconstruct_network(sol: &Solution, prog: &Program, x: &Mat, patterns: &PatternSet) -> Result<NetworkWeights> {
    let arch = if prog.kind.is_normalized() {
        Arch::Normalized
    } else if prog.kind.has_skip() {
        Arch::Skip
    } else {
        Arch::Plain
    };
    let mut net = NetworkWeights {
        arch,
        linear: prog.skip_block().map(|b| sol.weights[b].clone()),
        first_layer: vec![],
        second_layer: vec![],
        alphas: (arch == Arch::Normalized).then(Vec::new),
    };
    for &b in &sol.active_blocks {
        let BlockRole::Pattern { index, negated } = prog.roles[b] else {
            continue;
        };
        let w = &sol.weights[b];
        let v = prog.original_coords(b, w);
        let xv = x.matvec(&v);
        let scale = xv.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(1e-300);
        let mask = &patterns.get(index).mask;
        if xv.iter().zip(mask).any(|(&t, &m)| if m { t < -1e-7 * scale } else { t > 1e-7 * scale }) {
            return Err(Error::Inconsistent(format!("block {b} violates its activation pattern")));
        }
        let sign = if negated { -1.0 } else { 1.0 };
        let nw = norm(w);
        if arch == Arch::Normalized {
            let nv = norm(&v);
            net.first_layer.push(v.iter().map(|t| t / nv).collect());
            net.second_layer.push(sign * nw.sqrt());
            net.alphas.as_mut().unwrap().push(nw.sqrt());
        } else {
            let r = nw.sqrt();
            net.first_layer.push(v.iter().map(|t| t / r).collect());
            net.second_layer.push(sign * r);
        }
    }
    Ok(net)
}

/// Replace neuron `group` by neurons scaled by `√γ_k`.
pub fn split_network(net: &NetworkWeights, group: usize, gammas: &[f64]) -> Result<NetworkWeights> {
    net.validate()?;
    if group >= net.neurons() {
        return Err(Error::InvalidInput(format!("no neuron {group}")));
    }
    if gammas.is_empty() || gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput("gammas must be finite and nonnegative".into()));
    }
    let sum: f64 = gammas.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("gammas sum to {sum}, not 1")));
    }
    let mut out = net.clone();
    let w1 = out.first_layer.remove(group);
    let w2 = out.second_layer.remove(group);
    let alpha = out.alphas.as_mut().map(|a| a.remove(group));
    for (k, g) in gammas.iter().enumerate() {
        let s = g.sqrt();
        out.first_layer.insert(group + k, w1.iter().map(|t| s * t).collect());
        out.second_layer.insert(group + k, s * w2);
        if let (Some(a), Some(al)) = (out.alphas.as_mut(), alpha) {
            a.insert(group + k, s * al);
        }
    }
    Ok(out)
}

/// Unit direction and output coefficient per neuron, merged and sorted.
fn canonical(net: &NetworkWeights, tol: f64) -> Vec<(Vec<f64>, f64)> {
    let mut items: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, (w1, &w2)) in net.first_layer.iter().zip(&net.second_layer).enumerate() {
        let n1 = norm(w1);
        if n1 == 0.0 {
            continue;
        }
        let coef = match &net.alphas {
            Some(a) => a[i] * w2,
            None => n1 * w2,
        };
        let dir: Vec<f64> = w1.iter().map(|t| t / n1).collect();
        if let Some(it) = items.iter_mut().find(|(u, _)| dot(u, &dir) > MERGE_COS) {
            it.1 += coef;
        } else {
            items.push((dir, coef));
        }
    }
    items.retain(|(_, c)| c.abs() > tol);
    items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    items
}

/// Equality after merging positively colinear neurons, dropping zero ones
/// and sorting.
pub fn is_equivalent(a: &NetworkWeights, b: &NetworkWeights, tol: f64) -> bool {
    if a.arch != b.arch {
        return false;
    }
    let zero = vec![0.0; a.input_dim().or(b.input_dim()).unwrap_or(0)];
    let la = a.linear.as_ref().unwrap_or(&zero);
    let lb = b.linear.as_ref().unwrap_or(&zero);
    if la.len() != lb.len() || la.iter().zip(lb).any(|(u, v)| (u - v).abs() > tol) {
        return false;
    }
    let (ca, cb) = (canonical(a, tol), canonical(b, tol));
    ca.len() == cb.len()
        && ca.iter().zip(&cb).all(|((u, c), (v, e))| {
            (c - e).abs() <= tol * c.abs().max(1.0) && u.iter().zip(v).all(|(s, t)| (s - t).abs() <= tol)
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> NetworkWeights {
        NetworkWeights {
            arch: Arch::Skip,
            linear: Some(vec![0.5, -1.0]),
            first_layer: vec![vec![1.0, 2.0], vec![-1.0, 0.5]],
            second_layer: vec![1.5, -0.7],
            alphas: None,
        }
    }

    #[test]
    fn text_round_trip() {
        let n = net();
        assert_eq!(NetworkWeights::from_text(&n.to_text()).unwrap(), n);
        let mut m = net();
        m.arch = Arch::Normalized;
        m.linear = None;
        m.alphas = Some(vec![2.0, 0.3]);
        assert_eq!(NetworkWeights::from_text(&m.to_text()).unwrap(), m);
        assert!(NetworkWeights::from_text("relu-network v2\n").is_err());
    }

    #[test]
    fn split_and_permute_are_equivalent() {
        let n = net();
        let s = split_network(&n, 0, &[0.3, 0.7]).unwrap();
        assert_eq!(s.neurons(), 3);
        assert!(is_equivalent(&n, &s, 1e-10));
        let mut p = n.clone();
        p.first_layer.swap(0, 1);
        p.second_layer.swap(0, 1);
        assert!(is_equivalent(&n, &p, 1e-10));
        let mut q = n.clone();
        q.second_layer[1] = 0.7;
        assert!(!is_equivalent(&n, &q, 1e-10));
        assert!(split_network(&n, 0, &[-0.1, 1.1]).is_err());
        assert!(split_network(&n, 0, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn normalized_split_preserves_output() {
        let n = NetworkWeights {
            arch: Arch::Normalized,
            linear: None,
            first_layer: vec![vec![1.0, 0.3]],
            second_layer: vec![2.0],
            alphas: Some(vec![0.5]),
        };
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![0.2, 1.0], vec![-1.0, 0.4]]).unwrap();
        let s = split_network(&n, 0, &[0.25, 0.75]).unwrap();
        let (a, b) = (n.forward(&x).unwrap(), s.forward(&x).unwrap());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(is_equivalent(&n, &s, 1e-10));
    }
}
