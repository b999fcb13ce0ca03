//! Diagonal arrangement patterns `D = diag(1[Xh ≥ 0])` of a data matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::linalg::spectral_norm;
use crate::numerics::{dot, norm};
use crate::Mat;

/// Strict-interior threshold for margins.
pub const MARGIN_EPS: f64 = 1e-9;

pub type Mask = Vec<bool>;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrangementPattern {
    pub mask: Mask,
    pub witness: Option<Vec<f64>>,
}

impl ArrangementPattern {
    pub fn new(mask: Mask, witness: Option<Vec<f64>>) -> Self {
        Self { mask, witness }
    }

    pub fn trace(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_all_ones(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    pub fn mask_string(&self) -> String {
        mask_string(&self.mask)
    }
}

pub fn mask_string(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_mask(s: &str) -> Result<Mask> {
    s.chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            _ => Err(Error::Parse(format!("bad mask character {c:?}"))),
        })
        .collect()
}

/// Entrywise product of two masks.
pub fn mask_and(a: &[bool], b: &[bool]) -> Mask {
    a.iter().zip(b).map(|(&x, &y)| x && y).collect()
}

/// Ordered, duplicate-free collection of patterns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternSet {
    patterns: Vec<ArrangementPattern>,
    /// The all-zeros mask is realized by an open cell but not stored.
    pub zero_cell: bool,
}

impl PatternSet {
    /// Sort lexicographically by mask and keep the first witness per mask.
    /// All-zeros masks are dropped and recorded in `zero_cell`.
    pub fn from_patterns(items: impl IntoIterator<Item = ArrangementPattern>) -> Self {
        let mut map: BTreeMap<Mask, ArrangementPattern> = BTreeMap::new();
        let mut zero_cell = false;
        for p in items {
            if p.mask.iter().all(|&b| !b) {
                zero_cell = true;
                continue;
            }
            map.entry(p.mask.clone()).or_insert(p);
        }
        Self { patterns: map.into_values().collect(), zero_cell }
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Number of distinct patterns including a realized zero cell.
    pub fn cardinality(&self) -> usize {
        self.patterns.len() + usize::from(self.zero_cell)
    }

    pub fn patterns(&self) -> &[ArrangementPattern] {
        &self.patterns
    }

    pub fn get(&self, i: usize) -> &ArrangementPattern {
        &self.patterns[i]
    }

    pub fn masks(&self) -> impl Iterator<Item = &Mask> {
        self.patterns.iter().map(|p| &p.mask)
    }

    pub fn index_of(&self, mask: &[bool]) -> Option<usize> {
        self.patterns.binary_search_by(|p| p.mask.as_slice().cmp(mask)).ok()
    }

    pub fn contains(&self, mask: &[bool]) -> bool {
        self.index_of(mask).is_some()
    }

    pub fn contains_all_ones(&self) -> bool {
        self.patterns.last().is_some_and(|p| p.is_all_ones())
    }

    /// Insert a pattern if its mask is absent; returns its index.
    pub fn insert(&mut self, p: ArrangementPattern) -> usize {
        match self.patterns.binary_search_by(|q| q.mask.cmp(&p.mask)) {
            Ok(i) => i,
            Err(i) => {
                self.patterns.insert(i, p);
                i
            }
        }
    }

    /// One line per pattern: mask bits, then witness coordinates or `-`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.zero_cell {
            s.push_str("# zero_cell\n");
        }
        for p in &self.patterns {
            s.push_str(&p.mask_string());
            match &p.witness {
                Some(w) => {
                    for x in w {
                        let _ = write!(s, " {x:e}");
                    }
                }
                None => s.push_str(" -"),
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        let mut zero_cell = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                zero_cell |= line == "# zero_cell";
                continue;
            }
            let mut it = line.split_whitespace();
            let mask = parse_mask(it.next().unwrap_or(""))
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let rest: Vec<&str> = it.collect();
            let witness = if rest == ["-"] {
                None
            } else {
                let w: std::result::Result<Vec<f64>, _> = rest.iter().map(|t| t.parse::<f64>()).collect();
                Some(w.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?)
            };
            items.push(ArrangementPattern::new(mask, witness));
        }
        let mut set = Self::from_patterns(items);
        set.zero_cell |= zero_cell;
        Ok(set)
    }
}

/// `1[Xh ≥ 0]` with exact zeros mapped to 1.
pub fn pattern_of(x: &Mat, h: &[f64]) -> Result<ArrangementPattern> {
    if h.len() != x.cols() {
        return Err(Error::InvalidShape(format!("h has length {}, X has {} columns", h.len(), x.cols())));
    }
    if h.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput("h = 0 does not define a hyperplane".into()));
    }
    let mask = x.matvec(h).iter().map(|&v| v >= 0.0).collect();
    Ok(ArrangementPattern::new(mask, Some(h.to_vec())))
}

/// Default number of sampled directions, `max(n, 50)`.
pub fn default_sample_count(n: usize) -> usize {
    n.max(50)
}

/// Sample Gaussian directions, deduplicate, and add the all-ones mask iff the
/// feasibility margin is strictly positive.
pub fn sample_patterns<R: Rng + ?Sized>(x: &Mat, count: usize, rng: &mut R) -> PatternSet {
    let d = x.cols();
    let mut items = Vec::with_capacity(count + 1);
    for _ in 0..count {
        let h: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(p) = pattern_of(x, &h) {
            items.push(p);
        }
    }
    let m = allones_margin(x);
    let ones_ok = m.t_star > MARGIN_EPS;
    items.retain(|p| !p.is_all_ones() || ones_ok);
    let mut set = PatternSet::from_patterns(items);
    if ones_ok {
        set.insert(ArrangementPattern::new(vec![true; x.rows()], Some(m.w)));
    }
    set
}

/// Result of `max t s.t. ‖w‖ ≤ 1, Xw ≥ t·1`.
#[derive(Debug, Clone)]
pub struct Margin {
    pub t_star: f64,
    pub w: Vec<f64>,
    /// Certified upper bound on the optimum.
    pub upper: f64,
}

/// All-ones feasibility margin of `X`.
pub fn allones_margin(x: &Mat) -> Margin {
    max_min_margin(x)
}

/// Maximizes `min_i x_iᵀw` over the unit ball.
///
/// Solved through the dual `min_{μ ∈ Δ} ‖Xᵀμ‖` (accelerated projected
/// gradient with restarts): any simplex point gives the upper bound
/// `‖Xᵀμ‖`, and `w = Xᵀμ/‖Xᵀμ‖` gives the lower bound `min_i x_iᵀw`.
pub fn max_min_margin(x: &Mat) -> Margin {
    let (n, d) = x.shape();
    if n == 0 {
        return Margin { t_star: 1.0, w: unit(d), upper: 1.0 };
    }
    let lip = spectral_norm(x).unwrap_or(1.0).powi(2).max(1e-300);
    let mut mu = vec![1.0 / n as f64; n];
    let mut y = mu.clone();
    let mut t: f64 = 1.0;
    let mut best_lo = 0.0;
    let mut best_w = vec![0.0; d];
    let mut upper = f64::INFINITY;
    let mut prev_obj = f64::INFINITY;
    for it in 0..200_000 {
        let v = x.tmatvec(&y);
        let g = x.matvec(&v);
        let step: Vec<f64> = y.iter().zip(&g).map(|(&a, &b)| a - b / lip).collect();
        let next = project_simplex(&step);
        let vn = x.tmatvec(&next);
        let obj = dot(&vn, &vn);
        if obj > prev_obj {
            // restart momentum
            t = 1.0;
            y = mu.clone();
            prev_obj = f64::INFINITY;
            continue;
        }
        prev_obj = obj;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next.iter().zip(&mu).map(|(&a, &b)| a + (t - 1.0) / t_next * (a - b)).collect();
        mu = next;
        t = t_next;
        if it % 10 == 0 {
            let hi = obj.sqrt();
            upper = upper.min(hi);
            if hi > 0.0 {
                let w: Vec<f64> = vn.iter().map(|v| v / hi).collect();
                let lo = x.matvec(&w).into_iter().fold(f64::INFINITY, f64::min);
                if lo > best_lo {
                    best_lo = lo;
                    best_w = w;
                }
            }
            if upper - best_lo <= 1e-11 * upper.max(1.0) || upper <= 1e-11 {
                break;
            }
        }
    }
    if best_lo <= 0.0 {
        best_lo = 0.0;
        best_w = vec![0.0; d];
    }
    Margin { t_star: best_lo, w: best_w, upper }
}

fn unit(d: usize) -> Vec<f64> {
    let mut w = vec![0.0; d];
    if d > 0 {
        w[0] = 1.0;
    }
    w
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        css += uk;
        let th = (css - 1.0) / (k + 1) as f64;
        if uk - th > 0.0 {
            theta = th;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Exact enumeration of all masks realized by open cells, by depth-first
/// extension of sign prefixes with margin-feasibility pruning.
pub fn enumerate_exact(x: &Mat, max_n: usize) -> Result<PatternSet> {
    let (n, d) = x.shape();
    if n > max_n {
        return Err(Error::SizeLimit { n, limit: max_n });
    }
    // zero rows satisfy x_iᵀh = 0 for every h and map to 1
    let zero_row: Vec<bool> = (0..n).map(|i| norm(x.row(i)) == 0.0).collect();
    let mut out = Vec::new();
    let mut signed: Vec<Vec<f64>> = Vec::with_capacity(n);
    let root_w = {
        // any direction works for the empty prefix
        let mut w = vec![0.0; d];
        if d > 0 {
            w[0] = 1.0;
        }
        w
    };
    dfs(x, &zero_row, 0, &mut Vec::with_capacity(n), &mut signed, &root_w, &mut out);
    Ok(PatternSet::from_patterns(out))
}

fn dfs(
    x: &Mat,
    zero_row: &[bool],
    k: usize,
    prefix: &mut Vec<bool>,
    signed: &mut Vec<Vec<f64>>,
    witness: &[f64],
    out: &mut Vec<ArrangementPattern>,
) {
    let n = x.rows();
    if k == n {
        if x.cols() > 0 {
            out.push(ArrangementPattern::new(prefix.clone(), Some(witness.to_vec())));
        }
        return;
    }
    if zero_row[k] {
        prefix.push(true);
        dfs(x, zero_row, k + 1, prefix, signed, witness, out);
        prefix.pop();
        return;
    }
    for bit in [false, true] {
        let s = if bit { 1.0 } else { -1.0 };
        let row: Vec<f64> = x.row(k).iter().map(|&v| s * v).collect();
        signed.push(row);
        let m = Mat::from_rows(signed).expect("rows share length");
        // reuse the parent witness when it already separates strictly
        let margin_parent = m.matvec(witness).into_iter().fold(f64::INFINITY, f64::min);
        let next_w = if margin_parent / norm(witness).max(1e-300) > MARGIN_EPS {
            Some(witness.to_vec())
        } else {
            let mm = max_min_margin(&m);
            (mm.t_star > MARGIN_EPS).then_some(mm.w)
        };
        if let Some(w) = next_w {
            prefix.push(bit);
            dfs(x, zero_row, k + 1, prefix, signed, &w, out);
            prefix.pop();
        }
        signed.pop();
    }
}

/// Cover's bound `2 Σ_{k<r} C(n−1, k)`.
pub fn cover_bound(n: usize, r: usize) -> u128 {
    if n == 0 {
        return 0;
    }
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for k in 0..r.min(n) {
        if k > 0 {
            c = c * (n - k) as u128 / k as u128;
        }
        total += c;
    }
    2 * total
}

/// No other pattern in the set dominates pattern `i` (`D_i D_j ≠ D_i`).
pub fn is_maximal(set: &PatternSet, i: usize) -> bool {
    let di = &set.get(i).mask;
    set.masks().enumerate().all(|(j, dj)| j == i || mask_and(di, dj) != *di)
}
