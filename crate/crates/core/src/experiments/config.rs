//! `key = value` experiment manifests with optional `[section]` headers.
//!
//! Lists are comma separated or written as `start:stop:step` ranges. Lines
//! starting with `#` are comments. Sections only group keys; every key is
//! global and may appear once.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use crate::ensembles::{Ensemble, PlantDirection};
use crate::error::{Error, Result};
use crate::solvers::programs::ProgramKind;
use crate::solvers::SolverOptions;

/// Ground-truth family for a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlantSpec {
    Linear(PlantDirection),
    Relu(PlantDirection),
    /// `k` orthonormal neurons, unit output weights.
    ReluSumOrthogonal(usize),
    /// `k` orthonormal normalized neurons, unit output weights.
    NormalizedOrthogonal(usize),
}

impl PlantSpec {
    fn parse(kind: &str, direction: PlantDirection, neurons: usize) -> Result<Self> {
        match kind {
            "linear" => Ok(PlantSpec::Linear(direction)),
            "relu" => Ok(PlantSpec::Relu(direction)),
            "relu_sum_orthogonal" => Ok(PlantSpec::ReluSumOrthogonal(neurons)),
            "normalized_orthogonal" => Ok(PlantSpec::NormalizedOrthogonal(neurons)),
            _ => Err(Error::Parse(format!("unknown plant {kind:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Success,
    AbsDistance,
    TestDistance,
    NicRate,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Success, Metric::AbsDistance, Metric::TestDistance, Metric::NicRate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Success => "success",
            Metric::AbsDistance => "abs_distance",
            Metric::TestDistance => "test_distance",
            Metric::NicRate => "nic_rate",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleSizes {
    Absolute(Vec<usize>),
    /// `n = round(r·d)`
    Ratios(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub d_values: Vec<usize>,
    pub n_values: SampleSizes,
    pub trials: usize,
    pub ensemble: Ensemble,
    pub plant: PlantSpec,
    pub sigmas: Vec<f64>,
    pub program: ProgramKind,
    pub metric: Metric,
    pub master_seed: u64,
    pub solver: SolverOptions,
    /// Relative distance below which a solve counts as exact recovery.
    pub success_tol: f64,
    /// Sampled directions per instance; `None` uses `max(n, 50)`.
    pub sample_count: Option<usize>,
    /// Regularization grid (the sweep) or the single β of a regularized grid.
    pub betas: Vec<f64>,
    /// Replace `X` by the left factor of its compact SVD before solving.
    pub whiten: bool,
    /// Write measured wall time; off keeps reruns byte-identical.
    pub record_time: bool,
    pub out: Option<PathBuf>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            d_values: vec![10, 20],
            n_values: SampleSizes::Ratios(vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0]),
            trials: 5,
            ensemble: Ensemble::Gaussian,
            plant: PlantSpec::Linear(PlantDirection::Gaussian),
            sigmas: vec![0.0],
            program: ProgramKind::GreluSkip,
            metric: Metric::Success,
            master_seed: 0,
            solver: SolverOptions { time_budget: Some(Duration::from_secs(60)), ..SolverOptions::default() },
            success_tol: crate::recovery::SUCCESS_TOL,
            sample_count: None,
            betas: vec![],
            whiten: false,
            record_time: false,
            out: None,
        }
    }
}

const KEYS: &[&str] = &[
    "d", "n", "n_ratio", "trials", "ensemble", "plant", "plant_direction", "neurons", "sigma", "program", "metric",
    "seed", "tol", "max_iter", "cell_budget_s", "success_tol", "sample_count", "beta", "whiten", "record_time", "out",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse(format!("{key}: cannot parse {v:?}")))
}

/// Comma list or `start:stop:step` range (inclusive, to within step/1000).
pub fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let v = v.trim();
    if v.contains(':') {
        let parts: Vec<f64> = v.split(':').map(|p| parse_num(key, p)).collect::<Result<_>>()?;
        let [a, b, s] = parts[..] else {
            return Err(Error::Parse(format!("{key}: range needs start:stop:step")));
        };
        if !(s > 0.0) || b < a {
            return Err(Error::Parse(format!("{key}: empty or invalid range {v:?}")));
        }
        let m = ((b - a) / s + 1e-3).floor() as usize;
        return Ok((0..=m).map(|i| a + i as f64 * s).collect());
    }
    let out: Vec<f64> = v.split(',').map(|p| parse_num(key, p)).collect::<Result<_>>()?;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse(format!("{key}: values must be finite")));
    }
    Ok(out)
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    let xs = parse_f64_list(key, v)?;
    xs.iter()
        .map(|&x| {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::Parse(format!("{key}: {x} is not a nonnegative integer")))
            }
        })
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

/// Raw `key → value` pairs with duplicate and unknown-key detection.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", ln + 1)))?;
        let k = k.trim().to_string();
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Parse(format!("line {}: unknown key {k:?}", ln + 1)));
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate key {k:?}", ln + 1)));
        }
    }
    Ok(map)
}

impl GridConfig {
    /// Apply `key = value` overrides on top of `self`.
    pub fn apply(mut self, pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| pairs.get(k).map(String::as_str);
        if let Some(v) = get("d") {
            self.d_values = parse_usize_list("d", v)?;
        }
        match (get("n"), get("n_ratio")) {
            (Some(_), Some(_)) => return Err(Error::Parse("give either n or n_ratio".into())),
            (Some(v), None) => self.n_values = SampleSizes::Absolute(parse_usize_list("n", v)?),
            (None, Some(v)) => self.n_values = SampleSizes::Ratios(parse_f64_list("n_ratio", v)?),
            (None, None) => {}
        }
        if let Some(v) = get("trials") {
            self.trials = parse_num("trials", v)?;
        }
        if let Some(v) = get("ensemble") {
            self.ensemble = v.parse()?;
        }
        if get("plant").is_some() || get("plant_direction").is_some() || get("neurons").is_some() {
            let (cur_kind, cur_dir, cur_k) = match self.plant {
                PlantSpec::Linear(d) => ("linear", d, 2),
                PlantSpec::Relu(d) => ("relu", d, 2),
                PlantSpec::ReluSumOrthogonal(k) => ("relu_sum_orthogonal", PlantDirection::Gaussian, k),
                PlantSpec::NormalizedOrthogonal(k) => ("normalized_orthogonal", PlantDirection::Gaussian, k),
            };
            let dir = match get("plant_direction") {
                None => cur_dir,
                Some("gaussian") => PlantDirection::Gaussian,
                Some("unit") => PlantDirection::UnitGaussian,
                Some("smallest_singular") => PlantDirection::SmallestSingular,
                Some(o) => return Err(Error::Parse(format!("unknown plant_direction {o:?}"))),
            };
            let k = match get("neurons") {
                Some(v) => parse_num("neurons", v)?,
                None => cur_k,
            };
            self.plant = PlantSpec::parse(get("plant").unwrap_or(cur_kind), dir, k)?;
        }
        if let Some(v) = get("sigma") {
            self.sigmas = parse_f64_list("sigma", v)?;
        }
        if let Some(v) = get("program") {
            self.program = v.parse()?;
        }
        if let Some(v) = get("metric") {
            self.metric = v.parse()?;
        }
        if let Some(v) = get("seed") {
            self.master_seed = parse_num("seed", v)?;
        }
        if let Some(v) = get("tol") {
            self.solver.tol = parse_num("tol", v)?;
        }
        if let Some(v) = get("max_iter") {
            self.solver.max_iter = parse_num("max_iter", v)?;
        }
        if let Some(v) = get("cell_budget_s") {
            let s: f64 = parse_num("cell_budget_s", v)?;
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Parse("cell_budget_s must be positive".into()));
            }
            self.solver.time_budget = Some(Duration::from_secs_f64(s));
        }
        if let Some(v) = get("success_tol") {
            self.success_tol = parse_num("success_tol", v)?;
        }
        if let Some(v) = get("sample_count") {
            self.sample_count = Some(parse_num("sample_count", v)?);
        }
        if let Some(v) = get("beta") {
            self.betas = parse_f64_list("beta", v)?;
        }
        if let Some(v) = get("whiten") {
            self.whiten = parse_bool("whiten", v)?;
        }
        if let Some(v) = get("record_time") {
            self.record_time = parse_bool("record_time", v)?;
        }
        if let Some(v) = get("out") {
            self.out = Some(PathBuf::from(v));
        }
        Ok(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg = Self::default().apply(&parse_pairs(text)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if self.d_values.is_empty() || self.d_values.contains(&0) {
            return bad("d grid must be nonempty and positive");
        }
        let n_ok = match &self.n_values {
            SampleSizes::Absolute(v) => !v.is_empty() && !v.contains(&0),
            SampleSizes::Ratios(v) => !v.is_empty() && v.iter().all(|&r| r > 0.0),
        };
        if !n_ok {
            return bad("n grid must be nonempty and positive");
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|&s| !(s >= 0.0)) {
            return bad("sigma grid must be nonempty and >= 0");
        }
        if self.betas.iter().any(|&b| !(b >= 0.0)) {
            return bad("beta values must be >= 0");
        }
        if let PlantSpec::ReluSumOrthogonal(k) | PlantSpec::NormalizedOrthogonal(k) = self.plant {
            if k == 0 || self.d_values.iter().any(|&d| d < k) {
                return bad("orthogonal plants need 1 <= neurons <= d");
            }
        }
        if !(self.success_tol > 0.0) || !(self.solver.tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    /// `(d, n)` pairs in canonical order.
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &d in &self.d_values {
            match &self.n_values {
                SampleSizes::Absolute(v) => out.extend(v.iter().map(|&n| (d, n))),
                SampleSizes::Ratios(v) => out.extend(v.iter().map(|&r| (d, ((r * d as f64).round() as usize).max(1)))),
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_lists_and_ranges() {
        let text = "# demo\n[grid]\nd = 10, 20\nn_ratio = 1:2:0.5\ntrials = 3\n[plant]\nplant = normalized_orthogonal\nneurons = 2\n[solver]\ntol = 1e-9\n";
        let c = GridConfig::from_text(text).unwrap();
        assert_eq!(c.d_values, vec![10, 20]);
        assert_eq!(c.n_values, SampleSizes::Ratios(vec![1.0, 1.5, 2.0]));
        assert_eq!(c.plant, PlantSpec::NormalizedOrthogonal(2));
        assert_eq!(c.solver.tol, 1e-9);
        assert_eq!(c.sizes(), vec![(10, 10), (10, 15), (10, 20), (20, 20), (20, 30), (20, 40)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(GridConfig::from_text("bogus = 1").is_err());
        assert!(GridConfig::from_text("d = 10\nd = 20").is_err());
        assert!(GridConfig::from_text("trials = 0").is_err());
        assert!(GridConfig::from_text("n = 5\nn_ratio = 1").is_err());
        assert!(GridConfig::from_text("d = 10\nnot a pair").is_err());
        assert!(GridConfig::from_text("sigma = 1:0:1").is_err());
    }

    #[test]
    fn range_endpoint_is_inclusive() {
        let v = parse_f64_list("beta", "0:2:0.1").unwrap();
        assert_eq!(v.len(), 21);
        assert!((v[20] - 2.0).abs() < 1e-12);
    }
}
