//! Monte-Carlo recovery grids and regularization sweeps.

pub mod config;
mod plots;

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use config::{GridConfig, Metric, PlantSpec, SampleSizes};
pub use plots::{emit_plots, parse_grid_csv, read_grid_csv};

use crate::arrangements::{default_sample_count, sample_patterns, PatternSet};
use crate::ensembles::{gen_matrix, gen_observation, planted_direction, Plant, PlantedModel};
use crate::error::{Error, Result};
use crate::isometry::{nic_linear, nic_multi, nic_relu_single, nnic_single, with_planted};
use crate::numerics::{compact_svd, norm, RANK_TOL};
use crate::recovery::{assess_recovery, test_distance};
use crate::seed::{derive_seed, rng_for};
use crate::solvers::programs::{build_program, Program, ProgramKind};
use crate::solvers::{solve_cone_constrained, solve_group_lasso, solve_group_min_norm, SolverOptions};
use crate::{Mat, Solution};

pub const GRID_HEADER: &str =
    "d,n,sigma,trial,seed,success,abs_distance,test_distance,nic_max_lhs,solver_iterations,wall_ms,note";
pub const SWEEP_HEADER: &str = "d,n,sigma,beta,trial,seed,active_blocks,success,solver_iterations,wall_ms,note";

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub abs_distance: f64,
    pub test_distance: f64,
    pub nic_max_lhs: f64,
    pub solver_iterations: usize,
    pub wall_ms: u64,
    /// Empty on a clean run; otherwise the failure reason.
    pub note: String,
}

impl CellResult {
    fn key(&self) -> (usize, usize, u64, usize) {
        (self.d, self.n, self.sigma.to_bits(), self.trial)
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:e},{:e},{:e},{},{},{}",
            self.d,
            self.n,
            self.sigma,
            self.trial,
            self.seed,
            u8::from(self.success),
            self.abs_distance,
            self.test_distance,
            self.nic_max_lhs,
            self.solver_iterations,
            self.wall_ms,
            sanitize(&self.note)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub beta: f64,
    pub trial: usize,
    pub seed: u64,
    pub active_blocks: usize,
    pub success: bool,
    pub solver_iterations: usize,
    pub wall_ms: u64,
    pub note: String,
}

impl SweepResult {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.d,
            self.n,
            self.sigma,
            self.beta,
            self.trial,
            self.seed,
            self.active_blocks,
            u8::from(self.success),
            self.solver_iterations,
            self.wall_ms,
            sanitize(&self.note)
        )
    }
}

fn sanitize(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

pub fn write_grid_csv<W: Write>(rows: &[CellResult], mut w: W) -> Result<()> {
    writeln!(w, "{GRID_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv_row())?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepResult], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv_row())?;
    }
    Ok(())
}

/// Seed of one grid cell; β is deliberately excluded so a sweep revisits
/// the same instance at every β.
pub fn cell_seed(master: u64, d: usize, n: usize, sigma: f64, trial: usize) -> u64 {
    derive_seed(master, "cell", &[d as u64, n as u64, sigma.to_bits(), trial as u64])
}

/// `k` orthonormal directions in `R^d` (Gram–Schmidt on Gaussian draws).
pub fn orthonormal_directions(d: usize, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > d {
        return Err(Error::InvalidInput("need 1 <= k <= d".into()));
    }
    let mut rng = rng_for(seed, "orthonormal", &[d as u64, k as u64]);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for u in &out {
                let c: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            out.push(v.iter().map(|x| x / nv).collect());
        }
    }
    Ok(out)
}

fn make_plant(spec: PlantSpec, x: &Mat, sigma: f64, seed: u64) -> Result<PlantedModel> {
    let plant = match spec {
        PlantSpec::Linear(dir) => Plant::Linear(planted_direction(dir, x, seed)?),
        PlantSpec::Relu(dir) => Plant::Relu(planted_direction(dir, x, seed)?),
        PlantSpec::ReluSumOrthogonal(k) => {
            Plant::ReluSum(orthonormal_directions(x.cols(), k, seed)?.into_iter().map(|w| (w, 1.0)).collect())
        }
        PlantSpec::NormalizedOrthogonal(k) => {
            Plant::NormalizedReluSum(orthonormal_directions(x.cols(), k, seed)?.into_iter().map(|w| (w, 1.0)).collect())
        }
    };
    Ok(PlantedModel::new(plant, sigma))
}

/// Left factor of the compact SVD (full column rank required).
pub fn whiten(x: &Mat) -> Result<Mat> {
    let s = compact_svd(x, RANK_TOL)?;
    if s.rank() < x.cols() {
        return Err(Error::Rank("cannot whiten a rank-deficient matrix".into()));
    }
    Ok(s.u)
}

/// Relevant isometry condition for the plant/program pair, largest lhs.
fn nic_lhs(plant: &PlantedModel, prog: ProgramKind, x: &Mat, patterns: &PatternSet) -> Result<f64> {
    let r = match &plant.plant {
        Plant::Linear(w) => nic_linear(x, w, patterns)?,
        Plant::Relu(w) if prog.is_normalized() => nnic_single(x, w, patterns)?,
        Plant::Relu(w) => nic_relu_single(x, w, patterns)?,
        Plant::ReluSum(v) | Plant::NormalizedReluSum(v) => nic_multi(x, v, patterns, prog.is_normalized())?,
    };
    Ok(r.max_lhs)
}

pub(crate) fn solve_program(prog: &Program, opts: &SolverOptions) -> Result<Solution> {
    if prog.kind.has_cones() {
        solve_cone_constrained(&prog.problem, opts)
    } else if prog.kind.is_regularized() {
        solve_group_lasso(&prog.problem, opts)
    } else {
        solve_group_min_norm(&prog.problem, opts)
    }
}

/// Data, plant, labels and sampled patterns of one cell.
pub struct Instance {
    pub x: Mat,
    pub x_test: Mat,
    pub plant: PlantedModel,
    pub y: Vec<f64>,
    pub patterns: PatternSet,
}

pub fn build_instance(cfg: &GridConfig, d: usize, n: usize, sigma: f64, seed: u64) -> Result<Instance> {
    let mut x = gen_matrix(cfg.ensemble, n, d, derive_seed(seed, "data", &[]))?.mat;
    let mut x_test = gen_matrix(cfg.ensemble, n, d, derive_seed(seed, "test", &[]))?.mat;
    if cfg.whiten {
        x = whiten(&x)?;
        x_test = whiten(&x_test)?;
    }
    let plant = make_plant(cfg.plant, &x, sigma, derive_seed(seed, "plant", &[]))?;
    let (y, _) = gen_observation(&plant, &x, derive_seed(seed, "noise", &[]))?;
    let count = cfg.sample_count.unwrap_or_else(|| default_sample_count(n));
    let mut rng = rng_for(seed, "patterns", &[]);
    let mut patterns = sample_patterns(&x, count, &mut rng);
    if !matches!(plant.plant, Plant::Linear(_)) {
        let ws: Vec<Vec<f64>> = plant.neurons().into_iter().map(|p| p.0).collect();
        patterns = with_planted(&patterns, &x, &ws)?;
    }
    Ok(Instance { x, x_test, plant, y, patterns })
}

fn grid_beta(cfg: &GridConfig) -> Result<f64> {
    if !cfg.program.is_regularized() {
        return Ok(0.0);
    }
    match cfg.betas[..] {
        [b] if b > 0.0 => Ok(b),
        _ => Err(Error::InvalidInput("a regularized grid needs exactly one beta > 0".into())),
    }
}

fn run_cell(cfg: &GridConfig, d: usize, n: usize, sigma: f64, trial: usize) -> CellResult {
    let seed = cell_seed(cfg.master_seed, d, n, sigma, trial);
    let start = Instant::now();
    let mut row = CellResult {
        d,
        n,
        sigma,
        trial,
        seed,
        success: false,
        abs_distance: f64::NAN,
        test_distance: f64::NAN,
        nic_max_lhs: f64::NAN,
        solver_iterations: 0,
        wall_ms: 0,
        note: String::new(),
    };
    let mut notes: Vec<String> = Vec::new();
    let outcome = (|| -> Result<()> {
        let inst = build_instance(cfg, d, n, sigma, seed)?;
        match nic_lhs(&inst.plant, cfg.program, &inst.x, &inst.patterns) {
            Ok(v) => row.nic_max_lhs = v,
            Err(e) => notes.push(format!("nic: {e}")),
        }
        let prog = build_program(cfg.program, &inst.x, &inst.patterns, &inst.y, grid_beta(cfg)?)?;
        let sol = solve_program(&prog, &cfg.solver)?;
        row.solver_iterations = sol.iterations;
        let v = assess_recovery(&sol, &prog, &inst.plant, &inst.x, &inst.patterns, cfg.success_tol)?;
        row.abs_distance = v.abs_distance;
        row.test_distance = test_distance(&sol, &prog, &inst.plant, &inst.x_test)?;
        row.success = v.success && sol.converged;
        if !sol.converged {
            notes.push("not converged".into());
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.success = false;
        notes.push(e.to_string());
    }
    row.note = notes.join("; ");
    if cfg.record_time {
        row.wall_ms = start.elapsed().as_millis() as u64;
    }
    row
}

/// Every `(d, n, σ, trial)` cell, solved in parallel and returned in
/// canonical order. Per-cell failures become rows with `success = 0`.
pub fn run_grid(cfg: &GridConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    grid_beta(cfg)?;
    let mut cells = Vec::new();
    for (d, n) in cfg.sizes() {
        for &s in &cfg.sigmas {
            for t in 0..cfg.trials {
                cells.push((d, n, s, t));
            }
        }
    }
    let mut rows: Vec<CellResult> = cells.par_iter().map(|&(d, n, s, t)| run_cell(cfg, d, n, s, t)).collect();
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(rows)
}

fn run_sweep_point(cfg: &GridConfig, inst: &Instance, beta: f64) -> Result<Solution> {
    let kind = if beta > 0.0 { ProgramKind::RegGreluSkip } else { ProgramKind::GreluSkip };
    let prog = build_program(kind, &inst.x, &inst.patterns, &inst.y, beta)?;
    solve_program(&prog, &cfg.solver)
}

/// Regularized skip program over the β grid on fixed instances. Success
/// means exactly one active block; `β = 0` uses the min-norm program.
pub fn run_beta_sweep(cfg: &GridConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    if cfg.program != ProgramKind::RegGreluSkip {
        return Err(Error::InvalidInput("the beta sweep runs the reg_grelu_skip program".into()));
    }
    if cfg.betas.is_empty() {
        return Err(Error::InvalidInput("the beta sweep needs a beta grid".into()));
    }
    let mut cells = Vec::new();
    for (d, n) in cfg.sizes() {
        for &s in &cfg.sigmas {
            for t in 0..cfg.trials {
                cells.push((d, n, s, t));
            }
        }
    }
    let mut rows: Vec<SweepResult> = cells
        .par_iter()
        .flat_map_iter(|&(d, n, sigma, trial)| {
            let seed = cell_seed(cfg.master_seed, d, n, sigma, trial);
            let inst = build_instance(cfg, d, n, sigma, seed);
            cfg.betas.iter().map(move |&beta| {
                let start = Instant::now();
                let mut r = SweepResult {
                    d,
                    n,
                    sigma,
                    beta,
                    trial,
                    seed,
                    active_blocks: 0,
                    success: false,
                    solver_iterations: 0,
                    wall_ms: 0,
                    note: String::new(),
                };
                match inst.as_ref().map_err(Clone::clone).and_then(|i| run_sweep_point(cfg, i, beta)) {
                    Ok(sol) => {
                        r.active_blocks = sol.active_blocks.len();
                        r.solver_iterations = sol.iterations;
                        r.success = r.active_blocks == 1 && sol.converged;
                        if !sol.converged {
                            r.note = "not converged".into();
                        }
                    }
                    Err(e) => r.note = e.to_string(),
                }
                if cfg.record_time {
                    r.wall_ms = start.elapsed().as_millis() as u64;
                }
                r
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.d, a.n, a.sigma.to_bits(), a.trial, a.beta.to_bits()).cmp(&(b.d, b.n, b.sigma.to_bits(), b.trial, b.beta.to_bits()))
    });
    Ok(rows)
}

/// Mean of `f` over the rows of each `(d, n, σ)` cell, in canonical order.
pub fn aggregate(rows: &[CellResult], f: impl Fn(&CellResult) -> f64) -> Vec<(usize, usize, f64, f64)> {
    let mut out: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let key = (rows[i].d, rows[i].n, rows[i].sigma.to_bits());
        let mut j = i;
        let mut acc = 0.0;
        while j < rows.len() && (rows[j].d, rows[j].n, rows[j].sigma.to_bits()) == key {
            acc += f(&rows[j]);
            j += 1;
        }
        out.push((rows[i].d, rows[i].n, rows[i].sigma, acc / (j - i) as f64));
        i = j;
    }
    out
}

/// Midpoint `m` of the least-squares fit of `1/(1 + e^{−(n−m)/s})` to
/// `(n, rate)` points, by grid search refined by golden-section passes.
pub fn logistic_midpoint(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("need at least two points".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let loss = |m: f64, s: f64| -> f64 {
        points
            .iter()
            .map(|&(n, r)| {
                let p = 1.0 / (1.0 + (-(n - m) / s).exp());
                (p - r) * (p - r)
            })
            .sum()
    };
    let mut best = (f64::INFINITY, lo, span);
    for i in 0..=400 {
        let m = lo - 0.25 * span + 1.5 * span * i as f64 / 400.0;
        for k in 0..=60 {
            let s = span * 1e-3 * 10f64.powf(3.0 * k as f64 / 60.0);
            let l = loss(m, s);
            if l < best.0 - 1e-15 {
                best = (l, m, s);
            }
        }
    }
    Ok(best.1)
}
