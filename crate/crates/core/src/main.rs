use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relu_recovery::arrangements::{allones_margin, default_sample_count, enumerate_exact, sample_patterns};
use relu_recovery::ensembles::{gen_matrix, Ensemble};
use relu_recovery::experiments::{
    build_instance, config::parse_pairs, emit_plots, run_beta_sweep, run_grid, write_grid_csv, write_sweep_csv,
    GridConfig,
};
use relu_recovery::isometry::{nic_linear, nic_multi, nic_relu_single, nnic_single, snic_orth, NicKind};
use relu_recovery::recovery::{assess_recovery, reconstruct_network};
use relu_recovery::seed::{derive_seed, rng_for};
use relu_recovery::solvers::programs::build_program;
use relu_recovery::solvers::{solve_cone_constrained, solve_group_lasso, solve_group_min_norm, verify_kkt};
use relu_recovery::{theory, Error};

#[derive(Parser)]
#[command(name = "relu-recovery", version, about = "Convex two-layer ReLU programs, isometry checks and recovery experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Global {
    /// Master seed; every random stream is derived from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment manifest (key = value lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Solver tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra manifest entries, `key=value`; applied after --config
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// gaussian, cubic_gaussian, haar, whitened_cubic
    #[arg(long)]
    ensemble: Option<String>,
    /// linear, relu, relu_sum_orthogonal, normalized_orthogonal
    #[arg(long)]
    plant: Option<String>,
    /// gaussian, unit, smallest_singular
    #[arg(long)]
    plant_direction: Option<String>,
    #[arg(long)]
    neurons: Option<usize>,
    /// Label noise level
    #[arg(long)]
    sigma: Option<f64>,
    /// Sampled hyperplane directions (default max(n, 50))
    #[arg(long)]
    samples: Option<usize>,
}

impl InstanceArgs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![];
        let mut push = |k: &'static str, s: Option<String>| {
            if let Some(s) = s {
                v.push((k, s));
            }
        };
        push("n", self.n.map(|x| x.to_string()));
        push("d", self.d.map(|x| x.to_string()));
        push("ensemble", self.ensemble.clone());
        push("plant", self.plant.clone());
        push("plant_direction", self.plant_direction.clone());
        push("neurons", self.neurons.map(|x| x.to_string()));
        push("sigma", self.sigma.map(|x| x.to_string()));
        push("sample_count", self.samples.map(|x| x.to_string()));
        v
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample or enumerate arrangement patterns of a random matrix
    Arrangements {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value = "gaussian")]
        ensemble: String,
        /// Exhaustive enumeration (n <= 18)
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Evaluate an isometry condition on a random instance
    Nic {
        /// nic-l, nic-1, nnic-1, nic-k, nnic-k, snic-orth
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        inst: InstanceArgs,
    },
    /// Solve one convex program and report recovery
    Solve {
        /// grelu_skip, grelu, grelu_normal, relu_skip_cone, relu_cone, relu_normal_cone, reg_grelu_skip
        #[arg(long)]
        program: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        #[command(flatten)]
        inst: InstanceArgs,
    },
    /// Solve one program and write the reconstructed network
    Reconstruct {
        #[arg(long)]
        program: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        #[command(flatten)]
        inst: InstanceArgs,
    },
    /// Monte-Carlo phase grid from a manifest
    Phase {
        /// Also write plotting scripts next to the CSV
        #[arg(long)]
        plots: bool,
    },
    /// Regularization sweep from a manifest
    BetaSweep,
    /// Closed-form and semi-analytic predictions
    Theory {
        #[command(subcommand)]
        what: TheoryCmd,
    },
    /// Label-mask pattern and maximal-condition rates for Gaussian mixtures
    GmmCheck {
        #[arg(long, default_value_t = 50)]
        n1: usize,
        #[arg(long, default_value_t = 50)]
        n2: usize,
        #[arg(long, default_value_t = 20)]
        d: usize,
        /// opposite (μ₂ = −μ₁ = −1) or orthogonal (halves of 1)
        #[arg(long, value_enum, default_value_t = Means::Opposite)]
        means: Means,
        /// Noise levels, comma list or start:stop:step
        #[arg(long, default_value = "0.5:3:0.5")]
        sigma: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Also check the maximal condition (one margin solve per unlabeled row)
        #[arg(long)]
        maximal: bool,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum Means {
    Opposite,
    Orthogonal,
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Root of the scalar equation g(θ) = 1
    ThetaStar,
    /// Limit curves as CSV
    Curve {
        #[arg(long, value_enum)]
        which: Curve,
        /// Points per axis
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Kinematic estimate for the orthant
    Kinematic {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
    },
    /// Monte-Carlo statistical dimension of the orthant
    Statdim {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Admissible regularization interval under noise
    BetaInterval {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        noise: f64,
        #[arg(long)]
        gamma: f64,
    },
    /// Sample-size threshold check
    Threshold {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        sigma2: f64,
    },
    /// Coefficients of the two-gate second moment
    Coefficients {
        #[arg(long)]
        gamma: f64,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum Curve {
    GSingle,
    G1,
    G2,
}

/// Failures mapped to exit codes: usage/config problems 2, the rest 1.
enum Fail {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::InvalidInput(_) => Fail::Usage(e.to_string()),
            _ => Fail::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Runtime(e.to_string())
    }
}

type Out<T> = Result<T, Fail>;

fn write_out(path: Option<&Path>, text: &str) -> Out<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Defaults, then the manifest, then `--set`, then explicit flags.
fn load_config(g: &Global, flags: &[(&str, String)]) -> Out<GridConfig> {
    let mut cfg = GridConfig::default();
    if let Some(p) = &g.config {
        let text = fs::read_to_string(p).map_err(|e| Fail::Usage(format!("cannot read {}: {e}", p.display())))?;
        cfg = cfg.apply(&parse_pairs(&text)?)?;
    }
    let mut extra = BTreeMap::new();
    for s in &g.set {
        let (k, v) = s.split_once('=').ok_or_else(|| Fail::Usage(format!("--set expects key=value, got {s:?}")))?;
        extra.insert(k.trim().to_string(), v.trim().to_string());
    }
    for (k, v) in flags {
        extra.insert(k.to_string(), v.clone());
    }
    if let Some(s) = g.seed {
        extra.insert("seed".into(), s.to_string());
    }
    if let Some(t) = g.tol {
        extra.insert("tol".into(), t.to_string());
    }
    let text: String = extra.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    cfg = cfg.apply(&parse_pairs(&text)?)?;
    if let Some(o) = &g.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn single_cell(cfg: &GridConfig) -> Out<(usize, usize, f64)> {
    let sizes = cfg.sizes();
    match (&sizes[..], &cfg.sigmas[..]) {
        ([(d, n)], [s]) => Ok((*d, *n, *s)),
        _ => Err(Fail::Usage("give a single n, d and sigma".into())),
    }
}

fn program_flags(inst: &InstanceArgs, program: &Option<String>, beta: Option<f64>) -> Vec<(&'static str, String)> {
    let mut f = inst.pairs();
    if let Some(p) = program {
        f.push(("program", p.clone()));
    }
    if let Some(b) = beta {
        f.push(("beta", b.to_string()));
    }
    f
}

fn solve_instance(g: &Global, flags: &[(&str, String)], reconstruct: bool) -> Out<()> {
    let cfg = load_config(g, flags)?;
    let (d, n, sigma) = single_cell(&cfg)?;
    let inst = build_instance(&cfg, d, n, sigma, cfg.master_seed)?;
    let beta = if cfg.program.is_regularized() {
        *cfg.betas.first().ok_or_else(|| Fail::Usage("regularized programs need --beta".into()))?
    } else {
        0.0
    };
    let prog = build_program(cfg.program, &inst.x, &inst.patterns, &inst.y, beta)?;
    let sol = if cfg.program.has_cones() {
        solve_cone_constrained(&prog.problem, &cfg.solver)?
    } else if cfg.program.is_regularized() {
        solve_group_lasso(&prog.problem, &cfg.solver)?
    } else {
        solve_group_min_norm(&prog.problem, &cfg.solver)?
    };
    let kkt = verify_kkt(&prog.problem, &sol);
    eprintln!(
        "program={} blocks={} objective={:.12e} converged={} iterations={} kkt={:.3e} active={:?}",
        cfg.program,
        prog.problem.num_blocks(),
        sol.objective,
        sol.converged,
        sol.iterations,
        kkt.max(),
        sol.active_blocks
    );
    match assess_recovery(&sol, &prog, &inst.plant, &inst.x, &inst.patterns, cfg.success_tol) {
        Ok(v) => eprintln!("success={} rel_distance={:.3e} abs_distance={:.3e}", v.success, v.rel_distance, v.abs_distance),
        Err(e) => eprintln!("recovery not assessed: {e}"),
    }
    if reconstruct {
        let net = reconstruct_network(&sol, &prog, &inst.x, &inst.patterns)?;
        write_out(cfg.out.as_deref(), &net.to_text())
    } else {
        write_out(cfg.out.as_deref(), &sol.to_csv())
    }
}

fn nic(g: &Global, kind: &str, inst_args: &InstanceArgs) -> Out<()> {
    let kind: NicKind = kind.parse()?;
    let mut flags = inst_args.pairs();
    let plant = match kind {
        NicKind::NicL | NicKind::SnicOrth => "linear",
        NicKind::Nic1 | NicKind::Nnic1 => "relu",
        NicKind::NicK => "relu_sum_orthogonal",
        NicKind::NnicK => "normalized_orthogonal",
    };
    if inst_args.plant.is_none() {
        flags.push(("plant", plant.into()));
    }
    let cfg = load_config(g, &flags)?;
    let (d, n, sigma) = single_cell(&cfg)?;
    let inst = build_instance(&cfg, d, n, sigma, cfg.master_seed)?;
    let ws = inst.plant.neurons();
    let report = match kind {
        NicKind::NicL => nic_linear(&inst.x, &ws[0].0, &inst.patterns)?,
        NicKind::Nic1 => nic_relu_single(&inst.x, &ws[0].0, &inst.patterns)?,
        NicKind::Nnic1 => nnic_single(&inst.x, &ws[0].0, &inst.patterns)?,
        NicKind::NicK => nic_multi(&inst.x, &ws, &inst.patterns, false)?,
        NicKind::NnicK => nic_multi(&inst.x, &ws, &inst.patterns, true)?,
        NicKind::SnicOrth => snic_orth(&inst.x, &inst.patterns)?,
    };
    println!("kind={} patterns={} max_lhs={:.12e} holds={}", kind, inst.patterns.len(), report.max_lhs, report.holds);
    if let Some(p) = &cfg.out {
        fs::write(p, report.to_csv())?;
    }
    Ok(())
}

fn arrangements(g: &Global, n: usize, d: usize, ensemble: &str, exact: bool, samples: Option<usize>) -> Out<()> {
    let ens: Ensemble = ensemble.parse()?;
    let seed = g.seed.unwrap_or(0);
    let x = gen_matrix(ens, n, d, derive_seed(seed, "data", &[]))?.mat;
    let set = if exact {
        enumerate_exact(&x, 18)?
    } else {
        let mut rng = rng_for(seed, "patterns", &[]);
        sample_patterns(&x, samples.unwrap_or_else(|| default_sample_count(n)), &mut rng)
    };
    let m = allones_margin(&x);
    eprintln!(
        "patterns={} cardinality={} all_ones={} margin={:.6e}",
        set.len(),
        set.cardinality(),
        set.contains_all_ones(),
        m.t_star
    );
    write_out(g.out.as_deref(), &set.to_text())
}

fn phase(g: &Global, plots: bool) -> Out<()> {
    let cfg = load_config(g, &[])?;
    let rows = run_grid(&cfg)?;
    let mut buf = Vec::new();
    write_grid_csv(&rows, &mut buf)?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    write_out(cfg.out.as_deref(), &text)?;
    let ok = rows.iter().filter(|r| r.success).count();
    eprintln!("cells={} successes={}", rows.len(), ok);
    if plots {
        let p = cfg.out.as_deref().ok_or_else(|| Fail::Usage("--plots needs --out".into()))?;
        for s in emit_plots(p)? {
            eprintln!("wrote {}", s.display());
        }
    }
    Ok(())
}

fn beta_sweep(g: &Global) -> Out<()> {
    let mut cfg = load_config(g, &[])?;
    if g.config.is_none() && cfg.betas.is_empty() {
        cfg.betas = (0..=40).map(|i| i as f64 * 0.05).collect();
    }
    let rows = run_beta_sweep(&cfg)?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    write_out(cfg.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
}

fn theory_cmd(g: &Global, what: &TheoryCmd) -> Out<()> {
    match what {
        TheoryCmd::ThetaStar => {
            let t = theory::solve_theta_star(g.tol.unwrap_or(1e-10))?;
            println!("theta_star={t:.6}");
            println!("inverse={:.4}", 1.0 / t);
        }
        TheoryCmd::Curve { which, points } => {
            if *points < 2 {
                return Err(Fail::Usage("--points must be at least 2".into()));
            }
            let mut s = String::new();
            let grid = |i: usize| -1.0 + 2.0 * i as f64 / (*points - 1) as f64;
            match which {
                Curve::GSingle | Curve::G1 => {
                    s.push_str("gamma,value\n");
                    for i in 0..*points {
                        let gm = grid(i);
                        let v = match which {
                            Curve::GSingle => theory::curve_g_single(gm)?,
                            _ => theory::curve_g1(gm)?,
                        };
                        s.push_str(&format!("{gm},{v}\n"));
                    }
                }
                Curve::G2 => {
                    s.push_str("gamma1,gamma2,value\n");
                    for i in 0..*points {
                        for j in 0..*points {
                            let (a, b) = (grid(i), grid(j));
                            if a * a + b * b <= 1.0 + 1e-12 {
                                s.push_str(&format!("{a},{b},{}\n", theory::curve_g2(a, b)?));
                            }
                        }
                    }
                }
            }
            write_out(g.out.as_deref(), &s)?;
        }
        TheoryCmd::Kinematic { n, d } => {
            let k = theory::kinematic_bound(*n, *d)?;
            println!("n={} d={} regime={} alpha={:.6e} bound={:.6e}", k.n, k.d, k.regime, k.alpha, k.bound);
        }
        TheoryCmd::Statdim { n, samples } => {
            let e = theory::orthant_statdim_mc(*n, *samples, g.seed.unwrap_or(0))?;
            println!("statdim={:.6} stderr={:.6} expected={}", e.mean, e.stderr, *n as f64 / 2.0);
        }
        TheoryCmd::BetaInterval { eta, noise, gamma } => {
            let b = theory::noisy_beta_interval(*eta, *noise, *gamma)?;
            match &b.empty_reason {
                Some(r) => println!("empty=true reason={r}"),
                None => println!("lo={:.12e} hi={:.12e}", b.lo, b.hi),
            }
        }
        TheoryCmd::Threshold { n, d, sigma2 } => {
            let r = theory::threshold_check(*n, *d, *sigma2);
            println!(
                "satisfied={} log_term={:.6e} linear_term={:.6e} binding={:?}",
                r.satisfied, r.log_term, r.linear_term, r.binding
            );
        }
        TheoryCmd::Coefficients { gamma } => {
            let (c1, c2, c3) = theory::gate_coefficients(*gamma)?;
            println!("c1={c1:.12e} c2={c2:.12e} c3={c3:.12e}");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gmm_check(g: &Global, n1: usize, n2: usize, d: usize, means: Means, sigma: &str, trials: usize, maximal: bool) -> Out<()> {
    let sigmas = relu_recovery::experiments::config::parse_f64_list("sigma", sigma)?;
    let (mu1, mu2): (Vec<f64>, Vec<f64>) = match means {
        Means::Opposite => (vec![1.0; d], vec![-1.0; d]),
        Means::Orthogonal => {
            let h = d / 2;
            ((0..d).map(|i| f64::from(u8::from(i < h))).collect(), (0..d).map(|i| f64::from(u8::from(i >= h))).collect())
        }
    };
    let rows = theory::gmm::gmm_sweep(n1, n2, &mu1, &mu2, &sigmas, trials, maximal, g.seed.unwrap_or(0))?;
    let mut s = String::from("sigma,trials,realizable_rate,maximal_rate,bound\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.sigma, r.trials, r.realizable_rate, r.maximal_rate, r.bound));
    }
    write_out(g.out.as_deref(), &s)
}

fn run(cli: Cli) -> Out<()> {
    let g = &cli.global;
    match &cli.cmd {
        Cmd::Arrangements { n, d, ensemble, exact, samples } => arrangements(g, *n, *d, ensemble, *exact, *samples),
        Cmd::Nic { kind, inst } => nic(g, kind, inst),
        Cmd::Solve { program, beta, inst } => solve_instance(g, &program_flags(inst, program, *beta), false),
        Cmd::Reconstruct { program, beta, inst } => solve_instance(g, &program_flags(inst, program, *beta), true),
        Cmd::Phase { plots } => phase(g, *plots),
        Cmd::BetaSweep => beta_sweep(g),
        Cmd::Theory { what } => theory_cmd(g, what),
        Cmd::GmmCheck { n1, n2, d, means, sigma, trials, maximal } => {
            gmm_check(g, *n1, *n2, *d, *means, sigma, *trials, *maximal)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.global.threads.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Fail::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
