//! Batch runner: JSON config in, CSV/JSON/SVG artifacts out.
//!
//! Exit codes: 0 success, 1 config or schema error, 2 solver error,
//! 3 property-suite failure (a `failures.json` report is written).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::casebook;
use crate::equations::{equation_from_json, CATALOGUE};
use crate::monofun::CHI_TABLE_VERSION;
use crate::scalar::{f64_to_q, parse_rational, QComplex, Scalar, C64};
use crate::solver::{self, GridOptions, GridParams, GridState, LatticeSolution};
use crate::spectral::{AtomicSpectrum, Coef};
use crate::weights::{self, Cmap2Options, WeightTriple};
use crate::VERSION;

#[derive(Parser, Debug)]
#[command(name = "halfspace", version, about = "Fourier-side solvers, weight certificates and blow-up casebook")]
pub struct Cli {
    /// JSON config with keys of the chosen subcommand
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Lattice or grid solve of one equation
    Solve(SolveArgs),
    /// U_n tables, a_*, a_**, T_* and the Cole-Hopf comparison
    Burgers(BurgersArgs),
    /// Weight certificate, condition report and randomized suite
    Weights(WeightsArgs),
    /// Heat-cascade sandwich
    Cascade(CascadeArgs),
    /// Residual exactness over the catalogue and stationary residuals
    Residual(ResidualArgs),
    /// ODE and cosine oracles
    Oracle(OracleArgs),
    /// SVG line chart from a produced CSV
    Plot(PlotArgs),
}

#[derive(Args, Debug, Default)]
pub struct SolveArgs {
    /// exact or float
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct BurgersArgs {
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub no_sandwich: bool,
}

#[derive(Args, Debug, Default)]
pub struct WeightsArgs {
    #[arg(long)]
    pub triples: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct CascadeArgs {
    #[arg(long = "N")]
    pub n: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct ResidualArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub equation: Vec<String>,
}

#[derive(Args, Debug, Default)]
pub struct OracleArgs {
    #[arg(long)]
    pub picard_n: Option<usize>,
    #[arg(long)]
    pub cosine_k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long, required = true)]
    pub y: Vec<String>,
    /// split rows into one series per value of this column
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub logy: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub title: Option<String>,
}

#[derive(Debug)]
pub enum RunError {
    Schema(String),
    Solver(String),
    Suite(Value),
}

impl RunError {
    pub fn code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 1,
            RunError::Solver(_) => 2,
            RunError::Suite(_) => 3,
        }
    }
}

fn schema<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Schema(e.to_string())
}

fn solver_err<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Solver(e.to_string())
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                RunError::Schema(m) => eprintln!("config error: {}", m),
                RunError::Solver(m) => eprintln!("solver error: {}", m),
                RunError::Suite(v) => {
                    let _ = Out::new(&cli.out).and_then(|o| o.json("failures.json", v));
                    eprintln!("property suite failed; see {}", cli.out.join("failures.json").display());
                }
            }
            e.code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), RunError> {
    if let Some(n) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| RunError::Schema(format!("{}: {}", p.display(), e)))?;
            serde_json::from_str::<Value>(&text).map_err(schema)?
        }
        None => json!({}),
    };
    let obj = cfg.as_object_mut().ok_or_else(|| schema("config must be a JSON object"))?;
    let seed = match obj.remove("seed") {
        Some(v) => v.as_u64().ok_or_else(|| schema("seed must be a nonnegative integer"))?,
        None => 2024,
    };
    let seed = cli.seed.unwrap_or(seed);
    let name = match &cli.cmd {
        Cmd::Solve(_) => "solve",
        Cmd::Burgers(_) => "burgers",
        Cmd::Weights(_) => "weights",
        Cmd::Cascade(_) => "cascade",
        Cmd::Residual(_) => "residual",
        Cmd::Oracle(_) => "oracle",
        Cmd::Plot(_) => "plot",
    };
    if let Some(sc) = obj.remove("subcommand") {
        if sc.as_str() != Some(name) {
            return Err(RunError::Schema(format!("config is for subcommand {}, not {}", sc, name)));
        }
    }
    let out = Out::new(&cli.out).map_err(solver_err)?;
    match &cli.cmd {
        Cmd::Solve(a) => cmd_solve(parse_cfg(cfg)?, a, &out),
        Cmd::Burgers(a) => cmd_burgers(parse_cfg(cfg)?, a, &out),
        Cmd::Weights(a) => cmd_weights(parse_cfg(cfg)?, a, seed, &out),
        Cmd::Cascade(a) => cmd_cascade(parse_cfg(cfg)?, a, &out),
        Cmd::Residual(a) => cmd_residual(parse_cfg(cfg)?, a, seed, &out),
        Cmd::Oracle(a) => cmd_oracle(parse_cfg(cfg)?, a, &out),
        Cmd::Plot(a) => cmd_plot(a, &out),
    }
}

fn parse_cfg<T: DeserializeOwned>(v: Value) -> Result<T, RunError> {
    serde_json::from_value(v).map_err(schema)
}

/// Output directory with atomic writes.
#[derive(Clone)]
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{}.tmp", name));
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)
    }

    pub fn json(&self, name: &str, v: &Value) -> std::io::Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
        let mut buf = format!("# halfspace {} chi_table {}\r\n", VERSION, CHI_TABLE_VERSION).into_bytes();
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write(name, &buf)
    }

    pub fn svg(&self, name: &str, s: &str) -> std::io::Result<()> {
        self.write(name, s.as_bytes())
    }
}

fn io<T>(r: std::io::Result<T>) -> Result<T, RunError> {
    r.map_err(solver_err)
}

fn f(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".into()
    } else if (1e-5..1e16).contains(&a) {
        format!("{}", x)
    } else {
        format!("{:e}", x)
    }
}

fn b(x: bool) -> String {
    x.to_string()
}

fn suite_result(pass: bool, report: Value) -> Result<(), RunError> {
    if pass {
        Ok(())
    } else {
        Err(RunError::Suite(report))
    }
}

// ---------------------------------------------------------------- solve

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct SolveCfg {
    equation: Value,
    data: Value,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    lambda: Option<String>,
    #[serde(default)]
    grid: Option<GridCfg>,
    #[serde(default = "default_times")]
    times: Vec<f64>,
}

fn default_times() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct GridCfg {
    t_end: f64,
    dt: f64,
    s: f64,
    #[serde(default = "two")]
    a: f64,
    #[serde(default = "one_usize")]
    k0: usize,
    /// taken from the contraction-parameter selection when absent
    #[serde(default)]
    b: Option<f64>,
    /// asserted bound B on the data norm
    #[serde(default)]
    ball: Option<f64>,
    #[serde(default)]
    max_iters: Option<usize>,
    #[serde(default)]
    tol: Option<f64>,
}

fn two() -> f64 {
    2.0
}

fn one_usize() -> usize {
    1
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct BumpCfg {
    h: f64,
    cells: usize,
    #[serde(default = "one_usize")]
    comps: usize,
    lo: f64,
    hi: f64,
    mass: [f64; 2],
}

fn cmd_solve(mut cfg: SolveCfg, args: &SolveArgs, out: &Out) -> Result<(), RunError> {
    if let Some(m) = &args.mode {
        cfg.mode = Some(m.clone());
    }
    if let Some(l) = &args.lambda {
        cfg.lambda = Some(l.clone());
    }
    let (eq, h) = equation_from_json(&cfg.equation).map_err(schema)?;
    if let Some(bump) = cfg.data.get("bump") {
        let bump: BumpCfg = serde_json::from_value(bump.clone()).map_err(schema)?;
        let g = cfg.grid.as_ref().ok_or_else(|| schema("grid data needs a grid block"))?;
        return solve_grid_cmd(&eq, &h, &bump, g, &cfg.times, out);
    }
    let lam = cfg.lambda.as_deref().ok_or_else(|| schema("lattice solve needs lambda"))?;
    let lam = parse_rational(lam).ok_or_else(|| schema("lambda must be a rational"))?;
    match cfg.mode.as_deref().unwrap_or("exact") {
        "exact" => {
            let u0 = AtomicSpectrum::<QComplex>::from_json(&cfg.data).map_err(schema)?;
            let sol = solver::solve_lattice(&eq, &h, &u0, &lam).map_err(solver_err)?;
            write_lattice(&sol, &cfg.times, out)
        }
        "float" => {
            let u0 = AtomicSpectrum::<C64>::from_json(&cfg.data).map_err(schema)?;
            let sol = solver::solve_lattice(&eq, &h, &u0, &lam).map_err(solver_err)?;
            write_lattice(&sol, &cfg.times, out)
        }
        m => Err(RunError::Schema(format!("mode must be exact or float, got {}", m))),
    }
}

fn write_lattice<T: Scalar + Coef>(sol: &LatticeSolution<T>, times: &[f64], out: &Out) -> Result<(), RunError> {
    io(out.json("spectrum.json", &sol.to_json()))?;
    let rows: Vec<Vec<String>> = solver::sample_lattice(sol, times)
        .into_iter()
        .map(|(t, x, j, z)| vec![f(t), x.to_string(), j.to_string(), f(z.re), f(z.im)])
        .collect();
    io(out.csv("samples.csv", &["t", "xi", "component", "re", "im"], &rows))?;
    let trace: Vec<Vec<String>> = times
        .iter()
        .map(|&t| {
            let l1: f64 = sol.spectrum.atoms().values().flat_map(|cs| cs.iter()).map(|c| c.eval(t).norm()).sum();
            vec![f(t), f(l1)]
        })
        .collect();
    io(out.csv("norm_trace.csv", &["t", "l1_mass"], &trace))?;
    let res = sol.residual.as_ref();
    println!(
        "solved {} atoms up to level {}; residual exact_zero={} max={}",
        sol.spectrum.len(),
        sol.lambda,
        res.map(|r| r.exact_zero).unwrap_or(false),
        res.map(|r| r.max_l1).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn solve_grid_cmd(
    eq: &crate::equations::SymbolTable,
    h: &crate::equations::NonlinearSeries,
    bump: &BumpCfg,
    g: &GridCfg,
    times: &[f64],
    out: &Out,
) -> Result<(), RunError> {
    let u0 = GridState::bump(bump.h, bump.cells, bump.comps, bump.lo, bump.hi, C64::new(bump.mass[0], bump.mass[1]));
    let b = match g.b {
        Some(b) => b,
        None => {
            let claims = eq.claims.as_ref().ok_or_else(|| schema("grid.b is required when the equation has no claims"))?;
            let ball = g.ball.ok_or_else(|| schema("grid.b or grid.ball is required"))?;
            let eps = solver::ball_epsilon(h, claims.cap_c0, ball);
            if !(g.s < 0.0 && g.a >= 2.0) {
                return Err(schema("parameter selection needs s < 0 and a >= 2"));
            }
            solver::select_contraction_params(g.s, claims.c0, eps, g.a, g.k0).b
        }
    };
    let mut opts = GridOptions::new(g.t_end, g.dt, GridParams { s: g.s, a: g.a, k0: g.k0, b });
    opts.ball = g.ball;
    if let Some(m) = g.max_iters {
        opts.max_iters = m;
    }
    if let Some(t) = g.tol {
        opts.tol = t;
    }
    let sol = solver::solve_grid(eq, h, &u0, &opts).map_err(solver_err)?;
    let last = sol.states.last().unwrap();
    io(out.json(
        "spectrum.json",
        &json!({
            "h": last.h,
            "cells": last.cells,
            "t": sol.times.last(),
            "data": last.data.iter().map(|c| c.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "b": b,
            "iterations": sol.iterations,
            "data_norm": sol.data_norm,
            "z_norm": sol.z_norm(),
            "ball_holds": sol.ball_holds(),
        }),
    ))?;
    let mut rows = Vec::new();
    for &t in times {
        if let Some(s) = sol.state_at(t) {
            for (c, comp) in s.data.iter().enumerate() {
                for (k, z) in comp.iter().enumerate() {
                    rows.push(vec![f(t), f(s.center(k)), c.to_string(), f(z.re), f(z.im)]);
                }
            }
        }
    }
    io(out.csv("samples.csv", &["t", "xi", "component", "re", "im"], &rows))?;
    let trace: Vec<Vec<String>> = sol.trace.iter().map(|s| vec![f(s.t), f(s.norm), f(s.running)]).collect();
    io(out.csv("norm_trace.csv", &["t", "norm", "running_sup"], &trace))?;
    println!("grid solve: {} steps, Z-norm {:e}, ball {:?}", sol.times.len() - 1, sol.z_norm(), sol.ball_holds());
    if sol.ball_holds() == Some(false) {
        return Err(RunError::Suite(json!({"ball_holds": false, "z_norm": sol.z_norm(), "ball": g.ball})));
    }
    Ok(())
}

// ---------------------------------------------------------------- burgers

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct BurgersCfg {
    #[serde(default = "ten")]
    a: f64,
    #[serde(default = "sixty", rename = "N")]
    n: usize,
    #[serde(default = "default_tgrid")]
    tgrid: Vec<f64>,
    #[serde(default = "yes")]
    sandwich: bool,
    /// sandwich times as rationals; default 0.05j, j = 1..100
    #[serde(default)]
    sandwich_times: Option<Vec<String>>,
    #[serde(default = "yes")]
    colehopf: bool,
    #[serde(default = "default_samples")]
    colehopf_samples: usize,
}

fn ten() -> f64 {
    10.0
}

fn sixty() -> usize {
    60
}

fn yes() -> bool {
    true
}

fn default_samples() -> usize {
    512
}

fn default_tgrid() -> Vec<f64> {
    (0..20).map(|i| 0.3 + 2.7 * i as f64 / 19.0).collect()
}

fn cmd_burgers(mut cfg: BurgersCfg, args: &BurgersArgs, out: &Out) -> Result<(), RunError> {
    if let Some(a) = args.a {
        cfg.a = a;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if args.no_sandwich {
        cfg.sandwich = false;
    }
    if cfg.n < 20 {
        return Err(schema("N must be at least 20"));
    }
    if cfg.tgrid.iter().any(|&t| !(t > 0.0)) || cfg.tgrid.is_empty() {
        return Err(schema("tgrid must be nonempty with t > 0"));
    }
    let un = casebook::burgers_un(cfg.n);
    let rows: Vec<Vec<String>> = un
        .iter()
        .enumerate()
        .map(|(i, u)| vec![(i + 1).to_string(), u.degree().to_string(), u.coeffs().len().to_string(), u.denom.bits().to_string()])
        .collect();
    io(out.csv("un.csv", &["n", "degree", "terms", "denominator_bits"], &rows))?;
    let mut vals = Vec::new();
    for &t in &cfg.tgrid {
        for (i, l) in casebook::ln_un_at(&un, &f64_to_q(t)).iter().enumerate() {
            vals.push(vec![f(t), (i + 1).to_string(), f(l.exp()), f(*l)]);
        }
    }
    io(out.csv("un_values.csv", &["t", "n", "U_n", "ln_U_n"], &vals))?;

    let star = casebook::astarstar_from_table(&un, &cfg.tgrid);
    let rows: Vec<Vec<String>> = star
        .curve
        .iter()
        .map(|e| vec![f(e.t), f(e.estimate), f(e.lower), f(e.upper), b(e.inside), f(e.rho_fit), f(e.rho_richardson), b(e.used_fallback)])
        .collect();
    io(out.csv("astar.csv", &["t", "estimate", "lower", "upper", "inside", "rho_fit", "rho_richardson", "fallback"], &rows))?;

    let tstar = casebook::tstar_from_table(&un, cfg.a);
    let mut failures = Vec::new();
    if !star.inside {
        failures.push(json!({"check": "astarstar", "estimate": star.estimate}));
    }
    for e in star.curve.iter().filter(|e| !e.inside) {
        failures.push(json!({"check": "astar", "t": e.t, "estimate": e.estimate}));
    }
    if let Some(t) = tstar.estimate {
        if t > tstar.log_a + 1e-9 {
            failures.push(json!({"check": "tstar", "estimate": t, "log_a": tstar.log_a}));
        }
    }

    let colehopf = if cfg.colehopf && cfg.a > casebook::ASTARSTAR_UPPER {
        let terms = 60 + 4 * cfg.a.ceil() as usize;
        let hi = cfg.a.ln().max(0.1);
        match casebook::colehopf_first_zero(C64::new(cfg.a, 0.0), cfg.colehopf_samples, (0.0, hi), terms) {
            Ok(r) => {
                let rel = tstar.estimate.map(|t| (r.t_ch - t).abs() / t);
                json!({"t_ch": r.t_ch, "terms": r.terms, "min_abs_v": r.min_abs_v, "relative_gap": rel})
            }
            Err(e) => json!({"error": e.to_string()}),
        }
    } else {
        Value::Null
    };

    if cfg.sandwich {
        let times: Vec<BigRational> = match &cfg.sandwich_times {
            Some(ts) => ts.iter().map(|s| parse_rational(s).ok_or_else(|| schema(format!("bad time {}", s)))).collect::<Result<_, _>>()?,
            None => (1..=100).map(|j| BigRational::new(j.into(), 20.into())).collect(),
        };
        let rows = casebook::burgers_sandwich(&un, &times);
        let bad: Vec<_> = rows.iter().filter(|r| !r.pass).map(|r| json!({"check": "sandwich", "n": r.n, "t": r.t})).collect();
        failures.extend(bad);
        let csv_rows: Vec<Vec<String>> = rows.iter().map(|r| vec![r.n.to_string(), f(r.t), f(r.lower_margin), f(r.upper_margin), b(r.pass)]).collect();
        io(out.csv("sandwich.csv", &["n", "t", "lower_margin", "upper_margin", "pass"], &csv_rows))?;
    }

    let summary = json!({
        "a": cfg.a,
        "N": cfg.n,
        "astarstar": {"estimate": star.estimate, "argmin": star.argmin, "bracket": [star.bracket.0, star.bracket.1], "inside": star.inside},
        "tstar": tstar,
        "colehopf": colehopf,
        "failures": failures.len(),
    });
    io(out.json("burgers.json", &summary))?;
    match tstar.estimate {
        Some(t) => println!("a = {}: T_* estimate {} (log a = {}), status {:?}", cfg.a, t, tstar.log_a, tstar.status),
        None => println!("a = {}: no blow-up estimate, status {:?}", cfg.a, tstar.status),
    }
    println!("a_** estimate {} at t = {}", star.estimate, star.argmin);
    suite_result(failures.is_empty(), json!({"burgers": failures}))
}

// ---------------------------------------------------------------- weights

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct WeightsCfg {
    /// explicit triple; a seeded random one otherwise
    #[serde(default)]
    triple: Option<Value>,
    #[serde(default)]
    horizon: Option<f64>,
    #[serde(default = "default_grid")]
    grid: usize,
    #[serde(default = "default_triples")]
    triples: usize,
    #[serde(default = "default_pairs")]
    pairs: usize,
    #[serde(default = "default_scaling")]
    scaling: Vec<f64>,
}

fn default_grid() -> usize {
    200
}

fn default_triples() -> usize {
    50
}

fn default_pairs() -> usize {
    1000
}

fn default_scaling() -> Vec<f64> {
    vec![2.0, 5.0, 10.0]
}

fn cmd_weights(mut cfg: WeightsCfg, args: &WeightsArgs, seed: u64, out: &Out) -> Result<(), RunError> {
    if let Some(t) = args.triples {
        cfg.triples = t;
    }
    if let Some(p) = args.pairs {
        cfg.pairs = p;
    }
    if let Some(g) = args.grid {
        cfg.grid = g;
    }
    let triple = match &cfg.triple {
        Some(v) => WeightTriple::from_json(v).map_err(schema)?,
        None => WeightTriple::random(&mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let horizon = cfg.horizon.unwrap_or(5.0 * triple.delta);
    let cert = weights::cmap2(&triple, &Cmap2Options::new(horizon)).map_err(solver_err)?;
    io(out.json("certificate.json", &cert.to_json()))?;
    let (main, selfmu) = weights::check_certificate(&cert, &cert.lgrid(cfg.grid));
    let mut rows = Vec::new();
    for (name, rep) in [("main", &main), ("self_mu", &selfmu)] {
        for r in &rep.rows {
            rows.push(vec![
                name.to_string(),
                f(r.l),
                b(r.cond1),
                f(r.eps),
                b(r.cond2),
                r.cond3.map(b).unwrap_or_default(),
                r.note.clone().unwrap_or_default(),
            ]);
        }
    }
    io(out.csv("conditions.csv", &["check", "l", "cond1", "eps", "cond2", "cond3", "note"], &rows))?;
    let scaling = weights::superlinearity_check(&triple, &cfg.scaling, horizon).map_err(solver_err)?;
    let rows: Vec<Vec<String>> = scaling.iter().map(|r| vec![f(r.b), f(r.horizon), r.points.to_string(), f(r.min_ratio), b(r.pass)]).collect();
    io(out.csv("scaling.csv", &["b", "horizon", "points", "min_ratio", "pass"], &rows))?;
    let suite = weights::weight_suite(seed, cfg.triples, cfg.pairs, cfg.grid);
    io(out.json("suite.json", &serde_json::to_value(&suite).unwrap()))?;
    println!(
        "certificate: conditions {}; suite: {} triples, {} pairs, {} condition failures, {} inequality failures",
        if main.all_pass() && selfmu.all_pass() { "pass" } else { "FAIL" },
        suite.triples,
        suite.pairs,
        suite.condition_failures,
        suite.inequality_failures
    );
    let pass = main.all_pass() && selfmu.all_pass() && scaling.iter().all(|r| r.pass) && suite.passed();
    suite_result(
        pass,
        json!({
            "conditions": main.failures().iter().chain(selfmu.failures().iter()).map(|r| serde_json::to_value(r).unwrap()).collect::<Vec<_>>(),
            "scaling": scaling.iter().filter(|r| !r.pass).map(|r| serde_json::to_value(r).unwrap()).collect::<Vec<_>>(),
            "suite": suite,
        }),
    )
}

// ---------------------------------------------------------------- cascade

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct CascadeCfg {
    #[serde(default = "one_f")]
    bl: f64,
    #[serde(default = "three_halves")]
    bu: f64,
    #[serde(default = "half")]
    cl: f64,
    #[serde(default = "one_f")]
    cu: f64,
    #[serde(default = "thirty", rename = "N")]
    n: usize,
    #[serde(default = "default_cascade_ts")]
    ts: Vec<f64>,
    #[serde(default = "tol10")]
    tol: f64,
}

fn one_f() -> f64 {
    1.0
}

fn three_halves() -> f64 {
    1.5
}

fn half() -> f64 {
    0.5
}

fn thirty() -> usize {
    30
}

fn tol10() -> f64 {
    1e-10
}

fn default_cascade_ts() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 10.0).collect()
}

fn cmd_cascade(mut cfg: CascadeCfg, args: &CascadeArgs, out: &Out) -> Result<(), RunError> {
    if let Some(n) = args.n {
        cfg.n = n;
    }
    let c = casebook::cascade_bounds(cfg.bl, cfg.bu, cfg.cl, cfg.cu, cfg.n, &cfg.ts, cfg.tol).map_err(schema)?;
    let rows: Vec<Vec<String>> = c
        .rows
        .iter()
        .map(|r| vec![r.n.to_string(), f(r.t), f(r.lower_bound), f(r.f_lower), f(r.f_upper), f(r.upper_bound), b(r.pass)])
        .collect();
    io(out.csv("cascade.csv", &["n", "t", "lower_bound", "f_lower", "f_upper", "upper_bound", "pass"], &rows))?;
    let funcs = json!({
        "lower": c.lower.iter().map(|p| p.to_json()).collect::<Vec<_>>(),
        "upper": c.upper.iter().map(|p| p.to_json()).collect::<Vec<_>>(),
    });
    io(out.json("cascade.json", &funcs))?;
    let bad: Vec<Value> = c.rows.iter().filter(|r| !r.pass).map(|r| serde_json::to_value(r).unwrap()).collect();
    println!("cascade: {} rows, {} failures", c.rows.len(), bad.len());
    suite_result(bad.is_empty(), json!({"cascade": bad}))
}

// ---------------------------------------------------------------- residual

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct ResidualCfg {
    #[serde(default)]
    equations: Option<Vec<String>>,
    #[serde(default = "three")]
    samples: usize,
    #[serde(default = "ten_usize")]
    max_atoms: usize,
    #[serde(default = "yes")]
    stationary: bool,
    /// Re z > 0
    #[serde(default = "default_z")]
    z: [f64; 2],
    #[serde(default)]
    stationary_params: Value,
}

fn three() -> usize {
    3
}

fn ten_usize() -> usize {
    10
}

fn default_z() -> [f64; 2] {
    [1.0, 0.0]
}

fn cmd_residual(mut cfg: ResidualCfg, args: &ResidualArgs, seed: u64, out: &Out) -> Result<(), RunError> {
    if let Some(s) = args.samples {
        cfg.samples = s;
    }
    if !args.equation.is_empty() {
        cfg.equations = Some(args.equation.clone());
    }
    if cfg.max_atoms == 0 || cfg.max_atoms > 10 {
        return Err(schema("max_atoms must be in 1..=10"));
    }
    let names: Vec<String> = cfg.equations.clone().unwrap_or_else(|| CATALOGUE.iter().map(|s| s.to_string()).collect());
    for n in &names {
        if !CATALOGUE.contains(&n.as_str()) {
            return Err(RunError::Schema(format!("unknown equation {}", n)));
        }
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows = solver::residual_suite(seed, &refs, cfg.samples, cfg.max_atoms).map_err(solver_err)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.equation.clone(),
                r.sample.to_string(),
                if r.exact { "exact" } else { "float" }.to_string(),
                r.data_atoms.to_string(),
                r.lambda.clone(),
                r.atoms_checked.to_string(),
                b(r.exact_zero),
                f(r.max_l1),
                b(r.coherent),
                b(r.pass()),
            ]
        })
        .collect();
    io(out.csv(
        "residual.csv",
        &["equation", "sample", "mode", "data_atoms", "lambda", "atoms_checked", "exact_zero", "max_l1", "coherent", "pass"],
        &csv_rows,
    ))?;
    let mut stationary = Vec::new();
    if cfg.stationary {
        let z = C64::new(cfg.z[0], cfg.z[1]);
        if !(z.re > 0.0) {
            return Err(schema("stationary z needs Re z > 0"));
        }
        let mut srows = Vec::new();
        for name in ["kdv", "clm", "nls_star"] {
            let p = cfg.stationary_params.get(name).cloned().unwrap_or(Value::Null);
            let r = casebook::stationary_residual(name, z, &p).map_err(schema)?;
            srows.push(vec![
                name.to_string(),
                f(r.stated.re),
                f(r.stated.im),
                f(r.best_fit.re),
                f(r.best_fit.im),
                f(r.residual_stated),
                f(r.residual_best),
                f(r.linear_norm),
                f(r.nonlinear_norm),
            ]);
            stationary.push(serde_json::to_value(&r).unwrap());
        }
        io(out.csv(
            "stationary.csv",
            &["equation", "stated_re", "stated_im", "best_fit_re", "best_fit_im", "residual_stated", "residual_best", "linear_norm", "nonlinear_norm"],
            &srows,
        ))?;
    }
    io(out.json("stationary.json", &Value::Array(stationary)))?;
    let bad: Vec<Value> = rows.iter().filter(|r| !r.pass()).map(|r| serde_json::to_value(r).unwrap()).collect();
    println!("residual: {} solves, {} failures", rows.len(), bad.len());
    suite_result(bad.is_empty(), json!({"residual": bad}))
}

// ---------------------------------------------------------------- oracle

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct OracleCfg {
    #[serde(default = "default_amp")]
    a: Value,
    #[serde(default = "default_c")]
    c: String,
    #[serde(default = "thirty_i")]
    multiple: i64,
    #[serde(default = "default_picard")]
    picard_n: usize,
    #[serde(default = "default_cosine_k")]
    cosine_k: usize,
    #[serde(default = "default_cosine_ts")]
    cosine_ts: Vec<f64>,
}

fn default_amp() -> Value {
    json!(["3/2", "1/2"])
}

fn default_c() -> String {
    "1".into()
}

fn thirty_i() -> i64 {
    30
}

fn default_picard() -> usize {
    10
}

fn default_cosine_k() -> usize {
    200
}

fn default_cosine_ts() -> Vec<f64> {
    vec![0.9, 0.99, 0.999]
}

fn cmd_oracle(mut cfg: OracleCfg, args: &OracleArgs, out: &Out) -> Result<(), RunError> {
    if let Some(n) = args.picard_n {
        cfg.picard_n = n;
    }
    if let Some(k) = args.cosine_k {
        cfg.cosine_k = k;
    }
    if cfg.picard_n > 16 {
        return Err(schema("picard_n above 16 is out of reach"));
    }
    let a = <QComplex as Scalar>::from_json(&cfg.a).ok_or_else(|| schema("a must be a rational or [re, im]"))?;
    let c = parse_rational(&cfg.c).ok_or_else(|| schema("c must be a rational"))?;
    let ode = casebook::ode_lattice_oracle(&a, &c, cfg.multiple).map_err(|e| match e {
        casebook::CaseError::Param(m) => RunError::Schema(m),
        e => solver_err(e),
    })?;
    let rows: Vec<Vec<String>> = ode.rows.iter().map(|r| vec![r.n.to_string(), r.frequency.clone(), r.coefficient.clone(), r.expected.clone(), b(r.exact)]).collect();
    io(out.csv("ode_lattice.csv", &["n", "frequency", "coefficient", "expected", "exact"], &rows))?;

    let seq = casebook::ode_picard(cfg.picard_n);
    let mut coeffs = Vec::new();
    for v in &seq {
        for k in 0..v.numer.len() {
            let c = v.coeff(k);
            let exact = if v.n <= 4 { c.to_string() } else { String::new() };
            coeffs.push(vec![v.n.to_string(), k.to_string(), f(crate::scalar::q_to_f64(&c)), exact]);
        }
    }
    io(out.csv("picard.csv", &["n", "k", "c", "exact"], &coeffs))?;
    let prow = casebook::picard_rows(&seq);
    let rows: Vec<Vec<String>> = prow.iter().map(|r| vec![r.n.to_string(), r.terms.to_string(), r.denom_bits.to_string(), b(r.pattern_holds)]).collect();
    io(out.csv("picard_summary.csv", &["n", "terms", "denominator_bits", "pattern_holds"], &rows))?;

    let cos = casebook::cosine_zero_mode(cfg.cosine_k, &cfg.cosine_ts);
    let cs = casebook::cosine_coefficients(cfg.cosine_k);
    let rows: Vec<Vec<String>> = cs.iter().enumerate().map(|(i, c)| vec![(i + 1).to_string(), c.to_string(), f(crate::scalar::q_to_f64(c))]).collect();
    io(out.csv("cosine.csv", &["k", "coefficient", "value"], &rows))?;
    let rows: Vec<Vec<String>> = cos.partial_sums.iter().map(|(t, s, h)| vec![f(*t), f(*s), f(*h)]).collect();
    io(out.csv("cosine_sums.csv", &["t", "partial_sum", "harmonic"], &rows))?;

    let cos_ok = cos.first_is_half && cos.ratio_law && cos.ratio_bound && cos.termwise_harmonic && cos.partial_sums.iter().all(|(_, s, h)| s >= h);
    let picard_ok = prow.iter().all(|r| r.pattern_holds);
    let summary = json!({
        "ode_lattice": {"atoms": ode.atoms, "residual_zero": ode.residual_zero, "pass": ode.passed()},
        "picard": prow,
        "cosine": {"first_is_half": cos.first_is_half, "ratio_law": cos.ratio_law, "ratio_bound": cos.ratio_bound, "termwise_harmonic": cos.termwise_harmonic, "pass": cos_ok},
    });
    io(out.json("oracle.json", &summary))?;
    println!(
        "oracle: lattice ODE {}, Picard pattern through n = {} {}, cosine {}",
        if ode.passed() { "pass" } else { "FAIL" },
        cfg.picard_n,
        if picard_ok { "pass" } else { "FAIL" },
        if cos_ok { "pass" } else { "FAIL" }
    );
    suite_result(ode.passed() && picard_ok && cos_ok, summary)
}

// ---------------------------------------------------------------- plot

fn cmd_plot(args: &PlotArgs, out: &Out) -> Result<(), RunError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&args.input)
        .map_err(|e| RunError::Schema(format!("{}: {}", args.input.display(), e)))?;
    let header = rdr.headers().map_err(schema)?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| RunError::Schema(format!("no column {}", name)));
    let xi = col(&args.x)?;
    let yis: Vec<usize> = args.y.iter().map(|y| col(y)).collect::<Result<_, _>>()?;
    let gi = args.group.as_deref().map(col).transpose()?;
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(schema)?;
        let x: f64 = rec[xi].parse().map_err(|_| RunError::Schema(format!("non-numeric {} value {}", args.x, &rec[xi])))?;
        for (j, &yi) in yis.iter().enumerate() {
            let Ok(y) = rec[yi].parse::<f64>() else { continue };
            let label = match gi {
                Some(g) => format!("{} {}={}", args.y[j], &header[g], &rec[g]),
                None => args.y[j].clone(),
            };
            match series.iter_mut().find(|(l, _)| *l == label) {
                Some((_, pts)) => pts.push((x, y)),
                None => series.push((label, vec![(x, y)])),
            }
        }
    }
    let title = args.title.clone().unwrap_or_else(|| args.input.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let svg = line_chart(&title, &args.x, &series, args.logy);
    // an explicit --output path is taken as given; otherwise write into --out
    let (dest, name) = match &args.output {
        Some(p) => {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).ok_or_else(|| schema("bad output name"))?;
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            (io(Out::new(dir))?, name)
        }
        None => (out.clone(), format!("{}.svg", args.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into()))),
    };
    io(dest.svg(&name, &svg))?;
    println!("wrote {}", dest.dir.join(&name).display());
    Ok(())
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-300);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

/// Static SVG line chart; y is plotted as log10 when `logy`.
pub fn line_chart(title: &str, xlabel: &str, series: &[(String, Vec<(f64, f64)>)], logy: bool) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const L: f64 = 70.0;
    const R: f64 = 180.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
    let ty = |y: f64| if logy { y.log10() } else { y };
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().map(|&(x, y)| (x, ty(y)))).filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        (W - R + L) / 2.0,
        esc(title)
    );
    s += &format!("<rect x=\"{L}\" y=\"{T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", W - L - R, H - T - B);
    for t in ticks(x0, x1) {
        s += &format!("<line x1=\"{0:.2}\" y1=\"{1}\" x2=\"{0:.2}\" y2=\"{2}\" stroke=\"#ddd\"/><text x=\"{0:.2}\" y=\"{3}\" text-anchor=\"middle\">{4}</text>\n", sx(t), T, H - B, H - B + 16.0, fmt_tick(t));
    }
    for t in ticks(y0, y1) {
        let label = if logy { format!("1e{}", fmt_tick(t)) } else { fmt_tick(t) };
        s += &format!("<line x1=\"{0}\" y1=\"{1:.2}\" x2=\"{2}\" y2=\"{1:.2}\" stroke=\"#ddd\"/><text x=\"{3}\" y=\"{4:.2}\" text-anchor=\"end\">{5}</text>\n", L, sy(t), W - R, L - 6.0, sy(t) + 4.0, label);
    }
    s += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (W - R + L) / 2.0, H - 12.0, esc(xlabel));
    for (i, (label, p)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = p
            .iter()
            .map(|&(x, y)| (x, ty(y)))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        s += &format!("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color, path.join(" "));
        if i < 20 {
            let ly = T + 14.0 + 16.0 * i as f64;
            s += &format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/><text x=\"{4}\" y=\"{5}\">{6}</text>\n",
                W - R + 10.0,
                ly,
                W - R + 30.0,
                color,
                W - R + 36.0,
                ly + 4.0,
                esc(label)
            );
        }
    }
    s += "</svg>\n";
    s
}

fn fmt_tick(t: f64) -> String {
    let r = (t * 1e9).round() / 1e9;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{}", r)
    }
}
