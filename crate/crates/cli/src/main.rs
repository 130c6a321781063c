mod config;

use clap::{Args, Parser, Subcommand};
use config::{ChartKind, DensitySource, RunConfig};
use qma_core::fields::{omega_phi, residual_11, residual_20, FlatBackground, ScalarField, Snapshot};
use qma_core::monitor::{c_emp_variation, estimate_trace, EstimateReport, Mutation};
use qma_core::solver::{
    b_pfaffian_closed_form_defect, manufactured_f, manufactured_phi, random_f, solve_qma, SolveReport,
    Solution, SolverConfig, SolverState, StageReport,
};
use qma_core::suites::{run_suite, Suite};
use qma_core::thresholds::Thresholds;
use qma_core::QmaError;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Quaternionic Monge-Ampère laboratory.
#[derive(Parser, Debug)]
#[command(name = "qma", version)]
struct Cli {
    /// Plain `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an identity suite on a chart or on the torus.
    Verify(VerifyArgs),
    /// Solve the equation on the flat torus.
    Solve(SolveArgs),
    /// Solve and report the continuity path, optionally monitoring the trace estimate.
    Path(PathArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quaternionic dimension.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    suite: Option<Suite>,
    #[arg(long, value_enum)]
    chart: Option<ChartKind>,
    /// Eguchi-Hanson parameter.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Negative control: sign-flip or dehyper.
    #[arg(long)]
    mutate: Option<Mutation>,
    /// Torus grid for the fform and equiv suites.
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    grid: Option<usize>,
    /// zero, manufactured, random:AMP or a snapshot file.
    #[arg(long)]
    f: Option<DensitySource>,
    #[arg(long)]
    steps: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PathArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Monitor `Q = tr g_φ − Aφ` along the path.
    #[arg(long)]
    monitor: bool,
    /// Repeat the monitored path on a grid twice as fine and compare.
    #[arg(long)]
    refine: bool,
}

enum Fail {
    Config(String),
    Check(String),
    Stage(String),
}

impl Fail {
    fn code(&self) -> i32 {
        match self {
            Fail::Config(_) => 1,
            Fail::Check(_) => 2,
            Fail::Stage(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Fail::Config(m) | Fail::Check(m) | Fail::Stage(m) => m,
        }
    }
}

fn core_fail(e: QmaError) -> Fail {
    match e {
        QmaError::Config(m) => Fail::Config(m),
        QmaError::Format(m) => Fail::Config(format!("snapshot: {m}")),
        e => Fail::Stage(e.to_string()),
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Fail {
    Fail::Stage(format!("{}: {e}", path.display()))
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let result = init_threads()
        .and_then(|threads| resolve(&cli).map(|cfg| (threads, cfg)))
        .and_then(|(threads, cfg)| {
            let name = match cli.cmd {
                Command::Verify(_) => "verify",
                Command::Solve(_) => "solve",
                Command::Path(_) => "path",
            };
            let r = match cli.cmd {
                Command::Verify(_) => cmd_verify(&cfg),
                Command::Solve(_) => cmd_solve(&cfg),
                Command::Path(_) => cmd_path(&cfg),
            };
            write_run_info(&cfg, name, threads, started)?;
            r
        });
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("qma: {}", f.message());
            f.code()
        }
    }
}

fn init_threads() -> Result<usize, Fail> {
    if let Ok(v) = std::env::var("QMA_THREADS") {
        let k: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|k| *k > 0)
            .ok_or_else(|| Fail::Config(format!("QMA_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Fail::Config(e.to_string()))?;
    }
    Ok(rayon::current_num_threads())
}

fn resolve(cli: &Cli) -> Result<RunConfig, Fail> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        let text = std::fs::read_to_string(p).map_err(|e| Fail::Config(format!("{}: {e}", p.display())))?;
        cfg.apply_text(&text, p).map_err(Fail::Config)?;
    }
    let common = |cfg: &mut RunConfig, c: &Common| {
        if let Some(v) = c.seed {
            cfg.seed = v;
        }
        if let Some(v) = &c.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = c.n {
            cfg.n = v;
        }
    };
    let solve = |cfg: &mut RunConfig, s: &SolveArgs| {
        if let Some(v) = s.grid {
            cfg.grid = Some(v);
        }
        if let Some(v) = &s.f {
            cfg.f = v.clone();
        }
        if let Some(v) = s.steps {
            cfg.steps = v;
        }
        common(cfg, &s.common);
    };
    match &cli.cmd {
        Command::Verify(v) => {
            if let Some(x) = v.suite {
                cfg.suite = Some(x);
            }
            if let Some(x) = v.chart {
                cfg.chart = x;
            }
            if let Some(x) = v.a {
                cfg.a = x;
            }
            if let Some(x) = v.points {
                cfg.points = x;
            }
            if let Some(x) = v.samples {
                cfg.samples = x;
            }
            if let Some(x) = v.mutate {
                cfg.mutate = x;
            }
            if let Some(x) = v.grid {
                cfg.grid = Some(x);
            }
            common(&mut cfg, &v.common);
        }
        Command::Solve(s) => solve(&mut cfg, s),
        Command::Path(p) => {
            solve(&mut cfg, &p.solve);
            cfg.monitor |= p.monitor;
            cfg.refine |= p.refine;
        }
    }
    if !(cfg.a.is_finite() && cfg.a > 0.0) {
        return Err(Fail::Config(format!("Eguchi-Hanson parameter must be positive, got {}", cfg.a)));
    }
    Ok(cfg)
}

/// Deterministic report: everything that depends on the wall clock goes to
/// `run.json` instead.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    thresholds: &'a Thresholds,
    config: &'a RunConfig,
    result: T,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    config_hash: String,
    started_unix_secs: u64,
    elapsed_secs: f64,
    threads: usize,
    parallel: bool,
}

fn envelope<'a, T: Serialize>(cfg: &'a RunConfig, command: &'a str, result: T) -> Envelope<'a, T> {
    Envelope {
        command,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        thresholds: &cfg.thresholds,
        config: cfg,
        result,
    }
}

fn out_dir(cfg: &RunConfig) -> Result<Option<&Path>, Fail> {
    match &cfg.out {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| io_fail(d, e))?;
            Ok(Some(d.as_path()))
        }
        None => Ok(None),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Fail> {
    let p = dir.join(name);
    std::fs::write(&p, bytes).map_err(|e| io_fail(&p, e))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("report serializes");
    s.push(b'\n');
    s
}

/// Writes the report into the output directory, or to stdout without one.
fn emit<T: Serialize>(cfg: &RunConfig, name: &str, env: &Envelope<T>) -> Result<(), Fail> {
    let bytes = json(env);
    match out_dir(cfg)? {
        Some(d) => write_file(d, name, &bytes),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| Fail::Stage(format!("stdout: {e}")))
        }
    }
}

fn write_run_info(cfg: &RunConfig, command: &str, threads: usize, started: Instant) -> Result<(), Fail> {
    let Some(d) = out_dir(cfg)? else {
        return Ok(());
    };
    let info = RunInfo {
        command,
        config_hash: cfg.hash(),
        started_unix_secs: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
            .saturating_sub(started.elapsed().as_secs()),
        elapsed_secs: started.elapsed().as_secs_f64(),
        threads,
        parallel: qma_core::par::is_parallel(),
    };
    write_file(d, "run.json", &json(&info))
}

fn cmd_verify(cfg: &RunConfig) -> Result<(), Fail> {
    let sc = cfg.suite_config().map_err(Fail::Config)?;
    let report = run_suite(&sc).map_err(core_fail)?;
    let pass = report.summary.pass;
    let max = report.summary.max_rel_residual;
    emit(cfg, &format!("verify-{}.json", sc.suite), &envelope(cfg, "verify", &report))?;
    eprintln!(
        "verify {} on {}: {} (max relative residual {max:.3e})",
        sc.suite,
        report.chart,
        if pass { "pass" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(Fail::Check(format!("suite {} exceeded its thresholds", sc.suite)))
    }
}

/// The density on its grid, plus the exact solution when one is known.
struct Problem {
    f: ScalarField,
    exact: Option<ScalarField>,
    solver: SolverConfig,
}

fn problem(cfg: &RunConfig, bg: &FlatBackground, size: Option<usize>) -> Result<Problem, Fail> {
    if let DensitySource::File(p) = &cfg.f {
        let snap = Snapshot::load(p).map_err(|e| Fail::Config(format!("{}: {e}", p.display())))?;
        if snap.n != cfg.n {
            return Err(Fail::Config(format!("snapshot has n = {}, configuration has n = {}", snap.n, cfg.n)));
        }
        if let Some(g) = size.or(cfg.grid).filter(|g| *g != snap.size) {
            return Err(Fail::Config(format!("snapshot has N = {}, requested grid is {g}", snap.size)));
        }
        let solver = cfg.solver_config(snap.size).map_err(Fail::Config)?;
        let f = snap.field(0).map_err(core_fail)?;
        return Ok(Problem { f, exact: None, solver });
    }
    let solver = cfg.solver_config(size.unwrap_or(cfg.grid_size())).map_err(Fail::Config)?;
    let grid = solver.grid().map_err(core_fail)?;
    let (f, exact) = match cfg.f {
        DensitySource::Zero => (ScalarField::zeros(&grid), Some(ScalarField::zeros(&grid))),
        DensitySource::Manufactured => {
            let star = manufactured_phi(&grid);
            let star = star.add_const(-star.sup());
            (manufactured_f(bg, &grid).map_err(core_fail)?, Some(star))
        }
        DensitySource::Random(a) => (random_f(&grid, a, cfg.seed), None),
        DensitySource::File(_) => unreachable!(),
    };
    Ok(Problem { f, exact, solver })
}

#[derive(Serialize)]
struct SolveSummary {
    converged: bool,
    grid: usize,
    b: f64,
    phi_sup_norm: f64,
    /// `sup |φ − φ*|` against the known solution, when there is one.
    recovery_error: Option<f64>,
    residual_11: Option<f64>,
    residual_20: Option<f64>,
    b_pfaffian_defect: Option<f64>,
    total_newton_iterations: usize,
    failed_targets: Vec<f64>,
    error: Option<String>,
    /// Continuity parameter of the written state.
    t: f64,
    stages: Vec<StageReport>,
}

fn summarize(p: &Problem, bg: &FlatBackground, phi: &ScalarField, b: f64, t: f64, report: &SolveReport) -> SolveSummary {
    let full = t == 1.0;
    let res = |r: qma_core::Result<ScalarField>| r.ok().map(|x| x.sup_norm());
    SolveSummary {
        converged: report.converged,
        grid: p.solver.size,
        b,
        phi_sup_norm: phi.sup_norm(),
        recovery_error: p.exact.as_ref().filter(|_| full).map(|e| phi.sub(e).sup_norm()),
        residual_11: full.then(|| res(residual_11(bg, phi, &p.f, b))).flatten(),
        residual_20: full.then(|| res(residual_20(bg, phi, &p.f, b))).flatten(),
        b_pfaffian_defect: full.then(|| b_pfaffian_closed_form_defect(&p.f, 1.0, b)),
        total_newton_iterations: report.total_newton_iterations,
        failed_targets: report.failed_targets.clone(),
        error: None,
        t,
        stages: report.stages.clone(),
    }
}

fn write_fields(cfg: &RunConfig, phi: &ScalarField, f: &ScalarField) -> Result<(), Fail> {
    if let Some(d) = out_dir(cfg)? {
        for (name, field) in [("phi.snap", phi), ("f.snap", f)] {
            let p = d.join(name);
            Snapshot::from_fields(&[field])
                .and_then(|s| s.save(&p))
                .map_err(|e| io_fail(&p, e))?;
        }
    }
    Ok(())
}

/// Solves, writes `phi.snap`, `f.snap` and the report; on a stage failure
/// the last good state is written before returning.
fn solve_and_write(cfg: &RunConfig, command: &str, p: &Problem) -> Result<(Solution, SolveSummary), Fail> {
    let bg = cfg.background();
    match solve_qma(&p.f, &bg, &p.solver) {
        Ok(sol) => {
            let s = summarize(p, &bg, &sol.phi, sol.b, 1.0, &sol.report);
            write_fields(cfg, &sol.phi, &p.f)?;
            Ok((sol, s))
        }
        Err(fail) => {
            let last = &fail.last_good;
            let mut s = summarize(p, &bg, &last.phi, last.b, last.t, &fail.report);
            s.error = Some(fail.error.to_string());
            write_fields(cfg, &last.phi, &p.f)?;
            emit(cfg, &format!("{command}.json"), &envelope(cfg, command, &s))?;
            Err(Fail::Stage(format!(
                "{} (last good state at t = {} written)",
                fail.error, last.t
            )))
        }
    }
}

fn cmd_solve(cfg: &RunConfig) -> Result<(), Fail> {
    let bg = cfg.background();
    let p = problem(cfg, &bg, None)?;
    let (_, s) = solve_and_write(cfg, "solve", &p)?;
    eprintln!(
        "solve N = {}: converged, b = {:.6e}, recovery error {}",
        s.grid,
        s.b,
        s.recovery_error.map_or("n/a".to_string(), |e| format!("{e:.3e}"))
    );
    emit(cfg, "solve.json", &envelope(cfg, "solve", &s))
}

#[derive(Serialize)]
struct PathRow {
    t: f64,
    b: f64,
    residual: f64,
    min_eig: f64,
    newton_iterations: usize,
    converged: bool,
}

impl PathRow {
    fn new(s: &SolverState, bg: &FlatBackground) -> Self {
        let min_eig = match s.min_eig_history.last() {
            Some(v) => *v,
            None => omega_phi(bg, &s.phi).map_or(f64::NAN, |g| g.min_eigenvalue()),
        };
        Self {
            t: s.t,
            b: s.b,
            residual: s.residual(),
            min_eig,
            newton_iterations: s.iterates.len(),
            converged: s.converged,
        }
    }
}

#[derive(Serialize)]
struct Comparison {
    coarse_grid: usize,
    fine_grid: usize,
    /// Constant `A` shared by both grids.
    a: f64,
    coarse_c_emp: f64,
    fine_c_emp: f64,
    variation: f64,
    limit: f64,
    pass: bool,
    fine: EstimateReport,
}

#[derive(Serialize)]
struct PathReport {
    solve: SolveSummary,
    states: Vec<PathRow>,
    estimate: Option<EstimateReport>,
    comparison: Option<Comparison>,
}

fn path_csv(rows: &[PathRow]) -> String {
    let mut out = String::from("t,b,residual,min_eig,newton_iterations,converged\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:e},{},{},{}\n",
            r.t, r.b, r.residual, r.min_eig, r.newton_iterations, r.converged
        ));
    }
    out
}

fn cmd_path(cfg: &RunConfig) -> Result<(), Fail> {
    if cfg.refine && matches!(cfg.f, DensitySource::File(_)) {
        return Err(Fail::Config("refinement needs an analytic density, not a snapshot".into()));
    }
    let bg = cfg.background();
    let p = problem(cfg, &bg, None)?;
    let (sol, summary) = solve_and_write(cfg, "path", &p)?;
    let states: Vec<PathRow> = sol.path.iter().map(|s| PathRow::new(s, &bg)).collect();
    let estimate = if cfg.monitor || cfg.refine {
        Some(estimate_trace(&sol.path, &p.f, &bg, None).map_err(core_fail)?)
    } else {
        None
    };
    let comparison = match (&estimate, cfg.refine) {
        (Some(coarse), true) => {
            let fine_p = problem(cfg, &bg, Some(2 * p.solver.size))?;
            let fine_sol = solve_qma(&fine_p.f, &bg, &fine_p.solver).map_err(|f| Fail::Stage(format!("refined grid: {f}")))?;
            let fine = estimate_trace(&fine_sol.path, &fine_p.f, &bg, Some(coarse.a)).map_err(core_fail)?;
            let variation = c_emp_variation(coarse, &fine);
            Some(Comparison {
                coarse_grid: p.solver.size,
                fine_grid: fine_p.solver.size,
                a: coarse.a,
                coarse_c_emp: coarse.c_emp,
                fine_c_emp: fine.c_emp,
                variation,
                limit: cfg.thresholds.c_emp_variation,
                pass: variation < cfg.thresholds.c_emp_variation,
                fine,
            })
        }
        _ => None,
    };
    if let Some(d) = out_dir(cfg)? {
        write_file(d, "path.csv", path_csv(&states).as_bytes())?;
        if let Some(e) = &estimate {
            write_file(d, "monitor.csv", e.csv().as_bytes())?;
        }
    }
    let verdict = comparison.as_ref().map(|c| (c.pass, c.variation));
    if let Some(e) = &estimate {
        eprintln!("path: {} states, A = {:.4}, C_emp = {:.6}", e.states.len(), e.a, e.c_emp);
    }
    let report = PathReport {
        solve: summary,
        states,
        estimate,
        comparison,
    };
    emit(cfg, "path.json", &envelope(cfg, "path", &report))?;
    match verdict {
        Some((false, v)) => Err(Fail::Check(format!("C_emp varies by {v:.3e} between grids"))),
        _ => Ok(()),
    }
}
