//! Damped Newton–Krylov continuity solver for `ω_φ^{2n} = e^{2tF+2b} ω^{2n}`
//! on the flat torus, `t` running from 0 to 1.
//!
//! Newton works in the mean-zero gauge; `b` is updated with the weight
//! `Pf(Ω_φ)/Pf(Ω)`, the density whose integral is independent of `φ`.
//! The output is sup-normalized (`sup φ = 0`).

mod krylov;

pub use krylov::{gmres, GmresConfig, GmresOutcome};

use crate::fields::{
    dd_j_matrix, integrate, omega_phi_matrix, DerivPattern, FlatBackground, ScalarField,
    TorusGrid,
};
use crate::hypalg::{self, CMat};
use crate::{par, QmaError, Result, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n: usize,
    /// Points per axis.
    pub size: usize,
    /// Number of uniform continuity steps.
    pub steps: usize,
    /// Target for `sup |residual_11|`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Accepted iterates keep `min eig g_φ > eps_pos`.
    pub eps_pos: f64,
    /// Damping underflow threshold.
    pub min_step: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    /// Caps on the step length of the first Newton iterations of a stage.
    pub damping_schedule: Vec<f64>,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    pub restart: usize,
    /// Halvings allowed per continuity step.
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 1,
            size: 16,
            steps: 5,
            newton_tol: 1e-10,
            max_newton: 30,
            eps_pos: 1e-6,
            min_step: 1e-8,
            backtrack: 0.5,
            damping_schedule: Vec::new(),
            linear_tol: 1e-9,
            linear_max_iter: 300,
            restart: 40,
            max_halvings: 4,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(QmaError::Config(msg.to_string()));
        if !(self.newton_tol > 0.0 && self.linear_tol > 0.0 && self.eps_pos > 0.0 && self.min_step > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0, 1)");
        }
        if self.steps == 0 || self.max_newton == 0 || self.linear_max_iter == 0 || self.restart == 0 {
            return bad("iteration counts must be positive");
        }
        if self.damping_schedule.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
            return bad("damping caps must lie in (0, 1]");
        }
        TorusGrid::new(self.n, self.size).map(|_| ())
    }

    /// `t_1 < … < t_K = 1` (the start `t_0 = 0` is implicit).
    pub fn path(&self) -> Vec<f64> {
        (1..=self.steps).map(|k| k as f64 / self.steps as f64).collect()
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.n, self.size)
    }

    fn gmres(&self) -> GmresConfig {
        GmresConfig {
            tol: self.linear_tol,
            max_iter: self.linear_max_iter,
            restart: self.restart,
        }
    }
}

/// Diagnostics of one accepted Newton iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub t: f64,
    pub iteration: usize,
    pub residual_sup: f64,
    pub min_eig: f64,
    pub b: f64,
    /// Damping factor of the step that produced this iterate (0 for the first).
    pub step: f64,
    pub linear_iterations: usize,
    /// `∫ω_φ^{2n} − ∫ω^{2n}` in units of `ω^{2n}`.
    pub volume_defect: f64,
    /// `∫Pf(Ω_φ)/Pf(Ω) − Vol`.
    pub mixed_volume_defect: f64,
    /// `sup |residual_20 − residual_11|`.
    pub equivalence_gap: f64,
    /// `sup |(Pf ratio)² − det ratio|`.
    pub pf_det_gap: f64,
    /// Smallest trace-inequality residual, with the actual volume ratio.
    pub trace_bridge_min: f64,
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub phi: ScalarField,
    pub b: f64,
    pub t: f64,
    pub residual_history: Vec<f64>,
    pub min_eig_history: Vec<f64>,
    pub iterates: Vec<IterateRecord>,
    pub converged: bool,
}

impl SolverState {
    /// `φ = 0`, `b = 0` solves the `t = 0` problem.
    pub fn initial(grid: &TorusGrid) -> Self {
        Self {
            phi: ScalarField::zeros(grid),
            b: 0.0,
            t: 0.0,
            residual_history: vec![0.0],
            min_eig_history: Vec::new(),
            iterates: Vec::new(),
            converged: true,
        }
    }

    pub fn residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }

    /// Shifts `φ` so that `sup φ = 0`; the equation only sees derivatives,
    /// so `b` is unchanged.
    pub fn sup_normalized(&self) -> Self {
        let mut s = self.clone();
        s.phi = self.phi.add_const(-self.phi.sup());
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub t: f64,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub residual: f64,
    pub min_eig: f64,
    pub b: f64,
    pub halvings: usize,
    pub iterates: Vec<IterateRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    /// Stage targets that failed and were retried with a halved step.
    pub failed_targets: Vec<f64>,
    pub converged: bool,
    pub b: f64,
    pub b_history: Vec<f64>,
    pub min_eig_trace: Vec<f64>,
    pub total_newton_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// `sup φ = 0`.
    pub phi: ScalarField,
    pub b: f64,
    pub report: SolveReport,
    /// Converged states from `t = 0` to `t = 1`, sup-normalized.
    pub path: Vec<SolverState>,
}

#[derive(Debug)]
pub struct SolveFailure {
    pub error: QmaError,
    /// Last converged state (sup-normalized).
    pub last_good: SolverState,
    pub report: SolveReport,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage failure after t = {}: {}", self.last_good.t, self.error)
    }
}

impl std::error::Error for SolveFailure {}

/// Precomputed symbols and the background.
pub struct Workspace {
    grid: TorusGrid,
    bg: FlatBackground,
    pairs: Vec<(usize, usize)>,
    symbols: Vec<Vec<C64>>,
    precond: Vec<f64>,
}

impl Workspace {
    pub fn new(grid: &TorusGrid, bg: &FlatBackground) -> Result<Self> {
        let m = grid.m();
        if bg.m() != m {
            return Err(QmaError::Structure("background and grid dimensions differ".into()));
        }
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|r| (r..m).map(move |s| (r, s))).collect();
        let symbols: Vec<Vec<C64>> = pairs
            .iter()
            .map(|(r, s)| grid.multiplier(&DerivPattern::new(&[*r], &[*s])))
            .collect();
        // constant-coefficient operator at φ = 0
        let c0 = coefficients(bg, &hypalg::upper(bg.g().comp())?);
        let precond = par::map_range(grid.len(), |p| {
            let mut sym = 0.0;
            for (k, (r, s)) in pairs.iter().enumerate() {
                let v = symbols[k][p];
                sym += (c0[(*r, *s)] * v).re;
                if r != s {
                    sym += (c0[(*s, *r)] * v.conj()).re;
                }
            }
            if sym.abs() < 1e-12 {
                0.0
            } else {
                1.0 / sym
            }
        });
        Ok(Self {
            grid: grid.clone(),
            bg: bg.clone(),
            pairs,
            symbols,
            precond,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn background(&self) -> &FlatBackground {
        &self.bg
    }

    /// `φ_{rs̄}` for `r ≤ s`, in the order of `pairs`.
    fn hessian_upper(&self, values: &[f64]) -> Vec<Vec<C64>> {
        let spec = self.grid.forward(values);
        self.symbols.iter().map(|sym| self.grid.apply_symbol(&spec, sym)).collect()
    }

    fn hessian_at(&self, h: &[Vec<C64>], p: usize) -> CMat {
        let m = self.grid.m();
        let mut out = CMat::zeros(m, m);
        for (k, (r, s)) in self.pairs.iter().enumerate() {
            out[(*r, *s)] = h[k][p];
            out[(*s, *r)] = h[k][p].conj();
        }
        out
    }

    /// `L(u) = Σ C_{ab} u_{ab̄}` with coefficients from an [`Evaluation`].
    fn apply_linear(&self, coeff: &[CMat], u: &[f64]) -> Vec<f64> {
        let h = self.hessian_upper(u);
        par::map_range(self.grid.len(), |p| {
            let c = &coeff[p];
            let mut acc = 0.0;
            for (k, (r, s)) in self.pairs.iter().enumerate() {
                let v = h[k][p];
                acc += (c[(*r, *s)] * v).re;
                if r != s {
                    acc += (c[(*s, *r)] * v.conj()).re;
                }
            }
            acc
        })
    }

    fn apply_precond(&self, v: &[f64]) -> Vec<f64> {
        let spec = self.grid.forward(v);
        let scaled: Vec<C64> = par::map_range(self.grid.len(), |p| spec[p] * self.precond[p]);
        self.grid.inverse(&scaled).iter().map(|z| z.re).collect()
    }
}

/// `C = ¼(g_φ^{··} + (Aᵀ g_φ^{··} conj A)ᵀ)` so that
/// `L(u) = ¼ g_φ^{ij̄}(u_{ij̄} + J_i^{ā}J_{j̄}^b u_{bā}) = Σ C_{ab} u_{ab̄}`.
fn coefficients(bg: &FlatBackground, gu: &CMat) -> CMat {
    let a = bg.j().comp();
    let tw = a.transpose() * gu * a.map(|v| v.conj());
    (gu + tw.transpose()).scale(0.25)
}

/// Pointwise data of `(φ, b)` at stage `t`.
pub struct Evaluation {
    pub residual: Vec<f64>,
    /// `Pf(Ω_φ)/Pf(Ω)`, computed as `√(det g_φ/det g)`.
    pub weight: Vec<f64>,
    pub det_ratio: Vec<f64>,
    pub min_eig: f64,
    coeff: Vec<CMat>,
    hessian: Vec<Vec<C64>>,
}

impl Evaluation {
    pub fn residual_sup(&self) -> f64 {
        par::max_by(self.residual.len(), |p| self.residual[p].abs())
    }
}

/// Evaluates the residual `½ log(det g_φ/det g) − tF − b` and the
/// linearization. Fails with `ConeExit` if `g_φ` is not positive.
pub fn evaluate(ws: &Workspace, phi: &[f64], tf: &[f64], b: f64) -> Result<Evaluation> {
    let hessian = ws.hessian_upper(phi);
    let d0 = ws.bg.det_g();
    let pts = par::map_range(ws.grid.len(), |p| {
        let g = omega_phi_matrix(&ws.bg, &ws.hessian_at(&hessian, p));
        let lam = hypalg::min_eigenvalue(&g);
        let det = g.determinant().re / d0;
        let c = if lam > 0.0 {
            hypalg::upper(&g).map(|gu| coefficients(&ws.bg, &gu)).ok()
        } else {
            None
        };
        (lam, det, c)
    });
    let min_eig = pts.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    if !(min_eig > 0.0) || pts.iter().any(|x| x.2.is_none()) {
        return Err(QmaError::ConeExit(min_eig));
    }
    let det_ratio: Vec<f64> = pts.iter().map(|x| x.1).collect();
    let residual = par::map_range(det_ratio.len(), |p| 0.5 * det_ratio[p].ln() - tf[p] - b);
    let weight = det_ratio.iter().map(|d| d.sqrt()).collect();
    let coeff = pts.into_iter().map(|x| x.2.expect("checked")).collect();
    Ok(Evaluation {
        residual,
        weight,
        det_ratio,
        min_eig,
        coeff,
        hessian,
    })
}

/// `L(u)` at `φ`: the Fréchet derivative of `½ log det g_φ`.
pub fn linearized_operator(ws: &Workspace, phi: &ScalarField, u: &ScalarField) -> Result<ScalarField> {
    let zero = vec![0.0; ws.grid.len()];
    let ev = evaluate(ws, phi.values(), &zero, 0.0)?;
    ScalarField::new(&ws.grid, ws.apply_linear(&ev.coeff, u.values()))
}

fn record(ws: &Workspace, ev: &Evaluation, t: f64, b: f64, iteration: usize, step: f64, lin: usize) -> IterateRecord {
    let grid = &ws.grid;
    let n = ws.bg.n();
    let vol = grid.volume();
    let pf0 = ws.bg.pf_omega();
    let om = ws.bg.omega().comp().clone();
    let gid = ws.bg.g().comp().clone();
    let per_point = par::map_range(grid.len(), |p| {
        let h = ws.hessian_at(&ev.hessian, p);
        let pf = hypalg::pfaffian(&(&om + dd_j_matrix(&h, ws.bg.j())))
            .map(|v| (v / pf0).re)
            .unwrap_or(f64::NAN);
        let g = omega_phi_matrix(&ws.bg, &h);
        let bridge = hypalg::trace_inequality_residual_with_ratio(&gid, &g, n, ev.det_ratio[p])
            .unwrap_or(f64::NAN);
        (pf, bridge)
    });
    let pf: Vec<f64> = per_point.iter().map(|x| x.0).collect();
    let gap = par::max_by(pf.len(), |p| (pf[p].ln() - 0.5 * ev.det_ratio[p].ln()).abs());
    let pf_det_gap = par::max_by(pf.len(), |p| (pf[p] * pf[p] - ev.det_ratio[p]).abs());
    IterateRecord {
        t,
        iteration,
        residual_sup: ev.residual_sup(),
        min_eig: ev.min_eig,
        b,
        step,
        linear_iterations: lin,
        volume_defect: integrate(grid, &ev.det_ratio) - vol,
        mixed_volume_defect: integrate(grid, &pf) - vol,
        equivalence_gap: gap,
        pf_det_gap,
        trace_bridge_min: per_point.iter().map(|x| x.1).fold(f64::INFINITY, f64::min),
    }
}

fn weighted_mean(w: &[f64], r: &[f64]) -> f64 {
    let num = par::sum_by(w.len(), |p| w[p] * r[p]);
    let den = par::sum_by(w.len(), |p| w[p]);
    num / den
}

/// Newton iteration for `ω_φ^{2n} = e^{2tF+2b}ω^{2n}` from `state`.
pub fn solve_stage(
    ws: &Workspace,
    state: &SolverState,
    f: &ScalarField,
    t: f64,
    cfg: &SolverConfig,
) -> Result<SolverState> {
    let grid = &ws.grid;
    if f.grid() != grid || state.phi.grid() != grid {
        return Err(QmaError::Structure("fields live on a different grid".into()));
    }
    let tf: Vec<f64> = f.values().iter().map(|v| t * v).collect();
    let mean = state.phi.mean();
    let mut phi: Vec<f64> = state.phi.values().iter().map(|v| v - mean).collect();
    let mut b = state.b;
    let mut ev = evaluate(ws, &phi, &tf, b)?;
    if ev.min_eig <= cfg.eps_pos {
        return Err(QmaError::ConeExit(ev.min_eig));
    }
    let mut out = SolverState {
        phi: state.phi.clone(),
        b,
        t,
        residual_history: Vec::new(),
        min_eig_history: Vec::new(),
        iterates: Vec::new(),
        converged: false,
    };
    let mut step = 0.0;
    let mut lin = 0;
    for it in 0..=cfg.max_newton {
        let res = ev.residual_sup();
        out.residual_history.push(res);
        out.min_eig_history.push(ev.min_eig);
        out.iterates.push(record(ws, &ev, t, b, it, step, lin));
        if res <= cfg.newton_tol {
            out.phi = ScalarField::new(grid, phi)?;
            out.b = b;
            out.converged = true;
            return Ok(out);
        }
        if it == cfg.max_newton {
            break;
        }
        // L δφ − δb = −r, with δb fixed by ∫ w L(·) = 0
        let db = weighted_mean(&ev.weight, &ev.residual);
        let rhs: Vec<f64> = ev.residual.iter().map(|r| db - r).collect();
        let mut dphi = vec![0.0; grid.len()];
        let outcome = gmres(
            |v| ws.apply_linear(&ev.coeff, v),
            |v| ws.apply_precond(v),
            &rhs,
            &mut dphi,
            &cfg.gmres(),
        );
        lin = outcome.iterations;
        let mut alpha = cfg.damping_schedule.get(it).copied().unwrap_or(1.0);
        let mut last_eig = ev.min_eig;
        loop {
            if alpha < cfg.min_step {
                return Err(QmaError::DampingUnderflow {
                    step: alpha,
                    min_eig: last_eig,
                });
            }
            let trial: Vec<f64> = phi.iter().zip(&dphi).map(|(p, d)| p + alpha * d).collect();
            let tb = b + alpha * db;
            match evaluate(ws, &trial, &tf, tb) {
                Ok(e) if e.min_eig > cfg.eps_pos && e.residual_sup() <= (1.0 - 1e-4 * alpha) * res => {
                    phi = trial;
                    b = tb;
                    ev = e;
                    break;
                }
                Ok(e) => last_eig = e.min_eig,
                Err(QmaError::ConeExit(l)) => last_eig = l,
                Err(e) => return Err(e),
            }
            alpha *= cfg.backtrack;
        }
        step = alpha;
    }
    Err(QmaError::NonConvergence {
        t,
        residual: ev.residual_sup(),
        iterations: cfg.max_newton,
    })
}

/// Runs the continuity path `t_1, …, t_K = 1` for `F`.
pub fn solve_qma(
    f: &ScalarField,
    bg: &FlatBackground,
    cfg: &SolverConfig,
) -> std::result::Result<Solution, Box<SolveFailure>> {
    let grid = f.grid().clone();
    let fail = |error: QmaError, last: &SolverState, report: &SolveReport| {
        Box::new(SolveFailure {
            error,
            last_good: last.sup_normalized(),
            report: report.clone(),
        })
    };
    let mut report = SolveReport::default();
    let init = SolverState::initial(&grid);
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &init, &report));
    }
    if grid.n() != cfg.n || grid.size() != cfg.size {
        let e = QmaError::Config("F does not live on the configured grid".into());
        return Err(fail(e, &init, &report));
    }
    let ws = match Workspace::new(&grid, bg) {
        Ok(ws) => ws,
        Err(e) => return Err(fail(e, &init, &report)),
    };
    let mut state = init;
    let mut path = vec![state.clone()];
    // pending targets, next one last
    let mut targets: Vec<f64> = cfg.path().into_iter().rev().collect();
    let mut halvings = 0;
    while let Some(&t) = targets.last() {
        match solve_stage(&ws, &state, f, t, cfg) {
            Ok(s) => {
                targets.pop();
                report.total_newton_iterations += s.iterates.len() - 1;
                report.b_history.push(s.b);
                report.min_eig_trace.extend(&s.min_eig_history);
                report.stages.push(StageReport {
                    t,
                    iterations: s.iterates.len() - 1,
                    linear_iterations: s.iterates.iter().map(|r| r.linear_iterations).sum(),
                    residual: s.residual(),
                    min_eig: *s.min_eig_history.last().unwrap_or(&f64::NAN),
                    b: s.b,
                    halvings,
                    iterates: s.iterates.clone(),
                });
                state = s;
                path.push(state.sup_normalized());
                if cfg.path().iter().any(|tk| (tk - t).abs() < 1e-15) {
                    halvings = 0;
                }
            }
            Err(e) => {
                report.failed_targets.push(t);
                if halvings >= cfg.max_halvings {
                    return Err(fail(e, &state, &report));
                }
                halvings += 1;
                targets.push(0.5 * (state.t + t));
            }
        }
    }
    report.converged = true;
    report.b = state.b;
    let fin = state.sup_normalized();
    Ok(Solution {
        phi: fin.phi.clone(),
        b: fin.b,
        report,
        path,
    })
}

/// `φ* = 0.05(cos 2πx¹ + sin 2πx³ cos 2πx⁴)`.
pub fn manufactured_phi(grid: &TorusGrid) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        0.05 * ((2.0 * PI * x[0]).cos() + (2.0 * PI * x[2]).sin() * (2.0 * PI * x[3]).cos())
    })
}

/// `F = ½ log(det g_{φ*}/det g)`, so that `(φ*, 0)` solves the `t = 1` problem.
pub fn manufactured_f(bg: &FlatBackground, grid: &TorusGrid) -> Result<ScalarField> {
    let phi = manufactured_phi(grid);
    let zero = ScalarField::zeros(grid);
    crate::fields::residual_11(bg, &phi, &zero, 0.0)
}

/// Deterministic stream `stream` of the seeded generator.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Random band-limited `F` with `sup |F| = amp`.
pub fn random_f(grid: &TorusGrid, amp: f64, seed: u64) -> ScalarField {
    crate::fields::random_band_limited(grid, 2, 6, amp, &mut rng(seed, 1))
}

/// `|e^{2b} − ∫ω^{2n} / ∫e^{2tF}ω^{2n}|`.
pub fn b_closed_form_defect(f: &ScalarField, t: f64, b: f64) -> f64 {
    let e: Vec<f64> = f.values().iter().map(|v| (2.0 * t * v).exp()).collect();
    ((2.0 * b).exp() - f.grid().volume() / integrate(f.grid(), &e)).abs()
}

/// `|e^{b} − Vol / ∫e^{tF}|`, from conservation of `∫Pf(Ω_φ)/Pf(Ω)`.
pub fn b_pfaffian_closed_form_defect(f: &ScalarField, t: f64, b: f64) -> f64 {
    let e: Vec<f64> = f.values().iter().map(|v| (t * v).exp()).collect();
    (b.exp() - f.grid().volume() / integrate(f.grid(), &e)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::residual_11;

    fn setup(size: usize) -> (TorusGrid, FlatBackground, SolverConfig) {
        let cfg = SolverConfig {
            size,
            ..SolverConfig::default()
        };
        (cfg.grid().unwrap(), FlatBackground::standard(1), cfg)
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            newton_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            size: 7,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(SolverConfig::default().path(), vec![0.2, 0.4, 0.6, 0.8, 1.0]);
    }

    #[test]
    fn linearization_on_flat_metric() {
        let (g, bg, _) = setup(8);
        let ws = Workspace::new(&g, &bg).unwrap();
        let u = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).cos() + (2.0 * PI * (x[2] - x[3])).sin());
        let lu = linearized_operator(&ws, &ScalarField::zeros(&g), &u).unwrap();
        // L = ½(u_{11̄} + u_{22̄}) = ⅛Δu
        for p in [0, 5, 333, 4095] {
            let x = g.coords(p);
            let lap = -4.0 * PI * PI * (2.0 * PI * x[0]).cos() - 8.0 * PI * PI * (2.0 * PI * (x[2] - x[3])).sin();
            assert!((lu.values()[p] - lap / 8.0).abs() < 1e-11);
        }
        let c = linearized_operator(&ws, &ScalarField::zeros(&g), &ScalarField::constant(&g, 4.0)).unwrap();
        assert!(c.sup_norm() < 1e-13);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let (g, bg, _) = setup(8);
        let ws = Workspace::new(&g, &bg).unwrap();
        let phi = manufactured_phi(&g);
        let u = ScalarField::from_fn(&g, |x| 0.3 * (2.0 * PI * (x[1] + x[2])).cos());
        let lu = linearized_operator(&ws, &phi, &u).unwrap();
        let zero = ScalarField::zeros(&g);
        let r0 = residual_11(&bg, &phi, &zero, 0.0).unwrap();
        let mut prev = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let r1 = residual_11(&bg, &phi.add(&u.scale(h)), &zero, 0.0).unwrap();
            let err = r1.sub(&r0).scale(1.0 / h).sub(&lu).sup_norm();
            assert!(err < 0.2 * prev || err < 1e-9);
            prev = err;
        }
        assert!(prev < 1e-3 * lu.sup_norm(), "{prev}");
    }

    #[test]
    fn zero_f_is_solved_immediately() {
        let (g, bg, cfg) = setup(8);
        let sol = solve_qma(&ScalarField::zeros(&g), &bg, &cfg).unwrap();
        assert_eq!(sol.phi.sup_norm(), 0.0);
        assert_eq!(sol.b, 0.0);
        assert!(sol.report.stages.iter().all(|s| s.iterations == 0));
    }

    #[test]
    fn constant_f_goes_into_b() {
        let (g, bg, cfg) = setup(8);
        let sol = solve_qma(&ScalarField::constant(&g, 0.7), &bg, &cfg).unwrap();
        assert!(sol.phi.sup_norm() < 1e-14);
        assert!((sol.b + 0.7).abs() < 1e-12);
    }

    #[test]
    fn manufactured_solution_recovered() {
        let (g, bg, cfg) = setup(8);
        let f = manufactured_f(&bg, &g).unwrap();
        let sol = solve_qma(&f, &bg, &cfg).unwrap();
        let star = manufactured_phi(&g);
        let star = star.add_const(-star.sup());
        assert!(sol.phi.sub(&star).sup_norm() <= 1e-8);
        assert!(sol.b.abs() <= 1e-9);
        assert!(b_pfaffian_closed_form_defect(&f, 1.0, sol.b) <= 1e-9);
        for st in &sol.report.stages {
            for w in st.iterates.windows(2) {
                assert!(w[1].residual_sup <= w[0].residual_sup);
            }
        }
    }

    #[test]
    fn damping_underflow_is_reported() {
        let (g, bg, _) = setup(8);
        let cfg = SolverConfig {
            size: 8,
            eps_pos: 0.999,
            ..SolverConfig::default()
        };
        let f = random_f(&g, 0.3, 3);
        let err = solve_qma(&f, &bg, &cfg).unwrap_err();
        assert!(matches!(err.error, QmaError::DampingUnderflow { .. } | QmaError::ConeExit(_)));
        assert_eq!(err.last_good.t, 0.0);
    }
}
