//! Named verification suites. Each suite samples chart points (or random
//! potentials on the torus), evaluates relative residuals of one family of
//! identities, and summarizes them against the tolerance table.

use crate::curvature::{
    fund2_report, fund_contractions, frame_trace_check, j_adapted_frame, j_invariance_check,
    relative, verify_prop_pre, PointContext,
};
use crate::fields::{
    det_ratio, dd_j, metric_via_20, omega_phi, pf_ratio, q_real_defect, random_band_limited,
    residual_11, residual_20, FlatBackground, ScalarField, TorusGrid,
};
use crate::hypalg::{self, HermitianMetric, JTensor};
use crate::jets::{EguchiHanson, FlatChart, KahlerPotential};
use crate::monitor::{delta_tr_check, eqns_term, Mutation, PointJetBundle};
use crate::solver::rng;
use crate::thresholds::Thresholds;
use crate::{par, QmaError, Result, C64};
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Quaternionic,
    Bijection,
    Pre,
    Fund,
    Fund2,
    Frame,
    Delta,
    Eqns,
    Fform,
    Equiv,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Quaternionic,
        Suite::Bijection,
        Suite::Pre,
        Suite::Fund,
        Suite::Fund2,
        Suite::Frame,
        Suite::Delta,
        Suite::Eqns,
        Suite::Fform,
        Suite::Equiv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Quaternionic => "quaternionic",
            Suite::Bijection => "bijection",
            Suite::Pre => "pre",
            Suite::Fund => "fund",
            Suite::Fund2 => "fund2",
            Suite::Frame => "frame",
            Suite::Delta => "delta",
            Suite::Eqns => "eqns",
            Suite::Fform => "fform",
            Suite::Equiv => "equiv",
        }
    }

    /// Suites that run on the torus grid rather than at chart points.
    pub fn on_torus(self) -> bool {
        matches!(self, Suite::Fform | Suite::Equiv)
    }

    fn allows(self, m: Mutation) -> bool {
        match m {
            Mutation::None => true,
            Mutation::SignFlip => self == Suite::Delta,
            Mutation::Dehyper => matches!(self, Suite::Fund | Suite::Fund2 | Suite::Delta | Suite::Eqns),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = QmaError;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| QmaError::Config(format!("unknown suite '{s}'")))
    }
}

impl FromStr for Mutation {
    type Err = QmaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Mutation::None),
            "sign-flip" => Ok(Mutation::SignFlip),
            "dehyper" => Ok(Mutation::Dehyper),
            _ => Err(QmaError::Config(format!("unknown mutation '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChartChoice {
    Flat { n: usize },
    EguchiHanson { a: f64 },
}

impl ChartChoice {
    pub fn build(&self) -> Result<Box<dyn KahlerPotential>> {
        match *self {
            ChartChoice::Flat { n } => {
                if n == 0 || 4 * n > crate::jets::MAX_VARS {
                    return Err(QmaError::Config(format!("flat chart needs 1 ≤ n ≤ 2, got {n}")));
                }
                Ok(Box::new(FlatChart::new(n)))
            }
            ChartChoice::EguchiHanson { a } => Ok(Box::new(EguchiHanson::new(a)?)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChartChoice::Flat { .. } => "flat",
            ChartChoice::EguchiHanson { .. } => "eh",
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, ChartChoice::Flat { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub chart: ChartChoice,
    /// Sample points (or random potentials for torus suites).
    pub points: usize,
    /// Random metrics or bundles per point.
    pub samples: usize,
    pub seed: u64,
    pub mutate: Mutation,
    /// Torus grid for `fform` and `equiv`.
    pub grid_n: usize,
    pub grid_size: usize,
    pub thresholds: Thresholds,
}

impl SuiteConfig {
    pub fn new(suite: Suite, chart: ChartChoice) -> Self {
        Self {
            suite,
            chart,
            points: 20,
            samples: 20,
            seed: 0,
            mutate: Mutation::None,
            grid_n: 1,
            grid_size: 16,
            thresholds: Thresholds::V1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || self.samples == 0 {
            return Err(QmaError::Config("points and samples must be positive".into()));
        }
        if !self.suite.allows(self.mutate) {
            return Err(QmaError::Config(format!(
                "mutation {:?} does not apply to suite {}",
                self.mutate, self.suite
            )));
        }
        if !self.suite.on_torus() {
            self.chart.build()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointRecord {
    /// Real coordinates of the base point, or empty for torus samples.
    pub location: Vec<f64>,
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlSummary {
    pub min: f64,
    pub floor: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub max_rel_residual: f64,
    pub pass: bool,
    /// Largest value of each residual and its limit.
    pub worst: BTreeMap<String, f64>,
    pub limits: BTreeMap<String, f64>,
    /// Negative controls that must stay above their floor.
    pub controls: BTreeMap<String, ControlSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub chart: String,
    pub seed: u64,
    pub mutation: Mutation,
    pub points: Vec<PointRecord>,
    pub summary: Summary,
}

const CONTROL: &str = "control_";

/// Uniform base points with `0.5 ≤ |z| ≤ 2`, seeded per point.
pub fn sample_point(m: usize, seed: u64, k: usize) -> Vec<C64> {
    let mut r = rng(seed, 0x1000 + k as u64);
    loop {
        let v: Vec<f64> = (0..2 * m).map(|_| r.gen_range(-1.0..1.0)).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 0.1 && nrm <= 1.0 {
            let rad = r.gen_range(0.5..=2.0);
            return (0..m)
                .map(|i| C64::new(v[2 * i], v[2 * i + 1]) * (rad / nrm))
                .collect();
        }
    }
}

fn location(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn upsert_max(map: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    let e = map.entry(key.to_string()).or_insert(f64::NEG_INFINITY);
    if v > *e || v.is_nan() {
        *e = v;
    }
}

fn upsert_min(map: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    let e = map.entry(key.to_string()).or_insert(f64::INFINITY);
    if v < *e || v.is_nan() {
        *e = v;
    }
}

struct PointOutcome {
    residuals: BTreeMap<String, f64>,
}

impl PointOutcome {
    fn new() -> Self {
        Self {
            residuals: BTreeMap::new(),
        }
    }

    fn max(&mut self, key: &str, v: f64) {
        upsert_max(&mut self.residuals, key, v);
    }

    fn control(&mut self, key: &str, v: f64) {
        upsert_min(&mut self.residuals, &format!("{CONTROL}{key}"), v);
    }
}

fn chart_point(cfg: &SuiteConfig, k: usize) -> Result<PointRecord> {
    let chart = cfg.chart.build()?;
    let z = sample_point(chart.dim(), cfg.seed, k);
    let ctx = PointContext::new(chart.as_ref(), &z)?;
    let mut r = rng(cfg.seed, 0x10_0000 + k as u64);
    let mut out = PointOutcome::new();
    let curved = !cfg.chart.is_flat();
    let dehyper = cfg.mutate == Mutation::Dehyper;
    let ghat = ctx.metric();
    let j = ctx.j();
    match cfg.suite {
        Suite::Quaternionic => {
            out.max("quaternionic", j.check_quaternionic()?.max());
            let nj = JTensor::new(ctx.normal_j.value())?;
            out.max("quaternionic_normal", nj.check_quaternionic()?.max());
        }
        Suite::Bijection => {
            for _ in 0..cfg.samples {
                let g = hypalg::random_hyperhermitian(&ghat, &j, &mut r)?;
                let gm = HermitianMetric::new(g.clone())?;
                let om = hypalg::omega_from_gj(&gm, &j);
                let back = hypalg::g_from_omegaj(&om, &j)?;
                let scale = hypalg::max_abs(&g);
                out.max("round_trip", relative(hypalg::max_abs(&(back.comp() - &g)), scale));
                out.max("anti_invariance", relative(hypalg::omega_j_anti_invariance(&gm, &j), scale));
            }
        }
        Suite::Pre => {
            let p = verify_prop_pre(&ctx);
            out.max("pre1", p.pre1);
            out.max("pre2", p.pre2);
            out.max("pre3", p.pre3);
            out.max("pre4", p.pre4);
        }
        Suite::Fund | Suite::Fund2 => {
            for s in 0..cfg.samples {
                let g = if dehyper {
                    hypalg::random_non_hyperhermitian(&ghat, &j, &mut r)?
                } else if s % 2 == 0 {
                    hypalg::random_hyperhermitian(&ghat, &j, &mut r)?
                } else {
                    // indefinite hyperhermitian tensor
                    hypalg::j_average(&hypalg::random_hermitian(ghat.nrows(), &mut r), &j)?
                };
                let up = hypalg::upper(&g)?;
                if cfg.suite == Suite::Fund {
                    let f = fund_contractions(&ctx, &up);
                    out.max("fund1", f.fund1);
                    out.max("hk_trace", f.hk_trace);
                } else {
                    let f = fund2_report(&ctx, &up);
                    out.max("eq1", f.eq1);
                    out.max("eq2", f.eq2);
                    out.max("eq3", f.eq3);
                    out.max("eq4", f.eq4);
                    out.max("conjugation", f.conjugation);
                }
            }
            if curved && cfg.suite == Suite::Fund {
                let bad = hypalg::random_non_hyperhermitian(&ghat, &j, &mut r)?;
                let f = fund_contractions(&ctx, &hypalg::upper(&bad)?);
                out.control("fund1", f.fund1);
            }
        }
        Suite::Frame => {
            let fr = j_adapted_frame(&ghat, &j)?;
            out.max("orthonormality", fr.orthonormality_defect(&ghat));
            out.max("trace", frame_trace_check(&ctx.curvature, &fr));
            out.max("j_invariance", j_invariance_check(&ctx.curvature, &j, 50, &mut r));
        }
        Suite::Delta | Suite::Eqns => {
            for _ in 0..cfg.samples {
                let mut b = PointJetBundle::random(&ctx, &mut r)?;
                if dehyper {
                    b = b.dehyperhermitianized(&mut r)?;
                }
                if cfg.suite == Suite::Delta {
                    let d = delta_tr_check(&b, cfg.mutate)?;
                    out.max("delta", d.residual);
                    out.max("expansion_gap", d.expansion_gap);
                } else {
                    let e = eqns_term(&b)?;
                    out.max("term1", e.term1_rel);
                    out.max("term2", e.term2_rel);
                    if curved && !dehyper {
                        let bad = eqns_term(&b.dehyperhermitianized(&mut r)?)?;
                        out.control("term1", bad.term1_rel);
                    }
                }
            }
            if curved && cfg.suite == Suite::Delta && cfg.mutate == Mutation::None {
                // the flipped term is a signed scalar that can be small by
                // accident, so the control asks for detection somewhere at
                // each point
                let mut caught: f64 = 0.0;
                for _ in 0..cfg.samples {
                    let b = PointJetBundle::random(&ctx, &mut r)?;
                    caught = caught.max(delta_tr_check(&b, Mutation::SignFlip)?.residual);
                }
                out.control("delta_sign_flip", caught);
            }
        }
        Suite::Fform | Suite::Equiv => unreachable!("torus suites are handled separately"),
    }
    Ok(PointRecord {
        location: location(&z),
        residuals: out.residuals,
    })
}

/// Random admissible band-limited potential: shrunk until
/// `min eig g_φ ≥ ½`.
pub fn random_admissible_phi<R: Rng + ?Sized>(
    bg: &FlatBackground,
    grid: &TorusGrid,
    rng: &mut R,
) -> Result<ScalarField> {
    let base = random_band_limited(grid, 2, 6, 1.0, rng);
    let mut amp = 0.05;
    for _ in 0..30 {
        let phi = base.scale(amp);
        if omega_phi(bg, &phi)?.min_eigenvalue() >= 0.5 {
            return Ok(phi);
        }
        amp *= 0.5;
    }
    Err(QmaError::ConeExit(0.0))
}

fn torus_point(cfg: &SuiteConfig, bg: &FlatBackground, grid: &TorusGrid, k: usize) -> Result<PointRecord> {
    let mut r = rng(cfg.seed, 0x20_0000 + k as u64);
    let phi = random_admissible_phi(bg, grid, &mut r)?;
    let mut out = PointOutcome::new();
    match cfg.suite {
        Suite::Fform => {
            let a = omega_phi(bg, &phi)?;
            let b = metric_via_20(bg, &phi)?;
            let scale = (0..grid.len()).fold(0.0_f64, |s, p| s.max(hypalg::max_abs(&a.at(p))));
            out.max("fform", relative(a.max_diff(&b), scale));
            let dd = dd_j(&phi, bg.j())?;
            let dscale = (0..grid.len()).fold(0.0_f64, |s, p| s.max(hypalg::max_abs(&dd.at(p))));
            out.max("q_real", relative(q_real_defect(&dd, bg.j()), dscale));
        }
        Suite::Equiv => {
            let f = random_band_limited(grid, 2, 6, 0.3, &mut r);
            let b = r.gen_range(-0.5..0.5);
            let r20 = residual_20(bg, &phi, &f, b)?;
            let r11 = residual_11(bg, &phi, &f, b)?;
            out.max("residual_gap", r20.sub(&r11).sup_norm());
            let pf = pf_ratio(bg, &phi)?;
            let det = det_ratio(bg, &phi)?;
            let gap = par::max_by(grid.len(), |p| relative((pf[p] * pf[p] - det[p]).norm(), det[p].abs()));
            out.max("pf_det", gap);
        }
        _ => unreachable!("chart suites are handled separately"),
    }
    Ok(PointRecord {
        location: Vec::new(),
        residuals: out.residuals,
    })
}

/// Limit applied to each residual key of a suite.
pub fn limit(cfg: &SuiteConfig, key: &str) -> f64 {
    let t = &cfg.thresholds;
    let base = match cfg.suite {
        Suite::Quaternionic => t.quaternionic,
        Suite::Bijection => t.bijection,
        Suite::Pre => t.pre,
        Suite::Fund => t.fund,
        Suite::Fund2 if key == "conjugation" => t.conjugation,
        Suite::Fund2 => t.fund2,
        Suite::Frame => t.frame,
        Suite::Delta => t.delta,
        Suite::Eqns => t.eqns,
        Suite::Fform => t.fform,
        Suite::Equiv => t.equiv,
    };
    if cfg.chart.is_flat() && !cfg.suite.on_torus() {
        base.min(t.flat)
    } else {
        base
    }
}

fn floor(cfg: &SuiteConfig, key: &str) -> f64 {
    if key == "delta_sign_flip" {
        cfg.thresholds.mutation_floor
    } else {
        cfg.thresholds.fund_negative_floor
    }
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let records: Vec<Result<PointRecord>> = if cfg.suite.on_torus() {
        let bg = FlatBackground::standard(cfg.grid_n);
        let grid = TorusGrid::new(cfg.grid_n, cfg.grid_size).map_err(|e| QmaError::Config(e.to_string()))?;
        // grid work is already parallel inside each sample
        (0..cfg.points).map(|k| torus_point(cfg, &bg, &grid, k)).collect()
    } else {
        par::map_range(cfg.points, |k| chart_point(cfg, k))
    };
    let points: Vec<PointRecord> = records.into_iter().collect::<Result<_>>()?;
    let mut worst = BTreeMap::new();
    let mut lows = BTreeMap::new();
    for p in &points {
        for (k, v) in &p.residuals {
            match k.strip_prefix(CONTROL) {
                Some(c) => upsert_min(&mut lows, c, *v),
                None => upsert_max(&mut worst, k, *v),
            }
        }
    }
    let limits: BTreeMap<String, f64> = worst.keys().map(|k| (k.clone(), limit(cfg, k))).collect();
    let controls: BTreeMap<String, ControlSummary> = lows
        .into_iter()
        .map(|(k, v)| {
            let f = floor(cfg, &k);
            (k, ControlSummary { min: v, floor: f })
        })
        .collect();
    let max_rel_residual = worst.values().fold(0.0_f64, |a, v| if v.is_nan() { f64::NAN } else { a.max(*v) });
    let pass = worst.iter().all(|(k, v)| *v <= limits[k]) && controls.values().all(|c| c.min >= c.floor);
    Ok(SuiteReport {
        suite: cfg.suite.name().into(),
        chart: if cfg.suite.on_torus() {
            "torus".into()
        } else {
            cfg.chart.name().into()
        },
        seed: cfg.seed,
        mutation: cfg.mutate,
        points,
        summary: Summary {
            max_rel_residual,
            pass,
            worst,
            limits,
            controls,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eh() -> ChartChoice {
        ChartChoice::EguchiHanson { a: 1.0 }
    }

    #[test]
    fn sample_points_lie_in_the_annulus() {
        for k in 0..50 {
            let z = sample_point(2, 7, k);
            let r = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            assert!((0.5 - 1e-12..=2.0 + 1e-12).contains(&r));
        }
        assert_eq!(sample_point(2, 7, 3), sample_point(2, 7, 3));
        assert_ne!(sample_point(2, 7, 3), sample_point(2, 8, 3));
    }

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
        assert_eq!("sign-flip".parse::<Mutation>().unwrap(), Mutation::SignFlip);
    }

    #[test]
    fn mutation_must_fit_the_suite() {
        let mut c = SuiteConfig::new(Suite::Pre, eh());
        c.mutate = Mutation::SignFlip;
        assert!(matches!(run_suite(&c), Err(QmaError::Config(_))));
    }

    #[test]
    fn flat_fund_is_exactly_zero() {
        let mut c = SuiteConfig::new(Suite::Fund, ChartChoice::Flat { n: 1 });
        c.points = 3;
        c.samples = 4;
        let r = run_suite(&c).unwrap();
        assert!(r.summary.pass);
        assert_eq!(r.summary.max_rel_residual, 0.0);
    }

    #[test]
    fn delta_sign_flip_fails() {
        let mut c = SuiteConfig::new(Suite::Delta, eh());
        c.points = 3;
        c.samples = 3;
        assert!(run_suite(&c).unwrap().summary.pass);
        c.mutate = Mutation::SignFlip;
        let r = run_suite(&c).unwrap();
        assert!(!r.summary.pass);
        assert!(r.summary.max_rel_residual > 1e-2);
    }

    #[test]
    fn reports_are_deterministic() {
        let mut c = SuiteConfig::new(Suite::Eqns, eh());
        c.points = 2;
        c.samples = 2;
        c.seed = 11;
        let a = serde_json::to_string(&run_suite(&c).unwrap()).unwrap();
        let b = serde_json::to_string(&run_suite(&c).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
