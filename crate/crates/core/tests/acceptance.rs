//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use qma_core::curvature::PointContext;
use qma_core::fields::{FlatBackground, ScalarField};
use qma_core::hypalg::{self, CMat};
use qma_core::jets::EguchiHanson;
use qma_core::monitor::{c_emp_variation, delta_tr_check, eqns_term, estimate_trace, Mutation, PointJetBundle};
use qma_core::solver::{
    b_closed_form_defect, b_pfaffian_closed_form_defect, manufactured_f, manufactured_phi, random_f, rng,
    solve_qma, Solution, SolverConfig,
};
use qma_core::suites::{run_suite, sample_point, ChartChoice, Suite, SuiteConfig, SuiteReport};
use qma_core::thresholds::Thresholds;
use qma_core::C64;
use rand::Rng;
use std::time::Instant;

const T: Thresholds = Thresholds::V1;
const EH: ChartChoice = ChartChoice::EguchiHanson { a: 1.0 };
const FLAT: ChartChoice = ChartChoice::Flat { n: 1 };

type Check = Result<(bool, String), String>;

fn suite(s: Suite, chart: ChartChoice, points: usize, samples: usize, seed: u64) -> Result<SuiteReport, String> {
    let mut c = SuiteConfig::new(s, chart);
    c.points = points;
    c.samples = samples;
    c.seed = seed;
    run_suite(&c).map_err(|e| e.to_string())
}

fn worst(r: &SuiteReport, key: &str) -> f64 {
    r.summary.worst.get(key).copied().unwrap_or(f64::NAN)
}

fn cfg(size: usize) -> SolverConfig {
    SolverConfig {
        size,
        ..SolverConfig::default()
    }
}

fn solve(f: &ScalarField, c: &SolverConfig) -> Result<Solution, String> {
    solve_qma(f, &FlatBackground::standard(1), c).map_err(|e| e.to_string())
}

/// Solves shared by the solver, bridge, monitoring and conservation checks.
struct Runs {
    fine: Solution,
    fine_f: ScalarField,
    fine_secs: f64,
    coarse: Solution,
    coarse_f: ScalarField,
    random: Solution,
}

fn runs() -> Result<Runs, String> {
    let bg = FlatBackground::standard(1);
    let (cc, cf) = (cfg(8), cfg(16));
    let gc = cc.grid().map_err(|e| e.to_string())?;
    let gf = cf.grid().map_err(|e| e.to_string())?;
    let coarse_f = manufactured_f(&bg, &gc).map_err(|e| e.to_string())?;
    let fine_f = manufactured_f(&bg, &gf).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let fine = solve(&fine_f, &cf)?;
    let fine_secs = start.elapsed().as_secs_f64();
    let coarse = solve(&coarse_f, &cc)?;
    let random = solve(&random_f(&gc, 0.3, 12), &cc)?;
    Ok(Runs {
        fine,
        fine_f,
        fine_secs,
        coarse,
        coarse_f,
        random,
    })
}

fn c1() -> Check {
    let start = Instant::now();
    let eh = suite(Suite::Pre, EH, 20, 1, 1)?;
    let flat = suite(Suite::Pre, FLAT, 20, 1, 1)?;
    let secs = start.elapsed().as_secs_f64();
    let e = eh.summary.max_rel_residual;
    let f = flat.summary.max_rel_residual;
    Ok((
        e <= 1e-6 && f <= 1e-12 && secs < 10.0,
        format!("eh max {e:.2e} (≤1e-6), flat max {f:.2e} (≤1e-12), {secs:.2} s (<10)"),
    ))
}

fn c2() -> Check {
    let r = suite(Suite::Fund, EH, 20, 20, 4)?;
    let m = worst(&r, "fund1").max(worst(&r, "hk_trace"));
    let ctl = r.summary.controls.get("fund1").map(|c| c.min).unwrap_or(f64::NAN);
    Ok((
        m <= T.fund && ctl >= T.fund_negative_floor,
        format!("max {m:.2e} (≤1e-7) over 400 metrics incl. indefinite; control min {ctl:.2e} (≥1e-3)"),
    ))
}

fn c3() -> Check {
    let r = suite(Suite::Fund2, EH, 20, 20, 4)?;
    let m = ["eq1", "eq2", "eq3", "eq4"].iter().fold(0.0_f64, |a, k| a.max(worst(&r, k)));
    let conj = worst(&r, "conjugation");
    Ok((
        m <= T.fund2 && conj <= T.conjugation,
        format!("contractions max {m:.2e} (≤1e-7), conjugation {conj:.2e} (≤1e-12)"),
    ))
}

fn c4() -> Check {
    let r = suite(Suite::Frame, EH, 20, 1, 5)?;
    let tr = worst(&r, "trace");
    let ji = worst(&r, "j_invariance");
    Ok((
        tr <= T.frame && ji <= T.frame,
        format!("frame trace {tr:.2e}, R(JX,JY)−R(X,Y) {ji:.2e} on 50 pairs/point (≤1e-8)"),
    ))
}

struct BundleStats {
    count: usize,
    delta: f64,
    flip_caught: usize,
    flip_point_min: f64,
    term1: f64,
    term2: f64,
}

fn bundle_sweep() -> Result<BundleStats, String> {
    let eh = EguchiHanson::new(1.0).map_err(|e| e.to_string())?;
    let mut s = BundleStats {
        count: 0,
        delta: 0.0,
        flip_caught: 0,
        flip_point_min: f64::INFINITY,
        term1: 0.0,
        term2: 0.0,
    };
    for k in 0..20 {
        let z = sample_point(2, 8, k);
        let ctx = PointContext::new(&eh, &z).map_err(|e| e.to_string())?;
        let mut r = rng(8, k as u64);
        let mut point_max: f64 = 0.0;
        for _ in 0..50 {
            let b = PointJetBundle::random(&ctx, &mut r).map_err(|e| e.to_string())?;
            let d = delta_tr_check(&b, Mutation::None).map_err(|e| e.to_string())?;
            let f = delta_tr_check(&b, Mutation::SignFlip).map_err(|e| e.to_string())?;
            let e = eqns_term(&b).map_err(|e| e.to_string())?;
            s.count += 1;
            s.delta = s.delta.max(d.residual);
            point_max = point_max.max(f.residual);
            if f.residual >= T.mutation_floor {
                s.flip_caught += 1;
            }
            s.term1 = s.term1.max(e.term1_rel);
            s.term2 = s.term2.max(e.term2_rel);
        }
        s.flip_point_min = s.flip_point_min.min(point_max);
    }
    Ok(s)
}

fn c5(s: &BundleStats) -> Check {
    Ok((
        s.count >= 500 && s.delta <= T.delta && s.flip_point_min >= T.mutation_floor,
        format!(
            "{} bundles, max {:.2e} (≤1e-6); sign-flip caught at every point (weakest point {:.2e}, ≥1e-2), on {} of {} bundles",
            s.count, s.delta, s.flip_point_min, s.flip_caught, s.count
        ),
    ))
}

fn c6(s: &BundleStats) -> Check {
    Ok((
        s.term1 <= T.eqns && s.term2 <= T.eqns,
        format!("summand maxima {:.2e}, {:.2e} (≤1e-7) on {} bundles", s.term1, s.term2, s.count),
    ))
}

fn c7() -> Check {
    let mut c = SuiteConfig::new(Suite::Equiv, FLAT);
    c.points = 3;
    c.seed = 7;
    let r = run_suite(&c).map_err(|e| e.to_string())?;
    let g = worst(&r, "residual_gap");
    let p = worst(&r, "pf_det");
    Ok((
        g <= T.equiv && p <= T.equiv,
        format!("N=16: |r20−r11| {g:.2e}, (Pf ratio)²/det ratio {p:.2e} (≤1e-10)"),
    ))
}

fn c8() -> Check {
    let mut c = SuiteConfig::new(Suite::Fform, FLAT);
    c.points = 3;
    c.seed = 7;
    let r = run_suite(&c).map_err(|e| e.to_string())?;
    let f = worst(&r, "fform");
    Ok((f <= T.fform, format!("N=16: (2,0) route vs metric map {f:.2e} (≤1e-11)")))
}

fn c9(runs: &Runs) -> Check {
    let gf = runs.fine.phi.grid().clone();
    let star = manufactured_phi(&gf);
    let star = star.add_const(-star.sup());
    let err = runs.fine.phi.sub(&star).sup_norm();
    let b = runs.fine.b.abs();
    let c8 = cfg(8);
    let gc = c8.grid().map_err(|e| e.to_string())?;
    let mut const_err: f64 = 0.0;
    for val in [-0.4, 0.7] {
        let s = solve(&ScalarField::constant(&gc, val), &c8)?;
        const_err = const_err.max(s.phi.sup_norm()).max((s.b + val).abs());
    }
    let mut self_conv: f64 = 0.0;
    for p in 0..gc.len() {
        let idx: Vec<usize> = gc.multi_index(p).iter().map(|i| 2 * i).collect();
        let q = gf.flat_index(&idx);
        self_conv = self_conv.max((runs.coarse.phi.values()[p] - runs.fine.phi.values()[q]).abs());
    }
    let tol = c8.newton_tol;
    Ok((
        err <= 1e-8 && b <= 1e-9 && runs.fine_secs < 60.0 && const_err <= tol && self_conv <= 1e-7,
        format!(
            "err {err:.2e} (≤1e-8), |b| {b:.2e} (≤1e-9), {:.1} s (<60); constant F {const_err:.2e}; 8→16 {self_conv:.2e} (≤1e-7)",
            runs.fine_secs
        ),
    ))
}

fn c10(runs: &Runs) -> Check {
    let mut worst_iter = f64::INFINITY;
    let mut count = 0;
    for sol in [&runs.fine, &runs.coarse, &runs.random] {
        for st in &sol.report.stages {
            for it in &st.iterates {
                worst_iter = worst_iter.min(it.trace_bridge_min);
                count += 1;
            }
        }
    }
    let mut worst_pairs = f64::INFINITY;
    let mut r = rng(10, 0);
    for n in [1, 2] {
        let m = 2 * n;
        for _ in 0..1000 {
            let mut pos = || {
                let x = CMat::from_fn(m, m, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
                (&x * x.adjoint()).scale(1.0 / m as f64) + CMat::identity(m, m).scale(0.2)
            };
            let (a, b) = (pos(), pos());
            let v = hypalg::trace_inequality_residual(&a, &b, n).map_err(|e| e.to_string())?;
            worst_pairs = worst_pairs.min(v);
        }
    }
    Ok((
        worst_iter >= -T.trace_inequality && worst_pairs >= -T.trace_inequality,
        format!("min over {count} iterates {worst_iter:.2e}; min over 2000 pairs {worst_pairs:.2e} (≥−1e-10)"),
    ))
}

fn c11(runs: &Runs) -> Check {
    let bg = FlatBackground::standard(1);
    let coarse = estimate_trace(&runs.coarse.path, &runs.coarse_f, &bg, None).map_err(|e| e.to_string())?;
    let fine = estimate_trace(&runs.fine.path, &runs.fine_f, &bg, Some(coarse.a)).map_err(|e| e.to_string())?;
    let lap = coarse.max_laplacian_q().max(fine.max_laplacian_q());
    let v = c_emp_variation(&coarse, &fine);
    Ok((
        lap <= T.max_principle && v < T.c_emp_variation,
        format!("max Δ_φQ at argmax {lap:.2e} (≤1e-8); C_emp variation 8→16 {v:.2e} (<0.02)"),
    ))
}

fn c12(runs: &Runs) -> Check {
    let mut vol: f64 = 0.0;
    let mut mixed: f64 = 0.0;
    for st in &runs.fine.report.stages {
        for it in &st.iterates {
            vol = vol.max(it.volume_defect.abs());
            mixed = mixed.max(it.mixed_volume_defect.abs());
        }
    }
    let bcf = b_closed_form_defect(&runs.fine_f, 1.0, runs.fine.b);
    let bpf = b_pfaffian_closed_form_defect(&runs.fine_f, 1.0, runs.fine.b);
    Ok((
        vol <= T.volume && bcf <= T.b_closed_form,
        format!(
            "|∫ω_φ^2n−∫ω^2n| max {vol:.2e} (≤1e-10), b closed form {bcf:.2e} (≤1e-9); Pfaffian volume {mixed:.2e}, Pfaffian b form {bpf:.2e}"
        ),
    ))
}

fn main() {
    let titles = [
        "J-derivative identities",
        "curvature traces vs hyperhermitian metrics",
        "second derivatives of J contracted",
        "J-adapted frame",
        "Laplacian-of-trace cancellation",
        "curvature/J summands vanish separately",
        "(2,0) and (1,1) residual forms agree",
        "metric from potential, two routes",
        "torus solver",
        "trace inequality bridge",
        "estimate monitoring",
        "conservation",
    ];
    let sweep = bundle_sweep();
    let shared = runs();
    let err = |e: &String| -> Check { Err(e.clone()) };
    let results: Vec<Check> = vec![
        c1(),
        c2(),
        c3(),
        c4(),
        sweep.as_ref().map_or_else(err, c5),
        sweep.as_ref().map_or_else(err, c6),
        c7(),
        c8(),
        shared.as_ref().map_or_else(err, c9),
        shared.as_ref().map_or_else(err, c10),
        shared.as_ref().map_or_else(err, c11),
        shared.as_ref().map_or_else(err, c12),
    ];
    let mut failed = 0;
    for (k, (title, res)) in titles.iter().zip(results).enumerate() {
        let (ok, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failed += 1;
        }
        println!("criterion {:>2}: {}  {title}: {detail}", k + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
