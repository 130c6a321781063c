//! Instrumentation of the second-order estimate: the Chern Laplacian, the
//! test function `Q = tr_ĝ g_φ − Aφ` along a continuity path, and pointwise
//! jet checks of the identities behind `Δ_φ tr_ĝ g_φ`.

use crate::curvature::{relative, CurvatureTensor, PointContext};
use crate::fields::{hessian, omega_phi, DerivPattern, FlatBackground, MatrixField, MetricField, ScalarField};
use crate::hypalg::{self, CMat};
use crate::jets::{Jet, JetMatrix};
use crate::solver::SolverState;
use crate::{par, QmaError, Result, C64};
use rand::Rng;
use serde::Serialize;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn contract(u: &CMat, x: &CMat) -> C64 {
    u.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

/// `Δ_φ f = g_φ^{rs̄} f_{rs̄}` on the torus.
pub fn chern_laplacian(f: &ScalarField, gphi: &MetricField) -> Result<ScalarField> {
    if f.grid() != gphi.grid() {
        return Err(QmaError::Structure("function and metric live on different grids".into()));
    }
    let h = hessian(f);
    let vals: Result<Vec<f64>> = par::map_range(f.grid().len(), |p| {
        let u = hypalg::upper(&gphi.at(p))?;
        Ok(contract(&u, &h.at(p)).re)
    })
    .into_iter()
    .collect();
    ScalarField::new(f.grid(), vals?)
}

/// `g_φ^{rs̄} ∂_r∂_s̄ f` at the base point of a jet in the variables `(w, w̄)`.
pub fn chern_laplacian_jet(f: &Jet, gphi: &CMat) -> Result<C64> {
    let m = gphi.nrows();
    if f.nv() != 2 * m || f.order() < 2 {
        return Err(QmaError::Jet("Laplacian needs an order-2 jet in 2m variables".into()));
    }
    let u = hypalg::upper(gphi)?;
    let mut acc = ZERO;
    for r in 0..m {
        for s in 0..m {
            acc += u[(r, s)] * f.partial(&[r, m + s]);
        }
    }
    Ok(acc)
}

/// Value, first derivatives and mixed second derivatives `∂_i∂_j̄` of a
/// jet matrix at its base point.
struct Taylor2 {
    m: usize,
    v: CMat,
    d1: Vec<CMat>,
    d2: Vec<CMat>,
}

impl Taylor2 {
    fn of(mj: &JetMatrix) -> Self {
        let m = mj.dim();
        Self {
            m,
            v: mj.value(),
            d1: (0..2 * m).map(|k| mj.partial(&[k])).collect(),
            d2: (0..m * m).map(|q| mj.partial(&[q / m, m + q % m])).collect(),
        }
    }

    fn dd(&self, i: usize, j: usize) -> &CMat {
        &self.d2[i * self.m + j]
    }
}

/// Running sum that also tracks the sum of magnitudes of its summands.
#[derive(Clone, Copy, Debug, Default)]
struct Acc {
    sum: C64,
    abs: f64,
}

impl Acc {
    fn add(&mut self, x: C64) {
        self.sum += x;
        self.abs += x.norm();
    }
}

fn random_jet<R: Rng + ?Sized>(nv: usize, order: usize, rng: &mut R) -> Jet {
    let c = Jet::exponents(nv, order)
        .iter()
        .map(|e| {
            let w: f64 = e[..nv].iter().map(|k| (1..=*k as usize).product::<usize>() as f64).product();
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / w
        })
        .collect();
    Jet::from_coeffs(nv, order, c).expect("coefficient count")
}

/// Random real order-4 jet whose partial derivatives are of unit size.
pub fn random_phi_jet<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Jet {
    let x = random_jet(2 * m, 4, rng);
    x.add(&x.conj()).scale_re(0.5).mark_real(1e-13).expect("real by construction")
}

fn sigma_jets(j: &JetMatrix, h: &JetMatrix) -> JetMatrix {
    j.matmul(&h.transpose()).matmul(&j.adjoint())
}

/// `g = ĝ + t·½(H + σ_J H)` for a random Hermitian jet matrix `H`, with `t`
/// chosen so that `g(x0)` stays positive.
pub fn random_metric_jets<R: Rng + ?Sized>(ctx: &PointContext, rng: &mut R) -> Result<JetMatrix> {
    let m = ctx.m();
    let ghat = ctx.normal_jets.metric.clone();
    let x = JetMatrix::from_fn(m, |_, _| random_jet(2 * m, 2, rng));
    let h = x.add(&x.adjoint()).scale(C64::new(0.5, 0.0));
    let avg = h.add(&sigma_jets(&ctx.normal_j, &h)).scale(C64::new(0.5, 0.0));
    let lam = hypalg::min_eigenvalue(&ghat.value());
    let t = 0.5 * lam / hypalg::max_abs(&avg.value()).max(1e-300) / m as f64;
    Ok(ghat.add(&avg.scale(C64::new(t, 0.0))))
}

/// Jets at one point of a normal chart: `ĝ`, `J`, a hyperhermitian `g`, a
/// real potential `φ`, and `g_φ = g + ½(φ_{rs̄} + J_r^{ā}J_{s̄}^b φ_{bā})`.
#[derive(Clone, Debug)]
pub struct PointJetBundle {
    m: usize,
    ghat: JetMatrix,
    ghat_inv: JetMatrix,
    j: JetMatrix,
    g: JetMatrix,
    phi: Jet,
    p: JetMatrix,
    gphi: JetMatrix,
    curvature: CurvatureTensor,
    min_eig: f64,
}

impl PointJetBundle {
    pub fn new(ctx: &PointContext, g: JetMatrix, phi: Jet) -> Result<Self> {
        let m = ctx.m();
        let ghat = ctx.normal_jets.metric.clone();
        let j = ctx.normal_j.clone();
        let scale = hypalg::max_abs(&ghat.value()).max(1.0);
        let mut d1: f64 = 0.0;
        for k in 0..2 * m {
            d1 = d1
                .max(hypalg::max_abs(&ghat.partial(&[k])))
                .max(hypalg::max_abs(&j.partial(&[k])));
        }
        if d1 > 1e-9 * scale {
            return Err(QmaError::Validation(format!(
                "bundle is not in a normal chart (first derivatives {d1:.3e})"
            )));
        }
        if g.dim() != m || phi.nv() != 2 * m || phi.order() < 4 || !phi.is_real() {
            return Err(QmaError::Jet("bundle needs g in m×m and a real order-4 φ in 2m variables".into()));
        }
        let mut p = JetMatrix::from_fn(m, |_, _| Jet::zero(2 * m, 2));
        for r in 0..m {
            for s in 0..m {
                p.set(r, s, phi.deriv(r)?.deriv(m + s)?);
            }
        }
        let corr = p.add(&sigma_jets(&j, &p)).scale(C64::new(0.5, 0.0));
        let gphi = g.add(&corr);
        let min_eig = hypalg::min_eigenvalue(&gphi.value());
        if !(min_eig > 0.0) {
            return Err(QmaError::ConeExit(min_eig));
        }
        Ok(Self {
            m,
            ghat,
            ghat_inv: ctx.normal_jets.inverse.clone(),
            j,
            g,
            phi,
            p,
            gphi,
            curvature: ctx.normal_curvature.clone(),
            min_eig,
        })
    }

    /// Random hyperhermitian `g` and a random `φ`, shrunk into the cone.
    pub fn random<R: Rng + ?Sized>(ctx: &PointContext, rng: &mut R) -> Result<Self> {
        let g = random_metric_jets(ctx, rng)?;
        Self::with_random_phi(ctx, g, rng)
    }

    /// Random `φ` for a given `g`, shrunk until `g_φ(x0) ≥ ¼ g(x0)` in the
    /// sense of smallest eigenvalues.
    pub fn with_random_phi<R: Rng + ?Sized>(ctx: &PointContext, g: JetMatrix, rng: &mut R) -> Result<Self> {
        let phi = random_phi_jet(ctx.m(), rng);
        let floor = 0.25 * hypalg::min_eigenvalue(&g.value());
        let mut scale = 1.0;
        for _ in 0..40 {
            let cand = phi.scale_re(scale).mark_real(1e-13)?;
            match Self::new(ctx, g.clone(), cand) {
                Ok(b) if b.min_eig >= floor => return Ok(b),
                Ok(_) | Err(QmaError::ConeExit(_)) => scale *= 0.5,
                Err(e) => return Err(e),
            }
        }
        Err(QmaError::ConeExit(floor))
    }

    /// Same point and `g`, different potential.
    pub fn with_phi(&self, ctx: &PointContext, phi: Jet) -> Result<Self> {
        Self::new(ctx, self.g.clone(), phi)
    }

    /// Replaces `g_φ(x0)` by a random positive Hermitian matrix that is not
    /// hyperhermitian, keeping the derivatives. Negative control only.
    pub fn dehyperhermitianized<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Self> {
        let m = self.m;
        let jt = hypalg::JTensor::new(self.j.value())?;
        let v = self.gphi.value();
        let target = hypalg::random_non_hyperhermitian(&v, &jt, rng)?;
        let mut out = self.clone();
        out.gphi = self.gphi.add(&JetMatrix::constant(&(target - v), 2 * m, 2));
        out.min_eig = hypalg::min_eigenvalue(&out.gphi.value());
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn ghat(&self) -> &JetMatrix {
        &self.ghat
    }

    pub fn g(&self) -> &JetMatrix {
        &self.g
    }

    pub fn phi(&self) -> &Jet {
        &self.phi
    }

    pub fn gphi(&self) -> &JetMatrix {
        &self.gphi
    }

    /// Smallest eigenvalue of `g_φ(x0)`.
    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }

    /// `F = ½ log(det g_φ/det g) − b` as an order-2 jet.
    pub fn equation_density(&self, b: f64) -> Result<Jet> {
        let ratio = self.gphi.det()?.div(&self.g.det()?)?;
        Ok(ratio.ln()?.scale_re(0.5).add_const(C64::new(-b, 0.0)))
    }
}

/// How a check is sabotaged for negative controls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Flip the sign of the `J_r^{ā}J_{s̄}^b φ_{bā,ij̄}` term.
    SignFlip,
    /// Break hyperhermitianity of `g_φ`.
    Dehyper,
}

/// The seven groups of the full expansion of `Δ_φ tr_ĝ g_φ` at `x0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DeltaTerms {
    /// `g_φ^{ij̄}(ĝ^{rs̄})_{,ij̄} g_{φ rs̄}`.
    pub inv: C64,
    /// Everything carrying a first derivative of `ĝ^{-1}` or `J`.
    pub cross: C64,
    /// `g_φ^{ij̄}ĝ^{rs̄} g_{rs̄,ij̄}`.
    pub g: C64,
    /// `½ g_φ^{ij̄}ĝ^{rs̄} φ_{rs̄ij̄}`.
    pub phi: C64,
    /// `½ g_φ^{ij̄}ĝ^{rs̄} J_r^{ā}J_{s̄}^b φ_{bā ij̄}`.
    pub jphi: C64,
    /// `½ g_φ^{ij̄}ĝ^{rs̄} J_{r,ij̄}^{ā}J_{s̄}^b φ_{bā}`.
    pub j2: C64,
    /// `½ g_φ^{ij̄}ĝ^{rs̄} J_r^{ā}J_{s̄,ij̄}^b φ_{bā}`.
    pub j1: C64,
}

impl DeltaTerms {
    pub fn sum(&self) -> C64 {
        self.inv + self.cross + self.g + self.phi + self.jphi + self.j2 + self.j1
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DeltaReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `|LHS − RHS|` over `Σ|T_k| + |RHS|`.
    pub residual: f64,
    /// Full expansion against direct differentiation of the trace jet.
    pub expansion_gap: f64,
    #[serde(skip)]
    pub terms: DeltaTerms,
}

struct Expansion {
    terms: DeltaTerms,
    abs: [f64; 7],
    rhs: Acc,
}

fn expand(b: &PointJetBundle) -> Result<Expansion> {
    let m = b.m;
    let gp = Taylor2::of(&b.gphi);
    let gu = hypalg::upper(&gp.v)?;
    let hi = Taylor2::of(&b.ghat_inv);
    let gg = Taylor2::of(&b.g);
    let pp = Taylor2::of(&b.p);
    let ja = Taylor2::of(&b.j);
    let jb = Taylor2::of(&b.j.conj());
    let mut acc = [Acc::default(); 7];
    let mut rhs = Acc::default();
    let half = C64::new(0.5, 0.0);
    for i in 0..m {
        let di = i;
        for j in 0..m {
            let dj = m + j;
            let w = gu[(i, j)];
            let (hd2, ppd2, ggd2) = (hi.dd(i, j), pp.dd(i, j), gg.dd(i, j));
            let (jad2, jbd2) = (ja.dd(i, j), jb.dd(i, j));
            for r in 0..m {
                for s in 0..m {
                    acc[0].add(w * hd2[(r, s)] * gp.v[(r, s)]);
                    acc[1].add(
                        w * (hi.d1[di][(r, s)] * gp.d1[dj][(r, s)] + hi.d1[dj][(r, s)] * gp.d1[di][(r, s)]),
                    );
                    let wh = w * hi.v[(r, s)];
                    acc[2].add(wh * ggd2[(r, s)]);
                    acc[3].add(half * wh * ppd2[(r, s)]);
                    rhs.add(wh * (ggd2[(r, s)] + ppd2[(r, s)]));
                    let hw = half * wh;
                    for a in 0..m {
                        let (x, xi, xj, xd) = (ja.v[(r, a)], ja.d1[di][(r, a)], ja.d1[dj][(r, a)], jad2[(r, a)]);
                        for c in 0..m {
                            let (y, yi, yj, yd) = (pp.v[(c, a)], pp.d1[di][(c, a)], pp.d1[dj][(c, a)], ppd2[(c, a)]);
                            let (z, zi, zj, zd) = (jb.v[(s, c)], jb.d1[di][(s, c)], jb.d1[dj][(s, c)], jbd2[(s, c)]);
                            acc[4].add(hw * x * yd * z);
                            acc[5].add(hw * xd * y * z);
                            acc[6].add(hw * x * y * zd);
                            acc[1].add(
                                hw * (xi * yj * z
                                    + xj * yi * z
                                    + xi * y * zj
                                    + xj * y * zi
                                    + x * yi * zj
                                    + x * yj * zi),
                            );
                        }
                    }
                }
            }
        }
    }
    let terms = DeltaTerms {
        inv: acc[0].sum,
        cross: acc[1].sum,
        g: acc[2].sum,
        phi: acc[3].sum,
        jphi: acc[4].sum,
        j2: acc[5].sum,
        j1: acc[6].sum,
    };
    Ok(Expansion {
        terms,
        abs: [acc[0].abs, acc[1].abs, acc[2].abs, acc[3].abs, acc[4].abs, acc[5].abs, acc[6].abs],
        rhs,
    })
}

/// Compares the full expansion of `Δ_φ tr_ĝ g_φ` at `x0` with
/// `g_φ^{ij̄}ĝ^{rs̄}(g_{rs̄,ij̄} + φ_{rs̄ij̄})`.
pub fn delta_tr_check(b: &PointJetBundle, mutation: Mutation) -> Result<DeltaReport> {
    let ex = expand(b)?;
    let t = ex.terms;
    let lhs = match mutation {
        Mutation::SignFlip => t.sum() - t.jphi * 2.0,
        _ => t.sum(),
    };
    let t_abs = [t.inv, t.cross, t.g, t.phi, t.jphi, t.j2, t.j1].iter().map(|v| v.norm()).sum::<f64>();
    let scale = t_abs + ex.rhs.sum.norm();
    let round_off_scale: f64 = ex.abs.iter().sum::<f64>() + ex.rhs.abs;
    // direct route: differentiate the trace jet itself
    let m = b.m;
    let mut tr = Jet::zero(2 * m, 2);
    for r in 0..m {
        for s in 0..m {
            tr = tr.add(&b.ghat_inv.get(r, s).mul(b.gphi.get(r, s)));
        }
    }
    let direct = chern_laplacian_jet(&tr, &b.gphi.value())?;
    Ok(DeltaReport {
        lhs: lhs.re,
        rhs: ex.rhs.sum.re,
        residual: relative((lhs - ex.rhs.sum).norm(), scale),
        expansion_gap: relative((direct - t.sum()).norm(), round_off_scale),
        terms: t,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EqnsReport {
    /// `|g_φ^{ij̄}ĝ^{as̄}ĝ^{rb̄}R̂_{ab̄ij̄}g_{φ rs̄}|`.
    pub term1: f64,
    /// `|½g_φ^{ij̄}ĝ^{rs̄}(J_{r,ij̄}^{ā}J_{s̄}^b + J_r^{ā}J_{s̄,ij̄}^b)φ_{bā}|`.
    pub term2: f64,
    pub sum: f64,
    pub term1_rel: f64,
    pub term2_rel: f64,
    pub sum_rel: f64,
    /// `term1` against `g_φ^{ij̄}(ĝ^{rs̄})_{,ij̄}g_{φ rs̄}`, relative.
    pub inverse_gap: f64,
}

impl EqnsReport {
    pub fn max_rel(&self) -> f64 {
        self.term1_rel.max(self.term2_rel)
    }
}

/// The two summands of the curvature/`J` term, separately.
pub fn eqns_term(b: &PointJetBundle) -> Result<EqnsReport> {
    let m = b.m;
    let gv = b.gphi.value();
    let gu = hypalg::upper(&gv)?;
    let hu = b.ghat_inv.value();
    let rc = &b.curvature;
    let mut t1 = Acc::default();
    for i in 0..m {
        for j in 0..m {
            for a in 0..m {
                for s in 0..m {
                    for r in 0..m {
                        for c in 0..m {
                            t1.add(gu[(i, j)] * hu[(a, s)] * hu[(r, c)] * rc.lowered(a, c, i, j) * gv[(r, s)]);
                        }
                    }
                }
            }
        }
    }
    let ex = expand(b)?;
    let t2 = ex.terms.j2 + ex.terms.j1;
    let t2abs = ex.abs[5] + ex.abs[6];
    Ok(EqnsReport {
        term1: t1.sum.norm(),
        term2: t2.norm(),
        sum: (t1.sum + t2).norm(),
        term1_rel: relative(t1.sum.norm(), t1.abs),
        term2_rel: relative(t2.norm(), t2abs),
        sum_rel: relative((t1.sum + t2).norm(), t1.abs + t2abs),
        inverse_gap: relative((t1.sum - ex.terms.inv).norm(), t1.abs + ex.abs[0]),
    })
}

/// Pieces of the fourth-order cancellation at `x0`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Phi4Terms {
    /// `ĝ^{rs̄}g_φ^{ij̄}φ_{rs̄ij̄}`.
    pub fourth: f64,
    /// `ĝ^{rs̄}g_φ^{ib̄}g_φ^{aj̄}g_{φ ab̄,s̄}g_{φ ij̄,r}`.
    pub quad: f64,
    pub quad_im: f64,
    /// `ĝ^{rs̄}g_φ^{ij̄}g_{ij̄,rs̄}`.
    pub metric: f64,
    /// `Δ̂F`.
    pub laplacian_f: f64,
    /// `fourth − quad + metric − 2Δ̂F`: depends on `g` only.
    pub discrepancy: f64,
    pub scale: f64,
}

pub fn phi4_discrepancy(b: &PointJetBundle, f: &Jet) -> Result<Phi4Terms> {
    let m = b.m;
    let gp = Taylor2::of(&b.gphi);
    let gu = hypalg::upper(&gp.v)?;
    let hu = b.ghat_inv.value();
    let gg = Taylor2::of(&b.g);
    let pp = Taylor2::of(&b.p);
    let mut fourth = ZERO;
    let mut metric = ZERO;
    let mut quad = ZERO;
    for r in 0..m {
        for s in 0..m {
            let h = hu[(r, s)];
            fourth += h * contract(&gu, pp.dd(r, s));
            metric += h * contract(&gu, gg.dd(r, s));
            let (xr, xs) = (&gp.d1[r], &gp.d1[m + s]);
            for i in 0..m {
                for c in 0..m {
                    for a in 0..m {
                        for j in 0..m {
                            quad += h * gu[(i, c)] * gu[(a, j)] * xs[(a, c)] * xr[(i, j)];
                        }
                    }
                }
            }
        }
    }
    let lap: C64 = (0..m)
        .flat_map(|r| (0..m).map(move |s| (r, s)))
        .map(|(r, s)| hu[(r, s)] * f.partial(&[r, m + s]))
        .sum();
    let d = fourth - quad + metric - lap * 2.0;
    Ok(Phi4Terms {
        fourth: fourth.re,
        quad: quad.re,
        quad_im: quad.im,
        metric: metric.re,
        laplacian_f: lap.re,
        discrepancy: d.re,
        scale: fourth.norm() + quad.norm() + metric.norm() + 2.0 * lap.norm(),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Phi4Check {
    /// `max_k |D(φ_k) − D(φ_0)|` over the largest scale.
    pub spread: f64,
    /// Smallest quadratic term seen, relative to its scale.
    pub min_quad: f64,
}

/// Fourth-order cancellation: the discrepancy must not depend on the
/// potential. All bundles must share the point and `g`.
pub fn phi4_cancellation_check(bundles: &[PointJetBundle], b: f64) -> Result<Phi4Check> {
    if bundles.len() < 2 {
        return Err(QmaError::Validation("need at least two potentials".into()));
    }
    let terms: Vec<Phi4Terms> = bundles
        .iter()
        .map(|bd| phi4_discrepancy(bd, &bd.equation_density(b)?))
        .collect::<Result<_>>()?;
    let scale = terms.iter().fold(0.0_f64, |a, t| a.max(t.scale));
    let d0 = terms[0].discrepancy;
    let spread = terms.iter().fold(0.0, |a: f64, t| a.max((t.discrepancy - d0).abs()));
    let min_quad = terms
        .iter()
        .fold(f64::INFINITY, |a, t| a.min(relative(t.quad, t.scale)));
    Ok(Phi4Check {
        spread: relative(spread, scale),
        min_quad,
    })
}

/// Smallest eigenvalue of `g` relative to `ĝ`, i.e. of `L⁻¹ g L⁻ᴴ` with
/// `ĝ = L Lᴴ`.
pub fn relative_min_eigenvalue(g: &CMat, ghat: &CMat) -> Result<f64> {
    let ch = nalgebra::Cholesky::new(ghat.clone())
        .ok_or_else(|| QmaError::Validation("reference metric is not positive".into()))?;
    let li = ch
        .l()
        .try_inverse()
        .ok_or_else(|| QmaError::Singular("Cholesky factor".into()))?;
    Ok(hypalg::min_eigenvalue(&(&li * g * li.adjoint())))
}

#[derive(Clone, Debug, Serialize)]
pub struct StateEstimate {
    pub t: f64,
    pub b: f64,
    pub sup_q: f64,
    pub argmax: usize,
    pub argmax_coords: Vec<f64>,
    /// Statistics of `tr_ĝ g_φ`.
    pub tr_max: f64,
    pub tr_min: f64,
    pub tr_mean: f64,
    pub tr_hat_at_max: f64,
    /// `tr_{g_φ} ĝ` at the argmax.
    pub tr_back_at_max: f64,
    pub phi_inf: f64,
    /// Discrete `Δ_φ Q` at the argmax.
    pub laplacian_q_at_max: f64,
    pub trace_bridge_min: f64,
    /// `sup tr_ĝ g_φ − A‖φ‖_∞`.
    pub c_emp: f64,
    pub quad_at_max: f64,
    pub h_at_max: f64,
    /// `|Δ_φ tr_ĝ g_φ − quad − h|` at the argmax.
    pub delta_identity_gap: f64,
    /// `(AA' − C) tr_{g_φ}ĝ − C − 2nA` at the argmax.
    pub chain_value: f64,
    /// Bound on `tr_{g_φ}ĝ` at the maximum implied by the chain.
    pub tr_back_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub a: f64,
    pub a_prime: f64,
    /// `sup |h|` over the path, `h = 2Δ̂(tF)`.
    pub c_h: f64,
    pub sup_q: f64,
    pub c_emp: f64,
    /// Non-converged states that were skipped.
    pub excluded: usize,
    pub states: Vec<StateEstimate>,
}

impl EstimateReport {
    pub fn max_laplacian_q(&self) -> f64 {
        self.states.iter().fold(f64::NEG_INFINITY, |a, s| a.max(s.laplacian_q_at_max))
    }

    pub fn min_trace_bridge(&self) -> f64 {
        self.states.iter().fold(f64::INFINITY, |a, s| a.min(s.trace_bridge_min))
    }

    /// Plot-ready trace with header `t,sup_Q,tr_max,phi_inf,b`.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,sup_Q,tr_max,phi_inf,b\n");
        for s in &self.states {
            out.push_str(&format!("{},{},{},{},{}\n", s.t, s.sup_q, s.tr_max, s.phi_inf, s.b));
        }
        out
    }
}

/// Largest relative change of `C_emp` between two reports of the same path
/// on different grids, over the path value and every pair of states at
/// equal `t`.
pub fn c_emp_variation(a: &EstimateReport, b: &EstimateReport) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE);
    let mut v = rel(a.c_emp, b.c_emp);
    for sa in &a.states {
        if let Some(sb) = b.states.iter().find(|sb| (sb.t - sa.t).abs() < 1e-12) {
            v = v.max(rel(sa.c_emp, sb.c_emp));
        }
    }
    v
}

/// Monitors `Q = tr_ĝ g_φ − Aφ` along converged states of a continuity path
/// for `F_t = tF` on the flat torus, where `ĝ` is the background metric.
/// With `A = None` the constant is `C/A' + 1`, `C = sup|2Δ̂(tF)|`.
pub fn estimate_trace(
    states: &[SolverState],
    f: &ScalarField,
    bg: &FlatBackground,
    a_override: Option<f64>,
) -> Result<EstimateReport> {
    let kept: Vec<&SolverState> = states.iter().filter(|s| s.converged).collect();
    if kept.is_empty() {
        return Err(QmaError::Validation("no converged states to monitor".into()));
    }
    let grid = f.grid();
    let n = bg.n();
    let m = bg.m();
    let ghat = bg.g().comp().clone();
    let hu = hypalg::upper(&ghat)?;
    let a_prime = relative_min_eigenvalue(bg.g().comp(), &ghat)?;
    let lap_f = chern_laplacian(f, &MatrixField::constant(grid, &ghat))?;
    let c_h = kept
        .iter()
        .fold(0.0, |a: f64, s| a.max(2.0 * s.t.abs() * lap_f.sup_norm()));
    let a = a_override.unwrap_or(c_h / a_prime + 1.0);
    let jc = bg.j().comp().clone();
    let mut out = Vec::with_capacity(kept.len());
    for st in kept {
        if st.phi.grid() != grid {
            return Err(QmaError::Structure("state and density live on different grids".into()));
        }
        let gphi = omega_phi(bg, &st.phi)?;
        let tr = ScalarField::new(grid, gphi.map_points(|g| contract(&hu, g).re))?;
        let q = tr.zip_map(&st.phi, |x, p| x - a * p);
        let p0 = q.argmax();
        let g0 = gphi.at(p0);
        let gu0 = hypalg::upper(&g0)?;
        let lap_q = contract(&gu0, &hessian(&q).at(p0)).re;
        let lap_tr = contract(&gu0, &hessian(&tr).at(p0)).re;
        let tr_back = hypalg::trace_pair(&g0, &ghat)?;
        // D[r][(a,b)] = ∂_r g_{φ ab̄} = ½(φ_{ab̄r} + σ(φ_{··r})_{ab̄}) with constant J
        let d: Vec<CMat> = (0..m)
            .map(|r| {
                let mr = CMat::from_fn(m, m, |aa, bb| st.phi.derivative(&DerivPattern::new(&[aa, r], &[bb]))[p0]);
                (&mr + &jc * mr.transpose() * jc.adjoint()).scale(0.5)
            })
            .collect();
        let mut quad = ZERO;
        for r in 0..m {
            for s in 0..m {
                for i in 0..m {
                    for c in 0..m {
                        for aa in 0..m {
                            for j in 0..m {
                                quad += hu[(r, s)] * gu0[(i, c)] * gu0[(aa, j)] * d[s][(c, aa)].conj() * d[r][(i, j)];
                            }
                        }
                    }
                }
            }
        }
        let h0 = 2.0 * st.t * lap_f.values()[p0];
        let bridge: Result<Vec<f64>> = par::map_range(grid.len(), |p| {
            let ratio = (2.0 * st.t * f.values()[p] + 2.0 * st.b).exp();
            hypalg::trace_inequality_residual_with_ratio(&ghat, &gphi.at(p), n, ratio)
        })
        .into_iter()
        .collect();
        let bridge_min = bridge?.into_iter().fold(f64::INFINITY, f64::min);
        let phi_inf = st.phi.sup_norm();
        let lead = a * a_prime - c_h;
        let nf = n as f64;
        out.push(StateEstimate {
            t: st.t,
            b: st.b,
            sup_q: q.values()[p0],
            argmax: p0,
            argmax_coords: grid.coords(p0),
            tr_max: tr.sup(),
            tr_min: tr.inf(),
            tr_mean: tr.mean(),
            tr_hat_at_max: tr.values()[p0],
            tr_back_at_max: tr_back,
            phi_inf,
            laplacian_q_at_max: lap_q,
            trace_bridge_min: bridge_min,
            c_emp: tr.sup() - a * phi_inf,
            quad_at_max: quad.re,
            h_at_max: h0,
            delta_identity_gap: (lap_tr - quad.re - h0).abs(),
            chain_value: lead * tr_back - c_h - 2.0 * nf * a,
            tr_back_bound: if lead > 0.0 {
                (c_h + 2.0 * nf * a) / lead
            } else {
                f64::INFINITY
            },
        });
    }
    let sup_q = out.iter().fold(f64::NEG_INFINITY, |x, s| x.max(s.sup_q));
    let c_emp = out.iter().fold(f64::NEG_INFINITY, |x, s| x.max(s.c_emp));
    Ok(EstimateReport {
        a,
        a_prime,
        c_h,
        sup_q,
        c_emp,
        excluded: states.len() - out.len(),
        states: out,
    })
}
