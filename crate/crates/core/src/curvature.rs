//! Levi-Civita curvature of hyperkähler charts and the pointwise curvature
//! identities involving the second complex structure `J`.
//!
//! Index layouts (flattened, row-major in the listed order):
//!
//! - Christoffel `Γ^i_{kl}`: `(i, k, l)`.
//! - mixed curvature `R_{ab̄i}{}^k` (`R(∂_a, ∂_b̄)∂_i = R_{ab̄i}{}^k ∂_k`): `(a, b, i, k)`.
//! - barred curvature `R_{j̄kl̄}{}^{ī}` (`R(∂_j̄, ∂_k)∂_l̄ = R_{j̄kl̄}{}^{ī} ∂_ī`): `(j, k, l, i)`.
//! - lowered `R̂_{ab̄ij̄} = ĝ_{kj̄} R_{ab̄i}{}^k`: `(a, b, i, j)`.
//!
//! In a holomorphic chart of a Kähler metric these are exact:
//! `R_{ab̄i}{}^k = −∂_b̄ Γ^k_{ai}` and `R_{j̄kl̄}{}^{ī} = −∂_k conj(Γ^i_{jl})`.

use crate::hypalg::{self, CMat, JTensor};
use crate::jets::{metric_jets, ChartJets, Jet, JetMatrix, KahlerPotential, NormalChart};
use crate::{QmaError, Result, C64};
use rand::Rng;
use serde::Serialize;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `abs / scale`, or `abs` when the scale vanishes exactly.
pub fn relative(abs: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        abs / scale
    } else {
        abs
    }
}

fn max_norm(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Christoffel symbols as order-1 jets.
#[derive(Clone, Debug)]
pub struct Christoffel {
    m: usize,
    sym: Vec<Jet>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn jet(&self, i: usize, k: usize, l: usize) -> &Jet {
        &self.sym[(i * self.m + k) * self.m + l]
    }

    pub fn get(&self, i: usize, k: usize, l: usize) -> C64 {
        self.jet(i, k, l).value()
    }

    pub fn values(&self) -> Vec<C64> {
        self.sym.iter().map(|j| j.value()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        max_norm(&self.values())
    }

    /// Largest `|Γ^i_{kl} − Γ^i_{lk}|`.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.m;
        let mut d: f64 = 0.0;
        for i in 0..m {
            for k in 0..m {
                for l in 0..m {
                    d = d.max((self.get(i, k, l) - self.get(i, l, k)).norm());
                }
            }
        }
        d
    }
}

/// `Γ^i_{kl} = ĝ^{ij̄} ∂_k ĝ_{lj̄}`.
pub fn christoffel(cj: &ChartJets) -> Result<Christoffel> {
    let m = cj.m;
    if cj.metric.order() < 2 {
        return Err(QmaError::Jet("christoffel needs metric jets of order 2".into()));
    }
    let up = cj.inverse.map(|j| j.truncate(1));
    let dg: Vec<JetMatrix> = (0..m)
        .map(|k| cj.metric.deriv(k))
        .collect::<Result<_>>()?;
    let mut sym = Vec::with_capacity(m * m * m);
    for i in 0..m {
        for k in 0..m {
            for l in 0..m {
                let mut acc = up.get(i, 0).mul(dg[k].get(l, 0));
                for j in 1..m {
                    acc = acc.add(&up.get(i, j).mul(dg[k].get(l, j)));
                }
                sym.push(acc);
            }
        }
    }
    Ok(Christoffel { m, sym })
}

/// Curvature components at the base point of a set of chart jets.
#[derive(Clone, Debug)]
pub struct CurvatureTensor {
    pub m: usize,
    pub mixed: Vec<C64>,
    pub barred: Vec<C64>,
    pub lowered: Vec<C64>,
}

impl CurvatureTensor {
    fn idx(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        ((a * self.m + b) * self.m + c) * self.m + d
    }

    /// `R_{ab̄i}{}^k`.
    pub fn mixed(&self, a: usize, b: usize, i: usize, k: usize) -> C64 {
        self.mixed[self.idx(a, b, i, k)]
    }

    /// `R_{j̄kl̄}{}^{ī}`.
    pub fn barred(&self, j: usize, k: usize, l: usize, i: usize) -> C64 {
        self.barred[self.idx(j, k, l, i)]
    }

    /// `R̂_{ab̄ij̄}`.
    pub fn lowered(&self, a: usize, b: usize, i: usize, j: usize) -> C64 {
        self.lowered[self.idx(a, b, i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        max_norm(&self.mixed).max(max_norm(&self.barred))
    }

    /// Largest defect of the Kähler symmetries of `R̂`, relative to `‖R̂‖`:
    /// `R̂_{ab̄ij̄} = R̂_{ib̄aj̄} = R̂_{aj̄ib̄}` and `conj R̂_{ab̄ij̄} = R̂_{bāj ī}`.
    pub fn kahler_symmetry_defect(&self) -> f64 {
        let m = self.m;
        let mut d: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        let r = self.lowered(a, b, i, j);
                        d = d
                            .max((r - self.lowered(i, b, a, j)).norm())
                            .max((r - self.lowered(a, j, i, b)).norm())
                            .max((r.conj() - self.lowered(b, a, j, i)).norm());
                    }
                }
            }
        }
        relative(d, max_norm(&self.lowered))
    }

    /// `Ric_{ab̄} = R_{ab̄i}{}^i`.
    pub fn ricci(&self) -> CMat {
        let m = self.m;
        CMat::from_fn(m, m, |a, b| (0..m).map(|i| self.mixed(a, b, i, i)).sum())
    }

    /// `R(∂_r, ∂_s̄)` acting on component columns `(X^k, X^{k̄})`.
    pub fn endomorphism(&self, r: usize, s: usize) -> CMat {
        let m = self.m;
        let mut e = CMat::zeros(2 * m, 2 * m);
        for i in 0..m {
            for k in 0..m {
                e[(k, i)] = self.mixed(r, s, i, k);
                e[(m + k, m + i)] = -self.barred(s, r, i, k);
            }
        }
        e
    }

    /// `R(X, Y)` for complexified vectors given by `(X^r, X^{r̄})` columns.
    pub fn apply(&self, x: &[C64], y: &[C64]) -> CMat {
        let m = self.m;
        let mut out = CMat::zeros(2 * m, 2 * m);
        for r in 0..m {
            for s in 0..m {
                let c = x[r] * y[m + s] - y[r] * x[m + s];
                if c.norm() != 0.0 {
                    out += self.endomorphism(r, s) * c;
                }
            }
        }
        out
    }
}

/// Curvature at the base point of order-2 metric jets.
pub fn curvature_at(cj: &ChartJets) -> Result<CurvatureTensor> {
    let m = cj.m;
    let gamma = christoffel(cj)?;
    let g0 = cj.metric.value();
    let n4 = m * m * m * m;
    let mut mixed = vec![ZERO; n4];
    let mut barred = vec![ZERO; n4];
    for a in 0..m {
        for b in 0..m {
            for i in 0..m {
                for k in 0..m {
                    let idx = ((a * m + b) * m + i) * m + k;
                    mixed[idx] = -gamma.jet(k, a, i).partial(&[m + b]);
                    // barred (j=a, k=b, l=i, i=k): −∂_b conj Γ^k_{a i}
                    barred[idx] = -gamma.jet(k, a, i).conj().partial(&[b]);
                }
            }
        }
    }
    let mut lowered = vec![ZERO; n4];
    for a in 0..m {
        for b in 0..m {
            for i in 0..m {
                for j in 0..m {
                    lowered[((a * m + b) * m + i) * m + j] = (0..m)
                        .map(|k| g0[(k, j)] * mixed[((a * m + b) * m + i) * m + k])
                        .sum();
                }
            }
        }
    }
    Ok(CurvatureTensor {
        m,
        mixed,
        barred,
        lowered,
    })
}

/// Everything needed to check the curvature identities at one point.
pub struct PointContext<'a> {
    pub x0: Vec<C64>,
    pub original: ChartJets,
    pub gamma: Christoffel,
    pub curvature: CurvatureTensor,
    pub normal: NormalChart<'a>,
    /// Direct jets of `K∘z(w)` in the normal chart.
    pub normal_jets: ChartJets,
    /// `J` transported into the normal chart.
    pub normal_j: JetMatrix,
    pub normal_curvature: CurvatureTensor,
}

impl<'a> PointContext<'a> {
    pub fn new(chart: &'a dyn KahlerPotential, x0: &[C64]) -> Result<Self> {
        let original = metric_jets(chart, x0)?;
        let gamma = christoffel(&original)?;
        let curvature = curvature_at(&original)?;
        let normal = NormalChart::new(chart, x0)?;
        let normal_jets = normal.jets()?;
        let normal_j = normal.transport_j(&original)?;
        let normal_curvature = curvature_at(&normal_jets)?;
        Ok(Self {
            x0: x0.to_vec(),
            original,
            gamma,
            curvature,
            normal,
            normal_jets,
            normal_j,
            normal_curvature,
        })
    }

    pub fn m(&self) -> usize {
        self.original.m
    }

    /// `J(x0)`; identical in both charts because `dw = dz` at `x0`.
    pub fn j(&self) -> JTensor {
        self.original.j_tensor()
    }

    /// `ĝ(x0)`.
    pub fn metric(&self) -> CMat {
        self.original.metric.value()
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct PreReport {
    pub pre1: f64,
    pub pre2: f64,
    pub pre3: f64,
    pub pre4: f64,
}

impl PreReport {
    pub fn max(&self) -> f64 {
        self.pre1.max(self.pre2).max(self.pre3).max(self.pre4)
    }
}

/// Relative residuals of the four `J`-derivative identities at `x0`.
///
/// `pre1` (symmetry of `∂_k J_r^{s̄}` in `k, r` and `∂_k J_r^{m̄} = J_s^{m̄} Γ^s_{kr}`)
/// is evaluated in the original chart; the other three in the normal chart.
pub fn verify_prop_pre(ctx: &PointContext) -> PreReport {
    let m = ctx.m();
    let a = ctx.original.j.value();
    let da: Vec<CMat> = (0..m).map(|k| ctx.original.j.partial(&[k])).collect();
    let da_bar: Vec<CMat> = (0..m).map(|k| ctx.original.j.partial(&[m + k])).collect();
    let norm_da = da.iter().chain(&da_bar).map(hypalg::max_abs).fold(0.0, f64::max);
    let norm_a = hypalg::max_abs(&a);

    let mut sym: f64 = 0.0;
    let mut par: f64 = 0.0;
    for k in 0..m {
        for r in 0..m {
            for s in 0..m {
                sym = sym.max((da[k][(r, s)] - da[r][(k, s)]).norm());
                let rhs: C64 = (0..m).map(|t| a[(t, s)] * ctx.gamma.get(t, k, r)).sum();
                par = par.max((da[k][(r, s)] - rhs).norm());
            }
        }
    }
    let pre1 = relative(sym.max(par), norm_da.max(norm_a * ctx.gamma.max_abs()));

    let nj = &ctx.normal_j;
    let mut first: f64 = 0.0;
    for k in 0..2 * m {
        first = first.max(hypalg::max_abs(&nj.partial(&[k])));
    }
    let pre2 = relative(first, norm_da);

    let an = nj.value();
    // second derivatives: d2[k][l] = ∂_k∂_l̄ A, d2c[k][l] = ∂_k∂_l̄ conj(A)
    let d2: Vec<Vec<CMat>> = (0..m)
        .map(|k| (0..m).map(|l| nj.partial(&[k, m + l])).collect())
        .collect();
    let d2c: Vec<Vec<CMat>> = (0..m)
        .map(|k| (0..m).map(|l| nj.partial(&[m + k, l]).conjugate()).collect())
        .collect();
    let norm_d2 = d2.iter().flatten().map(hypalg::max_abs).fold(0.0, f64::max);

    let mut p3: f64 = 0.0;
    for k in 0..m {
        for l in 0..m {
            for j in 0..m {
                for i in 0..m {
                    let v: C64 = (0..m)
                        .map(|s| d2c[k][l][(j, s)] * an[(s, i)] + an[(j, s)].conj() * d2[k][l][(s, i)])
                        .sum();
                    p3 = p3.max(v.norm());
                }
            }
        }
    }
    let pre3 = relative(p3, norm_d2 * norm_a);

    let r = &ctx.normal_curvature;
    let mut p4: f64 = 0.0;
    for j in 0..m {
        for k in 0..m {
            for l in 0..m {
                for i in 0..m {
                    let rhs: C64 = (0..m).map(|aa| an[(aa, i)] * d2c[k][j][(l, aa)]).sum();
                    p4 = p4.max((r.barred(j, k, l, i) - rhs).norm());
                }
            }
        }
    }
    let pre4 = relative(p4, r.max_abs().max(norm_a * norm_d2));
    PreReport {
        pre1,
        pre2,
        pre3,
        pre4,
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct FundReport {
    pub fund1: f64,
    pub hk_trace: f64,
}

impl FundReport {
    pub fn max(&self) -> f64 {
        self.fund1.max(self.hk_trace)
    }
}

fn check_hyperhermitian(g: &CMat, j: &JTensor) -> Result<()> {
    let res = hypalg::is_hyperhermitian(g, j)?;
    if res > 1e-10 * hypalg::max_abs(g).max(1.0) {
        return Err(QmaError::Validation(format!(
            "metric is not hyperhermitian (residual {res:.3e})"
        )));
    }
    Ok(())
}

/// Traces of the curvature against a hyperhermitian `g_point`.
pub fn verify_lemma_fund(ctx: &PointContext, g_point: &CMat) -> Result<FundReport> {
    check_hyperhermitian(g_point, &ctx.j())?;
    Ok(fund_contractions(ctx, &hypalg::upper(g_point)?))
}

/// The same contractions against an arbitrary upper-index tensor `T^{ij̄}`
/// (no hyperhermitian check; used for indefinite tensors and negative
/// controls).
pub fn fund_contractions(ctx: &PointContext, upper: &CMat) -> FundReport {
    let m = ctx.m();
    let rn = &ctx.normal_curvature;
    let mut f1: f64 = 0.0;
    for q in 0..m {
        for a in 0..m {
            let mut acc = ZERO;
            for i in 0..m {
                for j in 0..m {
                    acc += upper[(i, j)] * rn.barred(j, i, q, a);
                }
            }
            f1 = f1.max(acc.norm());
        }
    }
    let nu = hypalg::max_abs(upper);
    let fund1 = relative(f1, nu * rn.max_abs());
    let hk_trace = hk_trace_abs(&ctx.curvature, &ctx.metric(), upper);
    FundReport {
        fund1,
        hk_trace: relative(hk_trace, nu * hypalg::max_abs(&ctx.metric()) * ctx.curvature.max_abs()),
    }
}

/// `max_{s,r} |g^{ij̄} ĝ_{ik̄} R_{s̄rj̄}{}^{k̄}|` (absolute).
pub fn hk_trace_abs(r: &CurvatureTensor, ghat: &CMat, upper: &CMat) -> f64 {
    let m = r.m;
    let mut out: f64 = 0.0;
    for s in 0..m {
        for rr in 0..m {
            let mut acc = ZERO;
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        acc += upper[(i, j)] * ghat[(i, k)] * r.barred(s, rr, j, k);
                    }
                }
            }
            out = out.max(acc.norm());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Fund2Report {
    pub eq1: f64,
    pub eq2: f64,
    pub eq3: f64,
    pub eq4: f64,
    /// `eq2 − conj(eq1)ᵀ` and `eq4 − conj(eq3)ᵀ`, relative.
    pub conjugation: f64,
}

impl Fund2Report {
    pub fn max(&self) -> f64 {
        self.eq1.max(self.eq2).max(self.eq3).max(self.eq4)
    }
}

/// The four contractions of second derivatives of `J`, as matrices over the
/// free indices `(a, b)`.
pub fn fund2_matrices(ctx: &PointContext, g_upper: &CMat) -> [CMat; 4] {
    let m = ctx.m();
    let nj = &ctx.normal_j;
    let a = nj.value();
    let hu = ctx.normal_jets.inverse.value();
    let d2: Vec<Vec<CMat>> = (0..m)
        .map(|k| (0..m).map(|l| nj.partial(&[k, m + l])).collect())
        .collect();
    let d2c: Vec<Vec<CMat>> = (0..m)
        .map(|k| (0..m).map(|l| nj.partial(&[m + k, l]).conjugate()).collect())
        .collect();
    let mut e = [
        CMat::zeros(m, m),
        CMat::zeros(m, m),
        CMat::zeros(m, m),
        CMat::zeros(m, m),
    ];
    for i in 0..m {
        for j in 0..m {
            let gij = g_upper[(i, j)];
            for r in 0..m {
                for s in 0..m {
                    let w = gij * hu[(r, s)];
                    if w.norm() == 0.0 {
                        continue;
                    }
                    for aa in 0..m {
                        for b in 0..m {
                            e[0][(aa, b)] += w * d2[i][j][(r, aa)] * a[(s, b)].conj();
                            e[1][(aa, b)] += w * a[(r, aa)] * d2c[i][j][(s, b)];
                            e[2][(aa, b)] += w * a[(i, b)] * d2c[r][s][(j, aa)];
                            e[3][(aa, b)] += w * d2[r][s][(i, b)] * a[(j, aa)].conj();
                        }
                    }
                }
            }
        }
    }
    e
}

/// Relative residuals of the four contractions against a hyperhermitian
/// `g_point`.
pub fn verify_lemma_fund2(ctx: &PointContext, g_point: &CMat) -> Result<Fund2Report> {
    check_hyperhermitian(g_point, &ctx.j())?;
    Ok(fund2_report(ctx, &hypalg::upper(g_point)?))
}

pub fn fund2_report(ctx: &PointContext, g_upper: &CMat) -> Fund2Report {
    let m = ctx.m();
    let e = fund2_matrices(ctx, g_upper);
    let nj = &ctx.normal_j;
    let mut norm_d2: f64 = 0.0;
    for k in 0..m {
        for l in 0..m {
            norm_d2 = norm_d2.max(hypalg::max_abs(&nj.partial(&[k, m + l])));
        }
    }
    let scale = hypalg::max_abs(g_upper)
        * hypalg::max_abs(&ctx.normal_jets.inverse.value())
        * norm_d2
        * hypalg::max_abs(&nj.value());
    let rel = |x: &CMat| relative(hypalg::max_abs(x), scale);
    let c1 = hypalg::max_abs(&(&e[1] - e[0].adjoint()));
    let c2 = hypalg::max_abs(&(&e[3] - e[2].adjoint()));
    Fund2Report {
        eq1: rel(&e[0]),
        eq2: rel(&e[1]),
        eq3: rel(&e[2]),
        eq4: rel(&e[3]),
        conjugation: relative(c1.max(c2), scale),
    }
}

/// `2n` vectors of type (1,0), `g`-orthonormal, with `Z_{2i} = J Z̄_{2i−1}`.
#[derive(Clone, Debug)]
pub struct JAdaptedFrame {
    pub vectors: Vec<Vec<C64>>,
}

fn inner(g: &CMat, z: &[C64], w: &[C64]) -> C64 {
    let m = z.len();
    let mut acc = ZERO;
    for r in 0..m {
        for s in 0..m {
            acc += z[r] * w[s].conj() * g[(r, s)];
        }
    }
    acc
}

/// Gram–Schmidt on pairs `(Z, J Z̄)` starting from the coordinate basis.
pub fn j_adapted_frame(g: &CMat, j: &JTensor) -> Result<JAdaptedFrame> {
    let m = g.nrows();
    if m % 2 != 0 || j.dim() != m {
        return Err(QmaError::Structure("frame needs even matching dimensions".into()));
    }
    let mut vectors: Vec<Vec<C64>> = Vec::with_capacity(m);
    let mut cand = 0;
    while vectors.len() < m {
        if cand >= m {
            return Err(QmaError::Validation("Gram-Schmidt breakdown".into()));
        }
        let mut z = vec![ZERO; m];
        z[cand] = C64::new(1.0, 0.0);
        cand += 1;
        for v in &vectors {
            let c = inner(g, &z, v);
            for r in 0..m {
                z[r] -= c * v[r];
            }
        }
        let nrm = inner(g, &z, &z).re;
        if nrm <= 1e-10 {
            continue;
        }
        let s = 1.0 / nrm.sqrt();
        z.iter_mut().for_each(|v| *v *= s);
        let partner = j.apply_conj(&z);
        vectors.push(z);
        vectors.push(partner);
    }
    Ok(JAdaptedFrame { vectors })
}

impl JAdaptedFrame {
    /// Largest `|⟨Z_a, Z_b⟩ − δ_ab|`.
    pub fn orthonormality_defect(&self, g: &CMat) -> f64 {
        let mut d: f64 = 0.0;
        for (a, za) in self.vectors.iter().enumerate() {
            for (b, zb) in self.vectors.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                d = d.max((inner(g, za, zb) - C64::new(want, 0.0)).norm());
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct FrameReport {
    pub trace: f64,
    pub j_invariance: f64,
}

/// `Σ_j R(Z_j, Z̄_j)` relative to `‖R‖ · Σ|Z_j|²`.
pub fn frame_trace_check(r: &CurvatureTensor, frame: &JAdaptedFrame) -> f64 {
    let m = r.m;
    let mut tot = CMat::zeros(2 * m, 2 * m);
    let mut weight = 0.0;
    for z in &frame.vectors {
        let mut x = vec![ZERO; 2 * m];
        let mut y = vec![ZERO; 2 * m];
        for k in 0..m {
            x[k] = z[k];
            y[m + k] = z[k].conj();
            weight += z[k].norm_sqr();
        }
        tot += r.apply(&x, &y);
    }
    relative(hypalg::max_abs(&tot), r.max_abs() * weight)
}

/// `max ‖R(JX, JY) − R(X, Y)‖` over random real vector pairs, relative.
pub fn j_invariance_check<R: Rng + ?Sized>(
    r: &CurvatureTensor,
    j: &JTensor,
    pairs: usize,
    rng: &mut R,
) -> f64 {
    let m = r.m;
    let jf = j.full();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let mut real_vec = || {
            let xi: Vec<C64> = (0..m)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut v: Vec<C64> = xi.clone();
            v.extend(xi.iter().map(|z| z.conj()));
            nalgebra::DVector::from_vec(v)
        };
        let x = real_vec();
        let y = real_vec();
        let jx = &jf * &x;
        let jy = &jf * &y;
        let a = r.apply(x.as_slice(), y.as_slice());
        let b = r.apply(jx.as_slice(), jy.as_slice());
        let scale = r.max_abs() * x.norm() * y.norm();
        worst = worst.max(relative(hypalg::max_abs(&(b - a)), scale));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{EguchiHanson, FlatChart};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn flat_chart_has_no_curvature() {
        let ch = FlatChart::new(1);
        let ctx = PointContext::new(&ch, &[c(0.2), c(0.7)]).unwrap();
        assert_eq!(ctx.gamma.max_abs(), 0.0);
        assert_eq!(ctx.curvature.max_abs(), 0.0);
        let pre = verify_prop_pre(&ctx);
        assert_eq!(pre.max(), 0.0);
    }

    #[test]
    fn eh_christoffels_match_finite_differences() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let x0 = [C64::new(0.9, 0.2), C64::new(0.1, -0.3)];
        let cj = metric_jets(&eh, &x0).unwrap();
        let gam = christoffel(&cj).unwrap();
        assert!(gam.max_abs() > 1e-2);
        assert!(gam.symmetry_defect() < 1e-13);
        // Γ^i_{kl} = ĝ^{ij̄} ∂_k ĝ_{lj̄} with ∂_k = ½(∂_x − i∂_y) by central differences
        let metric_at = |z: [C64; 2]| metric_jets(&eh, &z).unwrap().metric.value();
        let up = cj.inverse.value();
        // central differences with one Richardson step
        let dk_at = |k: usize, h: f64| {
            let shift = |d: C64| {
                let mut z = x0;
                z[k] += d;
                metric_at(z)
            };
            let dx = (shift(c(h)) - shift(c(-h))) / C64::new(2.0 * h, 0.0);
            let dy = (shift(C64::new(0.0, h)) - shift(C64::new(0.0, -h))) / C64::new(2.0 * h, 0.0);
            (dx - dy * C64::new(0.0, 1.0)) * C64::new(0.5, 0.0)
        };
        for k in 0..2 {
            let h = 1e-3;
            let dk = (dk_at(k, h / 2.0) * C64::new(4.0, 0.0) - dk_at(k, h)) / C64::new(3.0, 0.0);
            for i in 0..2 {
                for l in 0..2 {
                    let fd: C64 = (0..2).map(|j| up[(i, j)] * dk[(l, j)]).sum();
                    assert!((fd - gam.get(i, k, l)).norm() < 1e-8, "{fd} vs {}", gam.get(i, k, l));
                }
            }
        }
    }

    #[test]
    fn eh_curvature_symmetries_and_ricci_flatness() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let ctx = PointContext::new(&eh, &[c(1.0), c(0.0)]).unwrap();
        assert!(ctx.curvature.max_abs() > 1e-2);
        assert!(ctx.curvature.kahler_symmetry_defect() <= 1e-9);
        assert!(hypalg::max_abs(&ctx.curvature.ricci()) <= 1e-8);
        let christ_normal = christoffel(&ctx.normal_jets).unwrap();
        assert!(christ_normal.max_abs() <= 1e-9);
    }

    #[test]
    fn eh_prop_pre_holds() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let ctx = PointContext::new(&eh, &[c(1.0), c(0.0)]).unwrap();
        let pre = verify_prop_pre(&ctx);
        assert!(pre.max() <= 1e-7, "{pre:?}");
    }

    #[test]
    fn eh_fund_identities() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let ctx = PointContext::new(&eh, &[c(1.0), c(0.0)]).unwrap();
        let f = verify_lemma_fund(&ctx, &ctx.metric()).unwrap();
        assert!(f.max() <= 1e-8, "{f:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = hypalg::random_hyperhermitian(&ctx.metric(), &ctx.j(), &mut rng).unwrap();
        let f2 = verify_lemma_fund2(&ctx, &g).unwrap();
        assert!(f2.max() <= 1e-7, "{f2:?}");
        assert!(f2.conjugation <= 1e-12);
        // non-hyperhermitian metrics are rejected
        let bad = hypalg::HermitianMetric::from_diagonal(&[1.0, 3.0]).into_comp();
        assert!(verify_lemma_fund(&ctx, &bad).is_err());
    }

    #[test]
    fn frame_is_adapted_and_orthonormal() {
        let j = JTensor::flat(1);
        let fr = j_adapted_frame(&CMat::identity(2, 2), &j).unwrap();
        assert_eq!(fr.vectors[0], vec![c(1.0), c(0.0)]);
        assert_eq!(fr.vectors[1], vec![c(0.0), c(1.0)]);

        let eh = EguchiHanson::new(1.0).unwrap();
        let ctx = PointContext::new(&eh, &[C64::new(0.6, 0.3), C64::new(0.4, -0.8)]).unwrap();
        let fr = j_adapted_frame(&ctx.metric(), &ctx.j()).unwrap();
        assert!(fr.orthonormality_defect(&ctx.metric()) <= 1e-12);
        assert!(frame_trace_check(&ctx.curvature, &fr) <= 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(j_invariance_check(&ctx.curvature, &ctx.j(), 50, &mut rng) <= 1e-8);
    }
}
