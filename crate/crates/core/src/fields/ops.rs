//! The operators `∂∂_J`, `φ ↦ g_φ` and both residual forms of the equation
//! on the flat torus.

use super::grid::{integrate, DerivPattern, ScalarField, TorusGrid};
use crate::hypalg::{self, CMat, HermitianMetric, JTensor, QForm20};
use crate::{par, QmaError, Result, C64};
use rand::Rng;
use std::f64::consts::PI;

/// Constant hyperhermitian background `(g, J, Ω)` of the flat torus.
#[derive(Clone, Debug)]
pub struct FlatBackground {
    n: usize,
    g: HermitianMetric,
    j: JTensor,
    omega: QForm20,
    pf_omega: C64,
    det_g: f64,
}

impl FlatBackground {
    /// `g = Id` with the standard quaternionic structure.
    pub fn standard(n: usize) -> Self {
        Self::new(HermitianMetric::identity(2 * n), JTensor::flat(n)).expect("standard structure")
    }

    pub fn new(g: HermitianMetric, j: JTensor) -> Result<Self> {
        let m = g.dim();
        if m % 2 != 0 || j.dim() != m {
            return Err(QmaError::Structure("background dimensions do not match".into()));
        }
        let q = j.check_quaternionic()?.max();
        if q > 1e-10 {
            return Err(QmaError::Validation(format!("J is not quaternionic (defect {q:.3e})")));
        }
        let hh = hypalg::is_hyperhermitian(g.comp(), &j)?;
        if hh > 1e-10 {
            return Err(QmaError::Validation(format!(
                "background metric is not hyperhermitian (defect {hh:.3e})"
            )));
        }
        let omega = hypalg::omega_from_gj(&g, &j);
        let pf_omega = hypalg::pfaffian(omega.comp())?;
        let det_g = g.comp().determinant().re;
        Ok(Self {
            n: m / 2,
            g,
            j,
            omega,
            pf_omega,
            det_g,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        2 * self.n
    }

    pub fn g(&self) -> &HermitianMetric {
        &self.g
    }

    pub fn j(&self) -> &JTensor {
        &self.j
    }

    pub fn omega(&self) -> &QForm20 {
        &self.omega
    }

    pub fn pf_omega(&self) -> C64 {
        self.pf_omega
    }

    pub fn det_g(&self) -> f64 {
        self.det_g
    }
}

/// One `m×m` complex matrix per grid point.
#[derive(Clone, Debug)]
pub struct MatrixField {
    grid: TorusGrid,
    m: usize,
    data: Vec<C64>,
}

/// Hermitian (1,1) components `g_{rs̄}` per point.
pub type MetricField = MatrixField;
/// Antisymmetric (2,0) components `Ω_{rs}` per point.
pub type QFormField = MatrixField;

impl MatrixField {
    pub fn from_fn<F>(grid: &TorusGrid, m: usize, f: F) -> Self
    where
        F: Fn(usize) -> CMat + Sync + Send,
    {
        let mats = par::map_range(grid.len(), f);
        let mut data = Vec::with_capacity(grid.len() * m * m);
        for mat in mats {
            for r in 0..m {
                for s in 0..m {
                    data.push(mat[(r, s)]);
                }
            }
        }
        Self {
            grid: grid.clone(),
            m,
            data,
        }
    }

    pub fn constant(grid: &TorusGrid, mat: &CMat) -> Self {
        Self::from_fn(grid, mat.nrows(), |_| mat.clone())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn at(&self, p: usize) -> CMat {
        let m = self.m;
        CMat::from_row_slice(m, m, &self.data[p * m * m..(p + 1) * m * m])
    }

    /// `sup_p max_{rs} |self − other|`.
    pub fn max_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        par::max_by(self.data.len(), |i| (self.data[i] - other.data[i]).norm())
    }

    /// Pointwise scalar map.
    pub fn map_points<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&CMat) -> f64 + Sync + Send,
    {
        par::map_range(self.grid.len(), |p| f(&self.at(p)))
    }

    /// Minimum eigenvalue of each (Hermitian) matrix.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.map_points(hypalg::min_eigenvalue)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Complex Hessian `φ_{rs̄}` as `m²` complex fields.
#[derive(Clone, Debug)]
pub struct Hessian {
    m: usize,
    comp: Vec<Vec<C64>>,
}

impl Hessian {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn field(&self, r: usize, s: usize) -> &[C64] {
        &self.comp[r * self.m + s]
    }

    pub fn at(&self, p: usize) -> CMat {
        CMat::from_fn(self.m, self.m, |r, s| self.comp[r * self.m + s][p])
    }
}

/// `φ_{rs̄}`; the lower triangle is filled by `φ_{sr̄} = conj φ_{rs̄}`.
pub fn hessian(phi: &ScalarField) -> Hessian {
    let m = phi.grid().m();
    let mut comp = vec![Vec::new(); m * m];
    for r in 0..m {
        for s in r..m {
            let d = phi.derivative(&DerivPattern::new(&[r], &[s]));
            if s != r {
                comp[s * m + r] = d.iter().map(|v| v.conj()).collect();
            }
            comp[r * m + s] = d;
        }
    }
    Hessian { m, comp }
}

fn check_j(grid: &TorusGrid, j: &JTensor) -> Result<()> {
    if j.dim() != grid.m() {
        return Err(QmaError::Structure(format!(
            "J has dimension {}, grid needs {}",
            j.dim(),
            grid.m()
        )));
    }
    Ok(())
}

/// Pointwise `∂∂_Jφ` normalized to match the metric correction of
/// [`omega_phi`]: with `∂_Jφ = J⁻¹∂̄φ = −J_r^{s̄}φ_{s̄} dz^r` one gets
/// `(∂∂_Jφ)_{kr} = J_k^{s̄}φ_{rs̄} − J_r^{s̄}φ_{ks̄}`; the returned field is
/// half of that.
pub fn dd_j_matrix(hess: &CMat, j: &JTensor) -> CMat {
    let a = j.comp();
    let apt = a * hess.transpose();
    (&apt - apt.transpose()).scale(0.5)
}

pub fn dd_j(phi: &ScalarField, j: &JTensor) -> Result<QFormField> {
    check_j(phi.grid(), j)?;
    let h = hessian(phi);
    Ok(dd_j_from_hessian(phi.grid(), &h, j))
}

pub fn dd_j_from_hessian(grid: &TorusGrid, h: &Hessian, j: &JTensor) -> QFormField {
    MatrixField::from_fn(grid, h.dim(), |p| dd_j_matrix(&h.at(p), j))
}

/// `g_{φ rs̄} = g_{rs̄} + ½(φ_{rs̄} + J_r^{ā}J_{s̄}^b φ_{bā})` at one point.
pub fn omega_phi_matrix(bg: &FlatBackground, hess: &CMat) -> CMat {
    bg.g().comp() + (hess + bg.j().sigma(hess)).scale(0.5)
}

pub fn omega_phi(bg: &FlatBackground, phi: &ScalarField) -> Result<MetricField> {
    check_j(phi.grid(), bg.j())?;
    let h = hessian(phi);
    Ok(omega_phi_from_hessian(phi.grid(), bg, &h))
}

pub fn omega_phi_from_hessian(grid: &TorusGrid, bg: &FlatBackground, h: &Hessian) -> MetricField {
    MatrixField::from_fn(grid, h.dim(), |p| omega_phi_matrix(bg, &h.at(p)))
}

/// `Ω_φ = Ω + ∂∂_Jφ` per point.
pub fn omega20_phi(bg: &FlatBackground, phi: &ScalarField) -> Result<QFormField> {
    let dd = dd_j(phi, bg.j())?;
    let om = bg.omega().comp().clone();
    Ok(MatrixField::from_fn(phi.grid(), bg.m(), |p| &om + dd.at(p)))
}

/// The (2,0) route: `g_from_omegaJ(Ω + ∂∂_Jφ)` per point, without positivity checks.
pub fn metric_via_20(bg: &FlatBackground, phi: &ScalarField) -> Result<MetricField> {
    let om = omega20_phi(bg, phi)?;
    let j = bg.j().clone();
    Ok(MatrixField::from_fn(phi.grid(), bg.m(), |p| {
        hypalg::g_from_omegaj_unchecked(&QForm20::new(om.at(p)).expect("antisymmetric"), &j)
    }))
}

/// Largest q-reality defect of `∂∂_Jφ` over the grid.
pub fn q_real_defect(dd: &QFormField, j: &JTensor) -> f64 {
    par::max_by(dd.grid().len(), |p| {
        let f = dd.at(p);
        // Ω(J∂_ā, J∂_c̄) = conj Ω_{ac}  ⇔  A conj(Ω) Aᵀ = Ω
        let pulled = j.comp() * f.map(|v| v.conj()) * j.comp().transpose();
        hypalg::max_abs(&(pulled - f))
    })
}

/// Largest antisymmetry defect of a (2,0) field.
pub fn antisymmetry_defect(f: &QFormField) -> f64 {
    par::max_by(f.grid().len(), |p| {
        let a = f.at(p);
        hypalg::max_abs(&(&a + a.transpose()))
    })
}

/// `Pf(Ω_φ)/Pf(Ω)` per point (complex; real for q-real Ω_φ).
pub fn pf_ratio(bg: &FlatBackground, phi: &ScalarField) -> Result<Vec<C64>> {
    let om = omega20_phi(bg, phi)?;
    let pf0 = bg.pf_omega();
    let vals = par::map_range(phi.grid().len(), |p| hypalg::pfaffian(&om.at(p)).map(|v| v / pf0));
    vals.into_iter().collect()
}

/// `det g_φ / det g` per point.
pub fn det_ratio(bg: &FlatBackground, phi: &ScalarField) -> Result<Vec<f64>> {
    let g = omega_phi(bg, phi)?;
    let d0 = bg.det_g();
    Ok(g.map_points(|a| a.determinant().re / d0))
}

fn check_f(phi: &ScalarField, f: &ScalarField) -> Result<()> {
    if phi.grid() != f.grid() {
        return Err(QmaError::Structure("φ and F live on different grids".into()));
    }
    Ok(())
}

/// `log(Pf(Ω+∂∂_Jφ)/Pf(Ω)) − F − b`.
pub fn residual_20(bg: &FlatBackground, phi: &ScalarField, f: &ScalarField, b: f64) -> Result<ScalarField> {
    check_f(phi, f)?;
    let om = omega20_phi(bg, phi)?;
    let j = bg.j().clone();
    let lam = par::min_by(phi.grid().len(), |p| {
        hypalg::q_positive_check(&QForm20::new(om.at(p)).expect("antisymmetric"), &j)
    });
    if !(lam > 0.0) {
        return Err(QmaError::ConeExit(lam));
    }
    let ratio = pf_ratio(bg, phi)?;
    let v = par::map_range(ratio.len(), |p| ratio[p].re.ln() - f.values()[p] - b);
    ScalarField::new(phi.grid(), v)
}

/// `½ log(det g_φ/det g) − F − b`.
pub fn residual_11(bg: &FlatBackground, phi: &ScalarField, f: &ScalarField, b: f64) -> Result<ScalarField> {
    check_f(phi, f)?;
    let g = omega_phi(bg, phi)?;
    let lam = g.min_eigenvalue();
    if !(lam > 0.0) {
        return Err(QmaError::ConeExit(lam));
    }
    let d0 = bg.det_g();
    let ld = g.map_points(|a| 0.5 * (a.determinant().re / d0).ln());
    let v = par::map_range(ld.len(), |p| ld[p] - f.values()[p] - b);
    ScalarField::new(phi.grid(), v)
}

/// `∫ω_φ^{2n} − ∫ω^{2n}` in units of `ω^{2n}`, i.e. `∫(det g_φ/det g − 1)`.
pub fn volume_check(bg: &FlatBackground, phi: &ScalarField) -> Result<f64> {
    let r = det_ratio(bg, phi)?;
    Ok(integrate(phi.grid(), &r) - phi.grid().volume())
}

/// `∫ Pf(Ω_φ)/Pf(Ω) − Vol`: the quantity that is conserved on the torus,
/// since `Ω_φ^n − Ω^n` is `∂`-exact.
pub fn mixed_volume_check(bg: &FlatBackground, phi: &ScalarField) -> Result<f64> {
    let r: Vec<f64> = pf_ratio(bg, phi)?.iter().map(|v| v.re).collect();
    Ok(integrate(phi.grid(), &r) - phi.grid().volume())
}

/// Random real trigonometric polynomial with frequencies in `[−kmax, kmax]`,
/// zero mean and sup norm `amp`.
pub fn random_band_limited<R: Rng + ?Sized>(
    grid: &TorusGrid,
    kmax: i64,
    modes: usize,
    amp: f64,
    rng: &mut R,
) -> ScalarField {
    let d = grid.axes();
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..modes)
        .map(|_| {
            let mut k: Vec<f64> = (0..d).map(|_| rng.gen_range(-kmax..=kmax) as f64).collect();
            if k.iter().all(|v| *v == 0.0) {
                k[rng.gen_range(0..d)] = 1.0;
            }
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let f = ScalarField::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(k, c, th)| {
                let dot: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
                c * (2.0 * PI * dot + th).cos()
            })
            .sum()
    });
    let f = f.add_const(-f.mean());
    let s = f.sup_norm();
    if s == 0.0 {
        f
    } else {
        f.scale(amp / s)
    }
}
