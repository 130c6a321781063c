//! Pointwise multilinear algebra of hyperhermitian structures.
//!
//! Component conventions (all matrices are indexed `[row][column]`):
//!
//! - `JTensor` stores `J_r^{s̄}` at `[r][s]`: `J ∂_r = J_r^{s̄} ∂_{s̄}`. The
//!   conjugate block `J_{r̄}^s = conj(J_r^{s̄})` is never stored.
//! - `HermitianMetric` stores `g_{rs̄} = g(∂_r, ∂_{s̄})` at `[r][s]`.
//! - Upper-index inverses follow `g^{ij̄} g_{kj̄} = δ^i_k`, i.e. the matrix
//!   of `g^{ij̄}` is `(G^{-1})^T`; see [`upper`].
//! - `QForm20` stores `Ω_{rs} = Ω(∂_r, ∂_s)`.
//!
//! With these, `Ω = A Gᵀ` and `G = Ω Aᴴ` where `A` is the matrix of `J`;
//! the flat structure on ℍ ≅ ℂ² with `g = Id` gives `Ω = dz¹∧dz²`.

use crate::{QmaError, Result, C64};
use nalgebra::DMatrix;
use rand::Rng;

pub type CMat = DMatrix<C64>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// The second complex structure in an `I`-holomorphic frame.
#[derive(Clone, Debug, PartialEq)]
pub struct JTensor {
    comp: CMat,
}

/// Hermitian component matrix `g_{rs̄}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMetric {
    comp: CMat,
}

/// Antisymmetric component matrix `Ω_{rs}` of a (2,0)-form.
#[derive(Clone, Debug, PartialEq)]
pub struct QForm20 {
    comp: CMat,
}

/// Residuals of the quaternionic relations.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct QuaternionicDiagnostic {
    pub j_squared: f64,
    pub anticommutator: f64,
    pub k_squared: f64,
}

impl QuaternionicDiagnostic {
    pub fn max(&self) -> f64 {
        self.j_squared.max(self.anticommutator).max(self.k_squared)
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn check_square(m: &CMat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(QmaError::Structure(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Matrix of upper-index components `g^{ij̄}` for a lower-index `g_{ij̄}`.
pub fn upper(g: &CMat) -> Result<CMat> {
    let inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| QmaError::Singular("metric is not invertible".into()))?;
    Ok(inv.transpose())
}

/// Largest deviation from Hermitian symmetry, relative to the largest entry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    max_abs(&(m - m.adjoint())) / scale
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    let h = (m + m.adjoint()).scale(0.5);
    if h.nrows() == 2 {
        let a = h[(0, 0)].re;
        let d = h[(1, 1)].re;
        let b = h[(0, 1)].norm();
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        return mid - rad;
    }
    let eig = h.symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

impl JTensor {
    pub fn new(comp: CMat) -> Result<Self> {
        check_square(&comp, "J")?;
        Ok(Self { comp })
    }

    /// Standard structure on ℍⁿ: `J_{2k-1}^{2k̄} = 1`, `J_{2k}^{2k-1̄} = -1`.
    pub fn flat(n: usize) -> Self {
        let m = 2 * n;
        let mut comp = CMat::zeros(m, m);
        for k in 0..n {
            comp[(2 * k, 2 * k + 1)] = C64::new(1.0, 0.0);
            comp[(2 * k + 1, 2 * k)] = C64::new(-1.0, 0.0);
        }
        Self { comp }
    }

    pub fn dim(&self) -> usize {
        self.comp.nrows()
    }

    pub fn comp(&self) -> &CMat {
        &self.comp
    }

    /// `J_r^{s̄}`.
    pub fn get(&self, r: usize, s: usize) -> C64 {
        self.comp[(r, s)]
    }

    /// `J_{r̄}^s = conj(J_r^{s̄})`.
    pub fn get_bar(&self, r: usize, s: usize) -> C64 {
        self.comp[(r, s)].conj()
    }

    /// `J` as a real operator on `T^{1,0} ⊕ T^{0,1}` acting on component
    /// columns `(X^r, X^{r̄})`.
    pub fn full(&self) -> CMat {
        let m = self.dim();
        let mut out = CMat::zeros(2 * m, 2 * m);
        for r in 0..m {
            for s in 0..m {
                // (JX)^{s̄} = X^r J_r^{s̄};  (JX)^s = X^{r̄} J_{r̄}^s
                out[(m + s, r)] = self.get(r, s);
                out[(s, m + r)] = self.get_bar(r, s);
            }
        }
        out
    }

    /// Residuals of `J² + Id`, `IJ + JI` and `K² + Id` with `K = IJ`.
    pub fn check_quaternionic(&self) -> Result<QuaternionicDiagnostic> {
        let m = self.dim();
        if m % 2 != 0 {
            return Err(QmaError::Structure(format!(
                "complex dimension {m} is odd; no quaternionic structure exists"
            )));
        }
        let j = self.full();
        let i_op = complex_structure_i(m);
        let id = CMat::identity(2 * m, 2 * m);
        let k = &i_op * &j;
        Ok(QuaternionicDiagnostic {
            j_squared: max_abs(&(&j * &j + &id)),
            anticommutator: max_abs(&(&i_op * &j + &j * &i_op)),
            k_squared: max_abs(&(&k * &k + &id)),
        })
    }

    /// `σ(H)_{rs̄} = J_r^{ā} J_{s̄}^b H_{bā}`, i.e. `A Hᵀ Aᴴ`.
    pub fn sigma(&self, h: &CMat) -> CMat {
        &self.comp * h.transpose() * self.comp.adjoint()
    }

    /// Action on a (1,0) vector `Z`: components of `J Z̄` in `T^{1,0}`.
    pub fn apply_conj(&self, z: &[C64]) -> Vec<C64> {
        let m = self.dim();
        (0..m)
            .map(|s| (0..m).map(|r| z[r].conj() * self.get_bar(r, s)).sum())
            .collect()
    }
}

/// `I` on `T^{1,0} ⊕ T^{0,1}`: `+i` on (1,0), `-i` on (0,1).
pub fn complex_structure_i(m: usize) -> CMat {
    let mut out = CMat::zeros(2 * m, 2 * m);
    for r in 0..m {
        out[(r, r)] = I;
        out[(m + r, m + r)] = -I;
    }
    out
}

impl HermitianMetric {
    /// Validates Hermitian symmetry (relative tolerance 1e-12).
    pub fn new(comp: CMat) -> Result<Self> {
        check_square(&comp, "metric")?;
        let defect = hermitian_defect(&comp);
        if defect > 1e-12 {
            return Err(QmaError::Validation(format!(
                "matrix is not Hermitian (defect {defect:.3e})"
            )));
        }
        Ok(Self { comp })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            comp: CMat::identity(m, m),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let m = d.len();
        let mut comp = CMat::zeros(m, m);
        for (k, v) in d.iter().enumerate() {
            comp[(k, k)] = C64::new(*v, 0.0);
        }
        Self { comp }
    }

    pub fn dim(&self) -> usize {
        self.comp.nrows()
    }

    pub fn comp(&self) -> &CMat {
        &self.comp
    }

    pub fn into_comp(self) -> CMat {
        self.comp
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.comp)
    }

    pub fn is_positive(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }

    pub fn upper(&self) -> Result<CMat> {
        upper(&self.comp)
    }

    /// Components `ω_{rs̄} = ω(∂_r, ∂_{s̄}) = i g_{rs̄}` of the fundamental
    /// (1,1)-form `ω = g(I·,·)`.
    pub fn omega11(&self) -> CMat {
        self.comp.map(|z| I * z)
    }
}

impl QForm20 {
    pub fn new(comp: CMat) -> Result<Self> {
        check_square(&comp, "(2,0)-form")?;
        let scale = max_abs(&comp).max(f64::MIN_POSITIVE);
        let defect = max_abs(&(&comp + comp.transpose())) / scale;
        if defect > 1e-12 {
            return Err(QmaError::Validation(format!(
                "(2,0)-form is not antisymmetric (defect {defect:.3e})"
            )));
        }
        Ok(Self { comp })
    }

    /// `dz¹∧dz² + dz³∧dz⁴ + …`.
    pub fn flat(n: usize) -> Self {
        let m = 2 * n;
        let mut comp = CMat::zeros(m, m);
        for k in 0..n {
            comp[(2 * k, 2 * k + 1)] = C64::new(1.0, 0.0);
            comp[(2 * k + 1, 2 * k)] = C64::new(-1.0, 0.0);
        }
        Self { comp }
    }

    pub fn dim(&self) -> usize {
        self.comp.nrows()
    }

    pub fn comp(&self) -> &CMat {
        &self.comp
    }

    /// Residual of `Ω(J·,J·) = conj Ω(·,·)`, i.e. `A conj(Ω) Aᵀ − Ω`.
    pub fn q_real_residual(&self, j: &JTensor) -> f64 {
        let a = j.comp();
        max_abs(&(a * self.comp.conjugate() * a.transpose() - &self.comp))
    }
}

/// See [`JTensor::check_quaternionic`].
pub fn check_quaternionic(j: &JTensor) -> Result<QuaternionicDiagnostic> {
    j.check_quaternionic()
}

/// Max residual of `g_{rs̄} − J_r^{ā} J_{s̄}^b g_{bā}`.
pub fn is_hyperhermitian(g: &CMat, j: &JTensor) -> Result<f64> {
    check_square(g, "metric")?;
    let defect = hermitian_defect(g);
    if defect > 1e-12 {
        return Err(QmaError::Validation(format!(
            "metric is not Hermitian (defect {defect:.3e})"
        )));
    }
    Ok(max_abs(&(g - j.sigma(g))))
}

/// `½(H + σ(H))`. Hermitian and J-invariant; positivity is not guaranteed.
pub fn j_average(h: &CMat, j: &JTensor) -> Result<CMat> {
    check_square(h, "matrix")?;
    if h.nrows() != j.dim() {
        return Err(QmaError::Structure("dimension mismatch".into()));
    }
    Ok((h + j.sigma(h)).scale(0.5))
}

/// `Ω_{rs} = g(J∂_r, ∂_s) = J_r^{ā} g_{sā}`.
pub fn omega_from_gj(g: &HermitianMetric, j: &JTensor) -> QForm20 {
    QForm20 {
        comp: j.comp() * g.comp().transpose(),
    }
}

/// Hermitian matrix of `2Re Ω(·, J·)`: `g_{st̄} = Ω(∂_s, J∂_{t̄}) = J_{t̄}^r Ω_{sr}`.
pub fn g_from_omegaj(omega: &QForm20, j: &JTensor) -> Result<HermitianMetric> {
    let g = g_from_omegaj_unchecked(omega, j);
    let scale = max_abs(&g).max(1.0);
    if max_abs(&(&g - g.adjoint())) > 1e-10 * scale {
        return Err(QmaError::Validation("(2,0)-form is not q-real".into()));
    }
    let lam = min_eigenvalue(&g);
    if lam <= 0.0 {
        return Err(QmaError::NotMetricForm(lam));
    }
    Ok(HermitianMetric {
        comp: (&g + g.adjoint()).scale(0.5),
    })
}

/// Linear map `Ω ↦ Ω Aᴴ` without any positivity or reality check.
pub fn g_from_omegaj_unchecked(omega: &QForm20, j: &JTensor) -> CMat {
    omega.comp() * j.comp().adjoint()
}

/// Minimum eigenvalue of the Hermitian form `Z ↦ Ω(Z, J Z̄)`.
pub fn q_positive_check(omega: &QForm20, j: &JTensor) -> f64 {
    min_eigenvalue(&g_from_omegaj_unchecked(omega, j))
}

/// Residual of `ω(J·,J·) = −ω(·,·)` on (1,1) components.
pub fn omega_j_anti_invariance(g: &HermitianMetric, j: &JTensor) -> f64 {
    let omega = g.omega11();
    // ω(J∂_r, J∂_s̄) = J_r^{ā} J_{s̄}^b ω(∂_ā, ∂_b) and ω(∂_ā, ∂_b) = −ω_{bā}.
    let pulled = -j.sigma(&omega);
    max_abs(&(pulled + &omega))
}

/// Pfaffian of an even-dimensional antisymmetric matrix by skew Gaussian
/// elimination with partial pivoting (Parlett–Reid).
pub fn pfaffian(m: &CMat) -> Result<C64> {
    check_square(m, "matrix")?;
    let n = m.nrows();
    if n % 2 != 0 {
        return Err(QmaError::Structure(format!(
            "Pfaffian of odd dimension {n} is undefined"
        )));
    }
    let mut a = m.clone();
    let mut pf = C64::new(1.0, 0.0);
    let mut k = 0;
    while k + 1 < n {
        // pivot: largest entry in column k below the diagonal
        let mut kp = k + 1;
        let mut best = a[(k + 1, k)].norm();
        for i in k + 2..n {
            let v = a[(i, k)].norm();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        let piv = a[(k, k + 1)];
        if piv.norm() == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        pf *= piv;
        if k + 2 < n {
            let tau: Vec<C64> = (k + 2..n).map(|c| a[(k, c)] / piv).collect();
            let col: Vec<C64> = (k + 2..n).map(|r| a[(r, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    let upd = tau[ii] * col[jj] - col[ii] * tau[jj];
                    a[(i, j)] += upd;
                }
            }
        }
        k += 2;
    }
    Ok(pf)
}

/// `tr_A B = A^{ij̄} B_{ij̄} = tr(A⁻¹ B)`.
pub fn trace_pair(a: &CMat, b: &CMat) -> Result<f64> {
    let au = upper(a)?;
    Ok(au.component_mul(b).sum().re)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `RHS − LHS` of `tr_ĝ g_φ ≤ (tr_{g_φ} ĝ)^{2n−1} / (2n−1)! · det g_φ / det ĝ`.
pub fn trace_inequality_residual(g_hat: &CMat, g_phi: &CMat, n: usize) -> Result<f64> {
    if g_hat.nrows() != 2 * n || g_phi.nrows() != 2 * n {
        return Err(QmaError::Structure(format!(
            "matrices must be {0}x{0} for quaternionic dimension {n}",
            2 * n
        )));
    }
    let ratio = g_phi.determinant().re / g_hat.determinant().re;
    trace_inequality_residual_with_ratio(g_hat, g_phi, n, ratio)
}

/// As [`trace_inequality_residual`] with an explicit volume ratio
/// `ω_φ^{2n} / ω̂^{2n}`.
pub fn trace_inequality_residual_with_ratio(
    g_hat: &CMat,
    g_phi: &CMat,
    n: usize,
    volume_ratio: f64,
) -> Result<f64> {
    let m = 2 * n;
    if g_hat.nrows() != m || g_phi.nrows() != m {
        return Err(QmaError::Structure("dimension mismatch".into()));
    }
    let lhs = trace_pair(g_hat, g_phi)?;
    let tr_back = trace_pair(g_phi, g_hat)?;
    let rhs = tr_back.powi(m as i32 - 1) / factorial(m - 1) * volume_ratio;
    Ok(rhs - lhs)
}

/// Random Hermitian matrix with entries of order one.
pub fn random_hermitian<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CMat {
    let x = CMat::from_fn(m, m, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    (&x + x.adjoint()).scale(0.5)
}

/// Positive hyperhermitian test metric `base + t·j_average(H)` with
/// `t = 0.5/(1+‖H‖)` halved until positive definite.
pub fn random_hyperhermitian<R: Rng + ?Sized>(
    base: &CMat,
    j: &JTensor,
    rng: &mut R,
) -> Result<CMat> {
    let m = base.nrows();
    let h = random_hermitian(m, rng);
    let avg = j_average(&h, j)?;
    let mut t = 0.5 / (1.0 + max_abs(&h));
    for _ in 0..60 {
        let g = base + avg.scale(t);
        if min_eigenvalue(&g) > 0.0 {
            return Ok(g);
        }
        t *= 0.5;
    }
    Err(QmaError::Validation(
        "base metric is not positive definite".into(),
    ))
}

/// Positive Hermitian matrix, scaled like `base`, whose hyperhermitian
/// defect exceeds a tenth of its size.
pub fn random_non_hyperhermitian<R: Rng + ?Sized>(
    base: &CMat,
    j: &JTensor,
    rng: &mut R,
) -> Result<CMat> {
    let m = base.nrows();
    let size = max_abs(base);
    for _ in 0..100 {
        let x = random_hermitian(m, rng);
        let cand = (&x * &x + CMat::identity(m, m).scale(0.1)).scale(size);
        if is_hyperhermitian(&cand, j)? > 0.1 * size {
            return Ok(cand);
        }
    }
    Err(QmaError::Validation(
        "could not draw a non-hyperhermitian metric".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn flat_j_is_quaternionic() {
        let j = JTensor::flat(1);
        assert_eq!(j.check_quaternionic().unwrap().max(), 0.0);
        let j2 = JTensor::flat(2);
        assert_eq!(j2.check_quaternionic().unwrap().max(), 0.0);
    }

    #[test]
    fn identity_shaped_j_fails_by_two() {
        let j = JTensor::new(CMat::identity(2, 2)).unwrap();
        let d = j.check_quaternionic().unwrap();
        assert!((d.j_squared - 2.0).abs() < 1e-15);
        assert!((d.max() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn odd_dimension_is_structural_error() {
        let j = JTensor::new(CMat::identity(3, 3)).unwrap();
        assert!(matches!(
            j.check_quaternionic(),
            Err(QmaError::Structure(_))
        ));
    }

    #[test]
    fn hyperhermitian_examples() {
        let j = JTensor::flat(1);
        assert_eq!(is_hyperhermitian(&CMat::identity(2, 2), &j).unwrap(), 0.0);
        let g = HermitianMetric::from_diagonal(&[1.0, 2.0]);
        assert!((is_hyperhermitian(g.comp(), &j).unwrap() - 1.0).abs() < 1e-15);
        let mut bad = CMat::identity(2, 2);
        bad[(0, 1)] = c(1.0);
        assert!(matches!(
            is_hyperhermitian(&bad, &j),
            Err(QmaError::Validation(_))
        ));
    }

    #[test]
    fn j_average_examples() {
        let j = JTensor::flat(1);
        let h = HermitianMetric::from_diagonal(&[1.0, 3.0]);
        let avg = j_average(h.comp(), &j).unwrap();
        assert!(max_abs(&(avg - CMat::identity(2, 2).scale(2.0))) < 1e-15);
        let id = j_average(&CMat::identity(2, 2), &j).unwrap();
        assert!(max_abs(&(id - CMat::identity(2, 2))) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let j4 = JTensor::flat(2);
        let h = random_hermitian(4, &mut rng);
        let avg = j_average(&h, &j4).unwrap();
        assert!(is_hyperhermitian(&avg, &j4).unwrap() <= 1e-14);
    }

    #[test]
    fn flat_omega_round_trip() {
        let j = JTensor::flat(1);
        let om = omega_from_gj(&HermitianMetric::identity(2), &j);
        assert_eq!(om.comp()[(0, 1)], c(1.0));
        assert_eq!(om.comp()[(1, 0)], c(-1.0));
        assert_eq!(om.comp()[(0, 0)], c(0.0));
        let g = g_from_omegaj(&QForm20::flat(1), &j).unwrap();
        assert!(max_abs(&(g.comp() - CMat::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2] {
            let j = JTensor::flat(n);
            let g = random_hyperhermitian(&CMat::identity(2 * n, 2 * n), &j, &mut rng).unwrap();
            let g = HermitianMetric::new(g).unwrap();
            let om = omega_from_gj(&g, &j);
            assert!(om.q_real_residual(&j) < 1e-14);
            let back = g_from_omegaj(&om, &j).unwrap();
            assert!(max_abs(&(back.comp() - g.comp())) <= 1e-14);
            assert!(omega_j_anti_invariance(&g, &j) < 1e-13);
        }
    }

    #[test]
    fn negative_form_is_not_metric() {
        let j = JTensor::flat(1);
        let neg = QForm20::new(-QForm20::flat(1).comp()).unwrap();
        assert!((q_positive_check(&QForm20::flat(1), &j) - 1.0).abs() < 1e-15);
        assert!((q_positive_check(&neg, &j) + 1.0).abs() < 1e-15);
        assert!(matches!(
            g_from_omegaj(&neg, &j),
            Err(QmaError::NotMetricForm(_))
        ));
    }

    #[test]
    fn pfaffian_small_cases() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0), c(3.0), c(-3.0), c(0.0)]);
        assert_eq!(pfaffian(&m).unwrap(), c(3.0));
        let (a, b) = (2.5, -1.5);
        let mut blk = CMat::zeros(4, 4);
        blk[(0, 1)] = c(a);
        blk[(1, 0)] = c(-a);
        blk[(2, 3)] = c(b);
        blk[(3, 2)] = c(-b);
        assert!((pfaffian(&blk).unwrap() - c(a * b)).norm() < 1e-15);
        assert!(pfaffian(&CMat::zeros(3, 3)).is_err());
    }

    #[test]
    fn pfaffian_squares_to_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = CMat::from_fn(6, 6, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let a = &x - x.transpose();
        let pf = pfaffian(&a).unwrap();
        let det = a.determinant();
        assert!((pf * pf - det).norm() / det.norm() <= 1e-12);
    }

    #[test]
    fn trace_pair_examples() {
        let id = CMat::identity(2, 2);
        let b = HermitianMetric::from_diagonal(&[2.0, 3.0]);
        assert!((trace_pair(&id, b.comp()).unwrap() - 5.0).abs() < 1e-15);
        assert!((trace_pair(b.comp(), b.comp()).unwrap() - 2.0).abs() < 1e-15);
        assert!((trace_pair(&id.scale(2.0), &id).unwrap() - 1.0).abs() < 1e-15);
        assert!(trace_pair(&CMat::zeros(2, 2), &id).is_err());
    }

    #[test]
    fn trace_inequality_examples() {
        let id = CMat::identity(2, 2);
        assert!(trace_inequality_residual(&id, &id, 1).unwrap().abs() < 1e-15);
        let b = HermitianMetric::from_diagonal(&[1.0, 4.0]);
        assert!(trace_inequality_residual(&id, b.comp(), 1).unwrap().abs() < 1e-14);
        assert!(trace_inequality_residual(&id, &id, 2).is_err());
    }

    #[test]
    fn trace_inequality_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = random_hermitian(4, &mut rng) + CMat::identity(4, 4).scale(2.5);
            let b = random_hermitian(4, &mut rng) + CMat::identity(4, 4).scale(2.5);
            if min_eigenvalue(&a) <= 0.0 || min_eigenvalue(&b) <= 0.0 {
                continue;
            }
            let r = trace_inequality_residual(&a, &b, 2).unwrap();
            let lhs = trace_pair(&a, &b).unwrap();
            assert!(r >= -1e-12 * lhs, "residual {r}");
        }
    }
}
