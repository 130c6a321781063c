//! Kähler potential charts and the tensor jets they induce.

use super::jet::Jet;
use super::matrix::JetMatrix;
use crate::hypalg::{self, CMat};
use crate::{QmaError, Result, C64};

/// Jet order of the potential; metric and `J` jets end up at order 2.
pub const POTENTIAL_ORDER: usize = 4;

/// An `I`-holomorphic chart of a hyperkähler manifold described by a Kähler
/// potential `K` and the holomorphic symplectic form `Ω`.
pub trait KahlerPotential: Send + Sync {
    /// Complex dimension `m`.
    fn dim(&self) -> usize;

    fn name(&self) -> &str;

    /// `K` as a jet, given holomorphic coordinate jets `z^r`.
    fn potential(&self, z: &[Jet]) -> Result<Jet>;

    /// `Ω_{rs}(z)` as holomorphic jets.
    fn omega(&self, z: &[Jet]) -> Result<JetMatrix> {
        let nv = z[0].nv();
        let order = z.iter().map(|j| j.order()).min().unwrap_or(0);
        Ok(JetMatrix::constant(
            hypalg::QForm20::flat(self.dim() / 2).comp(),
            nv,
            order,
        ))
    }

    fn in_domain(&self, z: &[C64]) -> bool;
}

/// `K = Σ |z^r|²` on ℍⁿ.
#[derive(Clone, Debug)]
pub struct FlatChart {
    n: usize,
}

impl FlatChart {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        Self { n }
    }
}

impl KahlerPotential for FlatChart {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn name(&self) -> &str {
        "flat"
    }

    fn potential(&self, z: &[Jet]) -> Result<Jet> {
        let mut k = z[0].mul(&z[0].conj());
        for zr in &z[1..] {
            k = k.add(&zr.mul(&zr.conj()));
        }
        Ok(k)
    }

    fn in_domain(&self, z: &[C64]) -> bool {
        z.len() == self.dim()
    }
}

/// Eguchi–Hanson metric on `T*CP¹` in the affine coordinates of `ℂ²∖{0}`:
/// `K = s + a² log u − a² log(a² + s)`, `u = |z|²`, `s = √(u² + a⁴)`.
///
/// With `Ω = dz¹∧dz²` this potential satisfies `det ĝ = 1`.
#[derive(Clone, Debug)]
pub struct EguchiHanson {
    a: f64,
}

impl EguchiHanson {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(QmaError::Config(format!("Eguchi-Hanson parameter must be positive, got {a}")));
        }
        Ok(Self { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

impl KahlerPotential for EguchiHanson {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "eh"
    }

    fn potential(&self, z: &[Jet]) -> Result<Jet> {
        let a2 = self.a * self.a;
        let u = z[0].mul(&z[0].conj()).add(&z[1].mul(&z[1].conj()));
        let s = u.mul(&u).add_const(C64::new(a2 * a2, 0.0)).sqrt()?;
        let k = s
            .add(&u.ln()?.scale_re(a2))
            .sub(&s.add_const(C64::new(a2, 0.0)).ln()?.scale_re(a2));
        Ok(k)
    }

    fn in_domain(&self, z: &[C64]) -> bool {
        z.len() == 2 && z[0].norm_sqr() + z[1].norm_sqr() > 1e-8
    }
}

/// Tensor jets of a chart at a base point, as functions of the chart
/// variables `(v, v̄)`.
#[derive(Clone, Debug)]
pub struct ChartJets {
    pub m: usize,
    pub potential: Jet,
    /// `ĝ_{rs̄}` (order 2).
    pub metric: JetMatrix,
    /// `ĝ^{rs̄}` in the [`hypalg::upper`] layout (order 2).
    pub inverse: JetMatrix,
    /// `Ω_{rs}` in the chart variables (order 3).
    pub omega: JetMatrix,
    /// `J_r^{s̄}` recovered from `Ω = A ĝᵀ` (order 2).
    pub j: JetMatrix,
}

/// Jets of all chart tensors for coordinate jets `z^r(v)`, `v` ranging over
/// `2m` variables.
pub fn chart_jets(chart: &dyn KahlerPotential, z: &[Jet]) -> Result<ChartJets> {
    let m = chart.dim();
    if z.len() != m || z[0].nv() != 2 * m {
        return Err(QmaError::Structure(format!(
            "expected {m} coordinate jets in {} variables",
            2 * m
        )));
    }
    let base: Vec<C64> = z.iter().map(|j| j.value()).collect();
    if !chart.in_domain(&base) {
        return Err(QmaError::Validation(format!("point {base:?} outside chart domain")));
    }
    let k = chart.potential(z)?;
    let mut metric = JetMatrix::from_fn(m, |_, _| k.clone());
    for r in 0..m {
        let kr = k.deriv(r)?;
        for s in 0..m {
            metric.set(r, s, kr.deriv(m + s)?);
        }
    }
    let g0 = metric.value();
    let lam = hypalg::min_eigenvalue(&g0);
    if lam <= 0.0 {
        return Err(QmaError::NotMetricForm(lam));
    }
    let inverse = metric.inverse()?.transpose();
    // Ω'_{ab} = ∂_a z^r ∂_b z^s Ω_{rs}
    let dz = JetMatrix::from_fn(m, |r, a| z[r].deriv(a).expect("order >= 1"));
    let om = chart.omega(z)?;
    let omega = dz.transpose().matmul(&om).matmul(&dz);
    let j = omega.matmul(&metric.transpose().inverse()?);
    Ok(ChartJets {
        m,
        potential: k,
        metric,
        inverse,
        omega,
        j,
    })
}

/// Coordinate jets `z0 + v` of the chart itself.
pub fn identity_coords(z0: &[C64]) -> Vec<Jet> {
    let m = z0.len();
    (0..m)
        .map(|r| Jet::var(2 * m, POTENTIAL_ORDER, r, z0[r]))
        .collect()
}

/// Metric jets (and everything else) in the original chart at `z0`.
pub fn metric_jets(chart: &dyn KahlerPotential, z0: &[C64]) -> Result<ChartJets> {
    if z0.len() != chart.dim() {
        return Err(QmaError::Structure("base point has wrong dimension".into()));
    }
    chart_jets(chart, &identity_coords(z0))
}

/// `J` at a point, recovered from `ĝ` and `Ω`.
pub fn recover_j(chart: &dyn KahlerPotential, z0: &[C64]) -> Result<hypalg::JTensor> {
    hypalg::JTensor::new(metric_jets(chart, z0)?.j.value())
}

impl ChartJets {
    pub fn metric_value(&self) -> CMat {
        self.metric.value()
    }

    pub fn j_tensor(&self) -> hypalg::JTensor {
        hypalg::JTensor::new(self.j.value()).expect("square")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypalg::max_abs;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn flat_metric_is_identity() {
        let ch = FlatChart::new(1);
        let cj = metric_jets(&ch, &[C64::new(0.3, 0.1), c(-0.2)]).unwrap();
        assert!(cj.metric.sub(&JetMatrix::identity(2, 4, 2)).max_abs() == 0.0);
        assert!(max_abs(&(cj.j.value() - hypalg::JTensor::flat(1).comp())) == 0.0);
    }

    #[test]
    fn eguchi_hanson_determinant_is_one() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let cj = metric_jets(&eh, &[c(1.0), c(0.0)]).unwrap();
        let det = cj.metric.det().unwrap();
        assert!((det.value() - c(1.0)).norm() <= 1e-10);
        // derivatives of det vanish as well
        assert!(det.add_const(c(-1.0)).max_abs() < 1e-10);
        let j = cj.j_tensor();
        assert!(j.check_quaternionic().unwrap().max() <= 1e-10);
    }

    #[test]
    fn inverse_jets_invert_metric() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let cj = metric_jets(&eh, &[C64::new(0.7, -0.4), C64::new(0.2, 0.9)]).unwrap();
        let prod = cj.metric.matmul(&cj.inverse.transpose());
        assert!(prod.sub(&JetMatrix::identity(2, 4, 2)).max_abs() <= 1e-12);
    }

    #[test]
    fn bad_parameter_rejected() {
        assert!(EguchiHanson::new(0.0).is_err());
        assert!(EguchiHanson::new(f64::NAN).is_err());
    }
}
