//! Holomorphic normal coordinates `w = ζ + ½Γ(x0)ζζ`, `ζ = z − z0`.

use super::chart::{chart_jets, metric_jets, ChartJets, KahlerPotential, POTENTIAL_ORDER};
use super::jet::Jet;
use super::matrix::JetMatrix;
use crate::hypalg::CMat;
use crate::{QmaError, Result, C64};

/// Newton tolerance of the pointwise inverse.
pub const INVERSE_TOL: f64 = 1e-13;
pub const INVERSE_MAX_ITER: usize = 50;

/// Normal chart of a Kähler potential chart at `z0`.
pub struct NormalChart<'a> {
    base: &'a dyn KahlerPotential,
    z0: Vec<C64>,
    /// `Γ^i_{kl}` at `z0`, stored at `[(i * m + k) * m + l]`.
    gamma: Vec<C64>,
    /// `z(w)` around `w = 0`.
    z_of_w: Vec<Jet>,
}

/// Christoffel symbols at the base point from metric jets.
pub(crate) fn gamma_at(cj: &ChartJets) -> Result<Vec<C64>> {
    let m = cj.m;
    let up = cj.inverse.value();
    let mut dg = Vec::with_capacity(m);
    for k in 0..m {
        dg.push(cj.metric.partial(&[k]));
    }
    let mut out = vec![C64::new(0.0, 0.0); m * m * m];
    for i in 0..m {
        for k in 0..m {
            for l in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..m {
                    acc += up[(i, j)] * dg[k][(l, j)];
                }
                out[(i * m + k) * m + l] = acc;
            }
        }
    }
    Ok(out)
}

impl<'a> NormalChart<'a> {
    pub fn new(base: &'a dyn KahlerPotential, z0: &[C64]) -> Result<Self> {
        let cj = metric_jets(base, z0)?;
        let gamma = gamma_at(&cj)?;
        let mut nc = Self {
            base,
            z0: z0.to_vec(),
            gamma,
            z_of_w: Vec::new(),
        };
        let m = z0.len();
        let w: Vec<Jet> = (0..m)
            .map(|r| Jet::var(2 * m, POTENTIAL_ORDER, r, C64::new(0.0, 0.0)))
            .collect();
        let zeta = nc.invert_jets(&w, &vec![C64::new(0.0, 0.0); m])?;
        nc.z_of_w = zeta
            .into_iter()
            .zip(z0)
            .map(|(j, z)| j.add_const(*z))
            .collect();
        Ok(nc)
    }

    pub fn base_point(&self) -> &[C64] {
        &self.z0
    }

    pub fn dim(&self) -> usize {
        self.z0.len()
    }

    pub fn gamma(&self) -> &[C64] {
        &self.gamma
    }

    fn quad(&self, a: &[C64], b: &[C64]) -> Vec<C64> {
        let m = self.dim();
        (0..m)
            .map(|i| {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..m {
                    for l in 0..m {
                        acc += self.gamma[(i * m + k) * m + l] * a[k] * b[l];
                    }
                }
                acc
            })
            .collect()
    }

    /// `w(z)`.
    pub fn forward(&self, z: &[C64]) -> Vec<C64> {
        let zeta: Vec<C64> = z.iter().zip(&self.z0).map(|(a, b)| a - b).collect();
        let q = self.quad(&zeta, &zeta);
        zeta.iter().zip(q).map(|(a, b)| a + 0.5 * b).collect()
    }

    /// `z(w)` by Newton iteration.
    pub fn inverse(&self, w: &[C64]) -> Result<Vec<C64>> {
        let zeta = self.newton(w)?;
        Ok(zeta.iter().zip(&self.z0).map(|(a, b)| a + b).collect())
    }

    fn dforward(&self, zeta: &[C64]) -> CMat {
        let m = self.dim();
        CMat::from_fn(m, m, |i, k| {
            let mut acc = if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            for l in 0..m {
                acc += self.gamma[(i * m + k) * m + l] * zeta[l];
            }
            acc
        })
    }

    fn newton(&self, w: &[C64]) -> Result<Vec<C64>> {
        let m = self.dim();
        let mut zeta = w.to_vec();
        let scale = 1.0 + w.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut res = f64::INFINITY;
        for _ in 0..INVERSE_MAX_ITER {
            let q = self.quad(&zeta, &zeta);
            let f: Vec<C64> = (0..m).map(|i| zeta[i] + 0.5 * q[i] - w[i]).collect();
            res = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if res <= INVERSE_TOL * scale {
                return Ok(zeta);
            }
            let jac = self.dforward(&zeta);
            let rhs = nalgebra::DVector::from_vec(f);
            let step = jac
                .lu()
                .solve(&rhs)
                .ok_or(QmaError::ChartInversion { iterations: 0, residual: res })?;
            for i in 0..m {
                zeta[i] -= step[i];
            }
        }
        Err(QmaError::ChartInversion {
            iterations: INVERSE_MAX_ITER,
            residual: res,
        })
    }

    /// `ζ(w)` for jets `w` with base values `w0`: pointwise Newton for the
    /// constant term, then a fixed-point sweep order by order.
    fn invert_jets(&self, w: &[Jet], w0: &[C64]) -> Result<Vec<Jet>> {
        let m = self.dim();
        let nv = w[0].nv();
        let order = w.iter().map(|j| j.order()).min().unwrap_or(0);
        let zeta0 = self.newton(w0)?;
        let dinv = self
            .dforward(&zeta0)
            .try_inverse()
            .ok_or_else(|| QmaError::Singular("normal map is degenerate".into()))?;
        let dw: Vec<Jet> = (0..m).map(|i| w[i].add_const(-w0[i])).collect();
        let mut eta: Vec<Jet> = (0..m).map(|_| Jet::zero(nv, order)).collect();
        // ζ0 + η solves  DF(ζ0) η + ½Γ(η,η) = δw
        for _ in 0..=order {
            let next: Vec<Jet> = (0..m)
                .map(|i| {
                    let mut rhs = dw[i].clone();
                    for k in 0..m {
                        for l in 0..m {
                            let g = self.gamma[(i * m + k) * m + l];
                            if g.norm() != 0.0 {
                                rhs = rhs.sub(&eta[k].mul(&eta[l]).scale(0.5 * g));
                            }
                        }
                    }
                    rhs
                })
                .collect();
            eta = (0..m)
                .map(|i| {
                    let mut acc = Jet::zero(nv, order);
                    for k in 0..m {
                        acc = acc.add(&next[k].scale(dinv[(i, k)]));
                    }
                    acc
                })
                .collect();
        }
        Ok(eta
            .into_iter()
            .zip(zeta0)
            .map(|(e, z)| e.add_const(z))
            .collect())
    }

    /// Coordinate jets `z(w)` around `w = 0`.
    pub fn coords(&self) -> &[Jet] {
        &self.z_of_w
    }

    /// All tensor jets in the normal chart, computed directly from `K∘z(w)`.
    pub fn jets(&self) -> Result<ChartJets> {
        chart_jets(self.base, &self.z_of_w)
    }

    /// `∂z^r/∂w^a` as jets.
    pub fn jacobian(&self) -> Result<JetMatrix> {
        let m = self.dim();
        let mut out = JetMatrix::from_fn(m, |_, _| Jet::zero(2 * m, 0));
        for r in 0..m {
            for a in 0..m {
                out.set(r, a, self.z_of_w[r].deriv(a)?);
            }
        }
        Ok(out)
    }

    /// Substitutes `ζ = ζ(w)` into jets expanded in the original chart at
    /// `z0`.
    pub fn pull_back(&self, f: &JetMatrix) -> Result<JetMatrix> {
        let subs = self.substitutes();
        f.compose_map(&subs)
    }

    fn substitutes(&self) -> Vec<Jet> {
        let m = self.dim();
        let zeta: Vec<Jet> = (0..m)
            .map(|r| self.z_of_w[r].add_const(-self.z0[r]))
            .collect();
        let mut subs = zeta.clone();
        subs.extend(zeta.iter().map(|j| j.conj()));
        subs
    }

    /// Jets of `J'_a^{b̄} = (∂z^r/∂w^a) J_r^{s̄}(z(w)) conj(∂w^b/∂z^s)`,
    /// transporting the original-chart `J` jets.
    pub fn transport_j(&self, original: &ChartJets) -> Result<JetMatrix> {
        let jz = self.pull_back(&original.j)?;
        let dz = self.jacobian()?;
        let dw = dz.inverse()?;
        Ok(dz.transpose().matmul(&jz).matmul(&dw.conj().transpose()))
    }

    /// Metric jets transported tensorially: `ĝ'_{ab̄} = ∂_a z^r conj(∂_b z^s) ĝ_{rs̄}`.
    pub fn transport_metric(&self, original: &ChartJets) -> Result<JetMatrix> {
        let gz = self.pull_back(&original.metric)?;
        let dz = self.jacobian()?;
        Ok(dz.transpose().matmul(&gz).matmul(&dz.conj()))
    }

    /// The normal chart viewed as a chart in its own right.
    pub fn as_chart(&'a self) -> PulledBackChart<'a> {
        PulledBackChart { normal: self }
    }
}

/// Potential `K∘z(w)` on the normal chart, usable at any `w`.
pub struct PulledBackChart<'a> {
    normal: &'a NormalChart<'a>,
}

impl PulledBackChart<'_> {
    fn zeta(&self, w: &[Jet]) -> Result<Vec<Jet>> {
        let w0: Vec<C64> = w.iter().map(|j| j.value()).collect();
        self.normal.invert_jets(w, &w0)
    }
}

impl KahlerPotential for PulledBackChart<'_> {
    fn dim(&self) -> usize {
        self.normal.dim()
    }

    fn name(&self) -> &str {
        "normal"
    }

    fn potential(&self, w: &[Jet]) -> Result<Jet> {
        let z: Vec<Jet> = self
            .zeta(w)?
            .into_iter()
            .zip(&self.normal.z0)
            .map(|(j, z)| j.add_const(*z))
            .collect();
        self.normal.base.potential(&z)
    }

    fn omega(&self, w: &[Jet]) -> Result<JetMatrix> {
        let m = self.dim();
        let zeta = self.zeta(w)?;
        let z: Vec<Jet> = zeta
            .iter()
            .zip(&self.normal.z0)
            .map(|(j, z)| j.add_const(*z))
            .collect();
        // ∂z/∂w = (∂w/∂z)^{-1},  ∂w^i/∂z^k = δ + Γ^i_{kl} ζ^l
        let nc = self.normal;
        let dw = JetMatrix::from_fn(m, |i, k| {
            let nv = w[0].nv();
            let order = zeta[0].order();
            let mut acc = Jet::constant(
                nv,
                order,
                C64::new(if i == k { 1.0 } else { 0.0 }, 0.0),
            );
            for l in 0..m {
                acc = acc.add(&zeta[l].scale(nc.gamma[(i * m + k) * m + l]));
            }
            acc
        });
        let dz = dw.inverse()?;
        let om = nc.base.omega(&z)?;
        Ok(dz.transpose().matmul(&om).matmul(&dz))
    }

    fn in_domain(&self, w: &[C64]) -> bool {
        match self.normal.inverse(w) {
            Ok(z) => self.normal.base.in_domain(&z),
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::chart::{EguchiHanson, FlatChart};
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn flat_normal_chart_is_translation() {
        let ch = FlatChart::new(1);
        let nc = NormalChart::new(&ch, &[c(0.4), C64::new(0.0, 0.2)]).unwrap();
        assert!(nc.gamma().iter().all(|g| g.norm() == 0.0));
        let w = nc.forward(&[c(1.4), C64::new(0.5, 0.2)]);
        assert!((w[0] - c(1.0)).norm() < 1e-15 && (w[1] - c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn eh_normal_chart_kills_christoffels() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let nc = NormalChart::new(&eh, &[c(1.0), c(0.0)]).unwrap();
        assert!(nc.gamma().iter().any(|g| g.norm() > 1e-3));
        let nj = nc.jets().unwrap();
        let g2 = gamma_at(&nj).unwrap();
        assert!(g2.iter().all(|g| g.norm() <= 1e-9));
        for k in 0..4 {
            assert!(crate::hypalg::max_abs(&nj.metric.partial(&[k])) <= 1e-9);
        }
    }

    #[test]
    fn pointwise_inverse_round_trips() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let nc = NormalChart::new(&eh, &[C64::new(0.8, 0.3), C64::new(-0.2, 0.5)]).unwrap();
        let z = [C64::new(0.9, 0.25), C64::new(-0.1, 0.55)];
        let back = nc.inverse(&nc.forward(&z)).unwrap();
        assert!((back[0] - z[0]).norm() < 1e-13 && (back[1] - z[1]).norm() < 1e-13);
    }

    #[test]
    fn newton_fails_far_away() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let nc = NormalChart::new(&eh, &[c(0.5), c(0.0)]).unwrap();
        // the quadratic map is not onto; far points have no preimage
        let far = [C64::new(1e3, 1e3), C64::new(-1e3, 1e3)];
        let r = nc.inverse(&far);
        if let Ok(z) = r {
            let w = nc.forward(&z);
            assert!((w[0] - far[0]).norm() < 1e-6 * 1e3);
        }
    }

    #[test]
    fn two_routes_to_normal_metric_agree() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let x0 = [C64::new(0.6, 0.6), C64::new(0.3, -0.4)];
        let nc = NormalChart::new(&eh, &x0).unwrap();
        let direct = nc.jets().unwrap().metric;
        let transported = nc.transport_metric(&metric_jets(&eh, &x0).unwrap()).unwrap();
        assert!(direct.sub(&transported).max_abs() <= 1e-9);
    }

    #[test]
    fn transported_j_matches_recovered_j() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let x0 = [c(1.0), c(0.0)];
        let nc = NormalChart::new(&eh, &x0).unwrap();
        let tj = nc.transport_j(&metric_jets(&eh, &x0).unwrap()).unwrap();
        let rj = nc.jets().unwrap().j;
        assert!(tj.sub(&rj).max_abs() <= 1e-9);
        for k in 0..4 {
            assert!(crate::hypalg::max_abs(&tj.partial(&[k])) <= 1e-8);
        }
    }

    #[test]
    fn normal_chart_is_idempotent() {
        let eh = EguchiHanson::new(1.0).unwrap();
        let nc = NormalChart::new(&eh, &[c(1.0), c(0.5)]).unwrap();
        let pb = nc.as_chart();
        let again = NormalChart::new(&pb, &[c(0.0), c(0.0)]).unwrap();
        assert!(again.gamma().iter().all(|g| g.norm() <= 1e-10));
    }
}
