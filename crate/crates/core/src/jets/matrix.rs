//! Square matrices of jets.

use super::jet::Jet;
use crate::hypalg::CMat;
use crate::{QmaError, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct JetMatrix {
    m: usize,
    e: Vec<Jet>,
}

impl JetMatrix {
    pub fn from_fn<F: FnMut(usize, usize) -> Jet>(m: usize, mut f: F) -> Self {
        let mut e = Vec::with_capacity(m * m);
        for r in 0..m {
            for s in 0..m {
                e.push(f(r, s));
            }
        }
        Self { m, e }
    }

    /// Constant matrix with jets of the given shape.
    pub fn constant(mat: &CMat, nv: usize, order: usize) -> Self {
        Self::from_fn(mat.nrows(), |r, s| Jet::constant(nv, order, mat[(r, s)]))
    }

    pub fn identity(m: usize, nv: usize, order: usize) -> Self {
        Self::constant(&CMat::identity(m, m), nv, order)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn get(&self, r: usize, s: usize) -> &Jet {
        &self.e[r * self.m + s]
    }

    pub fn set(&mut self, r: usize, s: usize, v: Jet) {
        self.e[r * self.m + s] = v;
    }

    pub fn order(&self) -> usize {
        self.e.iter().map(|j| j.order()).min().unwrap_or(0)
    }

    pub fn map<F: Fn(&Jet) -> Jet>(&self, f: F) -> Self {
        Self {
            m: self.m,
            e: self.e.iter().map(f).collect(),
        }
    }

    pub fn try_map<F: Fn(&Jet) -> Result<Jet>>(&self, f: F) -> Result<Self> {
        Ok(Self {
            m: self.m,
            e: self.e.iter().map(f).collect::<Result<_>>()?,
        })
    }

    /// Values at the base point.
    pub fn value(&self) -> CMat {
        CMat::from_fn(self.m, self.m, |r, s| self.get(r, s).value())
    }

    /// Entrywise iterated partial derivative at the base point.
    pub fn partial(&self, vars: &[usize]) -> CMat {
        CMat::from_fn(self.m, self.m, |r, s| self.get(r, s).partial(vars))
    }

    pub fn deriv(&self, k: usize) -> Result<Self> {
        self.try_map(|j| j.deriv(k))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.m, |r, s| self.get(s, r).clone())
    }

    pub fn conj(&self) -> Self {
        self.map(|j| j.conj())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.m, |r, s| self.get(s, r).conj())
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::from_fn(self.m, |r, s| self.get(r, s).add(o.get(r, s)))
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::from_fn(self.m, |r, s| self.get(r, s).sub(o.get(r, s)))
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|j| j.scale(c))
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let m = self.m;
        Self::from_fn(m, |r, s| {
            let mut acc = self.get(r, 0).mul(o.get(0, s));
            for k in 1..m {
                acc = acc.add(&self.get(r, k).mul(o.get(k, s)));
            }
            acc
        })
    }

    /// Gauss–Jordan inverse with partial pivoting on the base-point values.
    pub fn inverse(&self) -> Result<Self> {
        let m = self.m;
        let nv = self.e[0].nv();
        let order = self.order();
        let mut a: Vec<Vec<Jet>> = (0..m)
            .map(|r| (0..m).map(|s| self.get(r, s).truncate(order)).collect())
            .collect();
        let mut inv: Vec<Vec<Jet>> = (0..m)
            .map(|r| {
                (0..m)
                    .map(|s| {
                        let v = if r == s { 1.0 } else { 0.0 };
                        Jet::constant(nv, order, C64::new(v, 0.0))
                    })
                    .collect()
            })
            .collect();
        let scale = a
            .iter()
            .flatten()
            .map(|j| j.value().norm())
            .fold(0.0, f64::max);
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&x, &y| {
                    a[x][col]
                        .value()
                        .norm()
                        .total_cmp(&a[y][col].value().norm())
                })
                .unwrap();
            if a[piv][col].value().norm() <= 1e-14 * scale {
                return Err(QmaError::Singular("jet matrix is singular at the base point".into()));
            }
            a.swap(col, piv);
            inv.swap(col, piv);
            let p = a[col][col].recip()?;
            for s in 0..m {
                a[col][s] = a[col][s].mul(&p);
                inv[col][s] = inv[col][s].mul(&p);
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r][col].clone();
                for s in 0..m {
                    let t = f.mul(&a[col][s]);
                    a[r][s] = a[r][s].sub(&t);
                    let t = f.mul(&inv[col][s]);
                    inv[r][s] = inv[r][s].sub(&t);
                }
            }
        }
        Ok(Self {
            m,
            e: inv.into_iter().flatten().collect(),
        })
    }

    /// Determinant by elimination with partial pivoting.
    pub fn det(&self) -> Result<Jet> {
        let m = self.m;
        let order = self.order();
        let mut a: Vec<Vec<Jet>> = (0..m)
            .map(|r| (0..m).map(|s| self.get(r, s).truncate(order)).collect())
            .collect();
        let nv = self.e[0].nv();
        let mut det = Jet::constant(nv, order, C64::new(1.0, 0.0));
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&x, &y| {
                    a[x][col]
                        .value()
                        .norm()
                        .total_cmp(&a[y][col].value().norm())
                })
                .unwrap();
            if a[piv][col].value().norm() == 0.0 {
                return Err(QmaError::Singular("jet matrix is singular at the base point".into()));
            }
            if piv != col {
                a.swap(col, piv);
                det = det.neg();
            }
            det = det.mul(&a[col][col]);
            let p = a[col][col].recip()?;
            for r in col + 1..m {
                let f = a[r][col].mul(&p);
                for s in col..m {
                    let t = f.mul(&a[col][s]);
                    a[r][s] = a[r][s].sub(&t);
                }
            }
        }
        Ok(det)
    }

    pub fn max_abs(&self) -> f64 {
        self.e.iter().map(|j| j.max_abs()).fold(0.0, f64::max)
    }

    /// Substitutes every entry; see [`Jet::compose_map`].
    pub fn compose_map(&self, subs: &[Jet]) -> Result<Self> {
        self.try_map(|j| j.compose_map(subs))
    }
}
