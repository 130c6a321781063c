//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] in `nv` variables stores the coefficients `c_α` of
//! `f(x) = Σ_{|α| ≤ order} c_α x^α` around a base point. Chart quantities use
//! `nv = 2m` variables ordered `(w¹..w^m, w̄¹..w̄^m)`, so holomorphic and
//! antiholomorphic derivatives are plain partial derivatives in the first and
//! last `m` slots.

use crate::{QmaError, Result, C64};
use std::sync::OnceLock;

/// Maximal total order carried by any jet.
pub const MAX_ORDER: usize = 4;
/// Largest supported variable count (complex dimension 4).
pub const MAX_VARS: usize = 8;

const NONE: u32 = u32::MAX;

pub(crate) struct Table {
    exps: Vec<[u8; MAX_VARS]>,
    /// number of monomials of degree <= d
    upto: [usize; MAX_ORDER + 1],
    /// products grouped by total degree of the result
    mul: [Vec<(u32, u32, u32)>; MAX_ORDER + 1],
    /// shift[k][i] = index of α_i + e_k
    shift: Vec<Vec<u32>>,
    conj: Vec<u32>,
}

static TABLES: [OnceLock<Table>; MAX_VARS + 1] = [
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
];

fn gen_degree(nv: usize, d: usize, pos: usize, cur: &mut [u8; MAX_VARS], out: &mut Vec<[u8; MAX_VARS]>) {
    if pos + 1 == nv {
        cur[pos] = d as u8;
        out.push(*cur);
        cur[pos] = 0;
        return;
    }
    for e in (0..=d).rev() {
        cur[pos] = e as u8;
        gen_degree(nv, d - e, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

impl Table {
    fn build(nv: usize) -> Self {
        let mut exps = Vec::new();
        let mut upto = [0; MAX_ORDER + 1];
        for d in 0..=MAX_ORDER {
            if nv == 0 {
                if d == 0 {
                    exps.push([0; MAX_VARS]);
                }
            } else {
                gen_degree(nv, d, 0, &mut [0; MAX_VARS], &mut exps);
            }
            upto[d] = exps.len();
        }
        let index: std::collections::HashMap<[u8; MAX_VARS], u32> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (*e, i as u32))
            .collect();
        let deg = |e: &[u8; MAX_VARS]| e.iter().map(|v| *v as usize).sum::<usize>();

        let mut mul: [Vec<(u32, u32, u32)>; MAX_ORDER + 1] = Default::default();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                let d = deg(a) + deg(b);
                if d > MAX_ORDER {
                    continue;
                }
                let mut s = [0u8; MAX_VARS];
                for k in 0..MAX_VARS {
                    s[k] = a[k] + b[k];
                }
                mul[d].push((i as u32, j as u32, index[&s]));
            }
        }
        let shift = (0..nv)
            .map(|k| {
                exps.iter()
                    .map(|e| {
                        let mut s = *e;
                        s[k] += 1;
                        index.get(&s).copied().unwrap_or(NONE)
                    })
                    .collect()
            })
            .collect();
        let half = nv / 2;
        let conj = exps
            .iter()
            .map(|e| {
                let mut s = [0u8; MAX_VARS];
                for k in 0..half {
                    s[k] = e[half + k];
                    s[half + k] = e[k];
                }
                index[&s]
            })
            .collect();
        Self {
            exps,
            upto,
            mul,
            shift,
            conj,
        }
    }
}

pub(crate) fn table(nv: usize) -> &'static Table {
    assert!(nv <= MAX_VARS, "at most {MAX_VARS} jet variables supported");
    TABLES[nv].get_or_init(|| Table::build(nv))
}

/// Number of monomials of total degree at most `order` in `nv` variables.
pub fn monomial_count(nv: usize, order: usize) -> usize {
    table(nv).upto[order]
}

/// Truncated Taylor polynomial with complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    nv: usize,
    order: usize,
    real: bool,
    c: Vec<C64>,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

impl Jet {
    pub fn zero(nv: usize, order: usize) -> Self {
        assert!(order <= MAX_ORDER);
        Self {
            nv,
            order,
            real: true,
            c: vec![C64::new(0.0, 0.0); monomial_count(nv, order)],
        }
    }

    pub fn constant(nv: usize, order: usize, v: C64) -> Self {
        let mut j = Self::zero(nv, order);
        j.c[0] = v;
        j.real = v.im == 0.0 && nv % 2 == 0;
        j
    }

    /// The coordinate function `v + x_k`.
    pub fn var(nv: usize, order: usize, k: usize, v: C64) -> Self {
        assert!(k < nv);
        let mut j = Self::constant(nv, order, v);
        if order >= 1 {
            j.c[1 + k] = C64::new(1.0, 0.0);
        }
        j.real = false;
        j
    }

    /// Builds a jet from coefficients listed in the canonical monomial order.
    pub fn from_coeffs(nv: usize, order: usize, c: Vec<C64>) -> Result<Self> {
        if c.len() != monomial_count(nv, order) {
            return Err(QmaError::Jet(format!(
                "expected {} coefficients, got {}",
                monomial_count(nv, order),
                c.len()
            )));
        }
        Ok(Self {
            nv,
            order,
            real: false,
            c,
        })
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    /// Exponent vectors in canonical order (first `nv` entries meaningful).
    pub fn exponents(nv: usize, order: usize) -> &'static [[u8; MAX_VARS]] {
        let t = table(nv);
        &t.exps[..t.upto[order]]
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    /// Whether the jet is flagged as the expansion of a real function.
    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Sets the reality flag after checking the conjugation symmetry.
    pub fn mark_real(mut self, tol: f64) -> Result<Self> {
        let d = self.reality_defect();
        if d > tol {
            return Err(QmaError::Jet(format!("jet is not real (defect {d:.3e})")));
        }
        self.real = true;
        Ok(self)
    }

    /// Largest `|c(α,β) − conj c(β,α)|`.
    pub fn reality_defect(&self) -> f64 {
        let t = table(self.nv);
        self.c
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.c[t.conj[i] as usize].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Restricts to a lower order.
    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Self {
            nv: self.nv,
            order,
            real: self.real,
            c: self.c[..monomial_count(self.nv, order)].to_vec(),
        }
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(self.nv, other.nv, "jets over different variable counts");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_same(other);
        let order = self.order.min(other.order);
        let len = monomial_count(self.nv, order);
        Self {
            nv: self.nv,
            order,
            real: self.real && other.real,
            c: (0..len).map(|i| self.c[i] + other.c[i]).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_same(other);
        let order = self.order.min(other.order);
        let len = monomial_count(self.nv, order);
        Self {
            nv: self.nv,
            order,
            real: self.real && other.real,
            c: (0..len).map(|i| self.c[i] - other.c[i]).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            nv: self.nv,
            order: self.order,
            real: self.real && s.im == 0.0,
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add_const(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.c[0] += s;
        out.real = self.real && s.im == 0.0;
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.check_same(other);
        let order = self.order.min(other.order);
        let t = table(self.nv);
        let mut c = vec![C64::new(0.0, 0.0); t.upto[order]];
        for d in 0..=order {
            for &(i, j, k) in &t.mul[d] {
                let (i, j) = (i as usize, j as usize);
                // both factors must live within the truncated storage
                if i < self.c.len() && j < other.c.len() {
                    c[k as usize] += self.c[i] * other.c[j];
                }
            }
        }
        Self {
            nv: self.nv,
            order,
            real: self.real && other.real,
            c,
        }
    }

    /// Swaps `w^k ↔ w̄^k` and conjugates the coefficients.
    pub fn conj(&self) -> Self {
        let t = table(self.nv);
        Self {
            nv: self.nv,
            order: self.order,
            real: self.real,
            c: (0..self.c.len())
                .map(|i| self.c[t.conj[i] as usize].conj())
                .collect(),
        }
    }

    /// Partial derivative in variable `k`; the order drops by one.
    pub fn deriv(&self, k: usize) -> Result<Self> {
        if self.order == 0 {
            return Err(QmaError::Jet("cannot differentiate an order-0 jet".into()));
        }
        let t = table(self.nv);
        let order = self.order - 1;
        let len = t.upto[order];
        let c = (0..len)
            .map(|i| {
                let s = t.shift[k][i] as usize;
                self.c[s] * (t.exps[i][k] as f64 + 1.0)
            })
            .collect();
        Ok(Self {
            nv: self.nv,
            order,
            real: false,
            c,
        })
    }

    /// Iterated partial derivative evaluated at the base point.
    pub fn partial(&self, vars: &[usize]) -> C64 {
        assert!(vars.len() <= self.order, "derivative exceeds jet order");
        let t = table(self.nv);
        let mut e = [0u8; MAX_VARS];
        for &k in vars {
            e[k] += 1;
        }
        let idx = t.exps[..self.c.len()]
            .iter()
            .position(|x| *x == e)
            .expect("monomial present");
        let weight: f64 = e.iter().map(|v| factorial(*v as usize)).product();
        self.c[idx] * weight
    }

    /// `f(self)` for a univariate `f` given its derivatives `f^{(k)}` at the
    /// constant term, `k = 0..=order`.
    pub fn compose_univariate(&self, derivs: &[C64]) -> Self {
        assert!(derivs.len() > self.order);
        let mut h = self.clone();
        h.c[0] = C64::new(0.0, 0.0);
        let mut out = Self::constant(self.nv, self.order, derivs[0]);
        let mut pow = Self::constant(self.nv, self.order, C64::new(1.0, 0.0));
        for (k, dk) in derivs.iter().enumerate().take(self.order + 1).skip(1) {
            pow = pow.mul(&h);
            out = out.add(&pow.scale(dk / factorial(k)));
        }
        out.real = self.real && derivs.iter().all(|d| d.im == 0.0);
        out
    }

    pub fn recip(&self) -> Result<Self> {
        let c0 = self.value();
        if c0.norm() == 0.0 {
            return Err(QmaError::Jet("reciprocal of a jet with zero constant term".into()));
        }
        let d: Vec<C64> = (0..=self.order)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(sign * factorial(k), 0.0) / c0.powi(k as i32 + 1)
            })
            .collect();
        Ok(self.compose_univariate(&d))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.recip()?))
    }

    /// Natural logarithm; the constant term must be real and positive.
    pub fn ln(&self) -> Result<Self> {
        let c0 = self.value();
        if c0.re <= 0.0 || c0.im.abs() > 1e-12 * c0.re {
            return Err(QmaError::Jet(format!("log of jet with constant term {c0}")));
        }
        let c0 = C64::new(c0.re, 0.0);
        let d: Vec<C64> = (0..=self.order)
            .map(|k| {
                if k == 0 {
                    c0.ln()
                } else {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    C64::new(sign * factorial(k - 1), 0.0) / c0.powi(k as i32)
                }
            })
            .collect();
        Ok(self.compose_univariate(&d))
    }

    /// Real power `self^p`; the constant term must be real and positive.
    pub fn powf(&self, p: f64) -> Result<Self> {
        let c0 = self.value();
        if c0.re <= 0.0 || c0.im.abs() > 1e-12 * c0.re {
            return Err(QmaError::Jet(format!("power of jet with constant term {c0}")));
        }
        let x = c0.re;
        let mut d = Vec::with_capacity(self.order + 1);
        let mut coef = 1.0;
        for k in 0..=self.order {
            d.push(C64::new(coef * x.powf(p - k as f64), 0.0));
            coef *= p - k as f64;
        }
        Ok(self.compose_univariate(&d))
    }

    pub fn sqrt(&self) -> Result<Self> {
        self.powf(0.5)
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        let d = vec![e; self.order + 1];
        self.compose_univariate(&d)
    }

    /// Substitutes `x_i = subs[i]` where every substitute has zero constant
    /// term. The result lives in the variables of `subs`.
    pub fn compose_map(&self, subs: &[Jet]) -> Result<Self> {
        if subs.len() != self.nv {
            return Err(QmaError::Jet(format!(
                "need {} substitutes, got {}",
                self.nv,
                subs.len()
            )));
        }
        let nv2 = subs.first().map(|s| s.nv).unwrap_or(0);
        let mut order = self.order;
        for s in subs {
            if s.nv != nv2 {
                return Err(QmaError::Jet("substitutes over different variables".into()));
            }
            if s.value().norm() != 0.0 {
                return Err(QmaError::Jet(
                    "substitutes must vanish at the base point".into(),
                ));
            }
            order = order.min(s.order);
        }
        // powers[i][p] = subs[i]^p
        let powers: Vec<Vec<Jet>> = subs
            .iter()
            .map(|s| {
                let s = s.truncate(order);
                let mut v = vec![Jet::constant(nv2, order, C64::new(1.0, 0.0))];
                for p in 1..=order {
                    let next = v[p - 1].mul(&s);
                    v.push(next);
                }
                v
            })
            .collect();
        let t = table(self.nv);
        let mut out = Jet::zero(nv2, order);
        for (i, e) in t.exps[..t.upto[order]].iter().enumerate() {
            let c = self.c[i];
            if c.norm() == 0.0 {
                continue;
            }
            let mut term = Jet::constant(nv2, order, c);
            for (k, p) in e.iter().take(self.nv).enumerate() {
                if *p > 0 {
                    term = term.mul(&powers[k][*p as usize]);
                }
            }
            out = out.add(&term);
        }
        out.real = false;
        Ok(out)
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    /// Evaluates the truncated polynomial at a displacement `x`.
    pub fn eval(&self, x: &[C64]) -> C64 {
        let t = table(self.nv);
        let mut acc = C64::new(0.0, 0.0);
        for (i, e) in t.exps[..self.c.len()].iter().enumerate() {
            let mut m = self.c[i];
            for k in 0..self.nv {
                if e[k] > 0 {
                    m *= x[k].powi(e[k] as i32);
                }
            }
            acc += m;
        }
        acc
    }
}

impl std::ops::Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        Jet::add(self, rhs)
    }
}

impl std::ops::Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        Jet::sub(self, rhs)
    }
}

impl std::ops::Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        Jet::mul(self, rhs)
    }
}
