//! Uniform grids on the unit torus `ℝ^{4n}/ℤ^{4n}` and spectral calculus.

use crate::{par, QmaError, Result, C64};
use rustfft::{Fft, FftPlanner};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

/// Grid of `N^{4n}` points, row-major over axes `x¹..x^{4n}` (x¹ slowest).
/// Complex coordinates are `z^k = x^{2k−1} + i x^{2k}`.
#[derive(Clone)]
pub struct TorusGrid {
    n: usize,
    size: usize,
    total: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("size", &self.size)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n && self.size == o.size
    }
}

/// Rows handed to one FFT call in the parallel path.
const FFT_ROWS: usize = 64;

impl TorusGrid {
    pub fn new(n: usize, size: usize) -> Result<Self> {
        if n == 0 {
            return Err(QmaError::Config("quaternionic dimension must be at least 1".into()));
        }
        if size < 4 || size % 2 != 0 {
            return Err(QmaError::Config(format!(
                "grid size must be even and at least 4, got {size}"
            )));
        }
        let total = size
            .checked_pow(4 * n as u32)
            .filter(|t| *t <= 1 << 26)
            .ok_or_else(|| QmaError::Config(format!("grid {size}^{} is too large", 4 * n)))?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            size,
            total,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Complex dimension `2n`.
    pub fn m(&self) -> usize {
        2 * self.n
    }

    /// Points per axis.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn axes(&self) -> usize {
        4 * self.n
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Total volume of the torus.
    pub fn volume(&self) -> f64 {
        1.0
    }

    /// Integer index along each axis.
    pub fn multi_index(&self, mut p: usize) -> Vec<usize> {
        let d = self.axes();
        let mut out = vec![0; d];
        for a in (0..d).rev() {
            out[a] = p % self.size;
            p /= self.size;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, i| acc * self.size + i)
    }

    /// Real coordinates of point `p`.
    pub fn coords(&self, p: usize) -> Vec<f64> {
        let h = 1.0 / self.size as f64;
        self.multi_index(p).iter().map(|i| *i as f64 * h).collect()
    }

    /// Signed frequency of index `i`; the Nyquist index maps to `−N/2`.
    pub fn freq(&self, i: usize) -> i64 {
        if i < self.size / 2 {
            i as i64
        } else {
            i as i64 - self.size as i64
        }
    }

    fn fft_nd(&self, data: &mut Vec<C64>, inverse: bool) {
        let n = self.size;
        let rest = self.total / n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        for _ in 0..self.axes() {
            par::for_each_chunk_mut(data, n * FFT_ROWS, |_, chunk| plan.process(chunk));
            let src: &Vec<C64> = data;
            let out = par::map_range(self.total, |q| {
                let j = q / rest;
                let i = q % rest;
                src[i * n + j]
            });
            *data = out;
        }
    }

    /// Unnormalized forward DFT of a real field.
    pub fn forward(&self, values: &[f64]) -> Vec<C64> {
        let mut d: Vec<C64> = values.iter().map(|v| C64::new(*v, 0.0)).collect();
        self.fft_nd(&mut d, false);
        d
    }

    pub fn forward_complex(&self, values: &[C64]) -> Vec<C64> {
        let mut d = values.to_vec();
        self.fft_nd(&mut d, false);
        d
    }

    /// Inverse DFT including the `1/N^{4n}` factor.
    pub fn inverse(&self, spec: &[C64]) -> Vec<C64> {
        let mut d = spec.to_vec();
        self.fft_nd(&mut d, true);
        let s = 1.0 / self.total as f64;
        d.iter_mut().for_each(|v| *v *= s);
        d
    }

    /// Fourier symbol of `∂^{holo} ∂̄^{anti}` at every frequency. Odd powers
    /// of the Nyquist frequency are dropped so real fields stay real.
    pub fn multiplier(&self, pattern: &DerivPattern) -> Vec<C64> {
        let poly = pattern.expand();
        let maxp = poly
            .iter()
            .flat_map(|(e, _)| e.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        let half = self.size / 2;
        // table[p][i] = (2πi k_i)^p
        let table: Vec<Vec<C64>> = (0..=maxp)
            .map(|p| {
                (0..self.size)
                    .map(|i| {
                        if i == half && p % 2 == 1 {
                            C64::new(0.0, 0.0)
                        } else {
                            C64::new(0.0, 2.0 * PI * self.freq(i) as f64).powi(p as i32)
                        }
                    })
                    .collect()
            })
            .collect();
        par::map_range(self.total, |q| {
            let idx = self.multi_index(q);
            poly.iter()
                .map(|(exps, coeff)| {
                    exps.iter()
                        .enumerate()
                        .fold(*coeff, |t, (a, p)| t * table[*p as usize][idx[a]])
                })
                .sum()
        })
    }

    /// Inverse transform of `spec ⊙ mult`.
    pub fn apply_symbol(&self, spec: &[C64], mult: &[C64]) -> Vec<C64> {
        let scaled = par::map_range(self.total, |p| spec[p] * mult[p]);
        self.inverse(&scaled)
    }

    /// Spectral derivative of a field given by its DFT.
    pub fn derivative(&self, spec: &[C64], pattern: &DerivPattern) -> Vec<C64> {
        self.apply_symbol(spec, &self.multiplier(pattern))
    }
}

/// Holomorphic and antiholomorphic derivative indices, e.g. `∂_{z¹}∂_{z̄²}`
/// is `DerivPattern { holo: vec![0], anti: vec![1] }`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DerivPattern {
    pub holo: Vec<usize>,
    pub anti: Vec<usize>,
}

impl DerivPattern {
    pub fn new(holo: &[usize], anti: &[usize]) -> Self {
        Self {
            holo: holo.to_vec(),
            anti: anti.to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.holo.len() + self.anti.len()
    }

    /// Expansion into monomials in the real axis derivatives `D_a`:
    /// `∂_{z^r} = ½(D_{2r} − i D_{2r+1})`, `∂_{z̄^r} = ½(D_{2r} + i D_{2r+1})`
    /// (0-based axes).
    pub fn expand(&self) -> Vec<(Vec<u8>, C64)> {
        let axes = 2 * (self.holo.iter().chain(&self.anti).max().map_or(0, |v| v + 1));
        let mut poly: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
        poly.insert(vec![0; axes], C64::new(1.0, 0.0));
        let factors = self
            .holo
            .iter()
            .map(|r| (*r, -1.0))
            .chain(self.anti.iter().map(|r| (*r, 1.0)));
        for (r, sign) in factors {
            let mut next: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
            for (e, c) in &poly {
                let mut ex = e.clone();
                ex[2 * r] += 1;
                *next.entry(ex).or_default() += c * 0.5;
                let mut ey = e.clone();
                ey[2 * r + 1] += 1;
                *next.entry(ey).or_default() += c * C64::new(0.0, 0.5 * sign);
            }
            poly = next;
        }
        poly.into_iter().filter(|(_, c)| c.norm() != 0.0).collect()
    }
}

/// Real field on a torus grid with a cached DFT.
#[derive(Clone)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
    spec: OnceLock<Vec<C64>>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid)
            .field("min", &self.inf())
            .field("max", &self.sup())
            .finish()
    }
}

impl ScalarField {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(QmaError::Structure(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            spec: OnceLock::new(),
        })
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
            spec: OnceLock::new(),
        }
    }

    /// Samples `f(x)` at the grid points.
    pub fn from_fn<F>(grid: &TorusGrid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let values = par::map_range(grid.len(), |p| f(&grid.coords(p)));
        Self {
            grid: grid.clone(),
            values,
            spec: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectrum(&self) -> &[C64] {
        self.spec.get_or_init(|| self.grid.forward(&self.values))
    }

    /// Spectral derivative `∂^{holo} ∂̄^{anti} f`.
    pub fn derivative(&self, pattern: &DerivPattern) -> Vec<C64> {
        if pattern.order() == 0 {
            return self.values.iter().map(|v| C64::new(*v, 0.0)).collect();
        }
        self.grid.derivative(self.spectrum(), pattern)
    }

    pub fn map<F: Fn(f64) -> f64 + Sync + Send>(&self, f: F) -> Self {
        let v = par::map_range(self.values.len(), |p| f(self.values[p]));
        Self::new(&self.grid, v).expect("same grid")
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64 + Sync + Send>(&self, o: &Self, f: F) -> Self {
        assert_eq!(self.grid, o.grid);
        let v = par::map_range(self.values.len(), |p| f(self.values[p], o.values[p]));
        Self::new(&self.grid, v).expect("same grid")
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip_map(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip_map(o, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|a| a * s)
    }

    pub fn add_const(&self, c: f64) -> Self {
        self.map(|a| a + c)
    }

    /// `∫ f` with the fixed-order chunked sum (equals the spectral mean).
    pub fn integral(&self) -> f64 {
        integrate(&self.grid, &self.values)
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.volume()
    }

    pub fn sup(&self) -> f64 {
        par::max_by(self.values.len(), |p| self.values[p])
    }

    pub fn inf(&self) -> f64 {
        par::min_by(self.values.len(), |p| self.values[p])
    }

    pub fn sup_norm(&self) -> f64 {
        par::max_by(self.values.len(), |p| self.values[p].abs())
    }

    /// Index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (p, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = p;
            }
        }
        best
    }
}

/// `∫ f dvol` on the unit torus.
pub fn integrate(grid: &TorusGrid, values: &[f64]) -> f64 {
    par::sum_by(values.len(), |p| values[p]) / grid.len() as f64 * grid.volume()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(1, 6).is_ok());
        assert!(TorusGrid::new(1, 5).is_err());
        assert!(TorusGrid::new(1, 2).is_err());
        assert!(TorusGrid::new(0, 8).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = TorusGrid::new(1, 4).unwrap();
        for p in [0, 1, 17, 255] {
            assert_eq!(g.flat_index(&g.multi_index(p)), p);
        }
        assert_eq!(g.coords(1), vec![0.0, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn spectral_round_trip() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[3]).cos() + x[1]);
        let back = g.inverse(f.spectrum());
        let err = back
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - C64::new(*b, 0.0)).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12 * f.sup_norm());
    }

    #[test]
    fn holomorphic_derivative_of_cosine() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).cos());
        let d = f.derivative(&DerivPattern::new(&[0], &[]));
        for p in 0..g.len() {
            let x = g.coords(p);
            let want = -PI * (2.0 * PI * x[0]).sin();
            assert!((d[p] - C64::new(want, 0.0)).norm() < 1e-12);
        }
        let c = ScalarField::constant(&g, 3.0);
        let dc = c.derivative(&DerivPattern::new(&[0, 1], &[1]));
        assert!(dc.iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn mixed_partials_commute() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = ScalarField::from_fn(&g, |x| {
            (2.0 * PI * (x[0] + 2.0 * x[2])).sin() + (2.0 * PI * (x[1] - x[3])).cos()
        });
        let a = f.derivative(&DerivPattern::new(&[0], &[1]));
        let b = f.derivative(&DerivPattern::new(&[0], &[1]));
        let c = g.derivative(f.spectrum(), &DerivPattern { holo: vec![0], anti: vec![1] });
        for p in 0..g.len() {
            assert!((a[p] - b[p]).norm() <= 1e-12);
            assert!((a[p] - c[p]).norm() <= 1e-12);
        }
    }

    #[test]
    fn nyquist_mode_has_no_odd_derivative() {
        let g = TorusGrid::new(1, 4).unwrap();
        // cos(π N x) at N = 4 samples as (−1)^i
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * 2.0 * x[0]).cos());
        let d1 = f.derivative(&DerivPattern::new(&[0], &[]));
        assert!(d1.iter().all(|v| v.norm() < 1e-12));
        let d2 = f.derivative(&DerivPattern::new(&[0], &[0]));
        // ∂∂̄ = ¼Δ  →  −π²·4·cos
        for p in 0..g.len() {
            let want = -4.0 * PI * PI * f.values()[p];
            assert!((d2[p] - C64::new(want, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn integral_is_the_mean() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = ScalarField::from_fn(&g, |x| 2.0 + (2.0 * PI * x[0]).cos());
        assert!((f.integral() - 2.0).abs() < 1e-13);
    }
}
