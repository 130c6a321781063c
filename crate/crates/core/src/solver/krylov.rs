//! Restarted GMRES with right preconditioning, on real vectors.

use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresConfig {
    /// Relative residual target `‖b − Ax‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 300,
            restart: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    par::sum_by(a.len(), |i| a[i] * b[i])
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Solves `A x = b` starting from `x`. `apply` computes `A v`,
/// `precond` computes `M⁻¹ v`; the iteration runs on `A M⁻¹`.
pub fn gmres<A, P>(apply: A, precond: P, b: &[f64], x: &mut [f64], cfg: &GmresConfig) -> GmresOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let restart = cfg.restart.max(1);
    let mut total = 0;
    loop {
        let ax = apply(x);
        let r: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= cfg.tol || total >= cfg.max_iter {
            return GmresOutcome {
                iterations: total,
                relative_residual: rel,
                converged: rel <= cfg.tol,
            };
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && total < cfg.max_iter {
            let z = precond(&v[k]);
            let mut w = apply(&z);
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                h[i][k] = hij;
                axpy(&mut w, -hij, vi);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            total += 1;
            if denom == 0.0 {
                // A M⁻¹ v_k = 0: the Krylov space cannot grow
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            if g[k].abs() / bnorm <= cfg.tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        if k == 0 {
            return GmresOutcome {
                iterations: total,
                relative_residual: rel,
                converged: false,
            };
        }
        // back substitution for the k×k triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (j, yj) in y.iter().enumerate().take(k).skip(i + 1) {
                s -= h[i][j] * yj;
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            axpy(&mut update, *yi, &v[i]);
        }
        let dx = precond(&update);
        axpy(x, 1.0, &dx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { v[i - 1] } else { 0.0 };
                let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                4.0 * v[i] - l - 0.5 * r
            })
            .collect()
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; n];
        let cfg = GmresConfig {
            tol: 1e-12,
            max_iter: 200,
            restart: 8,
        };
        let out = gmres(tridiag, |v| v.to_vec(), &b, &mut x, &cfg);
        assert!(out.converged, "{out:?}");
        let ax = tridiag(&x);
        let err = ax.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let b = vec![1.0, -2.0, 3.0];
        let mut x = vec![0.0; 3];
        let out = gmres(
            |v| v.iter().map(|a| 2.0 * a).collect(),
            |v| v.iter().map(|a| 0.5 * a).collect(),
            &b,
            &mut x,
            &GmresConfig::default(),
        );
        assert_eq!(out.iterations, 1);
        assert!((x[2] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn breakdown_does_not_produce_nan() {
        let mut x = vec![0.0; 4];
        let out = gmres(|v| v.to_vec(), |_| vec![0.0; 4], &[1e-17; 4], &mut x, &GmresConfig::default());
        assert!(!out.converged);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0; 4];
        let out = gmres(|v| v.to_vec(), |v| v.to_vec(), &[0.0; 4], &mut x, &GmresConfig::default());
        assert!(out.converged);
        assert!(x.iter().all(|v| *v == 0.0));
    }
}
