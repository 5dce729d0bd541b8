//! One-sided (Hestenes) Jacobi SVD for small dense matrices.

use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Thin SVD `a = u * diag(s) * v^T` with `k = min(rows, cols)` components,
/// singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

impl Svd {
    pub fn reconstruct_with(&self, s: &Array1<f64>) -> Array2<f64> {
        let scaled = &self.u * s;
        scaled.dot(&self.v.t())
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.reconstruct_with(&self.s)
    }
}

pub fn jacobi_svd(a: ArrayView2<f64>) -> Svd {
    let (rows, cols) = a.dim();
    if rows < cols {
        let t = jacobi_svd(a.t());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    // Columns of `w` are rotated until mutually orthogonal; `v` accumulates
    // the rotations so that a * v = w.
    let mut w = a.to_owned();
    let mut v = Array2::<f64>::eye(cols);
    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let (x, y) = (w[[r, i]], w[[r, j]]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (x, y) = (w[[r, i]], w[[r, j]]);
                    w[[r, i]] = c * x - s * y;
                    w[[r, j]] = s * x + c * y;
                }
                for r in 0..cols {
                    let (x, y) = (v[[r, i]], v[[r, j]]);
                    v[[r, i]] = c * x - s * y;
                    v[[r, j]] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = w
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let mut u = Array2::<f64>::zeros((rows, cols));
    let mut vs = Array2::<f64>::zeros((cols, cols));
    let mut s = Array1::<f64>::zeros(cols);
    for (k, &idx) in order.iter().enumerate() {
        s[k] = norms[idx];
        if norms[idx] > 0.0 {
            u.column_mut(k).assign(&(&w.column(idx) / norms[idx]));
        }
        vs.column_mut(k).assign(&v.column(idx));
    }
    Svd { u, s, v: vs }
}
